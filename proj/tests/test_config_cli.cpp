#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedgsp/config.hpp"
#include "fedgsp/serialize.hpp"

using namespace fedgsp;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("fedgsp-cli-") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = dir_ / "tiny.cfg";
    std::ofstream(config_) << "seed = 3\nrounds = 4\ntask.num_classes = 4\ntask.num_clients = 16\n"
                              "task.samples_per_client = 20\ntask.feature_dim = 4\n"
                              "growth.kind = linear\ngrowth.alpha = 1\ngrowth.beta = 2\nfixed_group_count = 4\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  int cli(const std::string& args, const std::string& env = "") const {
    const std::string cmd = env + " " + FEDGSP_CLI_PATH + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  }

  fs::path dir_;
  fs::path config_;
};

}  // namespace

TEST(Config, ParsesKeysCommentsAndAliases) {
  const auto cfg = parse_config(
      "# comment\nalgorithm = naive_gsp  # trailing\nR = 12\ntask.skew = shards\ntask.shards_per_client = 5\n"
      "growth.kind = exp\ngrowth.alpha = 0.5\nsgd.learning_rate = 0.02\nmodel.kind = mlp_one_hidden\n");
  EXPECT_EQ(cfg.experiment.algorithm, Algorithm::naive_gsp);
  EXPECT_EQ(cfg.experiment.rounds, 12);
  ASSERT_TRUE(std::holds_alternative<ShardSkew>(cfg.experiment.task.skew));
  EXPECT_EQ(std::get<ShardSkew>(cfg.experiment.task.skew).shards_per_client, 5);
  EXPECT_EQ(cfg.experiment.growth.kind, GrowthKind::exp);
  EXPECT_EQ(cfg.experiment.growth.alpha, 0.5);
  EXPECT_EQ(cfg.experiment.sgd.learning_rate, 0.02);
  EXPECT_EQ(cfg.experiment.model.kind, ModelKind::mlp_one_hidden);
}

TEST(Config, ErrorsNameTheLineAndKey) {
  try {
    parse_config("seed = 1\n\ntask.num_clientz = 5\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("task.num_clientz"), std::string::npos) << msg;
  }
  EXPECT_THROW(parse_config("rounds = ten\n"), ConfigError);
  EXPECT_THROW(parse_config("rounds 10\n"), ConfigError);
  EXPECT_THROW(parse_config("growth.kind = cubic\n"), ConfigError);
  EXPECT_THROW(parse_config("kappa = 0.3x\n"), ConfigError);
}

TEST(Config, OverridesApplyAfterTheFile) {
  auto cfg = parse_config("rounds = 10\n");
  apply_override(cfg, "rounds=3");
  apply_override(cfg, "task.concentration = 1.5");
  EXPECT_EQ(cfg.experiment.rounds, 3);
  EXPECT_EQ(std::get<DirichletSkew>(cfg.experiment.task.skew).concentration, 1.5);
  EXPECT_THROW(apply_override(cfg, "rounds"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "nope=1"), ConfigError);
}

TEST(Config, CanonicalTextRoundTrips) {
  auto cfg = parse_config("kappa = 0.1\ngrowth.alpha = 0.30000000000000004\ncost.model_megabytes = 1e-3\n");
  const auto text = serialize_config(cfg);
  const auto back = parse_config(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.experiment.growth.alpha, 0.30000000000000004);
  EXPECT_EQ(config_hash(text), config_hash(serialize_config(back)));
  EXPECT_NE(config_hash(text), config_hash(serialize_config(RunConfig{})));
  EXPECT_EQ(config_hash(text).size(), 16u);
}

TEST(Config, ValidationRunsAfterOverrides) {
  const auto path = fs::temp_directory_path() / "fedgsp-validate.cfg";
  std::ofstream(path) << "kappa = 0.3\n";
  EXPECT_THROW(load_config(path.string(), {"kappa=0"}), ConfigError);
  EXPECT_NO_THROW(load_config(path.string(), {"kappa=1"}));
  fs::remove(path);
  EXPECT_THROW(load_config("/nonexistent/file.cfg"), ConfigError);
}

TEST(RoundsCsv, WriteReadRoundTrip) {
  RoundRecord r{1, 4, 1, 0.25, 1.3862943611198906, std::nan(""), 0.1, 0.2, 0.30000000000000004};
  std::stringstream buf;
  write_rounds_csv(buf, {r});
  EXPECT_EQ(buf.str().substr(0, buf.str().find('\n')), kRoundsCsvHeader);
  EXPECT_NE(buf.str().find(",nan,"), std::string::npos);
  const auto back = read_rounds_csv(buf);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].loss, r.loss);
  EXPECT_EQ(back[0].d_comm_cum_mb, r.d_comm_cum_mb);
  EXPECT_TRUE(std::isnan(back[0].median_group_cpd));
}

TEST(Summary, RoundsToTargetAndLastTenMean) {
  std::vector<RoundRecord> records;
  for (int r = 1; r <= 12; ++r) records.push_back({r, 1, 1, 0.05 * r, 1.0, 0.0, 0.0, 0.0, 0.0});
  const auto s = summarize(records, 0.5);
  EXPECT_EQ(s.rounds_to_target, 10);
  EXPECT_NEAR(*s.mean_accuracy_last10, 0.05 * 7.5, 1e-12);
  EXPECT_FALSE(summarize(records, 0.9).rounds_to_target.has_value());
  EXPECT_TRUE(to_json(summarize(records, 0.9))["rounds_to_target"].is_null());
}

TEST(PlanJson, RoundTrip) {
  GroupingPlan plan{7, {{3, 1}, {0, 2}}, {4}};
  EXPECT_EQ(plan_from_json(Json::parse(to_json(plan).dump())), plan);
}

TEST_F(CliTest, RunWritesCsvSummaryAndManifest) {
  ASSERT_EQ(cli("run --config " + config_.string() + " --set R=3 --out " + dir_.string() + " --name a"), 0);
  const auto csv = read_file(dir_ / "a" / "rounds.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kRoundsCsvHeader);
  const auto manifest = read_json_file((dir_ / "a" / "manifest.json").string());
  EXPECT_EQ(manifest["status"], "completed");
  EXPECT_EQ(manifest["config_hash"], config_hash(manifest["config"].get<std::string>()));
  const auto summary = read_json_file((dir_ / "a" / "summary.json").string());
  EXPECT_EQ(summary["rounds"], 3);
}

TEST_F(CliTest, IdenticalRunsGiveIdenticalCsvBytes) {
  ASSERT_EQ(cli("run -c " + config_.string() + " --out " + dir_.string() + " --name a"), 0);
  ASSERT_EQ(cli("run -c " + config_.string() + " --set threads=4 --out " + dir_.string() + " --name b"), 0);
  EXPECT_EQ(read_file(dir_ / "a" / "rounds.csv"), read_file(dir_ / "b" / "rounds.csv"));
}

TEST_F(CliTest, UnreachedTargetIsNull) {
  ASSERT_EQ(cli("run -c " + config_.string() + " --set target_accuracy=1 --out " + dir_.string() + " --name a"), 0);
  EXPECT_TRUE(read_json_file((dir_ / "a" / "summary.json").string())["rounds_to_target"].is_null());
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(cli("run -c " + config_.string() + " --set bogus=1 --out " + dir_.string()), 1);
  EXPECT_NE(read_file(dir_ / "stderr.txt").find("bogus"), std::string::npos);
  EXPECT_EQ(cli("run -c /nonexistent.cfg --out " + dir_.string()), 1);
  EXPECT_EQ(cli("frobnicate"), 1);
  EXPECT_EQ(cli("run -c " + config_.string() + " --set sgd.learning_rate=1e308 --out " + dir_.string() + " --name bad"), 2);
  EXPECT_EQ(read_json_file((dir_ / "bad" / "manifest.json").string())["status"], "failed");
}

TEST_F(CliTest, OutputRootFromEnvironment) {
  const auto root = dir_ / "envroot";
  ASSERT_EQ(cli("run -c " + config_.string() + " --name e", "FEDGSP_OUT_DIR=" + root.string()), 0);
  EXPECT_TRUE(fs::exists(root / "e" / "rounds.csv"));
}

TEST_F(CliTest, ResumeContinuesTheSameCsv) {
  const std::string six = "run -c " + config_.string() + " --set rounds=6 --out " + dir_.string();
  ASSERT_EQ(cli(six + " --name full"), 0);
  ASSERT_EQ(cli(six + " --checkpoint-every 4 --name resumed"), 0);
  EXPECT_EQ(read_json_file((dir_ / "resumed" / "checkpoint.json").string())["round"], 4);

  // Pretend the run died during round 6: the CSV holds five rounds, the checkpoint four.
  const auto full = read_file(dir_ / "full" / "rounds.csv");
  std::size_t pos = 0;
  for (int i = 0; i < 6; ++i) pos = full.find('\n', pos) + 1;
  std::ofstream(dir_ / "resumed" / "rounds.csv", std::ios::binary | std::ios::trunc) << full.substr(0, pos);

  ASSERT_EQ(cli(six + " --resume --name resumed"), 0);
  EXPECT_EQ(read_file(dir_ / "resumed" / "rounds.csv"), full);

  // A checkpoint written under another configuration is refused.
  EXPECT_EQ(cli("run -c " + config_.string() + " --set rounds=7 --resume --out " + dir_.string() + " --name resumed"), 1);
  EXPECT_EQ(cli(six + " --resume --name missing"), 1);
}

TEST_F(CliTest, AblationWritesFourArmsAndComparison) {
  ASSERT_EQ(cli("ablation -c " + config_.string() + " --set rounds=2 --out " + dir_.string() + " --name abl"), 0);
  for (const char* arm : {"naive_gsp", "naive_gsp_icg", "fedgsp", "fedavg"}) {
    EXPECT_TRUE(fs::exists(dir_ / "abl" / arm / "manifest.json")) << arm;
  }
  const auto comparison = read_file(dir_ / "abl" / "comparison.csv");
  EXPECT_EQ(std::count(comparison.begin(), comparison.end(), '\n'), 5);
  const auto pairs = read_file(dir_ / "abl" / "cpd_pairs.csv");
  // FedAvg contributes one row per client pair: 16 * 15 / 2.
  std::size_t fedavg_rows = 0;
  for (std::size_t pos = 0; (pos = pairs.find("\nfedavg,", pos)) != std::string::npos; ++pos) ++fedavg_rows;
  EXPECT_EQ(fedavg_rows, 120u);
}

TEST_F(CliTest, GridRowsAndStandaloneCellReproduction) {
  ASSERT_EQ(cli("grid -c " + config_.string() + " --set rounds=2 --kinds linear,log --alpha 1,2 --beta 2 --out " +
                dir_.string() + " --name g"),
            0);
  const auto grid = read_file(dir_ / "g" / "grid.csv");
  EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 1 + 2 * 2 * 1);
  ASSERT_EQ(cli("run -c " + config_.string() +
                " --set rounds=2 --set growth.kind=log --set growth.alpha=2 --set growth.beta=2 --out " +
                dir_.string() + " --name cell"),
            0);
  EXPECT_EQ(read_file(dir_ / "g" / "log-a2-b2" / "rounds.csv"), read_file(dir_ / "cell" / "rounds.csv"));
  EXPECT_EQ(cli("grid -c " + config_.string() + " --kinds cubic --alpha 1 --beta 2 --out " + dir_.string()), 1);
}

TEST_F(CliTest, ReportRederivesSummary) {
  ASSERT_EQ(cli("run -c " + config_.string() + " --set target_accuracy=0.3 --out " + dir_.string() + " --name a"), 0);
  ASSERT_EQ(cli("report " + (dir_ / "a" / "rounds.csv").string() + " --target 0.3 -o " + (dir_ / "r.json").string()), 0);
  EXPECT_EQ(read_json_file((dir_ / "r.json").string()), read_json_file((dir_ / "a" / "summary.json").string()));
}
