#pragma once

// Command-line front end: run, ablation, grid and report.
//
// Every run directory holds manifest.json (written before the first round and
// finalized afterwards), rounds.csv and summary.json. The output root is
// --out, else $FEDGSP_OUT_DIR, else ./runs.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.

#include <chrono>
#include <ctime>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedgsp/config.hpp"
#include "fedgsp/error.hpp"
#include "fedgsp/metrics.hpp"
#include "fedgsp/orchestrator.hpp"
#include "fedgsp/serialize.hpp"

namespace fedgsp::cli {

namespace fs = std::filesystem;

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "FEDGSP_OUT_DIR";

enum ExitCode : int { kSuccess = 0, kConfigFailure = 1, kRuntimeFailure = 2 };

inline fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
  return "runs";
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << text;
  }
  fs::rename(tmp, path);
}

inline void write_json(const fs::path& path, const Json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

struct RunOptions {
  int checkpoint_every = 0;
  bool resume = false;
  bool dump_plans = false;
};

class Manifest {
 public:
  Manifest(fs::path dir, const RunConfig& cfg) : path_(dir / "manifest.json") {
    const std::string text = serialize_config(cfg);
    body_ = Json{{"artifact_version", kArtifactVersion},
                 {"status", "running"},
                 {"started_at", utc_timestamp()},
                 {"finished_at", nullptr},
                 {"config", text},
                 {"config_hash", config_hash(text)},
                 {"seed", cfg.experiment.seed},
                 {"algorithm", to_string(cfg.experiment.algorithm)},
                 {"rounds_csv", "rounds.csv"},
                 {"summary", "summary.json"}};
    write_json(path_, body_);
  }

  void finish(const std::string& status, const std::string& error = {}) {
    body_["status"] = status;
    body_["finished_at"] = utc_timestamp();
    if (!error.empty()) body_["error"] = error;
    write_json(path_, body_);
  }

 private:
  fs::path path_;
  Json body_;
};

/// Runs one experiment into `dir`. Throws on failure after marking the
/// manifest failed.
inline RunSummary execute_run(const RunConfig& cfg, const fs::path& dir, const RunOptions& opts = {}) {
  validate(cfg);
  fs::create_directories(dir);
  const std::string hash = config_hash(serialize_config(cfg));
  const fs::path csv_path = dir / "rounds.csv";
  const fs::path checkpoint_path = dir / "checkpoint.json";

  // Resuming needs a checkpoint from the same configuration; the CSV is cut
  // back to the checkpointed round so that it continues seamlessly.
  std::optional<LoadedCheckpoint> resumed;
  std::vector<RoundRecord> records;
  if (opts.resume) {
    if (!fs::exists(checkpoint_path)) throw ConfigError("--resume: no checkpoint in '" + dir.string() + "'");
    resumed = checkpoint_from_json(read_json_file(checkpoint_path.string()));
    if (resumed->config_hash != hash) throw ConfigError("--resume: checkpoint was written by a different configuration");
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("--resume: cannot read '" + csv_path.string() + "'");
    records = read_rounds_csv(in);
    if (static_cast<int>(records.size()) < resumed->checkpoint.round) {
      throw std::runtime_error("--resume: rounds.csv is shorter than the checkpoint");
    }
    records.resize(resumed->checkpoint.round);
  }

  Manifest manifest(dir, cfg);
  try {
    Simulator sim(cfg.experiment);
    if (resumed) sim.restore(resumed->checkpoint);

    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write '" + csv_path.string() + "'");
    write_rounds_csv(csv, records);
    csv.flush();

    std::ofstream plans;
    if (opts.dump_plans) {
      plans.open(dir / "plans.jsonl", resumed ? std::ios::app : std::ios::trunc);
    }

    for (int r = sim.completed_rounds() + 1; r <= cfg.experiment.rounds; ++r) {
      if (opts.dump_plans) plans << to_json(sim.plan_for_round(r)).dump() << '\n';
      records.push_back(sim.run_round());
      csv << rounds_csv_row(records.back()) << '\n';
      csv.flush();
      if (opts.checkpoint_every > 0 && r % opts.checkpoint_every == 0) {
        write_json(checkpoint_path, to_json(sim.checkpoint(), hash));
      }
    }
    const RunSummary summary = summarize(records, cfg.target_accuracy);
    write_json(dir / "summary.json", to_json(summary));
    manifest.finish("completed");
    return summary;
  } catch (const std::exception& e) {
    manifest.finish("failed", e.what());
    throw;
  }
}

inline std::string default_run_name(const std::string& config_path, const RunConfig& cfg) {
  return fs::path(config_path).stem().string() + "-" + config_hash(serialize_config(cfg)).substr(0, 8);
}

inline const std::array<Algorithm, 4> kAblationArms{Algorithm::naive_gsp, Algorithm::naive_gsp_icg, Algorithm::fedgsp,
                                                    Algorithm::fedavg};

/// Per-pair CPD values of round-1 groups (clients for FedAvg).
inline void append_cpd_pairs(std::ostream& out, Algorithm arm, const ExperimentConfig& cfg) {
  const Simulator sim(cfg);
  const GroupingPlan plan = sim.plan_for_round(1);
  const auto units = arm == Algorithm::fedavg ? sim.distributions() : group_distributions(plan, sim.distributions());
  for (std::size_t i = 0; i < units.size(); ++i) {
    for (std::size_t j = i + 1; j < units.size(); ++j) {
      out << to_string(arm) << ',' << i << ',' << j << ',' << format_double(cpd(units[i], units[j], cfg.cpd)) << '\n';
    }
  }
}

inline void execute_ablation(const RunConfig& base, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream comparison(dir / "comparison.csv", std::ios::binary | std::ios::trunc);
  std::ofstream pairs(dir / "cpd_pairs.csv", std::ios::binary | std::ios::trunc);
  comparison << "arm,final_accuracy,final_loss,mean_accuracy_last10,rounds_to_target,round1_median_cpd,t_comp_s,"
                "t_comm_s,d_comm_mb\n";
  pairs << "arm,i,j,cpd\n";
  auto opt = [](const auto& v) { return v ? format_double(static_cast<double>(*v)) : std::string("nan"); };
  for (Algorithm arm : kAblationArms) {
    RunConfig cfg = base;
    cfg.experiment.algorithm = arm;
    const RunSummary s = execute_run(cfg, dir / to_string(arm));
    std::ifstream in(dir / to_string(arm) / "rounds.csv");
    const auto records = read_rounds_csv(in);
    const double round1_cpd = records.empty() ? std::nan("") : records.front().median_group_cpd;
    comparison << to_string(arm) << ',' << opt(s.final_accuracy) << ',' << opt(s.final_loss) << ','
               << opt(s.mean_accuracy_last10) << ','
               << (s.rounds_to_target ? std::to_string(*s.rounds_to_target) : std::string("")) << ','
               << format_double(round1_cpd) << ',' << format_double(s.t_comp_s) << ',' << format_double(s.t_comm_s)
               << ',' << format_double(s.d_comm_mb) << '\n';
    append_cpd_pairs(pairs, arm, cfg.experiment);
  }
}

struct GridSpec {
  std::vector<std::string> kinds;
  std::vector<std::string> alphas;
  std::vector<std::string> betas;
};

inline std::string grid_cell_name(const std::string& kind, const std::string& alpha, const std::string& beta) {
  return kind + "-a" + alpha + "-b" + beta;
}

inline void execute_grid(const RunConfig& base, const GridSpec& grid, const fs::path& dir) {
  if (grid.kinds.empty() || grid.alphas.empty() || grid.betas.empty()) {
    throw ConfigError("grid: --kinds, --alpha and --beta each need at least one value");
  }
  // Validate every cell before running any of them.
  std::vector<std::pair<std::string, RunConfig>> cells;
  for (const auto& kind : grid.kinds) {
    for (const auto& alpha : grid.alphas) {
      for (const auto& beta : grid.betas) {
        RunConfig cfg = base;
        set_config_value(cfg, "growth.kind", kind);
        set_config_value(cfg, "growth.alpha", alpha);
        set_config_value(cfg, "growth.beta", beta);
        validate(cfg);
        cells.emplace_back(grid_cell_name(kind, alpha, beta), cfg);
      }
    }
  }
  fs::create_directories(dir);
  std::ofstream out(dir / "grid.csv", std::ios::binary | std::ios::trunc);
  out << "kind,alpha,beta,final_loss,final_accuracy\n";
  for (const auto& [name, cfg] : cells) {
    const RunSummary s = execute_run(cfg, dir / name);
    const auto& g = cfg.experiment.growth;
    out << detail::enum_name(g.kind, detail::kGrowthKinds) << ',' << format_double(g.alpha) << ',' << g.beta << ','
        << format_double(s.final_loss.value_or(std::nan(""))) << ','
        << format_double(s.final_accuracy.value_or(std::nan(""))) << '\n';
    out.flush();
  }
}

inline int main(int argc, char** argv) {
  CLI::App app{"Federated group-based sequential-to-parallel training simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_flag;
  std::string name;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "Configuration file (key = value lines)")->required();
    cmd->add_option("--set", overrides, "Override a key, e.g. --set rounds=3 (repeatable)");
    cmd->add_option("--out", out_flag, std::string("Output root (default: $") + kOutDirEnv + " or ./runs)");
    cmd->add_option("--name", name, "Run directory name under the output root");
  };

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run one experiment");
  add_common(run);
  run->add_option("--checkpoint-every", run_opts.checkpoint_every, "Write checkpoint.json every N rounds");
  run->add_flag("--resume", run_opts.resume, "Continue from the run directory's checkpoint");
  run->add_flag("--dump-plans", run_opts.dump_plans, "Write each round's grouping to plans.jsonl");

  auto* ablation = app.add_subcommand("ablation", "Run NaiveGSP, NaiveGSP+ICG, FedGSP and FedAvg on one task");
  add_common(ablation);

  GridSpec grid;
  auto* grid_cmd = app.add_subcommand("grid", "Grid search over growth function kind, alpha and beta");
  add_common(grid_cmd);
  grid_cmd->add_option("--kinds", grid.kinds, "Growth kinds (linear,log,exp)")->delimiter(',')->required();
  grid_cmd->add_option("--alpha", grid.alphas, "Alpha values")->delimiter(',')->required();
  grid_cmd->add_option("--beta", grid.betas, "Beta values")->delimiter(',')->required();

  std::string csv_path;
  double target = 0.8;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Recompute a run summary from a rounds.csv");
  report->add_option("csv", csv_path, "Per-round CSV")->required();
  report->add_option("--target", target, "Target accuracy for rounds_to_target");
  report->add_option("-o,--output", report_out, "Write the summary here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kConfigFailure;
  }

  try {
    if (report->parsed()) {
      std::ifstream in(csv_path);
      if (!in) throw std::runtime_error("cannot open '" + csv_path + "'");
      const Json summary = to_json(summarize(read_rounds_csv(in), target));
      if (report_out.empty()) {
        std::cout << summary.dump(2) << '\n';
      } else {
        write_json(report_out, summary);
      }
      return kSuccess;
    }

    const RunConfig cfg = load_config(config_path, overrides);
    const fs::path dir = output_root(out_flag) / (name.empty() ? default_run_name(config_path, cfg) : name);
    if (run->parsed()) {
      const RunSummary s = execute_run(cfg, dir, run_opts);
      std::cout << "run finished: " << s.rounds << " rounds, final accuracy "
                << format_double(s.final_accuracy.value_or(std::nan(""))) << " -> " << dir.string() << '\n';
    } else if (ablation->parsed()) {
      execute_ablation(cfg, dir);
      std::cout << "ablation finished -> " << dir.string() << '\n';
    } else {
      execute_grid(cfg, grid, dir);
      std::cout << "grid finished -> " << dir.string() << '\n';
    }
    return kSuccess;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

}  // namespace fedgsp::cli
