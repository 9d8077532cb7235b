#pragma once

// Sequential-to-parallel training rounds.
//
// Each round the clients are split into M groups; a fraction kappa of the
// groups is sampled, every sampled group passes the current global model
// through its clients one after another (one local training run each), and
// the global model becomes the unweighted mean of the sampled groups' final
// models. FedGSP regroups with inter-cluster grouping every round and lets M
// follow a growth function; the ablation baselines freeze the grouping, and
// FedAvg is the special case of singleton groups.

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedgsp/datagen.hpp"
#include "fedgsp/error.hpp"
#include "fedgsp/grouping.hpp"
#include "fedgsp/metrics.hpp"
#include "fedgsp/rng.hpp"
#include "fedgsp/trainer.hpp"

namespace fedgsp {

enum class GrowthKind { linear, log, exp };

/// Group-count schedule f(r) = beta * floor(g(r)) with
///   linear: g(r) = alpha (r - 1) + 1
///   log:    g(r) = alpha ln r + 1
///   exp:    g(r) = (1 + alpha)^(r - 1)
struct GrowthFunction {
  GrowthKind kind = GrowthKind::log;
  double alpha = 2.0;
  std::int64_t beta = 10;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("growth.alpha must be finite and > 0");
    if (beta < 1) throw ConfigError("growth.beta must be >= 1");
  }
};

/// f(r), saturating at `cap` instead of overflowing.
inline std::int64_t growth_eval(const GrowthFunction& g, std::int64_t round,
                                std::int64_t cap = std::numeric_limits<std::int64_t>::max()) {
  if (round < 1) throw std::invalid_argument("growth functions are defined for rounds >= 1");
  const long double r = static_cast<long double>(round);
  const long double alpha = g.alpha;
  long double inner = 0.0L;
  switch (g.kind) {
    case GrowthKind::linear:
      inner = std::floor(alpha * (r - 1.0L) + 1.0L);
      break;
    case GrowthKind::log:
      inner = std::floor(alpha * std::log(r) + 1.0L);
      break;
    case GrowthKind::exp:
      inner = std::floor(std::pow(1.0L + alpha, r - 1.0L));
      break;
  }
  if (!(inner < static_cast<long double>(cap) / static_cast<long double>(g.beta))) return cap;
  return std::min(cap, g.beta * static_cast<std::int64_t>(inner));
}

enum class Algorithm { fedgsp, naive_gsp, naive_gsp_icg, fedavg };

inline const char* to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::fedgsp: return "fedgsp";
    case Algorithm::naive_gsp: return "naive_gsp";
    case Algorithm::naive_gsp_icg: return "naive_gsp_icg";
    case Algorithm::fedavg: return "fedavg";
  }
  return "?";
}

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::fedgsp;
  /// The task seed is derived from `seed`; task.seed is ignored.
  SyntheticTaskSpec task;
  /// Only kind and hidden_units are read; dimensions come from the task and
  /// the init seed from `seed`.
  ModelSpec model;
  SgdConfig sgd;
  GrowthFunction growth;
  double kappa = 0.3;
  int rounds = 500;
  /// Group count of the two static baselines.
  int fixed_group_count = 10;
  std::uint64_t seed = 0;
  /// Worker threads for sampled groups; results do not depend on it.
  int threads = 1;
  CpdConfig cpd;
  /// Hardware/link constants; n, e, K and kappa are filled in from the experiment.
  CostModelParams cost;

  void validate() const {
    task.validate();
    model.validate();
    sgd.validate();
    growth.validate();
    cpd.validate();
    if (!(kappa > 0.0 && kappa <= 1.0)) throw ConfigError("kappa must be in (0, 1]");
    if (rounds < 0) throw ConfigError("rounds must be >= 0");
    if (fixed_group_count < 1) throw ConfigError("fixed_group_count must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

inline SyntheticTaskSpec task_spec_for(const ExperimentConfig& cfg) {
  SyntheticTaskSpec spec = cfg.task;
  spec.seed = derive_stream(cfg.seed, "task");
  return spec;
}

inline ModelSpec model_spec_for(const ExperimentConfig& cfg) {
  ModelSpec spec = cfg.model;
  spec.feature_dim = cfg.task.feature_dim;
  spec.num_classes = cfg.task.num_classes;
  spec.init_seed = derive_stream(cfg.seed, "model-init");
  return spec;
}

inline CostModelParams cost_params_for(const ExperimentConfig& cfg) {
  CostModelParams p = cfg.cost;
  p.samples_per_client = cfg.task.samples_per_client;
  p.local_epochs = cfg.sgd.local_epochs;
  p.clients = cfg.task.num_clients;
  p.kappa = cfg.kappa;
  return p;
}

/// max(1, round-half-up(kappa * groups)), never more than `groups`.
inline int sampled_group_count(double kappa, int groups) {
  const auto s = static_cast<int>(std::floor(kappa * groups + 0.5));
  return std::clamp(s, 1, std::max(groups, 1));
}

struct RoundRecord {
  int round = 0;
  int group_count = 0;
  int sampled_groups = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  /// NaN when the round has fewer than two groups.
  double median_group_cpd = 0.0;
  double t_comp_cum_s = 0.0;
  double t_comm_cum_s = 0.0;
  double d_comm_cum_mb = 0.0;
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;
  int format_version = kFormatVersion;
  /// Rounds completed. All random streams are derived from (seed, round, ...),
  /// so this is also the generator cursor.
  int round = 0;
  ModelParams global;
  double t_comp_cum_s = 0.0;
  double t_comm_cum_s = 0.0;
  double d_comm_cum_mb = 0.0;
};

class Simulator {
 public:
  explicit Simulator(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    task_ = generate_task(task_spec_for(cfg_));
    distributions_ = task_.distributions();
    global_ = init_model(model_spec_for(cfg_));
    cost_ = cost_params_for(cfg_);
    cost_.validate();

    const int K = cfg_.task.num_clients;
    switch (cfg_.algorithm) {
      case Algorithm::naive_gsp:
        frozen_plan_ = random_grouping(K, cfg_.fixed_group_count, 0, derive_stream(cfg_.seed, "naive-grouping"));
        break;
      case Algorithm::naive_gsp_icg:
        frozen_plan_ = inter_cluster_grouping(distributions_, cfg_.fixed_group_count, 0,
                                              derive_stream(cfg_.seed, "icg", {0}))
                           .plan;
        break;
      case Algorithm::fedavg:
        client_cpd_median_ = median_pairwise_cpd(distributions_, cfg_.cpd);
        break;
      case Algorithm::fedgsp:
        break;
    }
  }

  [[nodiscard]] const ExperimentConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const FederatedTask& task() const noexcept { return task_; }
  [[nodiscard]] const std::vector<ClassDistribution>& distributions() const noexcept { return distributions_; }
  [[nodiscard]] const ModelParams& global_model() const noexcept { return global_; }
  [[nodiscard]] int completed_rounds() const noexcept { return round_; }
  /// Clients that trained in the last round, in training order per sampled group.
  [[nodiscard]] const std::vector<int>& last_participants() const noexcept { return participants_; }
  [[nodiscard]] const std::vector<int>& last_sampled_groups() const noexcept { return sampled_; }

  /// Group count the algorithm uses in round r.
  [[nodiscard]] int group_count(int r) const {
    const int K = cfg_.task.num_clients;
    switch (cfg_.algorithm) {
      case Algorithm::fedgsp: return static_cast<int>(growth_eval(cfg_.growth, r, K));
      case Algorithm::fedavg: return K;
      default: return std::min(cfg_.fixed_group_count, K);
    }
  }

  /// Grouping of round r, in-group order included. Pure in (config, r).
  [[nodiscard]] GroupingPlan plan_for_round(int r) const {
    switch (cfg_.algorithm) {
      case Algorithm::fedgsp:
        return inter_cluster_grouping(distributions_, group_count(r), r,
                                      derive_stream(cfg_.seed, "icg", {static_cast<std::uint64_t>(r)}))
            .plan;
      case Algorithm::fedavg: {
        GroupingPlan plan;
        plan.round = r;
        for (int k = 0; k < cfg_.task.num_clients; ++k) plan.groups.push_back({k});
        return plan;
      }
      default: {
        // Static baselines keep their membership but reshuffle the chain order every round.
        GroupingPlan plan = *frozen_plan_;
        plan.round = r;
        for (std::size_t m = 0; m < plan.groups.size(); ++m) {
          Rng rng(derive_stream(cfg_.seed, "chain-order", {static_cast<std::uint64_t>(r), m}));
          rng.shuffle(std::span<int>(plan.groups[m]));
        }
        return plan;
      }
    }
  }

  RoundRecord run_round() {
    const int r = round_ + 1;
    const GroupingPlan plan = plan_for_round(r);
    const int M = static_cast<int>(plan.groups.size());
    const int S = sampled_group_count(cfg_.kappa, M);

    Rng sample_rng(derive_stream(cfg_.seed, "group-sample", {static_cast<std::uint64_t>(r)}));
    std::vector<int> sampled;
    for (std::size_t g : sample_rng.sample(M, S)) sampled.push_back(static_cast<int>(g));
    std::sort(sampled.begin(), sampled.end());

    std::vector<ModelParams> outputs(S);
    std::vector<std::exception_ptr> errors(S);
    auto train_slot = [&](int slot) {
      const int g = sampled[slot];
      try {
        ModelParams w = global_;
        for (int k : plan.groups[g]) {
          const auto batch_seed = derive_stream(
              cfg_.seed, "batch", {static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(k)});
          w = train_one_client(w, task_.clients[k].data, cfg_.sgd, batch_seed);
        }
        outputs[slot] = std::move(w);
      } catch (const std::exception& e) {
        errors[slot] = std::make_exception_ptr(
            TrainingError("round " + std::to_string(r) + ", group " + std::to_string(g) + ": " + e.what()));
      }
    };
    const int workers = std::min(cfg_.threads, S);
    if (workers <= 1) {
      for (int slot = 0; slot < S; ++slot) train_slot(slot);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
          for (int slot = t; slot < S; slot += workers) train_slot(slot);
        });
      }
      for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    // Reduction in ascending group id, independent of completion order.
    global_ = average(outputs);
    round_ = r;
    sampled_ = sampled;
    participants_.clear();
    for (int g : sampled) participants_.insert(participants_.end(), plan.groups[g].begin(), plan.groups[g].end());

    const Evaluation eval = evaluate(global_, task_.test);
    t_comp_cum_ += t_comp_round(M, cost_);
    t_comm_cum_ = t_comm(r, cost_);
    d_comm_cum_ = d_comm(r, cost_);

    RoundRecord rec;
    rec.round = r;
    rec.group_count = M;
    rec.sampled_groups = S;
    rec.accuracy = eval.accuracy;
    rec.loss = eval.loss;
    if (client_cpd_median_) {
      rec.median_group_cpd = *client_cpd_median_;
    } else if (M >= 2) {
      rec.median_group_cpd = median_pairwise_cpd(group_distributions(plan, distributions_), cfg_.cpd);
    } else {
      rec.median_group_cpd = std::numeric_limits<double>::quiet_NaN();
    }
    rec.t_comp_cum_s = t_comp_cum_;
    rec.t_comm_cum_s = t_comm_cum_;
    rec.d_comm_cum_mb = d_comm_cum_;
    return rec;
  }

  [[nodiscard]] Checkpoint checkpoint() const {
    return {Checkpoint::kFormatVersion, round_, global_, t_comp_cum_, t_comm_cum_, d_comm_cum_};
  }

  void restore(const Checkpoint& cp) {
    if (cp.format_version != Checkpoint::kFormatVersion) {
      throw std::invalid_argument("unsupported checkpoint format version " + std::to_string(cp.format_version));
    }
    if (cp.global.layers != global_.layers || cp.global.size() != global_.size()) {
      throw std::invalid_argument("checkpoint model shape does not match the configured model");
    }
    round_ = cp.round;
    global_ = cp.global;
    t_comp_cum_ = cp.t_comp_cum_s;
    t_comm_cum_ = cp.t_comm_cum_s;
    d_comm_cum_ = cp.d_comm_cum_mb;
    participants_.clear();
    sampled_.clear();
  }

 private:
  ExperimentConfig cfg_;
  FederatedTask task_;
  std::vector<ClassDistribution> distributions_;
  ModelParams global_;
  CostModelParams cost_;
  std::optional<GroupingPlan> frozen_plan_;
  std::optional<double> client_cpd_median_;
  int round_ = 0;
  double t_comp_cum_ = 0.0;
  double t_comm_cum_ = 0.0;
  double d_comm_cum_ = 0.0;
  std::vector<int> participants_;
  std::vector<int> sampled_;
};

struct ExperimentResult {
  std::vector<RoundRecord> records;
  ModelParams final_model;
};

/// Runs cfg.rounds rounds. `on_round` (optional) sees each record as it is produced.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::function<void(const RoundRecord&)>& on_round = {}) {
  Simulator sim(cfg);
  ExperimentResult result;
  result.records.reserve(cfg.rounds);
  for (int r = 1; r <= cfg.rounds; ++r) {
    result.records.push_back(sim.run_round());
    if (on_round) on_round(result.records.back());
  }
  result.final_model = sim.global_model();
  return result;
}

}  // namespace fedgsp
