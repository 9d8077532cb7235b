#pragma once

// Experiment configuration files.
//
// Flat `key = value` lines with dotted sections (task.*, model.*, sgd.*,
// growth.*, cpd.*, cost.*). `#` starts a comment. Unknown keys are errors.
// Every key has a default, so an empty file is a valid configuration.
// serialize_config() emits every key in a fixed order; that canonical text is
// what gets hashed into run manifests.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "fedgsp/error.hpp"
#include "fedgsp/orchestrator.hpp"

namespace fedgsp {

struct RunConfig {
  ExperimentConfig experiment;
  /// Accuracy that defines "rounds to target" in run summaries.
  double target_accuracy = 0.8;
  /// Kept separately so that switching task.skew keeps both parameters.
  double dirichlet_concentration = 0.3;
  int shards_per_client = 2;
};

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ConfigError("key '" + std::string(key) + "': cannot parse '" + std::string(text) + "' as a number");
  }
  return value;
}

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view key, std::string_view text, const std::array<std::pair<const char*, Enum>, N>& names) {
  std::string allowed;
  for (const auto& [name, value] : names) {
    if (text == name) return value;
    allowed += allowed.empty() ? name : std::string("|") + name;
  }
  throw ConfigError("key '" + std::string(key) + "': expected one of " + allowed + ", got '" + std::string(text) + "'");
}

template <typename Enum, std::size_t N>
std::string enum_name(Enum v, const std::array<std::pair<const char*, Enum>, N>& names) {
  for (const auto& [name, value] : names) {
    if (value == v) return name;
  }
  return "?";
}

inline constexpr std::array<std::pair<const char*, Algorithm>, 4> kAlgorithms{{
    {"fedgsp", Algorithm::fedgsp},
    {"naive_gsp", Algorithm::naive_gsp},
    {"naive_gsp_icg", Algorithm::naive_gsp_icg},
    {"fedavg", Algorithm::fedavg},
}};
inline constexpr std::array<std::pair<const char*, GrowthKind>, 3> kGrowthKinds{{
    {"linear", GrowthKind::linear},
    {"log", GrowthKind::log},
    {"exp", GrowthKind::exp},
}};
inline constexpr std::array<std::pair<const char*, ModelKind>, 2> kModelKinds{{
    {"softmax_linear", ModelKind::softmax_linear},
    {"mlp_one_hidden", ModelKind::mlp_one_hidden},
}};
inline constexpr std::array<std::pair<const char*, bool>, 2> kSkews{{
    {"dirichlet", true},
    {"shards", false},
}};

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline bool is_dirichlet(const RunConfig& c) { return std::holds_alternative<DirichletSkew>(c.experiment.task.skew); }

inline void sync_skew(RunConfig& c, bool dirichlet) {
  if (dirichlet) {
    c.experiment.task.skew = DirichletSkew{c.dirichlet_concentration};
  } else {
    c.experiment.task.skew = ShardSkew{c.shards_per_client};
  }
}

#define FEDGSP_NUM_FIELD(KEY, TYPE, MEMBER)                                                       \
  Field {                                                                                         \
    KEY, [](RunConfig& c, std::string_view v) { c.MEMBER = parse_number<TYPE>(KEY, v); },         \
        [](const RunConfig& c) {                                                                  \
          if constexpr (std::is_floating_point_v<TYPE>) return format_double(c.MEMBER);           \
          else return std::to_string(c.MEMBER);                                                   \
        }                                                                                         \
  }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"algorithm", [](RunConfig& c, std::string_view v) { c.experiment.algorithm = parse_enum("algorithm", v, kAlgorithms); },
       [](const RunConfig& c) { return enum_name(c.experiment.algorithm, kAlgorithms); }},
      FEDGSP_NUM_FIELD("seed", std::uint64_t, experiment.seed),
      FEDGSP_NUM_FIELD("rounds", int, experiment.rounds),
      FEDGSP_NUM_FIELD("kappa", double, experiment.kappa),
      FEDGSP_NUM_FIELD("fixed_group_count", int, experiment.fixed_group_count),
      FEDGSP_NUM_FIELD("threads", int, experiment.threads),
      FEDGSP_NUM_FIELD("target_accuracy", double, target_accuracy),
      FEDGSP_NUM_FIELD("task.num_classes", int, experiment.task.num_classes),
      FEDGSP_NUM_FIELD("task.num_clients", int, experiment.task.num_clients),
      FEDGSP_NUM_FIELD("task.samples_per_client", int, experiment.task.samples_per_client),
      FEDGSP_NUM_FIELD("task.feature_dim", int, experiment.task.feature_dim),
      FEDGSP_NUM_FIELD("task.class_separation", double, experiment.task.class_separation),
      {"task.skew", [](RunConfig& c, std::string_view v) { sync_skew(c, parse_enum("task.skew", v, kSkews)); },
       [](const RunConfig& c) { return enum_name(is_dirichlet(c), kSkews); }},
      {"task.concentration",
       [](RunConfig& c, std::string_view v) {
         c.dirichlet_concentration = parse_number<double>("task.concentration", v);
         sync_skew(c, is_dirichlet(c));
       },
       [](const RunConfig& c) { return format_double(c.dirichlet_concentration); }},
      {"task.shards_per_client",
       [](RunConfig& c, std::string_view v) {
         c.shards_per_client = parse_number<int>("task.shards_per_client", v);
         sync_skew(c, is_dirichlet(c));
       },
       [](const RunConfig& c) { return std::to_string(c.shards_per_client); }},
      {"model.kind", [](RunConfig& c, std::string_view v) { c.experiment.model.kind = parse_enum("model.kind", v, kModelKinds); },
       [](const RunConfig& c) { return enum_name(c.experiment.model.kind, kModelKinds); }},
      FEDGSP_NUM_FIELD("model.hidden_units", int, experiment.model.hidden_units),
      FEDGSP_NUM_FIELD("sgd.learning_rate", double, experiment.sgd.learning_rate),
      FEDGSP_NUM_FIELD("sgd.batch_size", int, experiment.sgd.batch_size),
      FEDGSP_NUM_FIELD("sgd.local_epochs", int, experiment.sgd.local_epochs),
      {"growth.kind", [](RunConfig& c, std::string_view v) { c.experiment.growth.kind = parse_enum("growth.kind", v, kGrowthKinds); },
       [](const RunConfig& c) { return enum_name(c.experiment.growth.kind, kGrowthKinds); }},
      FEDGSP_NUM_FIELD("growth.alpha", double, experiment.growth.alpha),
      FEDGSP_NUM_FIELD("growth.beta", std::int64_t, experiment.growth.beta),
      FEDGSP_NUM_FIELD("cpd.sigma", double, experiment.cpd.sigma),
      FEDGSP_NUM_FIELD("cost.flops_per_sample", double, experiment.cost.flops_per_sample),
      FEDGSP_NUM_FIELD("cost.flops_aggregation", double, experiment.cost.flops_aggregation),
      FEDGSP_NUM_FIELD("cost.device_flops", double, experiment.cost.device_flops),
      FEDGSP_NUM_FIELD("cost.model_megabytes", double, experiment.cost.model_megabytes),
      FEDGSP_NUM_FIELD("cost.rate_in_mbps", double, experiment.cost.rate_in_mbps),
      FEDGSP_NUM_FIELD("cost.rate_out_mbps", double, experiment.cost.rate_out_mbps),
  };
  return table;
}

#undef FEDGSP_NUM_FIELD

inline std::string canonical_key(std::string_view key) {
  if (key == "R") return "rounds";
  return std::string(key);
}

}  // namespace detail

/// Sets one key. `R` is accepted as an alias of `rounds`.
inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const std::string canonical = detail::canonical_key(detail::trim(key));
  for (const auto& field : detail::fields()) {
    if (canonical == field.key) {
      field.set(cfg, detail::trim(value));
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + canonical + "'");
}

/// Applies a `key=value` override.
inline void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

/// Parses config text on top of `base` and validates the result. Errors carry
/// the line number and key.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(base, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (end == text.size()) break;
  }
  return base;
}

inline void validate(const RunConfig& cfg) {
  cfg.experiment.validate();
  if (!(cfg.target_accuracy >= 0.0 && cfg.target_accuracy <= 1.0)) {
    throw ConfigError("target_accuracy must be in [0, 1]");
  }
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig cfg = parse_config(buf.str());
  for (const auto& o : overrides) apply_override(cfg, o);
  validate(cfg);
  return cfg;
}

/// Every key, one per line, in table order.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& field : detail::fields()) out += std::string(field.key) + " = " + field.get(cfg) + "\n";
  return out;
}

inline std::string config_hash(const std::string& canonical_text) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(canonical_text);
  return os.str();
}

}  // namespace fedgsp
