#pragma once

// On-disk formats: per-round CSV, run summaries, grouping plans and
// checkpoints. JSON goes through nlohmann::json, whose number output
// round-trips doubles exactly, so a checkpoint restores bit-identical models.

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fedgsp/config.hpp"
#include "fedgsp/error.hpp"
#include "fedgsp/grouping.hpp"
#include "fedgsp/orchestrator.hpp"
#include "json.hpp"

namespace fedgsp {

using Json = nlohmann::json;

inline constexpr const char* kRoundsCsvHeader =
    "round,M,sampled_groups,accuracy,loss,median_group_cpd,t_comp_cum_s,t_comm_cum_s,d_comm_cum_mb";

inline std::string rounds_csv_row(const RoundRecord& r) {
  std::string row = std::to_string(r.round) + ',' + std::to_string(r.group_count) + ',' + std::to_string(r.sampled_groups);
  for (double v : {r.accuracy, r.loss, r.median_group_cpd, r.t_comp_cum_s, r.t_comm_cum_s, r.d_comm_cum_mb}) {
    row += ',';
    row += format_double(v);
  }
  return row;
}

inline void write_rounds_csv(std::ostream& out, const std::vector<RoundRecord>& records) {
  out << kRoundsCsvHeader << '\n';
  for (const auto& r : records) out << rounds_csv_row(r) << '\n';
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    parts.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <typename T>
T parse_csv_field(std::string_view text, std::size_t line_no) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw std::runtime_error("rounds CSV line " + std::to_string(line_no) + ": bad number '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace detail

inline std::vector<RoundRecord> read_rounds_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kRoundsCsvHeader) {
    throw std::runtime_error("rounds CSV has a missing or unexpected header");
  }
  std::vector<RoundRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto f = detail::split(trimmed, ',');
    if (f.size() != 9) throw std::runtime_error("rounds CSV line " + std::to_string(line_no) + ": expected 9 fields");
    RoundRecord r;
    r.round = detail::parse_csv_field<int>(f[0], line_no);
    r.group_count = detail::parse_csv_field<int>(f[1], line_no);
    r.sampled_groups = detail::parse_csv_field<int>(f[2], line_no);
    r.accuracy = detail::parse_csv_field<double>(f[3], line_no);
    r.loss = detail::parse_csv_field<double>(f[4], line_no);
    r.median_group_cpd = detail::parse_csv_field<double>(f[5], line_no);
    r.t_comp_cum_s = detail::parse_csv_field<double>(f[6], line_no);
    r.t_comm_cum_s = detail::parse_csv_field<double>(f[7], line_no);
    r.d_comm_cum_mb = detail::parse_csv_field<double>(f[8], line_no);
    records.push_back(r);
  }
  return records;
}

struct RunSummary {
  int rounds = 0;
  double target_accuracy = 0.8;
  std::optional<double> final_accuracy;
  std::optional<double> final_loss;
  std::optional<double> mean_accuracy_last10;
  /// First round whose accuracy reaches the target, if any.
  std::optional<int> rounds_to_target;
  double t_comp_s = 0.0;
  double t_comm_s = 0.0;
  double d_comm_mb = 0.0;
};

inline RunSummary summarize(const std::vector<RoundRecord>& records, double target_accuracy) {
  RunSummary s;
  s.rounds = static_cast<int>(records.size());
  s.target_accuracy = target_accuracy;
  if (records.empty()) return s;
  const auto& last = records.back();
  s.final_accuracy = last.accuracy;
  s.final_loss = last.loss;
  const std::size_t window = std::min<std::size_t>(10, records.size());
  double acc = 0.0;
  for (std::size_t i = records.size() - window; i < records.size(); ++i) acc += records[i].accuracy;
  s.mean_accuracy_last10 = acc / static_cast<double>(window);
  for (const auto& r : records) {
    if (r.accuracy >= target_accuracy) {
      s.rounds_to_target = r.round;
      break;
    }
  }
  s.t_comp_s = last.t_comp_cum_s;
  s.t_comm_s = last.t_comm_cum_s;
  s.d_comm_mb = last.d_comm_cum_mb;
  return s;
}

namespace detail {

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

}  // namespace detail

inline Json to_json(const RunSummary& s) {
  return Json{{"rounds", s.rounds},
              {"target_accuracy", s.target_accuracy},
              {"final_accuracy", detail::optional_json(s.final_accuracy)},
              {"final_loss", detail::optional_json(s.final_loss)},
              {"mean_accuracy_last10", detail::optional_json(s.mean_accuracy_last10)},
              {"rounds_to_target", detail::optional_json(s.rounds_to_target)},
              {"t_comp_s", s.t_comp_s},
              {"t_comm_s", s.t_comm_s},
              {"d_comm_mb", s.d_comm_mb}};
}

inline Json to_json(const GroupingPlan& plan) {
  return Json{{"round", plan.round}, {"groups", plan.groups}, {"unassigned", plan.unassigned}};
}

inline GroupingPlan plan_from_json(const Json& j) {
  GroupingPlan plan;
  plan.round = j.at("round").get<int>();
  plan.groups = j.at("groups").get<std::vector<std::vector<int>>>();
  plan.unassigned = j.at("unassigned").get<std::vector<int>>();
  return plan;
}

inline Json to_json(const Checkpoint& cp, const std::string& config_hash) {
  Json layers = Json::array();
  for (const auto& shape : cp.global.layers) layers.push_back({shape.outputs, shape.inputs});
  return Json{{"format_version", cp.format_version},
              {"config_hash", config_hash},
              {"round", cp.round},
              {"t_comp_cum_s", cp.t_comp_cum_s},
              {"t_comm_cum_s", cp.t_comm_cum_s},
              {"d_comm_cum_mb", cp.d_comm_cum_mb},
              {"layers", layers},
              {"values", cp.global.values}};
}

struct LoadedCheckpoint {
  Checkpoint checkpoint;
  std::string config_hash;
};

inline LoadedCheckpoint checkpoint_from_json(const Json& j) {
  LoadedCheckpoint out;
  Checkpoint& cp = out.checkpoint;
  cp.format_version = j.at("format_version").get<int>();
  if (cp.format_version != Checkpoint::kFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format version " + std::to_string(cp.format_version));
  }
  out.config_hash = j.at("config_hash").get<std::string>();
  cp.round = j.at("round").get<int>();
  cp.t_comp_cum_s = j.at("t_comp_cum_s").get<double>();
  cp.t_comm_cum_s = j.at("t_comm_cum_s").get<double>();
  cp.d_comm_cum_mb = j.at("d_comm_cum_mb").get<double>();
  for (const auto& shape : j.at("layers")) cp.global.layers.push_back({shape.at(0).get<int>(), shape.at(1).get<int>()});
  cp.global.values = j.at("values").get<std::vector<double>>();
  return out;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return Json::parse(in);
}

}  // namespace fedgsp
