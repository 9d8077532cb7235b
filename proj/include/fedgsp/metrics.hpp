#pragma once

// Class probability distance and the analytic time/traffic cost models.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedgsp/datagen.hpp"
#include "fedgsp/error.hpp"

namespace fedgsp {

struct CpdConfig {
  /// Gaussian RBF bandwidth over one-hot class embeddings.
  double sigma = 1.0;

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("cpd.sigma must be > 0");
  }
};

inline std::vector<double> normalize(const ClassDistribution& v) {
  const std::int64_t total = v.total();
  if (total <= 0) throw std::invalid_argument("class distribution has zero total");
  std::vector<double> p(v.counts.size());
  for (std::size_t c = 0; c < p.size(); ++c) p[c] = static_cast<double>(v.counts[c]) / static_cast<double>(total);
  return p;
}

/// Squared MMD between the normalized class distributions, classes embedded
/// one-hot under an RBF kernel. Because all off-diagonal kernel entries equal
/// exp(-1/sigma^2) and P - Q sums to zero, the double sum collapses to
/// (1 - exp(-1/sigma^2)) * ||P - Q||^2.
inline double cpd(const ClassDistribution& a, const ClassDistribution& b, const CpdConfig& cfg = {}) {
  cfg.validate();
  if (a.num_classes() != b.num_classes()) throw std::invalid_argument("class distributions differ in class count");
  const auto p = normalize(a);
  const auto q = normalize(b);
  double sq = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) sq += (p[c] - q[c]) * (p[c] - q[c]);
  return -std::expm1(-1.0 / (cfg.sigma * cfg.sigma)) * sq;
}

/// CPD of every unordered pair (i < j), in lexicographic pair order.
inline std::vector<double> pairwise_cpd(std::span<const ClassDistribution> dists, const CpdConfig& cfg = {}) {
  std::vector<double> out;
  out.reserve(dists.size() * (dists.size() - std::min<std::size_t>(dists.size(), 1)) / 2);
  for (std::size_t i = 0; i < dists.size(); ++i) {
    for (std::size_t j = i + 1; j < dists.size(); ++j) out.push_back(cpd(dists[i], dists[j], cfg));
  }
  return out;
}

/// Median of a sample; even sizes average the two middle values.
inline double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

inline double median_pairwise_cpd(std::span<const ClassDistribution> dists, const CpdConfig& cfg = {}) {
  if (dists.size() < 2) throw std::invalid_argument("median pairwise CPD needs at least two distributions");
  return median(pairwise_cpd(dists, cfg));
}

/// Constants of the computation/communication cost models. Defaults describe
/// a Snapdragon 835 class client and a 25.2 MB model over 567 Mbps links.
struct CostModelParams {
  double flops_per_sample = 96e6;    ///< per training sample
  double flops_aggregation = 6.3e6;  ///< per global aggregation
  double device_flops = 567e9;       ///< per second
  double model_megabytes = 25.2;
  double rate_in_mbps = 567.0;
  double rate_out_mbps = 567.0;
  double samples_per_client = 226.0;
  double local_epochs = 1.0;
  double clients = 368.0;
  double kappa = 0.3;

  void validate() const {
    for (double v : {flops_per_sample, flops_aggregation, device_flops, model_megabytes, rate_in_mbps, rate_out_mbps,
                     samples_per_client, local_epochs, clients, kappa}) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("cost model parameters must be finite and > 0");
    }
  }
};

/// Computation time of one round trained in `groups` groups, in seconds.
inline double t_comp_round(double groups, const CostModelParams& p) {
  const double training = p.flops_per_sample / p.device_flops * p.samples_per_client * p.local_epochs * p.clients /
                          std::min(p.clients, groups);
  const double aggregation = p.flops_aggregation / p.device_flops * (p.kappa * groups - 1.0);
  return training + aggregation;
}

/// Computation time over rounds 1..R given each round's group count, in seconds.
template <typename Count>
double t_comp(std::span<const Count> groups_per_round, const CostModelParams& p) {
  p.validate();
  double total = 0.0;
  for (Count m : groups_per_round) total += t_comp_round(static_cast<double>(m), p);
  return total;
}

/// Communication time of R rounds in seconds; megabytes to megabits via the factor 8.
inline double t_comm(double rounds, const CostModelParams& p) {
  p.validate();
  return 8.0 * p.kappa * p.clients * p.model_megabytes * rounds * (1.0 / p.rate_in_mbps + 1.0 / p.rate_out_mbps);
}

/// Client-to-group-manager traffic of R rounds in megabytes.
inline double d_comm(double rounds, const CostModelParams& p) {
  p.validate();
  return 2.0 * p.kappa * p.clients * p.model_megabytes * rounds;
}

}  // namespace fedgsp
