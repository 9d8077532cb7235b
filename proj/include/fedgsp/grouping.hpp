#pragma once

// Inter-cluster grouping.
//
// Clients are first partitioned into L = floor(K / M) equal-size clusters of
// similar class distributions (balanced k-means whose assignment step is an
// exact min-cost flow), then each of the M groups takes one client from every
// cluster. Groups built this way have centroids close to the global centroid,
// so their overall class distributions are close to each other.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fedgsp/datagen.hpp"
#include "fedgsp/error.hpp"
#include "fedgsp/mcf.hpp"
#include "fedgsp/metrics.hpp"
#include "fedgsp/rng.hpp"

namespace fedgsp {

using Vector = std::vector<double>;

/// Arc costs are real half squared distances scaled by this factor and
/// rounded half-to-even before the integral flow solve.
inline constexpr double kCostScale = 1e6;
inline constexpr int kMaxClusterIterations = 10;
inline constexpr double kCentroidTolerance = 1e-6;

struct GroupingPlan {
  int round = 0;
  std::vector<std::vector<int>> groups;
  /// Clients sitting out this round, ascending.
  std::vector<int> unassigned;

  [[nodiscard]] std::size_t group_count() const noexcept { return groups.size(); }
  friend bool operator==(const GroupingPlan&, const GroupingPlan&) = default;
};

struct ClusterState {
  int cluster_count = 0;
  std::vector<Vector> centroids;
  /// Sampled client ids, ascending; assignment[i] is the cluster of members[i].
  std::vector<int> members;
  std::vector<int> assignment;
  /// Sum over members of 0.5 * ||V - C||^2 at the current centroids.
  double objective = 0.0;
};

struct GroupCentroidReport {
  std::vector<Vector> group_centroids;
  Vector global_centroid;
  std::vector<double> squared_errors;
  /// Max member-to-centroid squared distance per cluster.
  std::vector<double> cluster_spread;
  /// (1 / L^2) * sum of cluster_spread.
  double bound = 0.0;
};

struct IcgResult {
  GroupingPlan plan;
  ClusterState clusters;
  GroupCentroidReport report;
  /// Clustering objective after every assignment step and every update step, in order.
  std::vector<double> objective_trace;
  int iterations = 0;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline Vector to_vector(const ClassDistribution& v) {
  return Vector(v.counts.begin(), v.counts.end());
}

/// Clustering objective for a given assignment and centroid set.
inline double clustering_objective(std::span<const Vector> points, std::span<const int> assignment,
                                   std::span<const Vector> centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) total += 0.5 * squared_distance(points[i], centroids[assignment[i]]);
  return total;
}

/// Balanced assignment of points to centroids: every cluster receives exactly
/// |points| / L points and the summed half squared distance is minimal (up to
/// cost quantization). Requires |points| divisible by L.
inline std::vector<int> cluster_assignment(std::span<const Vector> points, std::span<const Vector> centroids) {
  const int n = static_cast<int>(points.size());
  const int L = static_cast<int>(centroids.size());
  if (L < 1 || n % L != 0) throw std::invalid_argument("point count must be a positive multiple of the cluster count");

  mcf::FlowNetwork net(n + L);
  for (int i = 0; i < n; ++i) net.supplies[i] = 1;
  for (int l = 0; l < L; ++l) net.supplies[n + l] = -(n / L);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < L; ++l) {
      const double cost = 0.5 * squared_distance(points[i], centroids[l]) * kCostScale;
      net.add_arc(i, n + l, 1, static_cast<std::int64_t>(std::nearbyint(cost)));
    }
  }
  const auto solution = mcf::solve(net);
  if (solution.status != mcf::FlowStatus::optimal) throw InternalError("balanced assignment flow is infeasible");

  std::vector<int> assignment(n, -1);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < L; ++l) {
      if (solution.flow[static_cast<std::size_t>(i) * L + l] == 1) assignment[i] = l;
    }
    if (assignment[i] < 0) throw InternalError("point left unassigned by the flow solution");
  }
  return assignment;
}

/// Cluster means.
inline std::vector<Vector> cluster_update(std::span<const Vector> points, std::span<const int> assignment,
                                          int cluster_count) {
  const std::size_t dim = points.empty() ? 0 : points.front().size();
  std::vector<Vector> centroids(cluster_count, Vector(dim, 0.0));
  std::vector<std::int64_t> sizes(cluster_count, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int l = assignment[i];
    for (std::size_t j = 0; j < dim; ++j) centroids[l][j] += points[i][j];
    ++sizes[l];
  }
  for (int l = 0; l < cluster_count; ++l) {
    if (sizes[l] == 0) throw InternalError("empty cluster " + std::to_string(l));
    for (auto& x : centroids[l]) x /= static_cast<double>(sizes[l]);
  }
  return centroids;
}

inline GroupCentroidReport centroid_report(const GroupingPlan& plan, const ClusterState& clusters,
                                           std::span<const ClassDistribution> distributions) {
  GroupCentroidReport report;
  const int L = clusters.cluster_count;
  const std::size_t dim = distributions.front().num_classes();

  report.cluster_spread.assign(L, 0.0);
  for (std::size_t i = 0; i < clusters.members.size(); ++i) {
    const int l = clusters.assignment[i];
    const Vector v = to_vector(distributions[clusters.members[i]]);
    report.cluster_spread[l] = std::max(report.cluster_spread[l], squared_distance(v, clusters.centroids[l]));
  }
  report.global_centroid.assign(dim, 0.0);
  for (const auto& c : clusters.centroids) {
    for (std::size_t j = 0; j < dim; ++j) report.global_centroid[j] += c[j] / L;
  }
  report.bound = std::accumulate(report.cluster_spread.begin(), report.cluster_spread.end(), 0.0) /
                 (static_cast<double>(L) * L);
  for (const auto& group : plan.groups) {
    Vector centroid(dim, 0.0);
    for (int k : group) {
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += static_cast<double>(distributions[k].counts[j]);
    }
    for (auto& x : centroid) x /= static_cast<double>(group.size());
    report.squared_errors.push_back(squared_distance(centroid, report.global_centroid));
    report.group_centroids.push_back(std::move(centroid));
  }
  return report;
}

/// Groups all clients into `group_count` groups of exactly L = floor(K / group_count)
/// clients, one per cluster. `group_count` above K is capped at K. Randomness
/// (subsample, centroid seeds, group draws, in-group order) comes from `seed`.
inline IcgResult inter_cluster_grouping(std::span<const ClassDistribution> distributions, int group_count, int round,
                                        std::uint64_t seed, int max_iterations = kMaxClusterIterations) {
  const int K = static_cast<int>(distributions.size());
  if (group_count < 1) throw std::invalid_argument("group count must be >= 1");
  if (K < 1) throw std::invalid_argument("no clients to group");
  const int M = std::min(group_count, K);
  const int L = K / M;
  const int cluster_size = K / L;

  IcgResult result;
  result.plan.round = round;

  // Subsample L * floor(K / L) clients.
  Rng subsample_rng(derive_stream(seed, "icg-subsample"));
  auto picked = subsample_rng.sample(K, static_cast<std::size_t>(L) * cluster_size);
  std::vector<int> members(picked.begin(), picked.end());
  std::sort(members.begin(), members.end());
  std::vector<char> in_sample(K, 0);
  for (int k : members) in_sample[k] = 1;

  std::vector<Vector> points;
  points.reserve(members.size());
  for (int k : members) points.push_back(to_vector(distributions[k]));

  // Seed centroids with L distinct sampled clients.
  Rng init_rng(derive_stream(seed, "icg-init"));
  std::vector<Vector> centroids;
  for (std::size_t i : init_rng.sample(points.size(), L)) centroids.push_back(points[i]);

  std::vector<int> assignment;
  for (int it = 1; it <= max_iterations; ++it) {
    auto candidate = cluster_assignment(points, centroids);
    double assigned = clustering_objective(points, candidate, centroids);
    if (!assignment.empty()) {
      // Quantized arc costs can, in near-tie cases, return an assignment whose
      // exact objective is marginally worse than the current one; keep the
      // current assignment then.
      const double current = clustering_objective(points, assignment, centroids);
      if (assigned > current) {
        candidate = assignment;
        assigned = current;
      }
    }
    assignment = std::move(candidate);
    result.objective_trace.push_back(assigned);

    auto updated = cluster_update(points, assignment, L);
    double displacement = 0.0;
    for (int l = 0; l < L; ++l) displacement = std::max(displacement, std::sqrt(squared_distance(updated[l], centroids[l])));
    centroids = std::move(updated);
    result.objective_trace.push_back(clustering_objective(points, assignment, centroids));
    result.iterations = it;
    if (displacement < kCentroidTolerance) break;
  }

  // One client per cluster into each group, drawn without replacement.
  std::vector<std::vector<int>> by_cluster(L);
  for (std::size_t i = 0; i < members.size(); ++i) by_cluster[assignment[i]].push_back(members[i]);
  result.plan.groups.assign(M, {});
  for (int l = 0; l < L; ++l) {
    Rng draw_rng(derive_stream(seed, "icg-draw", {static_cast<std::uint64_t>(l)}));
    const auto order = draw_rng.permutation(by_cluster[l].size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const int client = by_cluster[l][order[pos]];
      if (pos < static_cast<std::size_t>(M)) {
        result.plan.groups[pos].push_back(client);
      } else {
        result.plan.unassigned.push_back(client);
      }
    }
  }
  for (int m = 0; m < M; ++m) {
    Rng order_rng(derive_stream(seed, "icg-order", {static_cast<std::uint64_t>(m)}));
    order_rng.shuffle(std::span<int>(result.plan.groups[m]));
  }
  for (int k = 0; k < K; ++k) {
    if (!in_sample[k]) result.plan.unassigned.push_back(k);
  }
  std::sort(result.plan.unassigned.begin(), result.plan.unassigned.end());

  result.clusters.cluster_count = L;
  result.clusters.centroids = std::move(centroids);
  result.clusters.members = std::move(members);
  result.clusters.assignment = std::move(assignment);
  result.clusters.objective = result.objective_trace.back();
  result.report = centroid_report(result.plan, result.clusters, distributions);
  return result;
}

/// Random balanced grouping: `group_count` groups of floor(K / group_count)
/// clients drawn uniformly; the remainder sits out.
inline GroupingPlan random_grouping(int client_count, int group_count, int round, std::uint64_t seed) {
  if (group_count < 1) throw std::invalid_argument("group count must be >= 1");
  if (client_count < 1) throw std::invalid_argument("no clients to group");
  const int M = std::min(group_count, client_count);
  const int L = client_count / M;
  Rng rng(derive_stream(seed, "random-grouping"));
  const auto order = rng.permutation(client_count);
  GroupingPlan plan;
  plan.round = round;
  plan.groups.assign(M, {});
  for (int m = 0; m < M; ++m) {
    for (int i = 0; i < L; ++i) plan.groups[m].push_back(static_cast<int>(order[static_cast<std::size_t>(m) * L + i]));
  }
  for (std::size_t i = static_cast<std::size_t>(M) * L; i < order.size(); ++i) {
    plan.unassigned.push_back(static_cast<int>(order[i]));
  }
  std::sort(plan.unassigned.begin(), plan.unassigned.end());
  return plan;
}

/// Overall class distribution of each group.
inline std::vector<ClassDistribution> group_distributions(const GroupingPlan& plan,
                                                          std::span<const ClassDistribution> distributions) {
  std::vector<ClassDistribution> out;
  out.reserve(plan.groups.size());
  for (const auto& group : plan.groups) {
    ClassDistribution total(std::vector<std::int64_t>(distributions.front().num_classes(), 0));
    for (int k : group) total += distributions[k];
    out.push_back(std::move(total));
  }
  return out;
}

enum class GroupDistance { squared_l2, cpd };

/// Sum over group pairs m1 < m2 of the distance between their overall class
/// distributions. Diagnostic only; grouping never optimizes it directly.
inline double grouping_objective_z(const GroupingPlan& plan, std::span<const ClassDistribution> distributions,
                                   GroupDistance distance = GroupDistance::squared_l2, const CpdConfig& cfg = {}) {
  const auto totals = group_distributions(plan, distributions);
  double z = 0.0;
  for (std::size_t a = 0; a < totals.size(); ++a) {
    for (std::size_t b = a + 1; b < totals.size(); ++b) {
      z += distance == GroupDistance::cpd ? cpd(totals[a], totals[b], cfg)
                                          : squared_distance(to_vector(totals[a]), to_vector(totals[b]));
    }
  }
  return z;
}

}  // namespace fedgsp
