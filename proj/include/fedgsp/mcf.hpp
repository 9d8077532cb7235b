#pragma once

// Exact integral minimum-cost flow.
//
// Successive shortest paths with node potentials. Arcs with negative cost are
// saturated up front and their residual reverse arcs carry the (positive)
// negated cost, so every residual cost is non-negative from the start and
// Dijkstra can be used from the first augmentation. Excess/deficit nodes are
// wired to a super source and super sink; the instance is feasible iff the
// maximum flow through them meets every supply.
//
// Determinism: adjacency lists keep arc insertion order, relaxation only
// accepts strict improvements and the Dijkstra frontier picks the lowest node
// index among equal labels, so among equal-cost shortest paths the one
// discovered through the lowest arc indices wins.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedgsp::mcf {

struct Arc {
  int tail = 0;
  int head = 0;
  std::int64_t capacity = 0;
  std::int64_t unit_cost = 0;
};

struct FlowNetwork {
  int node_count = 0;
  std::vector<Arc> arcs;
  /// Positive = source, negative = sink.
  std::vector<std::int64_t> supplies;

  explicit FlowNetwork(int nodes = 0) : node_count(nodes), supplies(nodes, 0) {}

  int add_arc(int tail, int head, std::int64_t capacity, std::int64_t unit_cost) {
    arcs.push_back({tail, head, capacity, unit_cost});
    return static_cast<int>(arcs.size()) - 1;
  }

  void validate() const {
    if (node_count < 0 || supplies.size() != static_cast<std::size_t>(node_count)) {
      throw std::invalid_argument("supplies must have one entry per node");
    }
    std::int64_t balance = 0;
    for (std::int64_t s : supplies) {
      if (__builtin_add_overflow(balance, s, &balance)) throw std::overflow_error("supply sum overflows");
    }
    if (balance != 0) throw std::invalid_argument("supplies do not sum to zero");
    for (std::size_t i = 0; i < arcs.size(); ++i) {
      const Arc& a = arcs[i];
      if (a.tail < 0 || a.tail >= node_count || a.head < 0 || a.head >= node_count) {
        throw std::invalid_argument("arc " + std::to_string(i) + " references an unknown node");
      }
      if (a.capacity < 0) throw std::invalid_argument("arc " + std::to_string(i) + " has negative capacity");
    }
  }
};

enum class FlowStatus { optimal, infeasible };

struct FlowSolution {
  std::vector<std::int64_t> flow;  ///< Per arc of the input network.
  std::int64_t total_cost = 0;
  FlowStatus status = FlowStatus::infeasible;
};

namespace detail {

struct ResidualEdge {
  int to;
  std::int64_t residual;
  std::int64_t cost;
};

class SuccessiveShortestPaths {
 public:
  explicit SuccessiveShortestPaths(int nodes) : adjacency_(nodes) {}

  int add(int from, int to, std::int64_t capacity, std::int64_t cost) {
    const int id = static_cast<int>(edges_.size());
    edges_.push_back({to, capacity, cost});
    edges_.push_back({from, 0, -cost});
    adjacency_[from].push_back(id);
    adjacency_[to].push_back(id + 1);
    return id;
  }

  /// Pushes up to `limit` units from source to sink; returns the amount sent.
  std::int64_t run(int source, int sink, std::int64_t limit) {
    const int n = static_cast<int>(adjacency_.size());
    std::vector<std::int64_t> potential(n, 0);
    std::vector<std::int64_t> dist(n);
    std::vector<int> via(n);
    std::vector<char> done(n);
    std::int64_t sent = 0;

    while (sent < limit) {
      std::fill(dist.begin(), dist.end(), kInf);
      std::fill(via.begin(), via.end(), -1);
      std::fill(done.begin(), done.end(), 0);
      dist[source] = 0;
      for (;;) {
        int u = -1;
        for (int v = 0; v < n; ++v) {
          if (!done[v] && dist[v] < kInf && (u < 0 || dist[v] < dist[u])) u = v;
        }
        if (u < 0) break;
        done[u] = 1;
        for (int e : adjacency_[u]) {
          const ResidualEdge& edge = edges_[e];
          if (edge.residual <= 0 || done[edge.to]) continue;
          const std::int64_t reduced = edge.cost + potential[u] - potential[edge.to];
          const std::int64_t candidate = dist[u] + reduced;
          if (candidate < dist[edge.to]) {
            dist[edge.to] = candidate;
            via[edge.to] = e;
          }
        }
      }
      if (dist[sink] >= kInf) break;
      for (int v = 0; v < n; ++v) {
        if (dist[v] < kInf) potential[v] += dist[v];
      }

      std::int64_t push = limit - sent;
      for (int v = sink; v != source; v = edges_[via[v] ^ 1].to) push = std::min(push, edges_[via[v]].residual);
      for (int v = sink; v != source; v = edges_[via[v] ^ 1].to) {
        edges_[via[v]].residual -= push;
        edges_[via[v] ^ 1].residual += push;
      }
      sent += push;
    }
    return sent;
  }

  [[nodiscard]] std::int64_t residual(int edge) const { return edges_[edge].residual; }

 private:
  static constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;

  std::vector<ResidualEdge> edges_;
  std::vector<std::vector<int>> adjacency_;
};

}  // namespace detail

/// Minimum-cost integral flow meeting every supply exactly. An infeasible
/// instance returns status infeasible with all-zero flows. Throws
/// std::overflow_error if the total cost does not fit in 64 bits.
inline FlowSolution solve(const FlowNetwork& network) {
  network.validate();
  const int n = network.node_count;
  const int source = n;
  const int sink = n + 1;

  detail::SuccessiveShortestPaths ssp(n + 2);
  std::vector<std::int64_t> excess = network.supplies;
  std::vector<int> edge_of(network.arcs.size());
  std::vector<std::int64_t> presaturated(network.arcs.size(), 0);

  for (std::size_t i = 0; i < network.arcs.size(); ++i) {
    const Arc& a = network.arcs[i];
    if (a.unit_cost < 0) {
      // Reverse orientation: flow on the original arc = capacity - flow on this edge.
      edge_of[i] = ssp.add(a.head, a.tail, a.capacity, -a.unit_cost);
      presaturated[i] = a.capacity;
      excess[a.tail] -= a.capacity;
      excess[a.head] += a.capacity;
    } else {
      edge_of[i] = ssp.add(a.tail, a.head, a.capacity, a.unit_cost);
    }
  }

  std::int64_t required = 0;
  for (int v = 0; v < n; ++v) {
    if (excess[v] > 0) {
      ssp.add(source, v, excess[v], 0);
      if (__builtin_add_overflow(required, excess[v], &required)) throw std::overflow_error("excess overflows");
    } else if (excess[v] < 0) {
      ssp.add(v, sink, -excess[v], 0);
    }
  }

  FlowSolution solution;
  solution.flow.assign(network.arcs.size(), 0);
  if (ssp.run(source, sink, required) < required) return solution;

  std::int64_t cost = 0;
  for (std::size_t i = 0; i < network.arcs.size(); ++i) {
    const Arc& a = network.arcs[i];
    const std::int64_t pushed = a.capacity - ssp.residual(edge_of[i]);
    const std::int64_t flow = presaturated[i] > 0 ? presaturated[i] - pushed : pushed;
    solution.flow[i] = flow;
    std::int64_t term = 0;
    if (__builtin_mul_overflow(flow, a.unit_cost, &term) || __builtin_add_overflow(cost, term, &cost)) {
      throw std::overflow_error("total flow cost overflows 64-bit integer");
    }
  }
  solution.total_cost = cost;
  solution.status = FlowStatus::optimal;
  return solution;
}

}  // namespace fedgsp::mcf
