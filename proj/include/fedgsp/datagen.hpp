#pragma once

// Synthetic non-i.i.d. federated classification tasks.
//
// Each class c owns a mean vector mu_c ~ N(0, separation^2 I) drawn once from
// the task seed; a sample of class c is mu_c + N(0, I). Clients differ only in
// their label mix, which is controlled by the skew mode:
//   dirichlet  one symmetric Dirichlet draw per client, rounded to exactly
//              samples_per_client labels with the largest-remainder method;
//   shards     a class-balanced label pool of K*n samples is sorted by label,
//              cut into K*s equal shards and s shards are dealt to each client.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "fedgsp/error.hpp"
#include "fedgsp/rng.hpp"

namespace fedgsp {

/// Per-class sample counts of one client (or of a group of clients).
struct ClassDistribution {
  std::vector<std::int64_t> counts;

  ClassDistribution() = default;
  explicit ClassDistribution(std::vector<std::int64_t> c) : counts(std::move(c)) {}

  [[nodiscard]] std::size_t num_classes() const noexcept { return counts.size(); }

  [[nodiscard]] std::int64_t total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
  }

  ClassDistribution& operator+=(const ClassDistribution& other) {
    if (counts.empty()) counts.assign(other.counts.size(), 0);
    if (other.counts.size() != counts.size()) {
      throw std::invalid_argument("class distributions differ in class count");
    }
    for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += other.counts[c];
    return *this;
  }

  friend bool operator==(const ClassDistribution&, const ClassDistribution&) = default;
};

struct DirichletSkew {
  double concentration = 0.3;
};

struct ShardSkew {
  int shards_per_client = 2;
};

using Skew = std::variant<DirichletSkew, ShardSkew>;

struct SyntheticTaskSpec {
  int num_classes = 10;
  int num_clients = 60;
  int samples_per_client = 50;
  int feature_dim = 16;
  Skew skew = DirichletSkew{};
  /// Standard deviation of the per-class mean entries.
  double class_separation = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_clients < 2) throw ConfigError("task.num_clients must be >= 2");
    if (num_classes < 2) throw ConfigError("task.num_classes must be >= 2");
    if (samples_per_client < 1) throw ConfigError("task.samples_per_client must be >= 1");
    if (feature_dim < 1) throw ConfigError("task.feature_dim must be >= 1");
    if (!(class_separation >= 0.0) || !std::isfinite(class_separation)) {
      throw ConfigError("task.class_separation must be a finite non-negative number");
    }
    if (const auto* d = std::get_if<DirichletSkew>(&skew)) {
      if (!(d->concentration > 0.0) || !std::isfinite(d->concentration)) {
        throw ConfigError("task.concentration must be > 0");
      }
    } else {
      const auto& s = std::get<ShardSkew>(skew);
      if (s.shards_per_client < 1) throw ConfigError("task.shards_per_client must be >= 1");
      if (samples_per_client % s.shards_per_client != 0) {
        throw ConfigError("task.samples_per_client (" + std::to_string(samples_per_client) +
                          ") is not divisible by task.shards_per_client (" +
                          std::to_string(s.shards_per_client) + ")");
      }
    }
  }
};

/// Row-major labelled samples.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<double> features, std::vector<int> labels, int feature_dim, int num_classes)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        feature_dim_(feature_dim),
        num_classes_(num_classes) {
    if (labels_.empty()) throw std::invalid_argument("dataset has no samples");
    if (feature_dim_ < 1 || num_classes_ < 1) throw std::invalid_argument("dataset shape is empty");
    if (features_.size() != labels_.size() * static_cast<std::size_t>(feature_dim_)) {
      throw std::invalid_argument("feature matrix size does not match label count");
    }
    for (int y : labels_) {
      if (y < 0 || y >= num_classes_) throw std::invalid_argument("label out of range");
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
  [[nodiscard]] int feature_dim() const noexcept { return feature_dim_; }
  [[nodiscard]] int num_classes() const noexcept { return num_classes_; }
  [[nodiscard]] std::span<const int> labels() const noexcept { return labels_; }
  [[nodiscard]] std::span<const double> features() const noexcept { return features_; }
  [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(features_).subspan(i * feature_dim_, feature_dim_);
  }

 private:
  std::vector<double> features_;
  std::vector<int> labels_;
  int feature_dim_ = 0;
  int num_classes_ = 0;
};

inline ClassDistribution class_distribution(const Dataset& data) {
  ClassDistribution dist(std::vector<std::int64_t>(data.num_classes(), 0));
  for (int y : data.labels()) ++dist.counts[y];
  return dist;
}

struct ClientDataset {
  int client_id = 0;
  Dataset data;
  ClassDistribution distribution;

  ClientDataset(int id, Dataset d) : client_id(id), data(std::move(d)), distribution(class_distribution(data)) {}
};

struct FederatedTask {
  SyntheticTaskSpec spec;
  std::vector<ClientDataset> clients;
  Dataset test;
  std::vector<std::vector<double>> class_means;

  [[nodiscard]] std::vector<ClassDistribution> distributions() const {
    std::vector<ClassDistribution> out;
    out.reserve(clients.size());
    for (const auto& c : clients) out.push_back(c.distribution);
    return out;
  }
};

inline constexpr int kTestSamplesPerClass = 100;

/// Integer counts summing to `total`, proportional to `weights`.
/// Floors first, then the remaining units go to the largest fractional parts
/// (ties to the lower index).
inline std::vector<std::int64_t> largest_remainder(std::span<const double> weights, std::int64_t total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::int64_t> counts(weights.size(), 0);
  std::vector<double> frac(weights.size(), 0.0);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = wsum > 0.0 ? weights[i] / wsum * static_cast<double>(total) : 0.0;
    counts[i] = static_cast<std::int64_t>(std::floor(exact));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  // Floors never exceed the total, so only additions are needed.
  for (std::size_t i = 0; assigned < total; i = (i + 1) % order.size(), ++assigned) ++counts[order[i]];
  return counts;
}

namespace detail {

inline Dataset sample_features(const std::vector<int>& labels, const std::vector<std::vector<double>>& means,
                               int feature_dim, int num_classes, Rng& rng) {
  std::vector<double> features;
  features.reserve(labels.size() * feature_dim);
  for (int y : labels) {
    for (int j = 0; j < feature_dim; ++j) features.push_back(means[y][j] + rng.normal());
  }
  return Dataset(std::move(features), labels, feature_dim, num_classes);
}

inline std::vector<std::vector<int>> dirichlet_labels(const SyntheticTaskSpec& spec, double concentration) {
  std::vector<std::vector<int>> out(spec.num_clients);
  for (int k = 0; k < spec.num_clients; ++k) {
    Rng rng(derive_stream(spec.seed, "proportions", {static_cast<std::uint64_t>(k)}));
    const auto p = rng.dirichlet(spec.num_classes, concentration);
    const auto counts = largest_remainder(p, spec.samples_per_client);
    for (int c = 0; c < spec.num_classes; ++c) out[k].insert(out[k].end(), counts[c], c);
  }
  return out;
}

/// Sort-by-label sharding with single-label shards: the K * s shards of n / s
/// samples are split as evenly as possible over the classes (each class gets
/// floor or ceil of K * s / F shards), then dealt to clients by a seeded
/// permutation.
inline std::vector<std::vector<int>> shard_labels(const SyntheticTaskSpec& spec, int shards_per_client) {
  const std::size_t shard_size = spec.samples_per_client / shards_per_client;
  const std::size_t num_shards = static_cast<std::size_t>(spec.num_clients) * shards_per_client;
  const std::vector<double> uniform(spec.num_classes, 1.0);
  const auto shards_per_class = largest_remainder(uniform, static_cast<std::int64_t>(num_shards));
  std::vector<int> shard_label;
  shard_label.reserve(num_shards);
  for (int c = 0; c < spec.num_classes; ++c) shard_label.insert(shard_label.end(), shards_per_class[c], c);

  Rng rng(derive_stream(spec.seed, "shards"));
  const auto deal = rng.permutation(num_shards);

  std::vector<std::vector<int>> out(spec.num_clients);
  for (int k = 0; k < spec.num_clients; ++k) {
    for (int s = 0; s < shards_per_client; ++s) {
      const int label = shard_label[deal[static_cast<std::size_t>(k) * shards_per_client + s]];
      out[k].insert(out[k].end(), shard_size, label);
    }
    std::sort(out[k].begin(), out[k].end());
  }
  return out;
}

}  // namespace detail

/// Builds every client dataset plus a class-balanced test set of
/// kTestSamplesPerClass samples per class. Deterministic in `spec.seed`.
inline FederatedTask generate_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  FederatedTask task;
  task.spec = spec;

  Rng mean_rng(derive_stream(spec.seed, "class-means"));
  task.class_means.assign(spec.num_classes, std::vector<double>(spec.feature_dim));
  for (auto& mu : task.class_means) {
    for (auto& x : mu) x = spec.class_separation * mean_rng.normal();
  }

  const auto labels = std::visit(
      [&](const auto& skew) {
        using T = std::decay_t<decltype(skew)>;
        if constexpr (std::is_same_v<T, DirichletSkew>) {
          return detail::dirichlet_labels(spec, skew.concentration);
        } else {
          return detail::shard_labels(spec, skew.shards_per_client);
        }
      },
      spec.skew);

  task.clients.reserve(spec.num_clients);
  for (int k = 0; k < spec.num_clients; ++k) {
    Rng rng(derive_stream(spec.seed, "features", {static_cast<std::uint64_t>(k)}));
    task.clients.emplace_back(k, detail::sample_features(labels[k], task.class_means, spec.feature_dim,
                                                         spec.num_classes, rng));
  }

  std::vector<int> test_labels;
  test_labels.reserve(static_cast<std::size_t>(kTestSamplesPerClass) * spec.num_classes);
  for (int c = 0; c < spec.num_classes; ++c) test_labels.insert(test_labels.end(), kTestSamplesPerClass, c);
  Rng test_rng(derive_stream(spec.seed, "test"));
  task.test = detail::sample_features(test_labels, task.class_means, spec.feature_dim, spec.num_classes, test_rng);
  return task;
}

// Columnar CSV dump: header `client_id,label,feature_0,...,feature_{d-1}`,
// one row per training sample, features printed with enough digits to read
// back exactly.

inline void write_clients_csv(std::ostream& out, std::span<const ClientDataset> clients) {
  if (clients.empty()) return;
  const int d = clients.front().data.feature_dim();
  out << "client_id,label";
  for (int j = 0; j < d; ++j) out << ",feature_" << j;
  out << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& c : clients) {
    for (std::size_t i = 0; i < c.data.size(); ++i) {
      out << c.client_id << ',' << c.data.labels()[i];
      for (double x : c.data.row(i)) out << ',' << x;
      out << '\n';
    }
  }
}

/// Reads a dump produced by write_clients_csv. Rows of one client must be contiguous.
inline std::vector<ClientDataset> read_clients_csv(std::istream& in, int num_classes) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty client CSV");
  const int d = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 1;
  if (d < 1 || line.rfind("client_id,label,", 0) != 0) throw std::invalid_argument("bad client CSV header");

  std::vector<ClientDataset> out;
  int current = -1;
  std::vector<double> features;
  std::vector<int> labels;
  auto flush = [&] {
    if (current >= 0) out.emplace_back(current, Dataset(std::move(features), std::move(labels), d, num_classes));
    features.clear();
    labels.clear();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    const int id = std::stoi(cell);
    std::getline(row, cell, ',');
    const int label = std::stoi(cell);
    if (id != current) {
      flush();
      current = id;
    }
    labels.push_back(label);
    for (int j = 0; j < d; ++j) {
      if (!std::getline(row, cell, ',')) throw std::invalid_argument("short client CSV row");
      features.push_back(std::stod(cell));
    }
  }
  flush();
  return out;
}

}  // namespace fedgsp
