#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "fedgsp/datagen.hpp"
#include "fedgsp/rng.hpp"

using namespace fedgsp;

namespace {

SyntheticTaskSpec small_spec(Skew skew, std::uint64_t seed = 7) {
  SyntheticTaskSpec s;
  s.num_classes = 5;
  s.num_clients = 12;
  s.samples_per_client = 50;
  s.feature_dim = 4;
  s.skew = skew;
  s.seed = seed;
  return s;
}

double mean_skew(const FederatedTask& task) {
  // Average total-variation distance of each client's class proportions from uniform.
  double total = 0.0;
  for (const auto& c : task.clients) {
    const double n = static_cast<double>(c.distribution.total());
    const double F = static_cast<double>(c.distribution.num_classes());
    for (auto count : c.distribution.counts) total += 0.5 * std::abs(static_cast<double>(count) / n - 1.0 / F);
  }
  return total / static_cast<double>(task.clients.size());
}

}  // namespace

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  Rng a(derive_stream(3, "x", {1, 2}));
  Rng b(derive_stream(3, "x", {1, 2}));
  Rng c(derive_stream(3, "x", {2, 1}));
  Rng d(derive_stream(3, "y", {1, 2}));
  const auto va = a(), vb = b(), vc = c(), vd = d();
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
  EXPECT_NE(va, vd);
}

TEST(Rng, UniformMomentsAndRange) {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalAndGammaMoments) {
  Rng rng(5);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
  for (double shape : {0.3, 1.0, 4.5}) {
    double g = 0;
    for (int i = 0; i < n; ++i) g += rng.gamma(shape);
    EXPECT_NEAR(g / n, shape, 0.03 * std::max(1.0, shape)) << "shape " << shape;
  }
}

TEST(Rng, PermutationAndSampleAreValid) {
  Rng rng(9);
  auto p = rng.permutation(50);
  std::vector<std::size_t> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  const auto s = rng.sample(30, 12);
  EXPECT_EQ(s.size(), 12u);
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 12u);
  for (auto v : s) EXPECT_LT(v, 30u);
}

TEST(Rng, BelowIsUnbiased) {
  Rng rng(4);
  std::vector<int> hist(3, 0);
  for (int i = 0; i < 90000; ++i) ++hist[rng.below(3)];
  for (int h : hist) EXPECT_NEAR(h, 30000, 600);
}

TEST(LargestRemainder, SumsToTotalAndFollowsFractions) {
  const std::vector<double> w{0.5, 0.3, 0.2};
  EXPECT_EQ(largest_remainder(w, 10), (std::vector<std::int64_t>{5, 3, 2}));
  const std::vector<double> thirds{1, 1, 1};
  EXPECT_EQ(largest_remainder(thirds, 10), (std::vector<std::int64_t>{4, 3, 3}));
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto p = rng.dirichlet(7, 0.5);
    const auto c = largest_remainder(p, 37);
    EXPECT_EQ(std::accumulate(c.begin(), c.end(), std::int64_t{0}), 37);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE(std::abs(static_cast<double>(c[i]) - p[i] * 37), 1.0);
  }
}

TEST(ClassDistribution, DirectTally) {
  const Dataset d({0, 0, 0}, {0, 0, 1}, 1, 2);
  EXPECT_EQ(class_distribution(d).counts, (std::vector<std::int64_t>{2, 1}));
}

TEST(Dataset, RejectsDegenerateInput) {
  EXPECT_THROW(Dataset({}, {}, 2, 3), std::invalid_argument);
  EXPECT_THROW(Dataset({0.0, 1.0}, {3}, 2, 3), std::invalid_argument);
  EXPECT_THROW(Dataset({0.0}, {0}, 2, 3), std::invalid_argument);
}

TEST(GenerateTask, TotalCountMatchesBruteForceTally) {
  const auto task = generate_task(small_spec(DirichletSkew{0.3}));
  ASSERT_EQ(task.clients.size(), 12u);
  std::int64_t grand = 0;
  for (const auto& c : task.clients) {
    std::vector<std::int64_t> tally(5, 0);
    for (std::size_t i = 0; i < c.data.size(); ++i) ++tally[c.data.labels()[i]];
    EXPECT_EQ(tally, c.distribution.counts);
    grand += std::accumulate(tally.begin(), tally.end(), std::int64_t{0});
  }
  EXPECT_EQ(grand, 600);
}

TEST(GenerateTask, HugeConcentrationIsNearlyUniform) {
  auto spec = small_spec(DirichletSkew{1e6});
  spec.samples_per_client = 1000;
  const auto task = generate_task(spec);
  for (const auto& c : task.clients) {
    for (auto count : c.distribution.counts) EXPECT_NEAR(static_cast<double>(count) / 1000.0, 0.2, 0.01);
  }
}

TEST(GenerateTask, SingleShardGivesOneClassPerClient) {
  const auto task = generate_task(small_spec(ShardSkew{1}));
  for (const auto& c : task.clients) {
    const auto nonzero = std::count_if(c.distribution.counts.begin(), c.distribution.counts.end(),
                                       [](std::int64_t v) { return v > 0; });
    EXPECT_EQ(nonzero, 1);
    EXPECT_EQ(c.distribution.total(), 50);
  }
}

TEST(GenerateTask, ShardsAreSingleLabelAndSpreadEvenly) {
  const auto task = generate_task(small_spec(ShardSkew{2}));
  ClassDistribution pooled;
  for (const auto& c : task.clients) {
    for (auto count : c.distribution.counts) EXPECT_EQ(count % 25, 0);
    pooled += c.distribution;
  }
  // 24 shards of 25 samples over 5 classes: four classes get 5 shards, one gets 4.
  std::vector<std::int64_t> sorted = pooled.counts;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<std::int64_t>{100, 125, 125, 125, 125}));
}

TEST(GenerateTask, RejectsInvalidSpecs) {
  auto bad = small_spec(ShardSkew{3});
  EXPECT_THROW(generate_task(bad), ConfigError);
  auto zero = small_spec(DirichletSkew{0.0});
  EXPECT_THROW(generate_task(zero), ConfigError);
  auto no_clients = small_spec(DirichletSkew{});
  no_clients.num_clients = 0;
  EXPECT_THROW(generate_task(no_clients), ConfigError);
}

TEST(GenerateTask, DeterministicInSeed) {
  const auto a = generate_task(small_spec(DirichletSkew{0.3}, 42));
  const auto b = generate_task(small_spec(DirichletSkew{0.3}, 42));
  const auto c = generate_task(small_spec(DirichletSkew{0.3}, 43));
  ASSERT_EQ(a.clients.size(), b.clients.size());
  bool differs = false;
  for (std::size_t k = 0; k < a.clients.size(); ++k) {
    EXPECT_EQ(a.clients[k].distribution, b.clients[k].distribution);
    EXPECT_TRUE(std::equal(a.clients[k].data.features().begin(), a.clients[k].data.features().end(),
                           b.clients[k].data.features().begin()));
    differs = differs || !(a.clients[k].distribution == c.clients[k].distribution);
  }
  EXPECT_TRUE(differs);
}

TEST(GenerateTask, SmallerConcentrationMeansMoreSkew) {
  auto spec = small_spec(DirichletSkew{});
  spec.num_clients = 40;
  spec.num_classes = 10;
  double previous = -1.0;
  for (double alpha : {100.0, 1.0, 0.1}) {
    spec.skew = DirichletSkew{alpha};
    const double skew = mean_skew(generate_task(spec));
    EXPECT_GT(skew, previous) << "concentration " << alpha;
    previous = skew;
  }
}

TEST(GenerateTask, TestSetIsClassBalanced) {
  const auto task = generate_task(small_spec(DirichletSkew{0.3}));
  const auto dist = class_distribution(task.test);
  for (auto c : dist.counts) EXPECT_EQ(c, kTestSamplesPerClass);
}

TEST(ClientsCsv, RoundTrip) {
  const auto task = generate_task(small_spec(DirichletSkew{0.3}));
  std::stringstream buf;
  write_clients_csv(buf, task.clients);
  const auto back = read_clients_csv(buf, 5);
  ASSERT_EQ(back.size(), task.clients.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    EXPECT_EQ(back[k].client_id, task.clients[k].client_id);
    EXPECT_EQ(back[k].distribution, task.clients[k].distribution);
    EXPECT_TRUE(std::equal(back[k].data.features().begin(), back[k].data.features().end(),
                           task.clients[k].data.features().begin()));
  }
}
