#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "mqgnn/cache.hpp"
#include "mqgnn/error.hpp"
#include "mqgnn/graph.hpp"

using namespace mqgnn;

namespace {

GraphCSR with_train(const GraphCSR& g, std::vector<NodeId> train) {
  std::array<std::vector<std::uint8_t>, 3> masks;
  for (auto& m : masks) m.assign(g.num_nodes(), 0);
  for (auto v : train) masks[0][v] = 1;
  return g.with_masks(masks);
}

double total(const CacheProbs& p) { return std::accumulate(p.probs.begin(), p.probs.end(), 0.0); }

}  // namespace

TEST(DegreeProbs, DirectInDegrees) {
  // In-degrees (1, 2, 1).
  const auto g = build_csr({{1, 0}, {0, 1}, {2, 1}, {1, 2}}, 3);
  const auto p = cache_probs_degree(g);
  EXPECT_DOUBLE_EQ(p.probs[0], 0.25);
  EXPECT_DOUBLE_EQ(p.probs[1], 0.5);
  EXPECT_DOUBLE_EQ(p.probs[2], 0.25);
}

TEST(DegreeProbs, RegularIsUniform) {
  const auto g = build_csr(symmetrize({{0, 1}, {1, 2}, {2, 3}, {3, 0}}), 4);
  for (double x : cache_probs_degree(g).probs) EXPECT_DOUBLE_EQ(x, 0.25);
}

TEST(DegreeProbs, ZeroEdgesFallBackToUniform) {
  const auto p = cache_probs_degree(build_csr({}, 5));
  for (double x : p.probs) EXPECT_DOUBLE_EQ(x, 0.2);
}

TEST(DegreeProbs, PowerLawMassIsConcentrated) {
  const auto g = generate_power_law(10000, 2.1, 1);
  auto p = cache_probs_degree(g).probs;
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  std::sort(p.rbegin(), p.rend());
  EXPECT_GT(std::accumulate(p.begin(), p.begin() + 100, 0.0), 0.10);
}

TEST(WalkProbs, ZeroLayersUniformOverTrain) {
  const auto g = with_train(generate_sbm({5, 5}, 0.5, 0.1, 1), {1, 4, 7});
  const auto p = cache_probs_walk(g, 5, 0);
  for (NodeId v = 0; v < 10; ++v) EXPECT_DOUBLE_EQ(p.probs[v], (v == 1 || v == 4 || v == 7) ? 1.0 / 3.0 : 0.0);
}

TEST(WalkProbs, TwoNodePathHandValue) {
  const auto g = with_train(build_csr(symmetrize({{0, 1}}), 2), {0});
  // d = (1, 1); P1 = (DA + I)(1, 0) = (1, 1) → (0.5, 0.5).
  const auto p = cache_probs_walk(g, 5, 1);
  EXPECT_DOUBLE_EQ(p.probs[0], 0.5);
  EXPECT_DOUBLE_EQ(p.probs[1], 0.5);
}

TEST(WalkProbs, UnreachableNodesGetZero) {
  const auto g = with_train(build_csr(symmetrize({{0, 1}, {2, 3}}), 4), {0});
  const auto p = cache_probs_walk(g, 5, 3);
  EXPECT_EQ(p.probs[2], 0.0);
  EXPECT_EQ(p.probs[3], 0.0);
  EXPECT_NEAR(total(p), 1.0, 1e-12);
}

TEST(WalkProbs, MatchesDenseIteration) {
  const auto base = split_masks(generate_sbm({10, 12, 10}, 0.4, 0.05, 3), {0.3, 0.3, 0.3}, 3);
  const std::size_t n = base.num_nodes(), fanout = 3, layers = 2;
  DenseMatrix m(n, n);
  for (NodeId v = 0; v < n; ++v) {
    const auto deg = in_degree(base, v);
    const double d = deg ? static_cast<double>(std::min(fanout, deg)) / static_cast<double>(deg) : 0.0;
    m(v, v) = 1.0;
    for (auto u : base.neighbors(v)) m(v, u) += d;
  }
  const auto train = base.nodes_in(Split::kTrain);
  DenseMatrix p(n, 1);
  for (auto v : train) p(v, 0) = 1.0 / static_cast<double>(train.size());
  for (std::size_t l = 0; l < layers; ++l) p = matmul(m, p);
  const auto sparse = walk_iterate(base, fanout, layers);
  double sum_dense = 0, sum_sparse = 0;
  for (std::size_t v = 0; v < n; ++v) {
    EXPECT_NEAR(sparse[v], p(v, 0), 1e-12);
    sum_dense += p(v, 0);
    sum_sparse += sparse[v];
  }
  EXPECT_NEAR(sum_dense, sum_sparse, 1e-12);
}

TEST(WalkProbs, EmptyTrainRejected) {
  const auto g = with_train(build_csr({}, 3), {});
  EXPECT_THROW(cache_probs_walk(g, 5, 1), std::invalid_argument);
}

TEST(CacheProbsAuto, MajorityTrainSelectsDegree) {
  const auto g = split_masks(generate_power_law(200, 2.3, 2), {0.6, 0.2, 0.2}, 1);
  EXPECT_EQ(cache_probs(g, CacheMode::kAuto, 5, 2).probs, cache_probs_degree(g).probs);
  const auto h = split_masks(generate_power_law(200, 2.3, 2), {0.2, 0.2, 0.6}, 1);
  EXPECT_EQ(cache_probs(h, CacheMode::kAuto, 5, 2).probs, cache_probs_walk(h, 5, 2).probs);
  EXPECT_THROW(parse_cache_mode("lru"), ConfigError);
}

TEST(RefreshCache, FullFractionCachesEverything) {
  const auto g = generate_sbm({4, 4}, 0.5, 0.1, 0);
  Rng rng(1);
  const auto c = refresh_cache(g, cache_probs_degree(g), 1.0, rng);
  EXPECT_EQ(c.size(), 8u);
  std::vector<NodeId> all(8);
  std::iota(all.begin(), all.end(), 0);
  const auto r = lookup(c, all);
  EXPECT_TRUE(r.miss_ids.empty());
  EXPECT_EQ(c.misses(), 0u);
}

TEST(RefreshCache, SizeAndFeatureRows) {
  const auto g = generate_power_law(1000, 2.2, 3);
  Rng rng(2);
  const auto c = refresh_cache(g, cache_probs_degree(g), 0.01, rng, 4);
  EXPECT_EQ(c.size(), 10u);
  EXPECT_EQ(c.refresh_epoch(), 4);
  EXPECT_TRUE(std::is_sorted(c.cached_ids().begin(), c.cached_ids().end()));
  for (std::size_t k = 0; k < c.size(); ++k)
    for (std::size_t j = 0; j < g.feature_dim(); ++j) EXPECT_EQ(c.features()(k, j), g.features()(c.cached_ids()[k], j));
}

TEST(RefreshCache, SeedDeterminism) {
  const auto g = generate_power_law(500, 2.2, 3);
  Rng a(7), b(7);
  EXPECT_EQ(refresh_cache(g, cache_probs_degree(g), 0.05, a).cached_ids(),
            refresh_cache(g, cache_probs_degree(g), 0.05, b).cached_ids());
}

TEST(RefreshCache, FillsFromZeroProbabilityNodes) {
  const auto g = with_train(build_csr(symmetrize({{0, 1}, {2, 3}}), 4), {0});
  Rng rng(0);
  const auto c = refresh_cache(g, cache_probs_walk(g, 5, 1), 0.75, rng);
  EXPECT_EQ(c.size(), 3u);
}

TEST(RefreshCache, FractionOutOfRange) {
  const auto g = generate_sbm({4, 4}, 0.5, 0.1, 0);
  Rng rng(0);
  EXPECT_THROW(refresh_cache(g, cache_probs_degree(g), 0.0, rng), std::invalid_argument);
  EXPECT_THROW(refresh_cache(g, cache_probs_degree(g), 1.5, rng), std::invalid_argument);
}

TEST(RefreshCache, DegreeBeatsUniformOnPowerLaw) {
  double degree_rate = 0, uniform_rate = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = split_masks(generate_power_law(5000, 2.1, seed), {0.66, 0.1, 0.24}, seed);
    Rng a(seed), b(seed + 1000);
    const auto dc = refresh_cache(g, cache_probs_degree(g), 0.01, a);
    const auto uc = uniform_cache(g, 0.01, b);
    const auto train = g.nodes_in(Split::kTrain);
    Rng s(seed + 50);
    for (std::size_t k = 0; k < train.size(); k += 512) {
      std::vector<NodeId> batch(train.begin() + k, train.begin() + std::min(train.size(), k + 512));
      auto mb = sample_node_wise(g, batch, 5, 2, nullptr, s);
      lookup(dc, mb.input_nodes());
      lookup(uc, mb.input_nodes());
    }
    degree_rate += dc.hit_rate() / 10;
    uniform_rate += uc.hit_rate() / 10;
  }
  EXPECT_GT(degree_rate, 2.0 * uniform_rate) << degree_rate << " vs " << uniform_rate;
}

TEST(Lookup, PartitionsAndCounts) {
  const auto g = generate_sbm({4, 4}, 0.5, 0.1, 0);
  const CacheState empty(g, {}, 0);
  std::vector<NodeId> ids{0, 3, 5};
  EXPECT_EQ(lookup(empty, ids).miss_ids, ids);

  const CacheState c(g, {3, 5}, 0);
  std::vector<NodeId> sub{3, 5};
  EXPECT_EQ(lookup(c, sub).hit_ids, sub);
  const auto r = lookup(c, ids);
  EXPECT_EQ(r.hit_ids.size() + r.miss_ids.size(), ids.size());
  EXPECT_EQ(c.hits(), 4u);
  EXPECT_EQ(c.misses(), 1u);
  c.reset_counters();
  EXPECT_EQ(c.hits() + c.misses(), 0u);
}

TEST(CacheState, RejectsDuplicatesAndOutOfRange) {
  const auto g = generate_sbm({4, 4}, 0.5, 0.1, 0);
  EXPECT_THROW(CacheState(g, {1, 1}, 0), std::invalid_argument);
  EXPECT_THROW(CacheState(g, {9}, 0), BoundsError);
}
