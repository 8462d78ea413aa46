#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mqgnn/error.hpp"
#include "mqgnn/graph.hpp"

using namespace mqgnn;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
  auto p = std::filesystem::temp_directory_path() / ("mqgnn_graph_" + name);
  std::ofstream(p) << contents;
  return p;
}

DenseMatrix dense_laplacian(const GraphCSR& g) {
  const std::size_t n = g.num_nodes();
  DenseMatrix a(n, n);
  for (NodeId u = 0; u < n; ++u) {
    a(u, u) += 1.0;
    for (auto v : g.neighbors(u)) a(u, v) += 1.0;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) deg[u] += a(u, v);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) a(u, v) /= std::sqrt(deg[u] * deg[v]);
  return a;
}

}  // namespace

TEST(LoadEdgeList, TwoNodeCycle) {
  const auto g = load_edge_list(temp_file("cycle.txt", "0 1\n1 0\n"), 2);
  EXPECT_EQ(g.row_offsets(), (std::vector<EdgeIndex>{0, 1, 2}));
}

TEST(LoadEdgeList, EmptyFile) {
  const auto g = load_edge_list(temp_file("empty.txt", ""), 3);
  EXPECT_EQ(g.num_nodes(), 3u);
  EXPECT_EQ(g.num_edges(), 0u);
}

TEST(LoadEdgeList, OutOfRangeId) {
  EXPECT_THROW(load_edge_list(temp_file("oob.txt", "0 5\n"), 3), BoundsError);
}

TEST(LoadEdgeList, MalformedLineReportsLine) {
  try {
    load_edge_list(temp_file("bad.txt", "0 1\nzero one\n"), 3);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadEdgeList, DefaultFeaturesAreDegreeBuckets) {
  const auto g = load_edge_list(temp_file("star.txt", "0 1\n0 2\n0 3\n"), 4);
  ASSERT_EQ(g.features().rows(), 4u);
  for (std::size_t v = 0; v < 4; ++v) {
    float sum = 0;
    for (std::size_t c = 0; c < g.feature_dim(); ++c) sum += g.features()(v, c);
    EXPECT_FLOAT_EQ(sum, 1.0f);
  }
  // Node 0 has degree 3 → bucket floor(log2 4) = 2; leaves have degree 0 → bucket 0.
  EXPECT_FLOAT_EQ(g.features()(0, 2), 1.0f);
  EXPECT_FLOAT_EQ(g.features()(1, 0), 1.0f);
}

TEST(BuildCsr, OrderInvariant) {
  EXPECT_EQ(build_csr({{1, 0}, {0, 1}}, 2), build_csr({{0, 1}, {1, 0}}, 2));
}

TEST(BuildCsr, TriangleBothDirections) {
  const auto g = build_csr(symmetrize({{0, 1}, {1, 2}, {2, 0}}), 3);
  EXPECT_EQ(g.num_edges(), 6u);
}

TEST(BuildCsr, DuplicatesCollapsedSelfLoopKept) {
  const auto g = build_csr({{0, 0}, {0, 1}, {0, 1}}, 2);
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_TRUE(g.has_edge(0, 0));
}

TEST(BuildCsr, RejectsOutOfRange) { EXPECT_THROW(build_csr({{0, 2}}, 2), BoundsError); }

TEST(InDegree, Cases) {
  const auto star = build_csr({{1, 0}, {2, 0}, {3, 0}, {4, 0}}, 6);
  EXPECT_EQ(in_degree(star, 0), 4u);
  EXPECT_EQ(in_degree(star, 5), 0u);
  const auto cycle = build_csr({{0, 1}, {1, 0}}, 2);
  EXPECT_EQ(in_degree(cycle, 0), 1u);
  EXPECT_EQ(in_degree(cycle, 1), 1u);
  EXPECT_THROW(in_degree(cycle, 2), BoundsError);
}

TEST(InDegree, SumsToEdgeCount) {
  const auto g = generate_power_law(500, 2.3, 4);
  std::size_t total = 0;
  for (NodeId v = 0; v < g.num_nodes(); ++v) total += in_degree(g, v);
  EXPECT_EQ(total, g.num_edges());
}

TEST(Laplacian, IsolatedNodeIsIdentity) {
  const auto g = build_csr({}, 2);
  const auto row = laplacian_row(g, 1);
  ASSERT_EQ(row.indices.size(), 1u);
  EXPECT_EQ(row.indices[0], 1u);
  EXPECT_DOUBLE_EQ(row.values[0], 1.0);
}

TEST(Laplacian, TwoNodePath) {
  const auto g = build_csr(symmetrize({{0, 1}}), 2);
  EXPECT_DOUBLE_EQ(laplacian_entry(g, 0, 1), 0.5);
  EXPECT_DOUBLE_EQ(laplacian_entry(g, 1, 0), 0.5);
}

TEST(Laplacian, RegularGraph) {
  // 4-cycle is 2-regular: deĝ = 3 everywhere.
  const auto g = build_csr(symmetrize({{0, 1}, {1, 2}, {2, 3}, {3, 0}}), 4);
  for (NodeId v = 0; v < 4; ++v) {
    const auto row = laplacian_row(g, v);
    for (std::size_t k = 0; k < row.indices.size(); ++k) EXPECT_NEAR(row.values[k], 1.0 / 3.0, 1e-15);
  }
}

TEST(Laplacian, MatchesDenseOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = generate_sbm({20, 24, 20}, 0.3, 0.05, seed);
    const auto dense = dense_laplacian(g);
    double worst = 0.0;
    for (NodeId u = 0; u < g.num_nodes(); ++u) {
      const auto row = laplacian_row(g, u);
      std::vector<double> full(g.num_nodes(), 0.0);
      for (std::size_t k = 0; k < row.indices.size(); ++k) {
        EXPECT_GT(row.values[k], 0.0);
        full[row.indices[k]] = row.values[k];
      }
      for (NodeId v = 0; v < g.num_nodes(); ++v) worst = std::max(worst, std::abs(full[v] - dense(u, v)));
    }
    EXPECT_LT(worst, 1e-12);
  }
}

TEST(PowerLaw, Deterministic) {
  EXPECT_EQ(generate_power_law(1000, 2.1, 3), generate_power_law(1000, 2.1, 3));
}

TEST(PowerLaw, TwoNodes) {
  const auto g = generate_power_law(2, 2.1, 0);
  EXPECT_EQ(g.num_nodes(), 2u);
}

TEST(PowerLaw, HeavyTail) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = generate_power_law(10000, 2.1, seed);
    std::vector<std::size_t> deg(g.num_nodes());
    for (NodeId v = 0; v < g.num_nodes(); ++v) deg[v] = g.out_degree(v);
    auto sorted = deg;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = std::max<double>(1.0, static_cast<double>(sorted[sorted.size() / 2]));
    EXPECT_GT(static_cast<double>(*std::max_element(deg.begin(), deg.end())), 50.0 * median) << "seed " << seed;
  }
}

TEST(Sbm, DisjointCliques) {
  const auto g = generate_sbm({3, 3}, 1.0, 0.0, 0);
  for (NodeId u = 0; u < 6; ++u)
    for (NodeId v = 0; v < 6; ++v) {
      if (u == v) continue;
      EXPECT_EQ(g.has_edge(u, v), (u < 3) == (v < 3));
    }
  EXPECT_EQ(g.labels(), (std::vector<std::int32_t>{0, 0, 0, 1, 1, 1}));
}

TEST(Sbm, RejectsEqualProbabilities) { EXPECT_THROW(generate_sbm({3, 3}, 0.2, 0.2, 0), std::invalid_argument); }

TEST(Sbm, IntraExceedsInter) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = generate_sbm({100, 100}, 0.1, 0.01, seed);
    std::size_t intra = 0, inter = 0;
    for (NodeId u = 0; u < g.num_nodes(); ++u)
      for (auto v : g.neighbors(u)) ((u < 100) == (v < 100) ? intra : inter)++;
    EXPECT_GT(intra, inter);
  }
}

TEST(SplitMasks, AllTrain) {
  const auto g = split_masks(generate_sbm({5, 5}, 0.5, 0.1, 0), {1.0, 0.0, 0.0}, 0);
  EXPECT_EQ(g.nodes_in(Split::kTrain).size(), 10u);
  EXPECT_TRUE(g.nodes_in(Split::kVal).empty());
}

TEST(SplitMasks, RedditRatios) {
  const auto g = split_masks(generate_sbm({50, 50}, 0.2, 0.01, 0), {0.66, 0.10, 0.24}, 7);
  EXPECT_EQ(g.nodes_in(Split::kTrain).size(), 66u);
  EXPECT_EQ(g.nodes_in(Split::kVal).size(), 10u);
  EXPECT_EQ(g.nodes_in(Split::kTest).size(), 24u);
  const auto again = split_masks(generate_sbm({50, 50}, 0.2, 0.01, 0), {0.66, 0.10, 0.24}, 7);
  EXPECT_EQ(again.mask(Split::kTrain), g.mask(Split::kTrain));
}

TEST(SplitMasks, RejectsOversum) {
  EXPECT_THROW(split_masks(generate_sbm({5, 5}, 0.5, 0.1, 0), {0.6, 0.3, 0.2}, 0), std::invalid_argument);
}

TEST(Mqg1, RoundTripIsByteIdentical) {
  const auto g = split_masks(generate_power_law(300, 2.5, 1), {0.5, 0.2, 0.3}, 1);
  std::stringstream first;
  write_mqg1(g, first);
  const auto back = read_mqg1(first);
  EXPECT_EQ(back, g);
  std::stringstream second;
  write_mqg1(back, second);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(first.str().substr(0, 4), "MQG1");
}

TEST(Mqg1, RejectsBadMagic) {
  std::stringstream s("MQG2 and more bytes");
  EXPECT_THROW(read_mqg1(s), ParseError);
}

TEST(Mqg1, RejectsTruncation) {
  std::stringstream full;
  write_mqg1(generate_sbm({4, 4}, 0.5, 0.1, 0), full);
  std::stringstream cut(full.str().substr(0, full.str().size() / 2));
  EXPECT_THROW(read_mqg1(cut), ParseError);
}
