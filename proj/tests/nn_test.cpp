#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mqgnn/graph.hpp"
#include "mqgnn/nn.hpp"
#include "mqgnn/sampling.hpp"

using namespace mqgnn;

namespace {

/// One-layer batch over `n` nodes whose block is the identity.
MiniBatch identity_batch(std::size_t n, std::size_t d) {
  MiniBatch b;
  Block blk;
  for (NodeId v = 0; v < n; ++v) {
    blk.src_ids.push_back(v);
    blk.dst_ids.push_back(v);
    blk.adj.push_back({v, v, 1.0});
    blk.self_index.push_back(v);
  }
  blk.sample_probs.assign(n, 1.0);
  b.layers.push_back(blk);
  b.target_nodes = blk.dst_ids;
  b.target_labels.assign(n, 0);
  b.input_features = Matrix<float>(n, d);
  for (std::size_t i = 0; i < b.input_features.size(); ++i) b.input_features.data()[i] = 0.25f * static_cast<float>(i);
  return b;
}

ModelState<double> linear_model(Architecture arch, std::vector<Matrix<double>> weights) {
  ModelState<double> m;
  m.arch = arch;
  for (auto& w : weights) {
    m.first_moments.emplace_back(w.rows(), w.cols());
    m.second_moments.emplace_back(w.rows(), w.cols());
    m.layer_weights.push_back(std::move(w));
  }
  return m;
}

double numeric_rel_error(const MiniBatch& mb, ModelState<double> model) {
  const auto fr = forward(mb, model);
  const auto lr = batch_loss(fr.logits, mb.target_labels);
  const auto grads = backward(mb, model, fr.cache, lr.dlogits).grads;
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (std::size_t i = 0; i < model.layer_weights[l].size(); ++i) {
      auto& w = model.layer_weights[l].data()[i];
      const double saved = w;
      w = saved + h;
      const double up = batch_loss(forward(mb, model).logits, mb.target_labels).loss;
      w = saved - h;
      const double down = batch_loss(forward(mb, model).logits, mb.target_labels).loss;
      w = saved;
      const double fd = (up - down) / (2 * h);
      const double an = grads[l].data()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-3, std::abs(fd) + std::abs(an)));
    }
  }
  return worst;
}

}  // namespace

TEST(GcnForward, IdentityEverything) {
  auto mb = identity_batch(3, 3);
  auto model = linear_model(Architecture::kGcn, {Matrix<double>::identity(3)});
  const auto fr = gcn_forward(mb, model);
  for (std::size_t i = 0; i < fr.logits.size(); ++i)
    EXPECT_DOUBLE_EQ(fr.logits.data()[i], static_cast<double>(mb.input_features.data()[i]));
}

TEST(GcnForward, ZeroWeights) {
  auto mb = identity_batch(1, 4);
  auto model = linear_model(Architecture::kGcn, {Matrix<double>(4, 2)});
  const auto fr = forward(mb, model);
  for (std::size_t i = 0; i < fr.logits.size(); ++i) EXPECT_EQ(fr.logits.data()[i], 0.0);
}

TEST(GcnForward, FullBatchMatchesDenseOracle) {
  // 4-node path.
  auto g = build_csr(symmetrize({{0, 1}, {1, 2}, {2, 3}}), 4);
  g = g.with_features([] {
    Matrix<float> f(4, 3);
    for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = static_cast<float>(std::sin(1.0 + i));
    return f;
  }());
  std::vector<NodeId> all{0, 1, 2, 3};
  const auto mb = full_neighborhood_batch(g, all, 2, false);
  auto model = init_model<double>(Architecture::kGcn, {3, 4, 2}, 0.01, 9);
  const auto fr = forward(mb, model);

  DenseMatrix p(4, 4), h(4, 3);
  for (NodeId u = 0; u < 4; ++u)
    for (NodeId v = 0; v < 4; ++v) p(u, v) = laplacian_entry(g, u, v);
  for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] = g.features().data()[i];
  auto z = matmul(matmul(p, h), model.layer_weights[0]);
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = std::max(0.0, z.data()[i]);
  const auto out = matmul(matmul(p, z), model.layer_weights[1]);
  ASSERT_EQ(mb.target_nodes, all);
  EXPECT_LT(max_abs_diff(out, fr.logits), 1e-10);
}

TEST(GcnForward, ShapeMismatch) {
  auto mb = identity_batch(2, 3);
  auto model = linear_model(Architecture::kGcn, {Matrix<double>(4, 2)});
  EXPECT_THROW(forward(mb, model), ShapeError);
}

TEST(SageForward, SelfOnlyNeighborhood) {
  auto mb = identity_batch(1, 2);
  Matrix<double> w(4, 4);
  for (std::size_t i = 0; i < 4; ++i) w(i, i) = 1.0;
  auto model = linear_model(Architecture::kSage, {w});
  const auto fr = sage_forward(mb, model);
  const auto& x = fr.cache.combined[0];
  EXPECT_DOUBLE_EQ(x(0, 0), x(0, 2));
  EXPECT_DOUBLE_EQ(x(0, 1), x(0, 3));
}

TEST(SageForward, ZeroNeighborsAggregateToZero) {
  const auto g = build_csr({}, 2).with_features([] {
    Matrix<float> f(2, 2);
    f.data()[0] = 1.0f;
    f.data()[1] = 2.0f;
    return f;
  }());
  std::vector<NodeId> t{0};
  const auto mb = full_neighborhood_batch(g, t, 1, true);
  auto model = init_model<double>(Architecture::kSage, {2, 2}, 0.01, 1);
  const auto fr = forward(mb, model);
  EXPECT_EQ(fr.cache.combined[0](0, 0), 0.0);
  EXPECT_EQ(fr.cache.combined[0](0, 1), 0.0);
  EXPECT_EQ(fr.cache.combined[0](0, 2), 1.0);
}

TEST(SageForward, StarMeanAggregation) {
  const auto g = build_csr(symmetrize({{0, 1}, {0, 2}}), 3).with_features([] {
    Matrix<float> f(3, 2);
    const float v[] = {1, 2, 3, 5, 7, 11};
    std::copy(std::begin(v), std::end(v), f.data());
    return f;
  }());
  std::vector<NodeId> t{0, 1};
  const auto mb = full_neighborhood_batch(g, t, 1, true);
  auto model = init_model<double>(Architecture::kSage, {2, 3}, 0.01, 1);
  const auto fwd = forward(mb, model);
  const auto& x = fwd.cache.combined[0];
  // Center: mean of leaves (3,5) and (7,11); leaf 1: its only neighbor, the center.
  EXPECT_NEAR(x(0, 0), 5.0, 1e-12);
  EXPECT_NEAR(x(0, 1), 8.0, 1e-12);
  EXPECT_NEAR(x(0, 2), 1.0, 1e-12);
  EXPECT_NEAR(x(1, 0), 1.0, 1e-12);
  EXPECT_NEAR(x(1, 1), 2.0, 1e-12);
  EXPECT_NEAR(x(1, 2), 3.0, 1e-12);
}

TEST(BatchLoss, UniformTwoClass) {
  Matrix<double> logits(1, 2);
  std::vector<std::int32_t> y{0};
  EXPECT_NEAR(batch_loss(logits, y).loss, std::log(2.0), 1e-12);
}

TEST(BatchLoss, ConfidentLimit) {
  Matrix<double> logits(1, 3);
  logits(0, 1) = 60.0;
  std::vector<std::int32_t> y{1};
  const auto r = batch_loss(logits, y);
  EXPECT_LT(r.loss, 1e-20);
  EXPECT_GE(r.loss, 0.0);
}

TEST(BatchLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  Matrix<double> logits(5, 3);
  for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = std::normal_distribution<double>(0, 2)(rng);
  std::vector<std::int32_t> y{0, 2, 1, 1, 0};
  const auto r = batch_loss(logits, y);
  double worst = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto up = logits, down = logits;
    up.data()[i] += 1e-5;
    down.data()[i] -= 1e-5;
    const double fd = (batch_loss(up, y).loss - batch_loss(down, y).loss) / 2e-5;
    worst = std::max(worst, std::abs(fd - r.dlogits.data()[i]) / std::max(1e-3, std::abs(fd)));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(BatchLoss, LabelOutOfRange) {
  Matrix<double> logits(1, 2);
  std::vector<std::int32_t> y{2};
  EXPECT_THROW(batch_loss(logits, y), BoundsError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  auto mb = identity_batch(3, 2);
  auto model = init_model<double>(Architecture::kGcn, {2, 2}, 0.01, 3);
  const auto fr = forward(mb, model);
  const auto p = backward(mb, model, fr.cache, Matrix<double>(3, 2));
  for (const auto& g : p.grads)
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.data()[i], 0.0);
}

TEST(Backward, LinearClosedForm) {
  auto mb = identity_batch(3, 2);
  auto model = init_model<double>(Architecture::kGcn, {2, 2}, 0.01, 3);
  const auto fr = forward(mb, model);
  Matrix<double> up(3, 2);
  for (std::size_t i = 0; i < up.size(); ++i) up.data()[i] = 0.5 + static_cast<double>(i);
  const auto grad = backward(mb, model, fr.cache, up).grads[0];
  const auto x = Matrix<double>::cast(mb.input_features);
  EXPECT_LT(max_abs_diff(grad, matmul_tn(x, up)), 1e-12);
}

TEST(Backward, RejectsForeignActivations) {
  auto a = identity_batch(3, 2), b = identity_batch(3, 2);
  auto model = init_model<double>(Architecture::kGcn, {2, 2}, 0.01, 3);
  const auto fr = forward(a, model);
  EXPECT_THROW(backward(b, model, fr.cache, fr.logits), ShapeError);
}

TEST(Backward, FiniteDifferencesBothArchitectures) {
  auto g = split_masks(generate_sbm({4, 4}, 0.7, 0.2, 5), {1.0, 0.0, 0.0}, 5);
  std::vector<NodeId> targets{0, 3, 4, 7};
  for (bool sage : {false, true}) {
    Rng rng(8);
    auto mb = sample_node_wise(g, targets, 2, 2, nullptr, rng, sage);
    attach_features(mb, g, nullptr);
    auto model = init_model<double>(sage ? Architecture::kSage : Architecture::kGcn, {g.feature_dim(), 6, 2}, 0.01, 4);
    EXPECT_LT(numeric_rel_error(mb, model), 1e-7) << (sage ? "sage" : "gcn");
  }
}

TEST(Backward, FiniteDifferencesSinglePrecision) {
  auto g = split_masks(generate_sbm({4, 4}, 0.7, 0.2, 5), {1.0, 0.0, 0.0}, 5);
  std::vector<NodeId> targets{0, 3, 4, 7};
  Rng rng(8);
  auto mb = sample_node_wise(g, targets, 2, 2, nullptr, rng);
  attach_features(mb, g, nullptr);
  auto model = init_model<float>(Architecture::kGcn, {g.feature_dim(), 6, 2}, 0.01, 4);
  const auto fr = forward(mb, model);
  const auto grads = backward(mb, model, fr.cache, batch_loss(fr.logits, mb.target_labels).dlogits).grads;
  // Oracle in double precision from the same (float) weights.
  auto wide = init_model<double>(Architecture::kGcn, {g.feature_dim(), 6, 2}, 0.01, 4);
  for (std::size_t l = 0; l < model.num_layers(); ++l) wide.layer_weights[l] = DenseMatrix::cast(model.layer_weights[l]);
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t l = 0; l < wide.num_layers(); ++l)
    for (std::size_t i = 0; i < wide.layer_weights[l].size(); ++i) {
      auto up = wide, down = wide;
      up.layer_weights[l].data()[i] += h;
      down.layer_weights[l].data()[i] -= h;
      const double fd = (batch_loss(forward(mb, up).logits, mb.target_labels).loss -
                         batch_loss(forward(mb, down).logits, mb.target_labels).loss) /
                        (2 * h);
      const double an = grads[l].data()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-2, std::abs(fd) + std::abs(an)));
    }
  EXPECT_LT(worst, 1e-4);
}

TEST(Adam, ZeroGradientDecaysMoments) {
  auto m = init_model<double>(Architecture::kGcn, {2, 2}, 0.01, 1);
  m.first_moments[0](0, 0) = 1.0;
  m.second_moments[0](0, 0) = 1.0;
  const auto before = m.layer_weights;
  adam_step(m, {Matrix<double>(2, 2)});
  EXPECT_NEAR(m.first_moments[0](0, 0), 0.9, 1e-15);
  EXPECT_NEAR(m.second_moments[0](0, 0), 0.999, 1e-15);
  EXPECT_EQ(m.step_count, 1);
  // m̂/√v̂ is nonzero here, so weights do move; a fresh state must not.
  auto fresh = init_model<double>(Architecture::kGcn, {2, 2}, 0.01, 1);
  adam_step(fresh, {Matrix<double>(2, 2)});
  EXPECT_EQ(fresh.layer_weights, before);
}

TEST(Adam, ScalarFirstStep) {
  auto m = linear_model(Architecture::kGcn, {Matrix<double>(1, 1)});
  m.learning_rate = 0.001;
  Matrix<double> g(1, 1);
  g(0, 0) = 1.0;
  adam_step(m, {g});
  EXPECT_NEAR(m.layer_weights[0](0, 0), -0.001, 1e-10);
}

TEST(Adam, Deterministic) {
  auto a = init_model<double>(Architecture::kGcn, {3, 2}, 0.01, 6);
  auto b = a;
  Matrix<double> g(3, 2);
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = 0.1 * static_cast<double>(i);
  adam_step(a, {g});
  adam_step(b, {g});
  EXPECT_EQ(a, b);
}

TEST(Sgd, ZeroLearningRate) {
  auto m = init_model<double>(Architecture::kGcn, {3, 2}, 0.0, 6);
  const auto before = m.layer_weights;
  Matrix<double> g(3, 2);
  g.data()[0] = 5.0;
  sgd_step(m, {g});
  EXPECT_EQ(m.layer_weights, before);
}

TEST(Sgd, DirectUpdate) {
  Matrix<double> w(1, 1);
  w(0, 0) = 1.0;
  auto m = linear_model(Architecture::kGcn, {w});
  m.learning_rate = 0.1;
  Matrix<double> g(1, 1);
  g(0, 0) = 0.5;
  sgd_step(m, {g});
  EXPECT_NEAR(m.layer_weights[0](0, 0), 0.95, 1e-15);
}

TEST(Sgd, DiffersFromAdam) {
  auto a = init_model<double>(Architecture::kGcn, {3, 2}, 0.01, 6);
  auto b = a;
  Matrix<double> g(3, 2);
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = 3.0;
  sgd_step(a, {g});
  adam_step(b, {g});
  EXPECT_NE(a.layer_weights, b.layer_weights);
}

TEST(Sgd, ShapeMismatch) {
  auto m = init_model<double>(Architecture::kGcn, {3, 2}, 0.01, 6);
  EXPECT_THROW(sgd_step(m, {Matrix<double>(2, 2)}), ShapeError);
}
