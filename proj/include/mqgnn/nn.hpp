#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mqgnn/error.hpp"
#include "mqgnn/matrix.hpp"
#include "mqgnn/sampling.hpp"

namespace mqgnn {

enum class Architecture { kGcn, kSage };
enum class Activation { kRelu, kIdentity };
enum class OptimizerKind { kAdam, kSgd };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("optimizer must be adam or sgd");
}

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamHyper&) const = default;
};

/// Per-layer weights with Adam moments. SAGE layers take the concatenation
/// [aggregate, self], so their input width is twice the embedding width.
template <typename T>
struct ModelState {
  Architecture arch = Architecture::kGcn;
  Activation hidden_activation = Activation::kRelu;
  std::vector<Matrix<T>> layer_weights;
  std::vector<Matrix<T>> first_moments;
  std::vector<Matrix<T>> second_moments;
  std::int64_t step_count = 0;
  double learning_rate = 0.001;
  AdamHyper adam;

  std::size_t num_layers() const { return layer_weights.size(); }
  bool operator==(const ModelState&) const = default;
};

/// Glorot-uniform weights for the dimension chain dims[0] → … → dims.back().
template <typename T>
ModelState<T> init_model(Architecture arch, const std::vector<std::size_t>& dims, double learning_rate,
                         std::uint64_t seed) {
  if (dims.size() < 2) throw ShapeError("model needs at least input and output dimensions");
  ModelState<T> m;
  m.arch = arch;
  m.learning_rate = learning_rate;
  std::mt19937_64 rng(seed);
  const std::size_t fan = arch == Architecture::kSage ? 2 : 1;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Matrix<T> w(fan * dims[l], dims[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(u(rng));
    m.first_moments.emplace_back(w.rows(), w.cols());
    m.second_moments.emplace_back(w.rows(), w.cols());
    m.layer_weights.push_back(std::move(w));
  }
  return m;
}

/// Per-layer weight gradients from one device's batch.
template <typename T>
struct GradientPacket {
  int source_device = 0;
  std::int64_t iteration = 0;
  std::vector<Matrix<T>> grads;
  double delivery_delay_ms = 0.0;
};

template <typename T>
struct Activations {
  std::vector<Matrix<T>> inputs;      // H fed to layer l, one row per src
  std::vector<Matrix<T>> combined;    // aggregated (and concatenated) rows, one per dst
  std::vector<Matrix<T>> preact;      // Z = combined · W
  const MiniBatch* batch = nullptr;
};

template <typename T>
struct ForwardResult {
  Matrix<T> logits;
  Activations<T> cache;
};

namespace detail {

template <typename T>
Matrix<T> aggregate(const Block& block, const Matrix<T>& h) {
  if (h.rows() != block.src_ids.size()) throw ShapeError("block src count does not match embedding rows");
  Matrix<T> out(block.dst_ids.size(), h.cols());
  for (const auto& e : block.adj) {
    const T w = static_cast<T>(e.value);
    auto dst = out.row(e.row);
    auto src = h.row(e.col);
    for (std::size_t c = 0; c < h.cols(); ++c) dst[c] += w * src[c];
  }
  return out;
}

template <typename T>
void aggregate_transpose(const Block& block, const Matrix<T>& d_agg, Matrix<T>& d_h) {
  for (const auto& e : block.adj) {
    const T w = static_cast<T>(e.value);
    auto src = d_agg.row(e.row);
    auto dst = d_h.row(e.col);
    for (std::size_t c = 0; c < d_agg.cols(); ++c) dst[c] += w * src[c];
  }
}

template <typename T>
void check_chain(const MiniBatch& batch, const ModelState<T>& model) {
  if (batch.layers.size() != model.num_layers())
    throw ShapeError("batch has " + std::to_string(batch.layers.size()) + " blocks but model has " +
                     std::to_string(model.num_layers()) + " layers");
  if (batch.input_features.rows() != batch.layers.front().src_ids.size())
    throw ShapeError("input features do not cover the first block's sources");
  for (std::size_t l = 0; l + 1 < batch.layers.size(); ++l) {
    if (batch.layers[l].dst_ids != batch.layers[l + 1].src_ids)
      throw ShapeError("block outputs do not chain into the next block's inputs");
  }
}

}  // namespace detail

template <typename T>
ForwardResult<T> forward(const MiniBatch& batch, const ModelState<T>& model) {
  detail::check_chain(batch, model);
  const bool sage = model.arch == Architecture::kSage;
  ForwardResult<T> r;
  r.cache.batch = &batch;
  Matrix<T> h = Matrix<T>::cast(batch.input_features);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const Block& block = batch.layers[l];
    const Matrix<T>& w = model.layer_weights[l];
    Matrix<T> agg = detail::aggregate(block, h);
    Matrix<T> x;
    if (sage) {
      x = Matrix<T>(agg.rows(), 2 * h.cols());
      for (std::size_t k = 0; k < agg.rows(); ++k) {
        const auto self = block.self_index.at(k);
        if (self == Block::kNoSelf) throw ShapeError("SAGE layer needs each destination among its sources");
        auto xr = x.row(k);
        std::copy(agg.row(k).begin(), agg.row(k).end(), xr.begin());
        std::copy(h.row(self).begin(), h.row(self).end(), xr.begin() + static_cast<std::ptrdiff_t>(h.cols()));
      }
    } else {
      x = std::move(agg);
    }
    if (x.cols() != w.rows())
      throw ShapeError("layer " + std::to_string(l) + " expects input width " + std::to_string(w.rows()) +
                       ", got " + std::to_string(x.cols()));
    Matrix<T> z = matmul(x, w);
    const bool last = l + 1 == model.num_layers();
    Matrix<T> next = z;
    if (!last && model.hidden_activation == Activation::kRelu) {
      for (std::size_t i = 0; i < next.size(); ++i) next.data()[i] = std::max(next.data()[i], T{0});
    }
    r.cache.inputs.push_back(std::move(h));
    r.cache.combined.push_back(std::move(x));
    r.cache.preact.push_back(std::move(z));
    h = std::move(next);
  }
  r.logits = std::move(h);
  return r;
}

template <typename T>
ForwardResult<T> gcn_forward(const MiniBatch& batch, const ModelState<T>& model) {
  if (model.arch != Architecture::kGcn) throw ShapeError("gcn_forward on a non-GCN model");
  return forward(batch, model);
}

template <typename T>
ForwardResult<T> sage_forward(const MiniBatch& batch, const ModelState<T>& model) {
  if (model.arch != Architecture::kSage) throw ShapeError("sage_forward on a non-SAGE model");
  return forward(batch, model);
}

template <typename T>
struct LossResult {
  double loss = 0.0;
  Matrix<T> dlogits;
};

/// Softmax cross-entropy summed over the batch rows.
template <typename T>
LossResult<T> batch_loss(const Matrix<T>& logits, std::span<const std::int32_t> labels) {
  if (logits.rows() != labels.size()) throw ShapeError("one label per logit row required");
  LossResult<T> r;
  r.dlogits = Matrix<T>(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) throw BoundsError("label out of class range");
    auto z = logits.row(i);
    const double zmax = static_cast<double>(*std::max_element(z.begin(), z.end()));
    double sum = 0.0;
    for (auto v : z) sum += std::exp(static_cast<double>(v) - zmax);
    const double log_sum = std::log(sum) + zmax;
    r.loss += log_sum - static_cast<double>(z[static_cast<std::size_t>(y)]);
    auto d = r.dlogits.row(i);
    for (std::size_t c = 0; c < z.size(); ++c)
      d[c] = static_cast<T>(std::exp(static_cast<double>(z[c]) - log_sum));
    d[static_cast<std::size_t>(y)] -= T{1};
  }
  return r;
}

template <typename T>
GradientPacket<T> backward(const MiniBatch& batch, const ModelState<T>& model, const Activations<T>& acts,
                           const Matrix<T>& dlogits) {
  if (acts.batch != &batch || acts.preact.size() != model.num_layers())
    throw ShapeError("activations do not belong to this batch/model");
  if (!dlogits.same_shape(acts.preact.back())) throw ShapeError("dlogits shape mismatch");
  const bool sage = model.arch == Architecture::kSage;
  GradientPacket<T> packet;
  packet.grads.resize(model.num_layers());
  Matrix<T> dz = dlogits;
  for (std::size_t li = model.num_layers(); li-- > 0;) {
    const Block& block = batch.layers[li];
    if (li + 1 < model.num_layers() && model.hidden_activation == Activation::kRelu) {
      const auto& z = acts.preact[li];
      for (std::size_t i = 0; i < dz.size(); ++i)
        if (!(z.data()[i] > T{0})) dz.data()[i] = T{0};
    }
    packet.grads[li] = matmul_tn(acts.combined[li], dz);
    if (li == 0) break;
    Matrix<T> dx = matmul_nt(dz, model.layer_weights[li]);
    const auto& h = acts.inputs[li];
    Matrix<T> dh(h.rows(), h.cols());
    if (sage) {
      const std::size_t d = h.cols();
      Matrix<T> dagg(dx.rows(), d);
      for (std::size_t k = 0; k < dx.rows(); ++k) {
        auto src = dx.row(k);
        std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(d), dagg.row(k).begin());
        auto self = dh.row(block.self_index[k]);
        for (std::size_t c = 0; c < d; ++c) self[c] += src[d + c];
      }
      detail::aggregate_transpose(block, dagg, dh);
    } else {
      detail::aggregate_transpose(block, dx, dh);
    }
    dz = std::move(dh);
  }
  return packet;
}

template <typename T>
void check_grad_shapes(const ModelState<T>& model, const std::vector<Matrix<T>>& grads) {
  if (grads.size() != model.num_layers()) throw ShapeError("gradient layer count mismatch");
  for (std::size_t l = 0; l < grads.size(); ++l)
    if (!grads[l].same_shape(model.layer_weights[l])) throw ShapeError("gradient shape mismatch");
}

/// W ← W − η·g
template <typename T>
void sgd_step(ModelState<T>& model, const std::vector<Matrix<T>>& grads) {
  check_grad_shapes(model, grads);
  const T lr = static_cast<T>(model.learning_rate);
  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto& w = model.layer_weights[l];
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] -= lr * grads[l].data()[i];
  }
  ++model.step_count;
}

template <typename T>
void adam_step(ModelState<T>& model, const std::vector<Matrix<T>>& grads) {
  check_grad_shapes(model, grads);
  ++model.step_count;
  const auto& h = model.adam;
  const double t = static_cast<double>(model.step_count);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto& w = model.layer_weights[l];
    auto& m = model.first_moments[l];
    auto& v = model.second_moments[l];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = static_cast<double>(grads[l].data()[i]);
      const double mi = h.beta1 * static_cast<double>(m.data()[i]) + (1.0 - h.beta1) * g;
      const double vi = h.beta2 * static_cast<double>(v.data()[i]) + (1.0 - h.beta2) * g * g;
      m.data()[i] = static_cast<T>(mi);
      v.data()[i] = static_cast<T>(vi);
      const double step = model.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + h.epsilon);
      w.data()[i] = static_cast<T>(static_cast<double>(w.data()[i]) - step);
    }
  }
}

template <typename T>
void optimizer_step(ModelState<T>& model, const std::vector<Matrix<T>>& grads, OptimizerKind kind) {
  if (kind == OptimizerKind::kAdam) adam_step(model, grads);
  else sgd_step(model, grads);
}

template <typename T>
std::vector<std::int32_t> predict(const Matrix<T>& logits) {
  std::vector<std::int32_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    out[i] = static_cast<std::int32_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

template <typename T>
double accuracy(const Matrix<T>& logits, std::span<const std::int32_t> labels) {
  if (labels.empty()) return 0.0;
  const auto pred = predict(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace mqgnn
