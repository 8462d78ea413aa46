#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mqgnn/graph.hpp"
#include "mqgnn/matrix.hpp"

namespace mqgnn {

class CacheState;

using Rng = std::mt19937_64;

enum class SamplerKind { kNodeWiseGcn, kNodeWiseSage, kFastGcn, kLadies };

/// Sampling method: a base family plus the flat/debias modifiers that only
/// apply to the layer-wise families.
struct Method {
  SamplerKind kind = SamplerKind::kNodeWiseGcn;
  bool flat = false;
  bool debias = false;

  bool layer_wise() const { return kind == SamplerKind::kFastGcn || kind == SamplerKind::kLadies; }
  bool uses_sage() const { return kind == SamplerKind::kNodeWiseSage; }
  bool operator==(const Method&) const = default;
};

/// Accepts gcn | sage | fastgcn | ladies, optionally followed by +flat/+f
/// and +debias/+d.
Method parse_method(const std::string& text);
std::string method_name(const Method& m);

struct AdjEntry {
  std::uint32_t row;  // index into Block::dst_ids
  std::uint32_t col;  // index into Block::src_ids
  double value;
  bool operator==(const AdjEntry&) const = default;
};

/// One layer of a mini-batch: the scaled adjacency slice from src to dst.
struct Block {
  static constexpr std::uint32_t kNoSelf = 0xFFFFFFFFu;

  std::vector<NodeId> src_ids;
  std::vector<NodeId> dst_ids;
  std::vector<AdjEntry> adj;
  std::vector<double> sample_probs;      // per src
  std::vector<std::uint32_t> self_index;  // dst k -> position in src_ids, or kNoSelf
  // Without-replacement bookkeeping: src positions in draw order and the
  // renormalized probability of each at its draw.
  std::vector<std::uint32_t> draw_order;
  std::vector<double> draw_probs;
  std::size_t population = 0;

  bool operator==(const Block&) const = default;
};

struct MiniBatch {
  Method method;
  std::vector<Block> layers;  // layers[0] consumes input features
  std::vector<NodeId> target_nodes;
  std::vector<std::int32_t> target_labels;
  Matrix<float> input_features;  // one row per layers[0].src_ids
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t dropped_targets = 0;
  std::int64_t batch_id = 0;
  std::int64_t epoch = 0;
  bool on_device = false;

  std::span<const NodeId> input_nodes() const { return layers.front().src_ids; }
  std::size_t miss_feature_bytes() const { return cache_misses * input_features.cols() * sizeof(float); }

  bool operator==(const MiniBatch&) const = default;
};

struct WeightedSample {
  std::vector<std::size_t> ids;         // ascending
  std::vector<std::size_t> draw_order;  // same ids in sequential-draw order
};

/// Efraimidis–Spirakis keys u^{1/w}; the k largest keys win. Equivalent to
/// k sequential weighted draws without replacement.
WeightedSample weighted_sample_without_replacement(std::span<const double> weights, std::size_t k,
                                                   Rng& rng);

/// Probability of each draw in `draw_order` renormalized over the items not
/// yet drawn; `weights` need not be normalized.
std::vector<double> sequential_draw_probs(std::span<const double> weights,
                                          std::span<const std::size_t> draw_order);

MiniBatch sample_node_wise(const GraphCSR& g, std::span<const NodeId> targets, std::size_t fanout,
                           std::size_t layers, const CacheState* cache, Rng& rng,
                           bool sage = false);

/// ‖P_{*,i}‖² over all rows of P, normalized.
std::vector<double> fastgcn_probs(const GraphCSR& g);

struct LayerWiseOptions {
  bool flat = false;
  bool debias = false;
  /// Forces i.i.d. draws for LADIES (FastGCN always draws with replacement
  /// unless debias is set).
  bool with_replacement = false;
  bool row_normalize = true;
};

MiniBatch sample_fastgcn(const GraphCSR& g, std::span<const NodeId> targets,
                         std::size_t nodes_per_layer, std::size_t layers, Rng& rng,
                         LayerWiseOptions options = {.row_normalize = false});

/// Sorted union of the raw neighbor lists.
std::vector<NodeId> ladies_candidates(const GraphCSR& g, std::span<const NodeId> prev_layer_nodes);

/// p_i = ‖R P_{*,i}‖² / ‖R P‖_F², aligned with `candidates`.
std::vector<double> ladies_probs(const GraphCSR& g, std::span<const NodeId> row_nodes,
                                 std::span<const NodeId> candidates);

/// p_i ∝ ‖R P_{*,i}‖ (unsquared), aligned with `candidates`.
std::vector<double> flat_probs(const GraphCSR& g, std::span<const NodeId> row_nodes,
                               std::span<const NodeId> candidates);

MiniBatch sample_ladies(const GraphCSR& g, std::span<const NodeId> targets,
                        std::size_t nodes_per_layer, std::size_t layers, Rng& rng,
                        LayerWiseOptions options = {});

/// Recursive weighted averaging over without-replacement draws:
/// Y_{i+1} = (1-α_{i+1}) Y_i + α_{i+1} Π_{i+1}, with α_1 = 1 and
/// α_{k+1} = n/((n-k)(k+1)). Row i of `x_rows` is the i-th draw.
DenseMatrix debias_estimate(const DenseMatrix& x_rows, std::span<const double> probs_at_draw,
                            std::size_t n);

/// The same estimator as per-draw linear coefficients β, so that
/// Y = Σ β_i X_i.
std::vector<double> debias_coefficients(std::span<const double> probs_at_draw, std::size_t n);

struct SamplerParams {
  std::size_t fanout = 5;
  std::size_t nodes_per_layer = 512;
  std::size_t layers = 2;
};

MiniBatch build_minibatch(const Method& method, const GraphCSR& g, std::span<const NodeId> targets,
                          const SamplerParams& params, const CacheState* cache, Rng& rng);

/// Exact full-neighborhood batch (scale factors 1) for evaluation.
MiniBatch full_neighborhood_batch(const GraphCSR& g, std::span<const NodeId> targets,
                                  std::size_t layers, bool sage);

/// Gathers input features, from the cache replica where resident.
void attach_features(MiniBatch& batch, const GraphCSR& g, const CacheState* cache);

/// Seed for one batch's private generator; independent of worker placement.
std::uint64_t batch_seed(std::uint64_t seed, std::int64_t epoch, std::int64_t batch_id);

}  // namespace mqgnn
