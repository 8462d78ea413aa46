#include "mqgnn/sampling.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "mqgnn/cache.hpp"
#include "mqgnn/error.hpp"

namespace mqgnn {

Method parse_method(const std::string& text) {
  std::string s;
  for (char c : text) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, '+');) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty method");

  Method m;
  const auto& base = parts.front();
  if (base == "gcn" || base == "ns-gcn") m.kind = SamplerKind::kNodeWiseGcn;
  else if (base == "sage" || base == "ns-sage") m.kind = SamplerKind::kNodeWiseSage;
  else if (base == "fastgcn") m.kind = SamplerKind::kFastGcn;
  else if (base == "ladies") m.kind = SamplerKind::kLadies;
  else throw ConfigError("unknown method '" + text + "'");

  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i] == "flat" || parts[i] == "f") m.flat = true;
    else if (parts[i] == "debias" || parts[i] == "d") m.debias = true;
    else throw ConfigError("unknown method modifier '" + parts[i] + "'");
  }
  if ((m.flat || m.debias) && !m.layer_wise())
    throw ConfigError("flat/debias modifiers apply only to fastgcn and ladies");
  return m;
}

std::string method_name(const Method& m) {
  std::string s;
  switch (m.kind) {
    case SamplerKind::kNodeWiseGcn: s = "gcn"; break;
    case SamplerKind::kNodeWiseSage: s = "sage"; break;
    case SamplerKind::kFastGcn: s = "fastgcn"; break;
    case SamplerKind::kLadies: s = "ladies"; break;
  }
  if (m.flat) s += "+flat";
  if (m.debias) s += "+debias";
  return s;
}

std::uint64_t batch_seed(std::uint64_t seed, std::int64_t epoch, std::int64_t batch_id) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ static_cast<std::uint64_t>(epoch)) ^ static_cast<std::uint64_t>(batch_id));
}

// Weighted sampling -----------------------------------------------------------

WeightedSample weighted_sample_without_replacement(std::span<const double> weights, std::size_t k,
                                                   Rng& rng) {
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(weights.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double w = weights[i];
    if (w < 0.0 || !std::isfinite(w)) throw SamplingError("weights must be finite and nonnegative");
    if (w == 0.0) continue;
    double u = unif(rng);
    if (u <= 0.0) u = std::numeric_limits<double>::min();
    keyed.emplace_back(std::log(u) / w, i);  // log of u^{1/w}
  }
  if (k > keyed.size())
    throw SamplingError("requested " + std::to_string(k) + " draws from " +
                        std::to_string(keyed.size()) + " positive weights");
  auto by_key = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k), keyed.end(), by_key);
  WeightedSample out;
  out.draw_order.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.draw_order.push_back(keyed[i].second);
  out.ids = out.draw_order;
  std::sort(out.ids.begin(), out.ids.end());
  return out;
}

std::vector<double> sequential_draw_probs(std::span<const double> weights,
                                          std::span<const std::size_t> draw_order) {
  double remaining = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<double> out;
  out.reserve(draw_order.size());
  for (auto idx : draw_order) {
    const double w = weights[idx];
    out.push_back(remaining > 0.0 ? std::min(1.0, w / remaining) : 0.0);
    remaining -= w;
  }
  // The final draw from a single remaining item is certain; pin it against
  // accumulated rounding.
  if (!draw_order.empty()) {
    std::size_t positive = 0;
    for (double w : weights) positive += w > 0.0;
    if (positive == draw_order.size()) out.back() = 1.0;
  }
  return out;
}

// Shared helpers ----------------------------------------------------------------

namespace {

class LocalIndex {
 public:
  std::uint32_t insert(NodeId v, std::vector<NodeId>& ids) {
    auto [it, inserted] = map_.try_emplace(v, static_cast<std::uint32_t>(ids.size()));
    if (inserted) ids.push_back(v);
    return it->second;
  }
  std::uint32_t find(NodeId v) const {
    auto it = map_.find(v);
    return it == map_.end() ? Block::kNoSelf : it->second;
  }

 private:
  std::unordered_map<NodeId, std::uint32_t> map_;
};

void require_targets(std::span<const NodeId> targets, const GraphCSR& g) {
  if (targets.empty()) throw SamplingError("empty target set");
  for (auto v : targets)
    if (v >= g.num_nodes()) throw BoundsError("target node out of range");
}

MiniBatch start_batch(const GraphCSR& g, std::span<const NodeId> targets) {
  MiniBatch b;
  b.target_nodes.assign(targets.begin(), targets.end());
  b.target_labels.reserve(targets.size());
  for (auto v : targets) b.target_labels.push_back(g.labels()[v]);
  return b;
}

void row_normalize(Block& block) {
  std::vector<double> sums(block.dst_ids.size(), 0.0);
  for (const auto& e : block.adj) sums[e.row] += e.value;
  for (auto& e : block.adj)
    if (sums[e.row] > 0.0) e.value /= sums[e.row];
}

void fill_self_index(Block& block) {
  LocalIndex idx;
  std::vector<NodeId> scratch;
  for (auto v : block.src_ids) idx.insert(v, scratch);
  block.self_index.resize(block.dst_ids.size());
  for (std::size_t k = 0; k < block.dst_ids.size(); ++k) block.self_index[k] = idx.find(block.dst_ids[k]);
}

// Column → (dst row, P value) pairs over the rows of a layer.
using ColumnIndex = std::unordered_map<NodeId, std::vector<std::pair<std::uint32_t, double>>>;

ColumnIndex column_index(const GraphCSR& g, std::span<const NodeId> rows) {
  ColumnIndex cols;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto lr = laplacian_row(g, rows[r]);
    for (std::size_t k = 0; k < lr.indices.size(); ++k)
      cols[lr.indices[k]].emplace_back(static_cast<std::uint32_t>(r), lr.values[k]);
  }
  return cols;
}

std::vector<double> column_norms_sq(const GraphCSR& g, std::span<const NodeId> rows,
                                    std::span<const NodeId> candidates) {
  std::unordered_map<NodeId, std::size_t> pos;
  for (std::size_t i = 0; i < candidates.size(); ++i) pos.emplace(candidates[i], i);
  std::vector<double> acc(candidates.size(), 0.0);
  for (auto r : rows) {
    auto lr = laplacian_row(g, r);
    for (std::size_t k = 0; k < lr.indices.size(); ++k) {
      auto it = pos.find(lr.indices[k]);
      if (it != pos.end()) acc[it->second] += lr.values[k] * lr.values[k];
    }
  }
  return acc;
}

std::vector<double> normalized(std::vector<double> v, const char* what) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  if (!(total > 0.0)) throw SamplingError(std::string(what) + ": all candidate norms are zero");
  for (auto& x : v) x /= total;
  return v;
}

// Builds a layer-wise block over `rows` from a selection of `candidates`
// with per-selected-candidate scale factors (value = P(v,u) * scale[u]).
Block layer_wise_block(const ColumnIndex& cols, std::span<const NodeId> rows,
                       std::span<const NodeId> candidates, const std::vector<std::size_t>& chosen,
                       const std::vector<double>& scale, const std::vector<double>& probs) {
  Block block;
  block.dst_ids.assign(rows.begin(), rows.end());
  std::vector<std::size_t> order(chosen.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return candidates[chosen[a]] < candidates[chosen[b]]; });
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto i = order[k];
    block.src_ids.push_back(candidates[chosen[i]]);
    block.sample_probs.push_back(probs[i]);
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto i = order[k];
    auto it = cols.find(candidates[chosen[i]]);
    if (it == cols.end()) continue;  // zero-connection column
    for (const auto& [row, p] : it->second)
      block.adj.push_back({row, static_cast<std::uint32_t>(k), p * scale[i]});
  }
  std::sort(block.adj.begin(), block.adj.end(), [](const AdjEntry& a, const AdjEntry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  return block;
}

struct Selection {
  std::vector<std::size_t> chosen;  // candidate positions
  std::vector<double> scale;
  std::vector<double> probs;  // reported sample probability per chosen
  std::vector<std::uint32_t> draw_order;
  std::vector<double> draw_probs;
};

// i.i.d. draws; repeated picks fold into one src with multiplicity.
Selection draw_with_replacement(const std::vector<double>& p, std::size_t draws, Rng& rng) {
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  std::vector<std::size_t> counts(p.size(), 0);
  for (std::size_t i = 0; i < draws; ++i) ++counts[dist(rng)];
  Selection sel;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (counts[i] == 0) continue;
    sel.chosen.push_back(i);
    sel.scale.push_back(static_cast<double>(counts[i]) / (static_cast<double>(draws) * p[i]));
    sel.probs.push_back(p[i]);
  }
  return sel;
}

Selection draw_without_replacement(const std::vector<double>& p, std::size_t budget, bool debias,
                                   Rng& rng) {
  std::size_t positive = 0;
  for (double x : p) positive += x > 0.0;
  Selection sel;
  if (budget >= positive) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] <= 0.0) continue;
      sel.chosen.push_back(i);
      sel.scale.push_back(1.0);
      sel.probs.push_back(1.0);
    }
    return sel;
  }
  auto ws = weighted_sample_without_replacement(p, budget, rng);
  const auto at_draw = sequential_draw_probs(p, ws.draw_order);
  const auto beta = debias ? debias_coefficients(at_draw, positive) : std::vector<double>{};
  for (std::size_t d = 0; d < ws.draw_order.size(); ++d) {
    const auto i = ws.draw_order[d];
    sel.chosen.push_back(i);
    sel.scale.push_back(debias ? beta[d] : 1.0 / (static_cast<double>(budget) * p[i]));
    sel.probs.push_back(p[i]);
    sel.draw_probs.push_back(at_draw[d]);
  }
  return sel;
}

void record_draws(Block& block, const Selection& sel, std::span<const NodeId> candidates,
                  std::size_t population) {
  block.population = population;
  if (sel.draw_probs.empty()) return;
  for (std::size_t d = 0; d < sel.chosen.size(); ++d) {
    const NodeId v = candidates[sel.chosen[d]];
    auto it = std::lower_bound(block.src_ids.begin(), block.src_ids.end(), v);
    block.draw_order.push_back(static_cast<std::uint32_t>(it - block.src_ids.begin()));
  }
  block.draw_probs = sel.draw_probs;
}

}  // namespace

// Node-wise ---------------------------------------------------------------------

MiniBatch sample_node_wise(const GraphCSR& g, std::span<const NodeId> targets, std::size_t fanout,
                           std::size_t layers, const CacheState* cache, Rng& rng, bool sage) {
  require_targets(targets, g);
  if (fanout == 0) throw SamplingError("fanout must be at least 1");
  if (layers == 0) throw SamplingError("need at least one layer");
  MiniBatch batch = start_batch(g, targets);
  batch.method.kind = sage ? SamplerKind::kNodeWiseSage : SamplerKind::kNodeWiseGcn;

  std::vector<NodeId> dst(targets.begin(), targets.end());
  std::vector<NodeId> scratch;
  std::vector<Block> blocks;
  for (std::size_t l = 0; l < layers; ++l) {
    Block block;
    block.dst_ids = dst;
    LocalIndex index;
    for (auto v : dst) index.insert(v, block.src_ids);
    block.sample_probs.assign(block.src_ids.size(), 1.0);
    block.self_index.resize(dst.size());
    for (std::size_t k = 0; k < dst.size(); ++k) block.self_index[k] = static_cast<std::uint32_t>(k);

    for (std::size_t k = 0; k < dst.size(); ++k) {
      const NodeId v = dst[k];
      auto nbrs = g.neighbors(v);
      const std::size_t deg = nbrs.size();
      const std::size_t s = std::min(fanout, deg);
      const double dv = g.hat_degree(v);
      if (!sage) block.adj.push_back({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k), 1.0 / dv});
      if (s == 0) continue;

      scratch.assign(nbrs.begin(), nbrs.end());
      if (s < deg) {
        std::size_t front = 0;
        if (cache) {
          // Cache-resident neighbors first, each group in random order.
          auto mid = std::stable_partition(scratch.begin(), scratch.end(),
                                           [&](NodeId u) { return cache->contains(u); });
          front = static_cast<std::size_t>(mid - scratch.begin());
          std::shuffle(scratch.begin(), mid, rng);
          if (front < s) {
            for (std::size_t i = front; i < s; ++i) {
              std::uniform_int_distribution<std::size_t> pick(i, deg - 1);
              std::swap(scratch[i], scratch[pick(rng)]);
            }
          }
        } else {
          for (std::size_t i = 0; i < s; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, deg - 1);
            std::swap(scratch[i], scratch[pick(rng)]);
          }
        }
        scratch.resize(s);
        std::sort(scratch.begin(), scratch.end());
      }
      const double scale = static_cast<double>(deg) / static_cast<double>(s);
      for (NodeId u : scratch) {
        const auto before = block.src_ids.size();
        const auto col = index.insert(u, block.src_ids);
        if (block.src_ids.size() != before)
          block.sample_probs.push_back(static_cast<double>(s) / static_cast<double>(deg));
        const double base = sage ? 1.0 / static_cast<double>(deg) : 1.0 / std::sqrt(dv * g.hat_degree(u));
        block.adj.push_back({static_cast<std::uint32_t>(k), col, scale * base});
      }
    }
    dst = block.src_ids;
    blocks.push_back(std::move(block));
  }
  std::reverse(blocks.begin(), blocks.end());
  batch.layers = std::move(blocks);
  return batch;
}

// Layer-wise ------------------------------------------------------------------

std::vector<double> fastgcn_probs(const GraphCSR& g) {
  if (g.num_nodes() == 0) throw SamplingError("fastgcn_probs: empty graph");
  std::vector<double> acc(g.num_nodes(), 0.0);
  for (std::size_t r = 0; r < g.num_nodes(); ++r) {
    auto lr = laplacian_row(g, static_cast<NodeId>(r));
    for (std::size_t k = 0; k < lr.indices.size(); ++k) acc[lr.indices[k]] += lr.values[k] * lr.values[k];
  }
  return normalized(std::move(acc), "fastgcn_probs");
}

std::vector<NodeId> ladies_candidates(const GraphCSR& g, std::span<const NodeId> prev_layer_nodes) {
  std::vector<NodeId> out;
  for (auto v : prev_layer_nodes) {
    if (v >= g.num_nodes()) throw BoundsError("ladies_candidates: node out of range");
    auto n = g.neighbors(v);
    out.insert(out.end(), n.begin(), n.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> ladies_probs(const GraphCSR& g, std::span<const NodeId> row_nodes,
                                 std::span<const NodeId> candidates) {
  if (candidates.empty()) throw SamplingError("ladies_probs: empty candidate set");
  return normalized(column_norms_sq(g, row_nodes, candidates), "ladies_probs");
}

std::vector<double> flat_probs(const GraphCSR& g, std::span<const NodeId> row_nodes,
                               std::span<const NodeId> candidates) {
  if (candidates.empty()) throw SamplingError("flat_probs: empty candidate set");
  auto norms = column_norms_sq(g, row_nodes, candidates);
  for (auto& x : norms) x = std::sqrt(x);
  return normalized(std::move(norms), "flat_probs");
}

MiniBatch sample_fastgcn(const GraphCSR& g, std::span<const NodeId> targets,
                         std::size_t nodes_per_layer, std::size_t layers, Rng& rng,
                         LayerWiseOptions options) {
  require_targets(targets, g);
  if (nodes_per_layer == 0) throw SamplingError("nodes_per_layer must be at least 1");
  if (layers == 0) throw SamplingError("need at least one layer");
  MiniBatch batch = start_batch(g, targets);
  batch.method = {SamplerKind::kFastGcn, options.flat, options.debias};

  auto p = fastgcn_probs(g);
  if (options.flat) {
    for (auto& x : p) x = std::sqrt(x);
    p = normalized(std::move(p), "fastgcn flat");
  }
  std::vector<NodeId> all(g.num_nodes());
  std::iota(all.begin(), all.end(), 0);
  std::size_t positive = 0;
  for (double x : p) positive += x > 0.0;

  std::vector<NodeId> rows(targets.begin(), targets.end());
  std::vector<Block> blocks;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto cols = column_index(g, rows);
    Selection sel = options.debias ? draw_without_replacement(p, nodes_per_layer, true, rng)
                                   : draw_with_replacement(p, nodes_per_layer, rng);
    Block block = layer_wise_block(cols, rows, all, sel.chosen, sel.scale, sel.probs);
    record_draws(block, sel, all, positive);
    if (options.row_normalize) row_normalize(block);
    fill_self_index(block);
    rows = block.src_ids;
    blocks.push_back(std::move(block));
  }
  std::reverse(blocks.begin(), blocks.end());
  batch.layers = std::move(blocks);
  return batch;
}

MiniBatch sample_ladies(const GraphCSR& g, std::span<const NodeId> targets,
                        std::size_t nodes_per_layer, std::size_t layers, Rng& rng,
                        LayerWiseOptions options) {
  require_targets(targets, g);
  if (nodes_per_layer == 0) throw SamplingError("nodes_per_layer must be at least 1");
  if (layers == 0) throw SamplingError("need at least one layer");
  MiniBatch batch = start_batch(g, targets);
  batch.method = {SamplerKind::kLadies, options.flat, options.debias};

  std::vector<NodeId> rows(targets.begin(), targets.end());
  std::vector<Block> blocks;
  for (std::size_t l = 0; l < layers; ++l) {
    // Â carries a self-loop, so each row node is a candidate of its own.
    auto candidates = ladies_candidates(g, rows);
    candidates.insert(candidates.end(), rows.begin(), rows.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const auto p = options.flat ? flat_probs(g, rows, candidates) : ladies_probs(g, rows, candidates);
    const auto cols = column_index(g, rows);
    Selection sel = options.with_replacement
                        ? draw_with_replacement(p, nodes_per_layer, rng)
                        : draw_without_replacement(p, nodes_per_layer, options.debias, rng);
    Block block = layer_wise_block(cols, rows, candidates, sel.chosen, sel.scale, sel.probs);
    record_draws(block, sel, candidates, candidates.size());
    if (options.row_normalize) row_normalize(block);
    fill_self_index(block);
    rows = block.src_ids;
    blocks.push_back(std::move(block));
  }
  std::reverse(blocks.begin(), blocks.end());
  batch.layers = std::move(blocks);
  return batch;
}

// Debiasing --------------------------------------------------------------------

namespace {

double debias_alpha(std::size_t k, std::size_t n) {
  if (k == 0) return 1.0;
  return static_cast<double>(n) / (static_cast<double>(n - k) * static_cast<double>(k + 1));
}

void check_debias_inputs(std::span<const double> probs, std::size_t n) {
  if (probs.size() > n) throw SamplingError("debias: more draws than population");
  for (double p : probs)
    if (!(p > 0.0)) throw SamplingError("debias: zero probability at a drawn index");
}

}  // namespace

DenseMatrix debias_estimate(const DenseMatrix& x_rows, std::span<const double> probs_at_draw,
                            std::size_t n) {
  if (x_rows.rows() != probs_at_draw.size()) throw ShapeError("debias: one probability per row");
  check_debias_inputs(probs_at_draw, n);
  const std::size_t m = x_rows.cols();
  std::vector<double> y(m, 0.0), drawn(m, 0.0);
  for (std::size_t i = 0; i < x_rows.rows(); ++i) {
    const double alpha = debias_alpha(i, n);
    auto xi = x_rows.row(i);
    for (std::size_t c = 0; c < m; ++c) {
      const double pi = drawn[c] + xi[c] / probs_at_draw[i];
      y[c] = (1.0 - alpha) * y[c] + alpha * pi;
    }
    for (std::size_t c = 0; c < m; ++c) drawn[c] += xi[c];
  }
  DenseMatrix out(1, m);
  std::copy(y.begin(), y.end(), out.data());
  return out;
}

std::vector<double> debias_coefficients(std::span<const double> probs_at_draw, std::size_t n) {
  check_debias_inputs(probs_at_draw, n);
  const std::size_t s = probs_at_draw.size();
  std::vector<double> beta(s, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    const double alpha = debias_alpha(i, n);
    for (std::size_t j = 0; j < i; ++j) beta[j] = (1.0 - alpha) * beta[j] + alpha;
    beta[i] = alpha / probs_at_draw[i];
  }
  return beta;
}

// Dispatch -----------------------------------------------------------------------

void attach_features(MiniBatch& batch, const GraphCSR& g, const CacheState* cache) {
  const auto inputs = batch.input_nodes();
  const std::size_t d = g.feature_dim();
  batch.input_features = Matrix<float>(inputs.size(), d);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const NodeId v = inputs[i];
    const std::int64_t slot = cache ? cache->slot(v) : CacheState::kNotCached;
    auto src = slot == CacheState::kNotCached ? g.features().row(v)
                                              : cache->features().row(static_cast<std::size_t>(slot));
    std::copy(src.begin(), src.end(), batch.input_features.row(i).begin());
    hits += slot != CacheState::kNotCached;
  }
  batch.cache_hits = hits;
  batch.cache_misses = inputs.size() - hits;
  if (cache) cache->count(batch.cache_hits, batch.cache_misses);
}

MiniBatch build_minibatch(const Method& method, const GraphCSR& g, std::span<const NodeId> targets,
                          const SamplerParams& params, const CacheState* cache, Rng& rng) {
  MiniBatch batch;
  switch (method.kind) {
    case SamplerKind::kNodeWiseGcn:
    case SamplerKind::kNodeWiseSage:
      batch = sample_node_wise(g, targets, params.fanout, params.layers, cache, rng, method.uses_sage());
      break;
    case SamplerKind::kFastGcn:
      batch = sample_fastgcn(g, targets, params.nodes_per_layer, params.layers, rng,
                             {.flat = method.flat, .debias = method.debias, .row_normalize = false});
      break;
    case SamplerKind::kLadies:
      batch = sample_ladies(g, targets, params.nodes_per_layer, params.layers, rng,
                            {.flat = method.flat, .debias = method.debias});
      break;
  }
  batch.method = method;
  attach_features(batch, g, cache);
  return batch;
}

MiniBatch full_neighborhood_batch(const GraphCSR& g, std::span<const NodeId> targets,
                                  std::size_t layers, bool sage) {
  Rng unused(0);
  MiniBatch b = sample_node_wise(g, targets, std::max<std::size_t>(1, g.max_out_degree()), layers,
                                 nullptr, unused, sage);
  attach_features(b, g, nullptr);
  return b;
}

}  // namespace mqgnn
