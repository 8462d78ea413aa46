#include "mqgnn/cache.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mqgnn/error.hpp"

namespace mqgnn {

CacheMode parse_cache_mode(const std::string& s) {
  if (s == "degree") return CacheMode::kDegree;
  if (s == "walk") return CacheMode::kWalk;
  if (s == "auto") return CacheMode::kAuto;
  throw ConfigError("cache_mode must be degree, walk or auto");
}

CacheProbs cache_probs_degree(const GraphCSR& g) {
  const std::size_t n = g.num_nodes();
  CacheProbs out;
  if (g.num_edges() == 0) {
    out.probs.assign(n, n ? 1.0 / static_cast<double>(n) : 0.0);
    return out;
  }
  out.probs.resize(n);
  const double total = static_cast<double>(g.num_edges());  // Σ in-degree
  for (std::size_t v = 0; v < n; ++v)
    out.probs[v] = static_cast<double>(g.in_degree(static_cast<NodeId>(v))) / total;
  return out;
}

std::vector<double> walk_iterate(const GraphCSR& g, std::size_t fanout, std::size_t layers) {
  const auto train = g.nodes_in(Split::kTrain);
  if (train.empty()) throw std::invalid_argument("cache_probs_walk: empty training set");
  const std::size_t n = g.num_nodes();
  std::vector<double> d(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    const auto deg = g.in_degree(static_cast<NodeId>(v));
    if (deg > 0) d[v] = static_cast<double>(std::min(fanout, deg)) / static_cast<double>(deg);
  }
  std::vector<double> p(n, 0.0), next(n);
  for (auto v : train) p[v] = 1.0 / static_cast<double>(train.size());
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t v = 0; v < n; ++v) {
      double acc = 0.0;
      for (NodeId u : g.neighbors(static_cast<NodeId>(v))) acc += p[u];
      next[v] = p[v] + d[v] * acc;
    }
    p.swap(next);
  }
  return p;
}

CacheProbs cache_probs_walk(const GraphCSR& g, std::size_t fanout, std::size_t layers) {
  CacheProbs out{walk_iterate(g, fanout, layers)};
  const double total = std::accumulate(out.probs.begin(), out.probs.end(), 0.0);
  for (auto& p : out.probs) p /= total;
  return out;
}

CacheProbs cache_probs(const GraphCSR& g, CacheMode mode, std::size_t fanout, std::size_t layers) {
  if (mode == CacheMode::kAuto) {
    const double train_share = g.num_nodes() == 0
                                   ? 0.0
                                   : static_cast<double>(g.nodes_in(Split::kTrain).size()) /
                                         static_cast<double>(g.num_nodes());
    mode = train_share >= 0.5 ? CacheMode::kDegree : CacheMode::kWalk;
  }
  return mode == CacheMode::kDegree ? cache_probs_degree(g) : cache_probs_walk(g, fanout, layers);
}

CacheState::CacheState(const GraphCSR& g, std::vector<NodeId> ids, std::int64_t refresh_epoch)
    : cached_ids_(std::move(ids)),
      id_to_slot_(g.num_nodes(), kNotCached),
      features_(cached_ids_.size(), g.feature_dim()),
      refresh_epoch_(refresh_epoch) {
  std::sort(cached_ids_.begin(), cached_ids_.end());
  if (std::adjacent_find(cached_ids_.begin(), cached_ids_.end()) != cached_ids_.end())
    throw std::invalid_argument("cache ids must be unique");
  for (std::size_t k = 0; k < cached_ids_.size(); ++k) {
    const NodeId v = cached_ids_[k];
    if (v >= g.num_nodes()) throw BoundsError("cache id out of range");
    id_to_slot_[v] = static_cast<std::int64_t>(k);
    auto src = g.features().row(v);
    std::copy(src.begin(), src.end(), features_.row(k).begin());
  }
}

CacheState::CacheState(const CacheState& o)
    : cached_ids_(o.cached_ids_),
      id_to_slot_(o.id_to_slot_),
      features_(o.features_),
      refresh_epoch_(o.refresh_epoch_),
      hits_(o.hits_.load()),
      misses_(o.misses_.load()) {}

CacheState& CacheState::operator=(const CacheState& o) {
  if (this == &o) return *this;
  cached_ids_ = o.cached_ids_;
  id_to_slot_ = o.id_to_slot_;
  features_ = o.features_;
  refresh_epoch_ = o.refresh_epoch_;
  hits_.store(o.hits_.load());
  misses_.store(o.misses_.load());
  return *this;
}

namespace {

std::size_t cache_size(const GraphCSR& g, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("cache fraction must be in (0, 1]");
  return std::min(g.num_nodes(),
                  static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(g.num_nodes()) - 1e-9)));
}

}  // namespace

CacheState refresh_cache(const GraphCSR& g, const CacheProbs& probs, double fraction, Rng& rng,
                         std::int64_t epoch) {
  const std::size_t k = cache_size(g, fraction);
  if (probs.probs.size() != g.num_nodes()) throw ShapeError("cache probabilities must cover V");
  std::size_t positive = 0;
  for (double p : probs.probs) positive += p > 0.0;
  const std::size_t weighted = std::min(k, positive);
  auto sample = weighted_sample_without_replacement(probs.probs, weighted, rng);
  std::vector<NodeId> ids(sample.ids.begin(), sample.ids.end());
  if (ids.size() < k) {
    std::vector<double> rest(g.num_nodes(), 0.0);
    for (std::size_t v = 0; v < g.num_nodes(); ++v) rest[v] = probs.probs[v] > 0.0 ? 0.0 : 1.0;
    auto fill = weighted_sample_without_replacement(rest, k - ids.size(), rng);
    ids.insert(ids.end(), fill.ids.begin(), fill.ids.end());
  }
  return CacheState(g, std::move(ids), epoch);
}

CacheState uniform_cache(const GraphCSR& g, double fraction, Rng& rng) {
  std::vector<double> w(g.num_nodes(), 1.0);
  auto sample = weighted_sample_without_replacement(w, cache_size(g, fraction), rng);
  return CacheState(g, std::vector<NodeId>(sample.ids.begin(), sample.ids.end()), 0);
}

LookupResult lookup(const CacheState& cache, std::span<const NodeId> ids) {
  LookupResult r;
  for (auto v : ids) (cache.contains(v) ? r.hit_ids : r.miss_ids).push_back(v);
  cache.count(r.hit_ids.size(), r.miss_ids.size());
  return r;
}

}  // namespace mqgnn
