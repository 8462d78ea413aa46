#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mqgnn/graph.hpp"
#include "mqgnn/sampling.hpp"

namespace mqgnn {

struct CacheProbs {
  std::vector<double> probs;  // over V, sums to 1
};

enum class CacheMode { kDegree, kWalk, kAuto };
CacheMode parse_cache_mode(const std::string& s);

/// p_i = deg⁻(i) / Σ deg⁻. Uniform when the graph has no edges.
CacheProbs cache_probs_degree(const GraphCSR& g);

/// Short random-walk reachability from the training set:
/// P⁽⁰⁾ uniform over V_t, P⁽ˡ⁾ = (D A + I) P⁽ˡ⁻¹⁾ with
/// d_v = min(fanout, deg⁻(v)) / deg⁻(v); P⁽ᴸ⁾ normalized to sum 1.
CacheProbs cache_probs_walk(const GraphCSR& g, std::size_t fanout, std::size_t layers);

/// The walk iterate before the final normalization.
std::vector<double> walk_iterate(const GraphCSR& g, std::size_t fanout, std::size_t layers);

/// Degree mode when at least half the nodes are training nodes.
CacheProbs cache_probs(const GraphCSR& g, CacheMode mode, std::size_t fanout, std::size_t layers);

struct LookupResult {
  std::vector<NodeId> hit_ids;
  std::vector<NodeId> miss_ids;
};

/// Replicated device-side feature cache. Immutable between refreshes except
/// for the atomic hit/miss counters.
class CacheState {
 public:
  CacheState() = default;
  CacheState(const GraphCSR& g, std::vector<NodeId> ids, std::int64_t refresh_epoch);
  CacheState(const CacheState& o);
  CacheState& operator=(const CacheState& o);

  static constexpr std::int64_t kNotCached = -1;

  const std::vector<NodeId>& cached_ids() const { return cached_ids_; }
  std::size_t size() const { return cached_ids_.size(); }
  bool contains(NodeId v) const { return slot(v) != kNotCached; }
  std::int64_t slot(NodeId v) const {
    return v < id_to_slot_.size() ? id_to_slot_[v] : kNotCached;
  }
  const Matrix<float>& features() const { return features_; }
  std::int64_t refresh_epoch() const { return refresh_epoch_; }

  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }
  void count(std::uint64_t hits, std::uint64_t misses) const {
    hits_.fetch_add(hits);
    misses_.fetch_add(misses);
  }
  void reset_counters() const {
    hits_.store(0);
    misses_.store(0);
  }
  double hit_rate() const {
    const auto total = hits() + misses();
    return total == 0 ? 0.0 : static_cast<double>(hits()) / static_cast<double>(total);
  }

 private:
  std::vector<NodeId> cached_ids_;
  std::vector<std::int64_t> id_to_slot_;
  Matrix<float> features_;
  std::int64_t refresh_epoch_ = 0;
  mutable std::atomic<std::uint64_t> hits_{0};
  mutable std::atomic<std::uint64_t> misses_{0};
};

/// Draws ⌈fraction·|V|⌉ nodes by weighted sampling without replacement.
/// Zero-probability nodes fill the remainder uniformly when too few nodes
/// carry mass.
CacheState refresh_cache(const GraphCSR& g, const CacheProbs& probs, double fraction, Rng& rng,
                         std::int64_t epoch = 0);

/// Uniformly drawn cache of the same size, for comparisons.
CacheState uniform_cache(const GraphCSR& g, double fraction, Rng& rng);

LookupResult lookup(const CacheState& cache, std::span<const NodeId> ids);

}  // namespace mqgnn
