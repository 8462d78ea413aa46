#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mqgnn/engine.hpp"
#include "mqgnn/error.hpp"

namespace mqgnn::detail {

inline std::int64_t ms_to_ns(double ms) { return static_cast<std::int64_t>(std::llround(ms * 1e6)); }

/// Independent stream per (device, stream tag) so draws do not depend on
/// the order stages happen to run in.
inline std::mt19937_64 stream(const EngineConfig& c, int device, std::int64_t tag) {
  return std::mt19937_64(batch_seed(c.seed ^ (static_cast<std::uint64_t>(tag) << 48), c.epoch, device));
}

enum StreamTag : std::int64_t { kSampleStream = 1, kTransferStream, kComputeStream, kShareStream, kApplyStream,
                                kSyncStream, kDelayStream };

inline void validate(const EngineConfig& c) {
  if (c.num_devices == 0) throw ConfigError("num_devices must be at least 1");
  if (c.batch_ids.size() != c.num_devices) throw ConfigError("batch_ids must list every device");
  if (c.queue_capacity == 0) throw ConfigError("queue capacity must be at least 1");
  if (c.sampler_workers == 0) throw ConfigError("sampler_workers must be at least 1");
  if (c.sync_period == 0) throw ConfigError("sync period must be at least 1");
  if (!(c.durations.fwd_fraction >= 0.0 && c.durations.fwd_fraction <= 1.0))
    throw ConfigError("fwd_fraction must lie in [0, 1]");
}

/// Pre-drawn per-batch durations (ms) of the three data stages.
struct BatchDurations {
  std::vector<double> sample, transfer, compute;
};

inline BatchDurations draw_batch_durations(const EngineConfig& c, int device) {
  const std::size_t n = c.batch_ids[device].size();
  BatchDurations d;
  auto fill = [&](std::vector<double>& out, const Distribution& dist, std::int64_t tag) {
    auto rng = stream(c, device, tag);
    out.resize(n);
    for (auto& x : out) x = dist.draw(rng);
  };
  fill(d.sample, c.durations.sample, kSampleStream);
  fill(d.transfer, c.durations.transfer, kTransferStream);
  fill(d.compute, c.durations.compute, kComputeStream);
  return d;
}

inline std::size_t expected_contributions(const EngineConfig& c, std::size_t local) {
  std::size_t n = 0;
  for (const auto& ids : c.batch_ids) n += ids.size() > local ? 1 : 0;
  return n;
}

}  // namespace mqgnn::detail
