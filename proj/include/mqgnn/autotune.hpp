#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mqgnn/pipeline.hpp"

namespace mqgnn {

constexpr std::int64_t kDefaultDeviceMemory = 24LL << 30;
constexpr double kDefaultSafetyMargin = 0.075;

/// Per-batch stage durations (ms) of one profiled run plus memory figures.
struct TimingProfile {
  std::vector<double> sampling_times;
  std::vector<double> transfer_times;
  std::vector<double> compute_times;
  std::int64_t peak_memory_bytes = 0;
  std::int64_t minibatch_memory_bytes = 0;
  std::int64_t total_memory_bytes = kDefaultDeviceMemory;
  double safety_margin = kDefaultSafetyMargin;

  bool operator==(const TimingProfile&) const = default;
};

/// batch_nodes × feature_dim × bytes_per_value.
std::int64_t minibatch_memory_estimate(std::size_t batch_nodes, std::size_t feature_dim,
                                       std::size_t bytes_per_value = sizeof(float));

/// M_Q = total − peak·(1 + margin).
std::int64_t available_queue_memory(std::int64_t total, std::int64_t peak, double safety_margin);

/// ⌊M_Q / M_batch⌋, 0 when nothing fits.
std::size_t compute_cap(std::int64_t available_memory, std::int64_t minibatch_memory);

/// min(cap, max(2, ⌈max_i(T_s,i + T_t,i) / mean(T_c)⌉)) over the kept
/// batches of the warm-up/cool-down rule.
std::size_t compute_queue_size(const TimingProfile& profile, std::size_t cap);

/// The cap implied by the profile's memory figures; ConfigError when zero.
std::size_t profile_cap(const TimingProfile& profile);

/// Per-batch durations of device 0 matched by batch id.
TimingProfile profile_from_trace(const Trace& trace);

struct ProfileOptions {
  std::size_t num_batches = 100;
  std::int64_t total_memory_bytes = kDefaultDeviceMemory;
  double safety_margin = kDefaultSafetyMargin;
};

/// Runs a single-device pipeline over `num_batches` batches and records its
/// stage timings and memory use.
TimingProfile profile(const GraphCSR& g, const CacheState* cache, const PipelineConfig& config,
                      const TrainSettings& settings, std::size_t batch_size, const std::vector<std::size_t>& dims,
                      double learning_rate, const ProfileOptions& options);

/// Timing-only profile of the configured stage distributions.
TimingProfile profile_durations(const PipelineConfig& config, std::size_t num_batches);

std::string profile_to_json(const TimingProfile& p);
TimingProfile profile_from_json(const std::string& text);
void save_profile(const TimingProfile& p, const std::filesystem::path& path);
TimingProfile load_profile(const std::filesystem::path& path);

}  // namespace mqgnn
