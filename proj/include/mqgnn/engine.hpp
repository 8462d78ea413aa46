#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mqgnn/nn.hpp"
#include "mqgnn/racom.hpp"
#include "mqgnn/sampling.hpp"
#include "mqgnn/trace.hpp"

namespace mqgnn {

/// Stage-duration distribution in milliseconds; draws are clamped at 0.
struct Distribution {
  enum class Kind { kFixed, kUniform, kNormal, kExponential };
  Kind kind = Kind::kFixed;
  double a = 0.0;
  double b = 0.0;

  static Distribution fixed(double ms) { return {Kind::kFixed, ms, 0.0}; }
  static Distribution uniform(double lo, double hi) { return {Kind::kUniform, lo, hi}; }

  double draw(std::mt19937_64& rng) const;
  double mean() const;
  double max() const;  // +inf for unbounded kinds
};

/// fixed(x) | uniform(a,b) | normal(mean,std) | exponential(mean)
Distribution parse_distribution(const std::string& text);
std::string distribution_name(const Distribution& d);

struct StageDurations {
  Distribution sample = Distribution::fixed(1.0);
  Distribution transfer = Distribution::fixed(1.0);
  Distribution compute = Distribution::fixed(1.0);
  Distribution share = Distribution::fixed(0.0);
  Distribution apply = Distribution::fixed(0.0);
  Distribution sync = Distribution::fixed(0.0);
  double fwd_fraction = 1.0 / 3.0;
};

/// Numeric side of a pipeline run. The engine owns scheduling, queues and
/// gradient routing; the workload owns batches, models and accumulators.
/// Calls for one device never overlap except sample()/transfer_ms(), which
/// may run on several sampler threads.
class Workload {
 public:
  virtual ~Workload() = default;
  virtual std::shared_ptr<MiniBatch> sample(int device, std::size_t local, std::int64_t batch_id) = 0;
  /// Modeled transfer latency; NaN defers to the configured distribution.
  virtual double transfer_ms(int device, MiniBatch& batch) = 0;
  virtual void forward(int device, const MiniBatch& batch) = 0;
  virtual GradientPacket<double> backward(int device, const MiniBatch& batch, std::int64_t window) = 0;
  virtual void accumulate(int device, const GradientPacket<double>& packet) = 0;
  virtual void apply(int device, std::int64_t window) = 0;
  /// Called once per barrier with every device parked.
  virtual void sync() = 0;
};

struct EngineConfig {
  std::size_t num_devices = 1;
  /// Batch ids in processing order, per device.
  std::vector<std::vector<std::int64_t>> batch_ids;
  std::size_t queue_capacity = 2;
  std::size_t sampler_workers = 1;
  /// false replays stages back to back: a device samples batch i+1 only
  /// after batch i is fully computed.
  bool pipelined = true;
  std::size_t sync_period = 1;
  DelayModel delays;
  StageDurations durations;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  /// Global index of this epoch's first iteration window.
  std::int64_t window_base = 0;
  std::int64_t t0_ns = 0;
  /// Threaded timing-only runs sleep for drawn durations times this factor.
  double sleep_scale = 1.0;
  /// Test hook: the compute stage throws on this batch id.
  std::optional<std::int64_t> fault_batch;
};

/// Round-robin assignment of `num_batches` consecutive ids over devices.
std::vector<std::vector<std::int64_t>> round_robin_batches(std::size_t num_batches, std::size_t num_devices,
                                                           std::int64_t first_id = 0);

struct QueueStats {
  std::size_t capacity = 0;
  std::size_t high_water = 0;
  std::size_t pushed = 0;
  std::size_t popped = 0;
  std::size_t final_size = 0;
};

struct StalenessRecord {
  int device = 0;
  std::int64_t window = 0;
  std::int64_t staleness = 0;  // completed iterations beyond the window's own
};

struct EngineResult {
  bool ok = true;
  std::string error;
  Trace trace;
  std::vector<QueueStats> cpu_queues;
  std::vector<QueueStats> device_queues;
  std::vector<std::vector<std::int64_t>> produced;  // cpu-queue push order
  std::vector<std::vector<std::int64_t>> consumed;  // compute order
  std::size_t sync_events = 0;
  std::size_t applied_windows = 0;
  std::vector<StalenessRecord> staleness;
  std::int64_t end_ns = 0;
  bool workers_joined = true;
};

/// Discrete-event execution on a virtual clock; single-threaded and
/// bit-reproducible for a fixed config.
EngineResult run_simulated(const EngineConfig& config, Workload* workload = nullptr);

/// Worker threads on the wall clock: sampler pool, transfer worker and
/// compute worker per device.
EngineResult run_threaded(const EngineConfig& config, Workload* workload = nullptr);

/// Iteration windows that end with a model-averaging barrier: every
/// sync_period-th window all devices share, plus the epoch's last.
bool is_sync_point(const EngineConfig& config, std::size_t local, std::size_t min_batches);

}  // namespace mqgnn
