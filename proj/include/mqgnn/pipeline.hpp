#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "mqgnn/cache.hpp"
#include "mqgnn/engine.hpp"
#include "mqgnn/graph.hpp"
#include "mqgnn/nn.hpp"
#include "mqgnn/racom.hpp"
#include "mqgnn/sampling.hpp"
#include "mqgnn/trace.hpp"

namespace mqgnn {

/// Host-to-device latency: base + per_byte · (feature bytes missing from the cache).
struct TransferLatency {
  double base_ms = 0.0;
  double per_byte_ms = 0.0;
};

double transfer_delay_ms(const MiniBatch& batch, const TransferLatency& latency);

/// Marks the batch device-resident and returns its modeled delay. Cache
/// hits were already taken from the replica when the batch was assembled.
double transfer_stage(MiniBatch& batch, const TransferLatency& latency);

enum class TimingMode { kReal, kSimulated };
TimingMode parse_timing_mode(const std::string& s);

struct PipelineConfig {
  std::size_t num_devices = 1;
  std::size_t queue_capacity = 2;
  std::size_t sampler_workers = 1;
  TransferLatency transfer;
  TimingMode timing_mode = TimingMode::kReal;
  /// Serializes every worker onto the discrete-event schedule.
  bool deterministic = false;
  bool pipelined = true;
  std::uint64_t seed = 0;
  StageDurations durations;
  DelayModel delays;
  std::size_t sync_period = 1;
  double sleep_scale = 1.0;
  std::optional<std::int64_t> fault_batch;

  bool event_driven() const { return deterministic || timing_mode == TimingMode::kSimulated; }
};

/// Disjoint shuffled partition of the training nodes; batch k goes to
/// device k mod |devices|.
struct EpochPlan {
  std::int64_t epoch = 0;
  std::vector<std::vector<NodeId>> batches;
  std::vector<std::vector<std::int64_t>> device_batches;

  std::size_t num_batches() const { return batches.size(); }
  std::size_t windows() const;
};

EpochPlan plan_epoch(std::span<const NodeId> train_nodes, std::size_t batch_size, std::size_t num_devices,
                     std::uint64_t seed, std::int64_t epoch);

struct TrainSettings {
  Method method;
  SamplerParams sampler;
  OptimizerKind optimizer = OptimizerKind::kAdam;
};

Architecture architecture_for(const Method& m);

/// Carries RaCoM progress across epochs.
struct RacomHandle {
  std::int64_t next_window = 0;
  std::int64_t clock_ns = 0;
  std::size_t sync_events = 0;
};

struct StageStats {
  double mean_ms = 0.0;
  double max_ms = 0.0;
  std::size_t count = 0;
};

struct EpochMetrics {
  std::int64_t epoch = 0;
  std::size_t num_batches = 0;
  double mean_batch_ms = 0.0;  // compute time per batch, steady-state batches only
  double training_time_ms = 0.0;
  std::map<Stage, StageStats> stages;
  std::vector<double> utilization;
  std::vector<std::size_t> cpu_high_water;
  std::vector<std::size_t> device_high_water;
  std::size_t sync_events = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  bool drained = true;
};

/// Observer for replica weights after every window update.
using ApplyObserver = std::function<void(int device, std::int64_t window, const ModelState<double>& model)>;

struct EpochResult {
  EpochMetrics metrics;
  EngineResult engine;
};

/// One epoch through the staged pipeline with RaCoM updates on `replicas`
/// (one per device, identical at entry).
EpochResult run_epoch(const GraphCSR& g, const CacheState* cache, std::vector<ModelState<double>>& replicas,
                      const PipelineConfig& config, RacomHandle& racom, const TrainSettings& settings,
                      const EpochPlan& plan, const ApplyObserver& observer = {});

/// Timing-only discrete-event run of `num_batches` batches.
EngineResult simulate_timings(const PipelineConfig& config, const StageDurations& durations, std::size_t num_batches);

EngineConfig engine_config(const PipelineConfig& config, std::vector<std::vector<std::int64_t>> batch_ids,
                           std::int64_t epoch, std::int64_t window_base, std::int64_t t0_ns);

/// Per-stage statistics, busy fractions and high-water marks of a run.
EpochMetrics summarize(const EngineResult& r, std::int64_t epoch, std::size_t num_devices);

/// Consumption order equals production order on every device.
bool fifo_per_device(const EngineResult& r);
/// Every produced batch was consumed and every queue drained.
bool conserved(const EngineResult& r);

}  // namespace mqgnn
