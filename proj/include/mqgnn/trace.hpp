#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace mqgnn {

enum class Stage {
  kSample,
  kEnqueueCpu,
  kTransfer,
  kEnqueueDev,
  kComputeFwd,
  kComputeBwd,
  kGradShare,
  kGradApply,
  kSync,
};

const char* stage_name(Stage s);
Stage parse_stage(const std::string& s);

struct TraceEvent {
  Stage stage = Stage::kSample;
  int device = 0;
  std::int64_t batch = 0;
  std::int64_t epoch = 0;
  std::int64_t t_start_ns = 0;
  std::int64_t t_end_ns = 0;

  double duration_ms() const { return static_cast<double>(t_end_ns - t_start_ns) / 1e6; }
  bool is_compute() const { return stage == Stage::kComputeFwd || stage == Stage::kComputeBwd; }
  bool operator==(const TraceEvent&) const = default;
};

using Trace = std::vector<TraceEvent>;

/// Thread-safe event collector.
class TraceSink {
 public:
  void record(const TraceEvent& e) {
    std::lock_guard lock(mu_);
    events_.push_back(e);
  }
  Trace take() {
    std::lock_guard lock(mu_);
    return std::move(events_);
  }
  Trace snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
  }

 private:
  mutable std::mutex mu_;
  Trace events_;
};

/// One JSON object per line with keys stage, device, batch, epoch,
/// t_start_ns, t_end_ns in that order.
std::string to_json_line(const TraceEvent& e);
TraceEvent parse_json_line(const std::string& line);
void write_trace(const Trace& trace, std::ostream& out);
Trace read_trace(std::istream& in);
void save_trace(const Trace& trace, const std::filesystem::path& path);
Trace load_trace(const std::filesystem::path& path);

/// Warm-up/cool-down exclusion: entries [20, n-20) once n >= 60, else all.
struct KeptRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};
constexpr std::size_t kExcludedEdgeBatches = 20;
constexpr std::size_t kExclusionMinSamples = 60;
KeptRange steady_state_range(std::size_t n);

/// Compute busy fraction of one device: Σ compute durations over the span
/// from the first to the last compute event, counted over the batches kept
/// by steady_state_range() in consumption order. 0 without compute events.
double utilization(const Trace& trace, int device);

/// Per-batch compute time (fwd + bwd) of one device in consumption order.
std::vector<double> compute_times_ms(const Trace& trace, int device);
std::vector<double> stage_times_ms(const Trace& trace, int device, Stage stage);

/// Busy fraction of one device's compute stages in consecutive bins.
std::vector<double> utilization_series(const Trace& trace, int device, double bin_ms);

/// Centered sliding mean over `window` samples; windows are truncated at the
/// edges and averaged over the samples they actually cover.
std::vector<double> smooth_series(std::span<const double> series, std::size_t window);

std::int64_t makespan_ns(const Trace& trace);
int device_count(const Trace& trace);

}  // namespace mqgnn
