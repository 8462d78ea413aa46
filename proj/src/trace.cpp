#include "mqgnn/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "mqgnn/error.hpp"

namespace mqgnn {

namespace {

constexpr const char* kStageNames[] = {"sample",      "enqueue_cpu", "transfer",   "enqueue_dev", "compute_fwd",
                                       "compute_bwd", "grad_share",  "grad_apply", "sync"};

}  // namespace

const char* stage_name(Stage s) { return kStageNames[static_cast<int>(s)]; }

Stage parse_stage(const std::string& s) {
  for (int i = 0; i < 9; ++i)
    if (s == kStageNames[i]) return static_cast<Stage>(i);
  throw ParseError("unknown trace stage '" + s + "'");
}

std::string to_json_line(const TraceEvent& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                R"({"stage":"%s","device":%d,"batch":%lld,"epoch":%lld,"t_start_ns":%lld,"t_end_ns":%lld})",
                stage_name(e.stage), e.device, static_cast<long long>(e.batch), static_cast<long long>(e.epoch),
                static_cast<long long>(e.t_start_ns), static_cast<long long>(e.t_end_ns));
  return buf;
}

TraceEvent parse_json_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("trace line is not JSON: ") + ex.what());
  }
  static const char* keys[] = {"stage", "device", "batch", "epoch", "t_start_ns", "t_end_ns"};
  if (!j.is_object() || j.size() != 6) throw ParseError("trace event must have exactly six fields");
  for (auto k : keys)
    if (!j.contains(k)) throw ParseError(std::string("trace event missing field ") + k);
  TraceEvent e;
  e.stage = parse_stage(j["stage"].get<std::string>());
  e.device = j["device"].get<int>();
  e.batch = j["batch"].get<std::int64_t>();
  e.epoch = j["epoch"].get<std::int64_t>();
  e.t_start_ns = j["t_start_ns"].get<std::int64_t>();
  e.t_end_ns = j["t_end_ns"].get<std::int64_t>();
  if (e.t_end_ns < e.t_start_ns) throw ParseError("trace event ends before it starts");
  return e;
}

void write_trace(const Trace& trace, std::ostream& out) {
  for (const auto& e : trace) out << to_json_line(e) << '\n';
}

Trace read_trace(std::istream& in) {
  Trace t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      t.push_back(parse_json_line(line));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return t;
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_trace(trace, out);
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_trace(in);
}

KeptRange steady_state_range(std::size_t n) {
  if (n >= kExclusionMinSamples) return {kExcludedEdgeBatches, n - kExcludedEdgeBatches};
  return {0, n};
}

namespace {

struct BatchCompute {
  std::int64_t first_start = 0;
  std::int64_t last_end = 0;
  std::int64_t busy = 0;
};

// Compute activity per (epoch, batch) of one device, in consumption order.
std::vector<BatchCompute> compute_batches(const Trace& trace, int device) {
  std::map<std::pair<std::int64_t, std::int64_t>, BatchCompute> by_batch;
  for (const auto& e : trace) {
    if (e.device != device || !e.is_compute()) continue;
    auto [it, fresh] = by_batch.try_emplace({e.epoch, e.batch}, BatchCompute{e.t_start_ns, e.t_end_ns, 0});
    auto& b = it->second;
    b.first_start = std::min(b.first_start, e.t_start_ns);
    b.last_end = std::max(b.last_end, e.t_end_ns);
    b.busy += e.t_end_ns - e.t_start_ns;
  }
  std::vector<BatchCompute> out;
  out.reserve(by_batch.size());
  for (auto& [key, b] : by_batch) out.push_back(b);
  std::stable_sort(out.begin(), out.end(),
                   [](const BatchCompute& a, const BatchCompute& b) { return a.first_start < b.first_start; });
  return out;
}

}  // namespace

double utilization(const Trace& trace, int device) {
  const auto batches = compute_batches(trace, device);
  const auto kept = steady_state_range(batches.size());
  if (kept.begin >= kept.end) return 0.0;
  std::int64_t lo = batches[kept.begin].first_start, hi = batches[kept.begin].last_end, busy = 0;
  for (std::size_t i = kept.begin; i < kept.end; ++i) {
    lo = std::min(lo, batches[i].first_start);
    hi = std::max(hi, batches[i].last_end);
    busy += batches[i].busy;
  }
  if (hi <= lo) return busy > 0 ? 1.0 : 0.0;
  return static_cast<double>(busy) / static_cast<double>(hi - lo);
}

std::vector<double> compute_times_ms(const Trace& trace, int device) {
  std::vector<double> out;
  for (const auto& b : compute_batches(trace, device)) out.push_back(static_cast<double>(b.busy) / 1e6);
  return out;
}

std::vector<double> stage_times_ms(const Trace& trace, int device, Stage stage) {
  std::vector<const TraceEvent*> events;
  for (const auto& e : trace)
    if (e.device == device && e.stage == stage) events.push_back(&e);
  std::stable_sort(events.begin(), events.end(),
                   [](const TraceEvent* a, const TraceEvent* b) { return a->t_start_ns < b->t_start_ns; });
  std::vector<double> out;
  out.reserve(events.size());
  for (auto* e : events) out.push_back(e->duration_ms());
  return out;
}

std::vector<double> utilization_series(const Trace& trace, int device, double bin_ms) {
  if (!(bin_ms > 0.0)) throw std::invalid_argument("bin width must be positive");
  if (trace.empty()) return {};
  std::int64_t t0 = trace.front().t_start_ns, t1 = trace.front().t_end_ns;
  for (const auto& e : trace) {
    t0 = std::min(t0, e.t_start_ns);
    t1 = std::max(t1, e.t_end_ns);
  }
  const double bin_ns = bin_ms * 1e6;
  const auto nbins = static_cast<std::size_t>(std::ceil(static_cast<double>(t1 - t0) / bin_ns));
  std::vector<double> busy(std::max<std::size_t>(nbins, 1), 0.0);
  for (const auto& e : trace) {
    if (e.device != device || !e.is_compute()) continue;
    const double s = static_cast<double>(e.t_start_ns - t0), f = static_cast<double>(e.t_end_ns - t0);
    auto b = static_cast<std::size_t>(s / bin_ns);
    for (; b < busy.size() && static_cast<double>(b) * bin_ns < f; ++b) {
      const double lo = std::max(s, static_cast<double>(b) * bin_ns);
      const double hi = std::min(f, static_cast<double>(b + 1) * bin_ns);
      if (hi > lo) busy[b] += (hi - lo) / bin_ns;
    }
  }
  return busy;
}

std::vector<double> smooth_series(std::span<const double> series, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smoothing window must be positive");
  const std::size_t n = series.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + series[i];
  const std::size_t before = (window - 1) / 2, after = window / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= before ? i - before : 0;
    const std::size_t hi = std::min(n, i + after + 1);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

std::int64_t makespan_ns(const Trace& trace) {
  if (trace.empty()) return 0;
  std::int64_t t0 = trace.front().t_start_ns, t1 = trace.front().t_end_ns;
  for (const auto& e : trace) {
    t0 = std::min(t0, e.t_start_ns);
    t1 = std::max(t1, e.t_end_ns);
  }
  return t1 - t0;
}

int device_count(const Trace& trace) {
  int n = 0;
  for (const auto& e : trace) n = std::max(n, e.device + 1);
  return n;
}

}  // namespace mqgnn
