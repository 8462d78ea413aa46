#include "mqgnn/autotune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "mqgnn/error.hpp"
#include "mqgnn/matrix.hpp"

namespace mqgnn {

std::int64_t minibatch_memory_estimate(std::size_t batch_nodes, std::size_t feature_dim,
                                       std::size_t bytes_per_value) {
  return static_cast<std::int64_t>(batch_nodes * feature_dim * bytes_per_value);
}

std::int64_t available_queue_memory(std::int64_t total, std::int64_t peak, double safety_margin) {
  // Round away representation noise before the ceiling (200e6 * 0.1 is not exact).
  const double margin = std::round(static_cast<double>(peak) * safety_margin * 1e6) / 1e6;
  return total - peak - static_cast<std::int64_t>(std::ceil(margin));
}

std::size_t compute_cap(std::int64_t available_memory, std::int64_t minibatch_memory) {
  if (minibatch_memory <= 0) throw std::invalid_argument("mini-batch memory must be positive");
  if (available_memory <= 0) return 0;
  return static_cast<std::size_t>(available_memory / minibatch_memory);
}

std::size_t compute_queue_size(const TimingProfile& p, std::size_t cap) {
  if (cap == 0) throw ConfigError("queue cap must be at least 1");
  const std::size_t n = p.compute_times.size();
  if (n == 0 || p.sampling_times.size() != n || p.transfer_times.size() != n)
    throw std::invalid_argument("profile needs matching, nonempty stage arrays");
  const auto kept = steady_state_range(n);
  double prep_max = 0.0, compute_sum = 0.0;
  for (std::size_t i = kept.begin; i < kept.end; ++i) {
    prep_max = std::max(prep_max, p.sampling_times[i] + p.transfer_times[i]);
    compute_sum += p.compute_times[i];
  }
  const double compute_mean = compute_sum / static_cast<double>(kept.end - kept.begin);
  std::size_t q = 2;
  if (compute_mean > 0.0) {
    const double ratio = prep_max / compute_mean;
    const double nearest = std::round(ratio);
    const double ceiled = std::abs(ratio - nearest) < 1e-9 ? nearest : std::ceil(ratio);
    q = std::max<std::size_t>(2, static_cast<std::size_t>(ceiled));
  } else if (prep_max > 0.0) {
    q = cap;
  }
  return std::min(cap, q);
}

std::size_t profile_cap(const TimingProfile& p) {
  const auto avail = available_queue_memory(p.total_memory_bytes, p.peak_memory_bytes, p.safety_margin);
  const auto cap = compute_cap(avail, std::max<std::int64_t>(1, p.minibatch_memory_bytes));
  if (cap == 0) throw ConfigError("no device memory left for mini-batch queues");
  return cap;
}

TimingProfile profile_from_trace(const Trace& trace) {
  std::map<std::int64_t, double> sample, transfer, compute;
  std::vector<std::int64_t> order;
  for (const auto& e : trace) {
    if (e.device != 0) continue;
    switch (e.stage) {
      case Stage::kSample: sample[e.batch] += e.duration_ms(); break;
      case Stage::kTransfer: transfer[e.batch] += e.duration_ms(); break;
      case Stage::kComputeFwd: order.push_back(e.batch); [[fallthrough]];
      case Stage::kComputeBwd: compute[e.batch] += e.duration_ms(); break;
      default: break;
    }
  }
  TimingProfile p;
  for (auto b : order) {
    p.sampling_times.push_back(sample[b]);
    p.transfer_times.push_back(transfer[b]);
    p.compute_times.push_back(compute[b]);
  }
  return p;
}

TimingProfile profile(const GraphCSR& g, const CacheState* cache, const PipelineConfig& config,
                      const TrainSettings& settings, std::size_t batch_size, const std::vector<std::size_t>& dims,
                      double learning_rate, const ProfileOptions& options) {
  if (options.num_batches == 0) throw ConfigError("profiling needs at least one batch");
  const auto train = g.nodes_in(Split::kTrain);
  if (train.empty()) throw ConfigError("profiling needs training nodes");
  PipelineConfig pc = config;
  pc.num_devices = 1;
  pc.queue_capacity = std::max<std::size_t>(2, config.queue_capacity);

  EpochPlan plan;
  std::int64_t round = 0;
  while (plan.batches.size() < options.num_batches) {
    auto part = plan_epoch(train, batch_size, 1, config.seed, round++);
    for (auto& b : part.batches) {
      if (plan.batches.size() == options.num_batches) break;
      plan.batches.push_back(std::move(b));
    }
  }
  plan.device_batches = round_robin_batches(plan.batches.size(), 1);

  std::vector<ModelState<double>> replicas{
      init_model<double>(architecture_for(settings.method), dims, learning_rate, config.seed)};
  RacomHandle racom;
  memory::reset_peak();
  const auto base = memory::current_bytes();
  auto result = run_epoch(g, cache, replicas, pc, racom, settings, plan);
  if (!result.engine.ok) throw std::runtime_error("profiling run failed: " + result.engine.error);

  TimingProfile p = profile_from_trace(result.engine.trace);
  p.peak_memory_bytes = std::max<std::int64_t>(0, memory::peak_bytes() - base);
  std::size_t batch_nodes = 0;
  for (std::size_t k = 0; k < plan.batches.size(); ++k) {
    Rng rng(batch_seed(config.seed, plan.epoch, static_cast<std::int64_t>(k)));
    auto mb = build_minibatch(settings.method, g, plan.batches[k], settings.sampler, nullptr, rng);
    batch_nodes = std::max(batch_nodes, mb.input_nodes().size());
    if (k >= 8) break;
  }
  p.minibatch_memory_bytes = minibatch_memory_estimate(batch_nodes, g.feature_dim());
  p.total_memory_bytes = options.total_memory_bytes;
  p.safety_margin = options.safety_margin;
  return p;
}

TimingProfile profile_durations(const PipelineConfig& config, std::size_t num_batches) {
  PipelineConfig pc = config;
  pc.num_devices = 1;
  pc.queue_capacity = std::max<std::size_t>(2, config.queue_capacity);
  auto r = simulate_timings(pc, pc.durations, num_batches);
  if (!r.ok) throw std::runtime_error("profiling simulation failed: " + r.error);
  TimingProfile p = profile_from_trace(r.trace);
  p.minibatch_memory_bytes = 1;
  return p;
}

std::string profile_to_json(const TimingProfile& p) {
  nlohmann::ordered_json j;
  j["sampling_times_ms"] = p.sampling_times;
  j["transfer_times_ms"] = p.transfer_times;
  j["compute_times_ms"] = p.compute_times;
  j["peak_memory_bytes"] = p.peak_memory_bytes;
  j["minibatch_memory_bytes"] = p.minibatch_memory_bytes;
  j["total_memory_bytes"] = p.total_memory_bytes;
  j["safety_margin"] = p.safety_margin;
  if (!p.compute_times.empty()) {
    const auto cap = compute_cap(available_queue_memory(p.total_memory_bytes, p.peak_memory_bytes, p.safety_margin),
                                 std::max<std::int64_t>(1, p.minibatch_memory_bytes));
    j["queue_cap"] = cap;
    j["queue_size"] = cap == 0 ? 0 : compute_queue_size(p, cap);
  }
  return j.dump(2);
}

TimingProfile profile_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TimingProfile p;
    p.sampling_times = j.at("sampling_times_ms").get<std::vector<double>>();
    p.transfer_times = j.at("transfer_times_ms").get<std::vector<double>>();
    p.compute_times = j.at("compute_times_ms").get<std::vector<double>>();
    p.peak_memory_bytes = j.at("peak_memory_bytes").get<std::int64_t>();
    p.minibatch_memory_bytes = j.at("minibatch_memory_bytes").get<std::int64_t>();
    p.total_memory_bytes = j.at("total_memory_bytes").get<std::int64_t>();
    p.safety_margin = j.at("safety_margin").get<double>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid timing profile: ") + e.what(), 0);
  }
}

void save_profile(const TimingProfile& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << profile_to_json(p) << "\n";
}

TimingProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return profile_from_json(ss.str());
}

}  // namespace mqgnn
