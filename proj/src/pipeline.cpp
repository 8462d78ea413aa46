#include "mqgnn/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>

#include "mqgnn/error.hpp"

namespace mqgnn {

double transfer_delay_ms(const MiniBatch& batch, const TransferLatency& latency) {
  return latency.base_ms + latency.per_byte_ms * static_cast<double>(batch.miss_feature_bytes());
}

double transfer_stage(MiniBatch& batch, const TransferLatency& latency) {
  batch.on_device = true;
  return transfer_delay_ms(batch, latency);
}

TimingMode parse_timing_mode(const std::string& s) {
  if (s == "real") return TimingMode::kReal;
  if (s == "simulated") return TimingMode::kSimulated;
  throw ConfigError("timing_mode must be real or simulated, got '" + s + "'");
}

std::size_t EpochPlan::windows() const {
  std::size_t n = 0;
  for (const auto& ids : device_batches) n = std::max(n, ids.size());
  return n;
}

EpochPlan plan_epoch(std::span<const NodeId> train_nodes, std::size_t batch_size, std::size_t num_devices,
                     std::uint64_t seed, std::int64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (num_devices == 0) throw ConfigError("num_devices must be at least 1");
  EpochPlan plan;
  plan.epoch = epoch;
  std::vector<NodeId> order(train_nodes.begin(), train_nodes.end());
  Rng rng(batch_seed(seed, epoch, -1));
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const auto end = std::min(order.size(), i + batch_size);
    plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  plan.device_batches = round_robin_batches(plan.batches.size(), num_devices);
  return plan;
}

Architecture architecture_for(const Method& m) {
  return m.uses_sage() ? Architecture::kSage : Architecture::kGcn;
}

EngineConfig engine_config(const PipelineConfig& config, std::vector<std::vector<std::int64_t>> batch_ids,
                           std::int64_t epoch, std::int64_t window_base, std::int64_t t0_ns) {
  EngineConfig e;
  e.num_devices = config.num_devices;
  e.batch_ids = std::move(batch_ids);
  e.queue_capacity = config.queue_capacity;
  e.sampler_workers = config.sampler_workers;
  e.pipelined = config.pipelined;
  e.sync_period = config.sync_period;
  e.delays = config.delays;
  e.durations = config.durations;
  e.seed = config.seed;
  e.epoch = epoch;
  e.window_base = window_base;
  e.t0_ns = t0_ns;
  e.sleep_scale = config.sleep_scale;
  e.fault_batch = config.fault_batch;
  return e;
}

namespace {

class TrainingWorkload final : public Workload {
 public:
  TrainingWorkload(const GraphCSR& g, const CacheState* cache, std::vector<ModelState<double>>& replicas,
                   const PipelineConfig& config, const TrainSettings& settings, const EpochPlan& plan,
                   std::int64_t window_base, const ApplyObserver& observer)
      : g_(g),
        cache_(cache),
        replicas_(replicas),
        config_(config),
        settings_(settings),
        plan_(plan),
        window_base_(window_base),
        observer_(observer),
        devices_(replicas.size()) {}

  std::shared_ptr<MiniBatch> sample(int, std::size_t, std::int64_t batch_id) override {
    Rng rng(batch_seed(config_.seed, plan_.epoch, batch_id));
    auto b = std::make_shared<MiniBatch>(build_minibatch(settings_.method, g_, plan_.batches.at(batch_id),
                                                         settings_.sampler, cache_, rng));
    b->batch_id = batch_id;
    b->epoch = plan_.epoch;
    hits_ += b->cache_hits;
    misses_ += b->cache_misses;
    return b;
  }

  double transfer_ms(int, MiniBatch& batch) override {
    const double ms = transfer_stage(batch, config_.transfer);
    const bool unmodeled = config_.transfer.base_ms == 0.0 && config_.transfer.per_byte_ms == 0.0;
    if (config_.timing_mode == TimingMode::kSimulated && unmodeled) return std::nan("");
    return ms;
  }

  void forward(int device, const MiniBatch& batch) override {
    devices_[device].fwd = mqgnn::forward(batch, replicas_[device]);
  }

  GradientPacket<double> backward(int device, const MiniBatch& batch, std::int64_t window) override {
    auto& st = devices_[device];
    if (st.fwd.cache.batch != &batch) throw std::logic_error("backward without matching forward");
    auto loss = batch_loss(st.fwd.logits, batch.target_labels);
    const double rows = static_cast<double>(std::max<std::size_t>(1, batch.target_labels.size()));
    for (std::size_t i = 0; i < loss.dlogits.size(); ++i) loss.dlogits.data()[i] /= rows;
    auto packet = mqgnn::backward(batch, replicas_[device], st.fwd.cache, loss.dlogits);
    st.loss_sum += loss.loss;
    const auto pred = predict(st.fwd.logits);
    for (std::size_t i = 0; i < pred.size(); ++i) st.correct += pred[i] == batch.target_labels[i] ? 1 : 0;
    st.rows += batch.target_labels.size();
    st.fwd = {};
    packet.source_device = device;
    packet.iteration = window;
    return packet;
  }

  void accumulate(int device, const GradientPacket<double>& packet) override {
    auto& acc = devices_[device].windows;
    auto it = acc.find(packet.iteration);
    if (it == acc.end()) {
      const auto local = static_cast<std::size_t>(packet.iteration - window_base_);
      std::size_t expected = 0;
      for (const auto& ids : plan_.device_batches) expected += ids.size() > local ? 1 : 0;
      it = acc.emplace(packet.iteration, Accumulator<double>(expected)).first;
    }
    it->second.accumulate(packet);
  }

  void apply(int device, std::int64_t window) override {
    auto& acc = devices_[device].windows;
    auto it = acc.find(window);
    if (it == acc.end()) throw std::logic_error("apply on a window without gradients");
    auto grads = finalize_or_throw(it->second);
    acc.erase(it);
    apply_update(replicas_[device], grads, settings_.optimizer);
    if (observer_) observer_(device, window, replicas_[device]);
  }

  void sync() override { sync_models(std::span<ModelState<double>>(replicas_)); }

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

  double loss() const {
    double l = 0.0;
    for (const auto& d : devices_) l += d.loss_sum;
    return l / static_cast<double>(std::max<std::size_t>(1, rows()));
  }
  double accuracy() const {
    std::size_t c = 0;
    for (const auto& d : devices_) c += d.correct;
    return static_cast<double>(c) / static_cast<double>(std::max<std::size_t>(1, rows()));
  }

 private:
  std::size_t rows() const {
    std::size_t r = 0;
    for (const auto& d : devices_) r += d.rows;
    return r;
  }

  struct DeviceState {
    ForwardResult<double> fwd;
    std::map<std::int64_t, Accumulator<double>> windows;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t rows = 0;
  };

  const GraphCSR& g_;
  const CacheState* cache_;
  std::vector<ModelState<double>>& replicas_;
  const PipelineConfig& config_;
  const TrainSettings& settings_;
  const EpochPlan& plan_;
  std::int64_t window_base_;
  const ApplyObserver& observer_;
  std::vector<DeviceState> devices_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

}  // namespace

EpochMetrics summarize(const EngineResult& r, std::int64_t epoch, std::size_t num_devices) {
  EpochMetrics m;
  m.epoch = epoch;
  m.sync_events = r.sync_events;
  std::map<Stage, std::vector<double>> durations;
  for (const auto& e : r.trace) durations[e.stage].push_back(e.duration_ms());
  for (const auto& [stage, v] : durations) {
    StageStats s;
    s.count = v.size();
    s.mean_ms = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.max_ms = *std::max_element(v.begin(), v.end());
    m.stages[stage] = s;
  }
  double batch_sum = 0.0;
  std::size_t batch_count = 0;
  for (std::size_t d = 0; d < num_devices; ++d) {
    const int di = static_cast<int>(d);
    m.utilization.push_back(utilization(r.trace, di));
    const auto times = compute_times_ms(r.trace, di);
    const auto kept = steady_state_range(times.size());
    for (std::size_t i = kept.begin; i < kept.end; ++i) batch_sum += times[i];
    batch_count += kept.end - kept.begin;
    m.num_batches += times.size();
  }
  m.mean_batch_ms = batch_count ? batch_sum / static_cast<double>(batch_count) : 0.0;
  m.training_time_ms = static_cast<double>(makespan_ns(r.trace)) / 1e6;
  for (const auto& q : r.cpu_queues) m.cpu_high_water.push_back(q.high_water);
  for (const auto& q : r.device_queues) m.device_high_water.push_back(q.high_water);
  m.drained = r.ok && conserved(r);
  return m;
}

bool fifo_per_device(const EngineResult& r) { return r.produced == r.consumed; }

bool conserved(const EngineResult& r) {
  if (r.produced.size() != r.consumed.size()) return false;
  for (std::size_t d = 0; d < r.produced.size(); ++d) {
    const auto n = r.produced[d].size();
    if (r.consumed[d].size() != n) return false;
    for (const auto* qs : {&r.cpu_queues, &r.device_queues}) {
      const auto& q = (*qs)[d];
      if (q.pushed != n || q.popped != n || q.final_size != 0 || q.high_water > q.capacity) return false;
    }
  }
  return true;
}

EpochResult run_epoch(const GraphCSR& g, const CacheState* cache, std::vector<ModelState<double>>& replicas,
                      const PipelineConfig& config, RacomHandle& racom, const TrainSettings& settings,
                      const EpochPlan& plan, const ApplyObserver& observer) {
  if (replicas.size() != config.num_devices) throw ConfigError("one model replica per device required");
  if (plan.device_batches.size() != config.num_devices) throw ConfigError("epoch plan built for another device count");
  if (cache) cache->reset_counters();
  TrainingWorkload workload(g, cache, replicas, config, settings, plan, racom.next_window, observer);
  const auto ec = engine_config(config, plan.device_batches, plan.epoch, racom.next_window, racom.clock_ns);
  EpochResult out;
  out.engine = config.event_driven() ? run_simulated(ec, &workload) : run_threaded(ec, &workload);
  out.metrics = summarize(out.engine, plan.epoch, config.num_devices);
  out.metrics.train_loss = workload.loss();
  out.metrics.train_accuracy = workload.accuracy();
  out.metrics.cache_hits = workload.hits();
  out.metrics.cache_misses = workload.misses();
  racom.next_window += static_cast<std::int64_t>(plan.windows());
  racom.clock_ns = std::max(racom.clock_ns, out.engine.end_ns);
  racom.sync_events += out.engine.sync_events;
  return out;
}

EngineResult simulate_timings(const PipelineConfig& config, const StageDurations& durations, std::size_t num_batches) {
  PipelineConfig c = config;
  c.durations = durations;
  return run_simulated(engine_config(c, round_robin_batches(num_batches, c.num_devices), 0, 0, 0));
}

}  // namespace mqgnn
