#include <deque>
#include <functional>
#include <queue>
#include <set>

#include "engine_detail.hpp"
#include "mqgnn/engine.hpp"

namespace mqgnn {
namespace {

struct Ticket {
  std::size_t local = 0;
  std::int64_t batch = 0;
  std::shared_ptr<MiniBatch> data;
};

struct Blocked {
  Ticket ticket;
  std::int64_t since = 0;
};

enum class ComputeState { kIdle, kBusy, kWaitWindows, kAtBarrier, kDone };

struct SimQueue {
  std::deque<Ticket> items;
  QueueStats stats;

  bool full() const { return items.size() >= stats.capacity; }
  void push(Ticket t) {
    items.push_back(std::move(t));
    ++stats.pushed;
    stats.high_water = std::max(stats.high_water, items.size());
  }
  Ticket pop() {
    Ticket t = std::move(items.front());
    items.pop_front();
    ++stats.popped;
    return t;
  }
};

struct Device {
  std::size_t n = 0;
  detail::BatchDurations durations;
  std::mt19937_64 share_rng, apply_rng, delay_rng;

  std::size_t next_sample = 0;
  std::size_t idle_samplers = 0;
  bool gate_open = true;  // replay mode: one batch in flight
  std::deque<Blocked> blocked_samplers;
  SimQueue cpu, dev;

  bool transfer_busy = false;
  std::optional<Blocked> transfer_blocked;

  ComputeState state = ComputeState::kIdle;
  std::size_t computed = 0;
  std::optional<std::size_t> pending_sync;  // local index whose windows must be applied
  bool pending_final = false;

  std::vector<std::size_t> arrived;
  std::vector<bool> applied;
  std::set<std::size_t> complete;
  std::size_t next_unapplied = 0;
  std::int64_t barrier_since = 0;
  bool final_barrier = false;
};

class Simulator {
 public:
  Simulator(const EngineConfig& c, Workload* w) : c_(c), w_(w) {
    detail::validate(c);
    max_n_ = 0;
    min_n_ = std::numeric_limits<std::size_t>::max();
    for (const auto& ids : c.batch_ids) {
      max_n_ = std::max(max_n_, ids.size());
      min_n_ = std::min(min_n_, ids.size());
    }
    devices_.resize(c.num_devices);
    result_.produced.resize(c.num_devices);
    result_.consumed.resize(c.num_devices);
    sync_rng_ = detail::stream(c, -1, detail::kSyncStream);
    for (std::size_t d = 0; d < c.num_devices; ++d) {
      auto& dv = devices_[d];
      const int di = static_cast<int>(d);
      dv.n = c.batch_ids[d].size();
      dv.durations = detail::draw_batch_durations(c, di);
      dv.share_rng = detail::stream(c, di, detail::kShareStream);
      dv.apply_rng = detail::stream(c, di, detail::kApplyStream);
      dv.delay_rng = detail::stream(c, di, detail::kDelayStream);
      dv.idle_samplers = c.pipelined ? c.sampler_workers : 1;
      dv.cpu.stats.capacity = dv.dev.stats.capacity = c.queue_capacity;
      dv.arrived.assign(max_n_, 0);
      dv.applied.assign(max_n_, false);
      dv.pending_final = dv.n == 0;
    }
  }

  EngineResult run() {
    for (std::size_t d = 0; d < devices_.size(); ++d)
      at(0, [this, d] {
        start_samplers(d);
        boundary(d);
      });
    try {
      while (!events_.empty()) {
        auto ev = events_.top();
        events_.pop();
        now_ = ev.t;
        ev.fn();
      }
      for (std::size_t d = 0; d < devices_.size(); ++d)
        if (devices_[d].state != ComputeState::kDone)
          throw std::logic_error("simulation stalled on device " + std::to_string(d));
    } catch (const std::exception& e) {
      result_.ok = false;
      result_.error = e.what();
    }
    for (auto& dv : devices_) {
      dv.cpu.stats.final_size = dv.cpu.items.size();
      dv.dev.stats.final_size = dv.dev.items.size();
      result_.cpu_queues.push_back(dv.cpu.stats);
      result_.device_queues.push_back(dv.dev.stats);
    }
    result_.end_ns = c_.t0_ns + now_;
    return std::move(result_);
  }

 private:
  struct Event {
    std::int64_t t;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };

  void at(std::int64_t t, std::function<void()> fn) { events_.push(Event{t, seq_++, std::move(fn)}); }
  void after_ms(double ms, std::function<void()> fn) { at(now_ + detail::ms_to_ns(ms), std::move(fn)); }

  void trace(Stage s, std::size_t d, std::int64_t batch, std::int64_t t0) {
    result_.trace.push_back(
        TraceEvent{s, static_cast<int>(d), batch, c_.epoch, c_.t0_ns + t0, c_.t0_ns + now_});
  }

  std::int64_t window(std::size_t local) const { return c_.window_base + static_cast<std::int64_t>(local); }

  // Sampling ------------------------------------------------------------------

  void start_samplers(std::size_t d) {
    auto& dv = devices_[d];
    while (dv.idle_samplers > 0 && dv.next_sample < dv.n && dv.gate_open) {
      const std::size_t i = dv.next_sample++;
      --dv.idle_samplers;
      if (!c_.pipelined) dv.gate_open = false;
      const std::int64_t t0 = now_;
      after_ms(dv.durations.sample[i], [this, d, i, t0] { sample_done(d, i, t0); });
    }
  }

  void sample_done(std::size_t d, std::size_t i, std::int64_t t0) {
    const std::int64_t batch = c_.batch_ids[d][i];
    trace(Stage::kSample, d, batch, t0);
    Ticket t{i, batch, w_ ? w_->sample(static_cast<int>(d), i, batch) : nullptr};
    auto& dv = devices_[d];
    if (dv.cpu.full()) {
      dv.blocked_samplers.push_back(Blocked{std::move(t), now_});
      return;
    }
    push_cpu(d, std::move(t), now_);
    ++dv.idle_samplers;
    start_samplers(d);
    start_transfer(d);
  }

  void push_cpu(std::size_t d, Ticket t, std::int64_t since) {
    trace(Stage::kEnqueueCpu, d, t.batch, since);
    result_.produced[d].push_back(t.batch);
    devices_[d].cpu.push(std::move(t));
  }

  // Transfer ------------------------------------------------------------------

  void start_transfer(std::size_t d) {
    auto& dv = devices_[d];
    if (dv.transfer_busy || dv.transfer_blocked || dv.cpu.items.empty()) return;
    Ticket t = dv.cpu.pop();
    if (!dv.blocked_samplers.empty()) {
      Blocked b = std::move(dv.blocked_samplers.front());
      dv.blocked_samplers.pop_front();
      push_cpu(d, std::move(b.ticket), b.since);
      ++dv.idle_samplers;
    }
    double ms = dv.durations.transfer[t.local];
    if (w_ && t.data) {
      const double modeled = w_->transfer_ms(static_cast<int>(d), *t.data);
      if (std::isfinite(modeled)) ms = modeled;
    }
    dv.transfer_busy = true;
    const std::int64_t t0 = now_;
    auto shared = std::make_shared<Ticket>(std::move(t));
    after_ms(ms, [this, d, shared, t0] { transfer_done(d, std::move(*shared), t0); });
    start_samplers(d);
  }

  void transfer_done(std::size_t d, Ticket t, std::int64_t t0) {
    auto& dv = devices_[d];
    trace(Stage::kTransfer, d, t.batch, t0);
    if (dv.dev.full()) {
      dv.transfer_blocked = Blocked{std::move(t), now_};
      return;
    }
    push_dev(d, std::move(t), now_);
    dv.transfer_busy = false;
    start_transfer(d);
    if (dv.state == ComputeState::kIdle) boundary(d);
  }

  void push_dev(std::size_t d, Ticket t, std::int64_t since) {
    trace(Stage::kEnqueueDev, d, t.batch, since);
    devices_[d].dev.push(std::move(t));
  }

  // Compute -------------------------------------------------------------------

  void start_compute(std::size_t d) {
    auto& dv = devices_[d];
    Ticket t = dv.dev.pop();
    result_.consumed[d].push_back(t.batch);
    if (dv.transfer_blocked) {
      Blocked b = std::move(*dv.transfer_blocked);
      dv.transfer_blocked.reset();
      push_dev(d, std::move(b.ticket), b.since);
      dv.transfer_busy = false;
      start_transfer(d);
    }
    if (c_.fault_batch && *c_.fault_batch == t.batch)
      throw std::runtime_error("injected compute fault on batch " + std::to_string(t.batch));
    dv.state = ComputeState::kBusy;
    const double total = dv.durations.compute[t.local];
    const double fwd = total * c_.durations.fwd_fraction;
    if (w_ && t.data) w_->forward(static_cast<int>(d), *t.data);
    const std::int64_t t0 = now_;
    // Windows follow compute order, which differs from sample order when
    // several samplers race.
    const std::size_t step = dv.computed;
    auto shared = std::make_shared<Ticket>(std::move(t));
    after_ms(fwd, [this, d, shared, t0, total, fwd, step] {
      trace(Stage::kComputeFwd, d, shared->batch, t0);
      GradientPacket<double> packet;
      if (w_ && shared->data) {
        packet = w_->backward(static_cast<int>(d), *shared->data, window(step));
      }
      packet.source_device = static_cast<int>(d);
      packet.iteration = window(step);
      const std::int64_t t1 = now_;
      after_ms(total - fwd, [this, d, shared, t1, step, p = std::move(packet)]() mutable {
        trace(Stage::kComputeBwd, d, shared->batch, t1);
        compute_done(d, step, shared->batch, std::move(p));
      });
    });
  }

  void compute_done(std::size_t d, std::size_t local, std::int64_t batch, GradientPacket<double> packet) {
    auto& dv = devices_[d];
    ++dv.computed;
    if (!c_.pipelined) {
      dv.gate_open = true;
      ++dv.idle_samplers;
      start_samplers(d);
    }
    if (is_sync_point(c_, local, min_n_)) dv.pending_sync = local;
    if (dv.computed == dv.n) dv.pending_final = true;
    const std::int64_t t0 = now_;
    const double share_ms = c_.durations.share.draw(dv.share_rng);
    auto shared = std::make_shared<GradientPacket<double>>(std::move(packet));
    after_ms(share_ms, [this, d, batch, t0, shared] {
      trace(Stage::kGradShare, d, batch, t0);
      for (std::size_t dst = 0; dst < devices_.size(); ++dst) {
        const double delay = c_.delays.sample_ms(static_cast<int>(d), static_cast<int>(dst),
                                                 devices_[d].delay_rng);
        if (delay <= 0.0) {
          deliver(dst, *shared);
        } else {
          after_ms(delay, [this, dst, shared] { deliver(dst, *shared); });
        }
      }
      boundary(d);
    });
  }

  void deliver(std::size_t d, const GradientPacket<double>& packet) {
    auto& dv = devices_[d];
    const auto local = static_cast<std::size_t>(packet.iteration - c_.window_base);
    if (local >= max_n_) throw std::logic_error("gradient for a window outside the epoch");
    if (w_) {
      GradientPacket<double> copy = packet;
      w_->accumulate(static_cast<int>(d), copy);
    }
    if (++dv.arrived[local] == detail::expected_contributions(c_, local)) dv.complete.insert(local);
    if (dv.state == ComputeState::kIdle || dv.state == ComputeState::kWaitWindows) boundary(d);
  }

  /// Decision point of a compute worker between work items: apply complete
  /// windows first, then honor a pending barrier, then take the next batch.
  void boundary(std::size_t d) {
    auto& dv = devices_[d];
    dv.state = ComputeState::kBusy;
    if (!dv.complete.empty()) {
      const std::size_t local = *dv.complete.begin();
      dv.complete.erase(dv.complete.begin());
      const std::int64_t t0 = now_;
      after_ms(c_.durations.apply.draw(dv.apply_rng), [this, d, local, t0] {
        auto& v = devices_[d];
        if (w_) w_->apply(static_cast<int>(d), window(local));
        trace(Stage::kGradApply, d, window(local), t0);
        v.applied[local] = true;
        while (v.next_unapplied < max_n_ && v.applied[v.next_unapplied]) ++v.next_unapplied;
        ++result_.applied_windows;
        const auto done = c_.window_base + static_cast<std::int64_t>(v.computed);
        result_.staleness.push_back(StalenessRecord{static_cast<int>(d), window(local), done - (window(local) + 1)});
        boundary(d);
      });
      return;
    }
    if (dv.pending_sync || dv.pending_final) {
      const std::size_t need = dv.pending_sync ? *dv.pending_sync + 1 : max_n_;
      if (dv.next_unapplied >= need) {
        dv.state = ComputeState::kAtBarrier;
        dv.barrier_since = now_;
        dv.final_barrier = !dv.pending_sync;
        arrive(d);
      } else {
        dv.state = ComputeState::kWaitWindows;
      }
      return;
    }
    if (dv.computed < dv.n && !dv.dev.items.empty()) {
      start_compute(d);
      return;
    }
    dv.state = ComputeState::kIdle;
  }

  void arrive(std::size_t) {
    if (++at_barrier_ < devices_.size()) return;
    at_barrier_ = 0;
    if (w_) w_->sync();
    ++result_.sync_events;
    for (const auto& dv : devices_)
      if (dv.final_barrier != devices_[0].final_barrier) throw std::logic_error("devices disagree on barrier kind");
    const std::int64_t sync_window = devices_[0].final_barrier ? window(max_n_ == 0 ? 0 : max_n_ - 1)
                                                               : window(*devices_[0].pending_sync);
    after_ms(c_.durations.sync.draw(sync_rng_), [this, sync_window] {
      for (std::size_t d = 0; d < devices_.size(); ++d) {
        auto& dv = devices_[d];
        trace(Stage::kSync, d, sync_window, dv.barrier_since);
        dv.pending_sync.reset();
        if (dv.final_barrier) {
          dv.state = ComputeState::kDone;
        } else {
          boundary(d);
        }
      }
    });
  }

  const EngineConfig& c_;
  Workload* w_;
  std::size_t max_n_ = 0;
  std::size_t min_n_ = 0;
  std::vector<Device> devices_;
  std::mt19937_64 sync_rng_;
  std::size_t at_barrier_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t seq_ = 0;
  std::int64_t now_ = 0;
  EngineResult result_;
};

}  // namespace

EngineResult run_simulated(const EngineConfig& config, Workload* workload) {
  return Simulator(config, workload).run();
}

}  // namespace mqgnn
