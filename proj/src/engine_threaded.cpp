#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <semaphore>
#include <thread>

#include "engine_detail.hpp"
#include "mqgnn/engine.hpp"
#include "mqgnn/queue.hpp"

namespace mqgnn {
namespace {

using Clock = std::chrono::steady_clock;

struct Ticket {
  std::size_t local = 0;
  std::int64_t batch = 0;
  std::shared_ptr<MiniBatch> data;
};

/// Reusable barrier whose completion step runs on the last arriving thread.
/// abort() releases every waiter.
class Rendezvous {
 public:
  explicit Rendezvous(std::size_t parties) : parties_(parties) {}

  template <typename Fn>
  bool arrive_and_wait(Fn&& completion) {
    std::unique_lock lock(mu_);
    if (aborted_) return false;
    const std::uint64_t gen = generation_;
    if (++waiting_ == parties_) {
      waiting_ = 0;
      completion();
      ++generation_;
      cv_.notify_all();
      return true;
    }
    cv_.wait(lock, [&] { return aborted_ || generation_ != gen; });
    return generation_ != gen;
  }

  void abort() {
    std::lock_guard lock(mu_);
    aborted_ = true;
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t parties_;
  std::size_t waiting_ = 0;
  std::uint64_t generation_ = 0;
  bool aborted_ = false;
};

class ThreadedRun {
 public:
  ThreadedRun(const EngineConfig& c, Workload* w) : c_(c), w_(w), barrier_(c.num_devices) {
    detail::validate(c);
    for (const auto& ids : c.batch_ids) {
      max_n_ = std::max(max_n_, ids.size());
      min_n_ = std::min(min_n_, ids.size());
    }
    for (std::size_t d = 0; d < c.num_devices; ++d) {
      devices_.push_back(std::make_unique<Device>(c.queue_capacity));
      auto& dv = *devices_.back();
      dv.durations = detail::draw_batch_durations(c, static_cast<int>(d));
      dv.share_rng = detail::stream(c, static_cast<int>(d), detail::kShareStream);
      dv.apply_rng = detail::stream(c, static_cast<int>(d), detail::kApplyStream);
      dv.delay_rng = detail::stream(c, static_cast<int>(d), detail::kDelayStream);
      dv.arrived.assign(max_n_, 0);
      dv.applied.assign(max_n_, false);
    }
    for (auto& dv : devices_) inboxes_.push_back(&dv->inbox);
    sync_rng_ = detail::stream(c, -1, detail::kSyncStream);
  }

  EngineResult run() {
    start_ = Clock::now();
    std::vector<std::thread> threads;
    for (std::size_t d = 0; d < devices_.size(); ++d) {
      const std::size_t samplers = c_.pipelined ? c_.sampler_workers : 1;
      devices_[d]->samplers_left = samplers;
      for (std::size_t s = 0; s < samplers; ++s) threads.emplace_back([this, d] { guarded([&] { sampler(d); }); });
      threads.emplace_back([this, d] { guarded([&] { transfer(d); }); });
      threads.emplace_back([this, d] { guarded([&] { compute(d); }); });
    }
    for (auto& t : threads) t.join();

    EngineResult r;
    r.ok = !failed_.load();
    r.error = error_;
    r.trace = trace_.take();
    std::stable_sort(r.trace.begin(), r.trace.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.t_start_ns < b.t_start_ns; });
    for (auto& dv : devices_) {
      r.cpu_queues.push_back(stats(dv->cpu));
      r.device_queues.push_back(stats(dv->dev));
      r.produced.push_back(dv->produced);
      r.consumed.push_back(dv->consumed);
      for (const auto& s : dv->staleness) r.staleness.push_back(s);
      r.applied_windows += dv->applied_count;
    }
    r.sync_events = sync_events_;
    r.end_ns = now();
    r.workers_joined = true;
    return r;
  }

 private:
  struct Device {
    explicit Device(std::size_t cap) : cpu(cap), dev(cap) {}
    BoundedQueue<Ticket> cpu, dev;
    GradientQueue<double> inbox;
    std::counting_semaphore<> gate{1};
    std::atomic<std::size_t> next_sample{0};
    std::mutex produce_mu;
    std::size_t samplers_left = 0;
    std::mutex samplers_mu;
    detail::BatchDurations durations;
    std::mt19937_64 share_rng, apply_rng, delay_rng, sample_rng;
    std::vector<std::int64_t> produced, consumed;
    std::vector<std::size_t> arrived;
    std::vector<bool> applied;
    std::size_t next_unapplied = 0;
    std::size_t applied_count = 0;
    std::size_t computed = 0;
    std::vector<StalenessRecord> staleness;
  };

  static QueueStats stats(const BoundedQueue<Ticket>& q) {
    return QueueStats{q.capacity(), q.high_water_mark(), q.pushed(), q.popped(), q.size()};
  }

  std::int64_t now() const {
    return c_.t0_ns + std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start_).count();
  }

  std::int64_t window(std::size_t local) const { return c_.window_base + static_cast<std::int64_t>(local); }

  void record(Stage s, std::size_t d, std::int64_t batch, std::int64_t t0) {
    trace_.record(TraceEvent{s, static_cast<int>(d), batch, c_.epoch, t0, now()});
  }

  void pause_ms(double ms) const {
    const double scaled = ms * c_.sleep_scale;
    if (scaled > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(scaled));
  }

  template <typename Fn>
  void guarded(Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }

  void fail(const std::string& what) {
    {
      std::lock_guard lock(error_mu_);
      if (!failed_.exchange(true)) error_ = what;
    }
    for (auto& dv : devices_) {
      dv->cpu.close();
      dv->dev.close();
      dv->gate.release();
    }
    barrier_.abort();
  }

  // Stage workers -------------------------------------------------------------

  void sampler(std::size_t d) {
    auto& dv = *devices_[d];
    const auto& ids = c_.batch_ids[d];
    while (!failed_) {
      if (!c_.pipelined) dv.gate.acquire();
      if (failed_) break;
      const std::size_t i = dv.next_sample.fetch_add(1);
      if (i >= ids.size()) {
        if (!c_.pipelined) dv.gate.release();
        break;
      }
      const std::int64_t t0 = now();
      Ticket t{i, ids[i], nullptr};
      if (w_) {
        t.data = w_->sample(static_cast<int>(d), i, ids[i]);
      } else {
        pause_ms(dv.durations.sample[i]);
      }
      record(Stage::kSample, d, ids[i], t0);
      const std::int64_t t1 = now();
      std::lock_guard lock(dv.produce_mu);
      if (!dv.cpu.push(std::move(t))) break;
      dv.produced.push_back(ids[i]);
      record(Stage::kEnqueueCpu, d, ids[i], t1);
    }
    std::lock_guard lock(dv.samplers_mu);
    if (--dv.samplers_left == 0) dv.cpu.close();
  }

  void transfer(std::size_t d) {
    auto& dv = *devices_[d];
    while (auto t = dv.cpu.pop()) {
      const std::int64_t t0 = now();
      double ms = dv.durations.transfer[t->local];
      if (w_ && t->data) {
        const double modeled = w_->transfer_ms(static_cast<int>(d), *t->data);
        if (std::isfinite(modeled)) ms = modeled;
      }
      pause_ms(ms);
      record(Stage::kTransfer, d, t->batch, t0);
      const std::int64_t t1 = now();
      const std::int64_t batch = t->batch;
      if (!dv.dev.push(std::move(*t))) break;
      record(Stage::kEnqueueDev, d, batch, t1);
    }
    dv.dev.close();
  }

  void compute(std::size_t d) {
    auto& dv = *devices_[d];
    const std::size_t n = c_.batch_ids[d].size();
    for (std::size_t i = 0; i < n; ++i) {
      std::optional<Ticket> t;
      while (!t) {
        if (failed_) return;
        drain_inbox(d);
        t = dv.dev.pop_for(std::chrono::milliseconds(1));
        if (!t && dv.dev.closed() && dv.dev.size() == 0) {
          if (failed_) return;
          throw std::runtime_error("device queue closed before all batches arrived");
        }
      }
      dv.consumed.push_back(t->batch);
      if (c_.fault_batch && *c_.fault_batch == t->batch)
        throw std::runtime_error("injected compute fault on batch " + std::to_string(t->batch));

      const double total = dv.durations.compute[t->local];
      const std::int64_t t0 = now();
      if (w_ && t->data) {
        w_->forward(static_cast<int>(d), *t->data);
      } else {
        pause_ms(total * c_.durations.fwd_fraction);
      }
      record(Stage::kComputeFwd, d, t->batch, t0);
      const std::int64_t t1 = now();
      GradientPacket<double> packet;
      if (w_ && t->data) {
        packet = w_->backward(static_cast<int>(d), *t->data, window(i));
      } else {
        pause_ms(total * (1.0 - c_.durations.fwd_fraction));
      }
      record(Stage::kComputeBwd, d, t->batch, t1);
      ++dv.computed;
      if (!c_.pipelined) dv.gate.release();

      const std::int64_t t2 = now();
      pause_ms(c_.durations.share.draw(dv.share_rng));
      packet.source_device = static_cast<int>(d);
      packet.iteration = window(i);  // compute order, not sample order
      share_gradient<double>(packet, inboxes_, c_.delays, dv.delay_rng, now());
      record(Stage::kGradShare, d, t->batch, t2);

      drain_inbox(d);
      if (is_sync_point(c_, i, min_n_)) {
        if (!wait_windows(d, i + 1) || !rendezvous(d, window(i))) return;
      }
    }
    if (!wait_windows(d, max_n_)) return;
    rendezvous(d, window(max_n_ == 0 ? 0 : max_n_ - 1));
  }

  // RaCoM on the compute worker -----------------------------------------------

  void drain_inbox(std::size_t d) {
    auto& dv = *devices_[d];
    for (auto& p : dv.inbox.drain_ready(now())) {
      const auto local = static_cast<std::size_t>(p.iteration - c_.window_base);
      if (local >= max_n_) throw std::logic_error("gradient for a window outside the epoch");
      if (w_) w_->accumulate(static_cast<int>(d), p);
      ++dv.arrived[local];
    }
    for (std::size_t local = dv.next_unapplied; local < max_n_; ++local) {
      if (dv.applied[local] || dv.arrived[local] != detail::expected_contributions(c_, local)) continue;
      const std::int64_t t0 = now();
      if (w_) w_->apply(static_cast<int>(d), window(local));
      pause_ms(c_.durations.apply.draw(dv.apply_rng));
      record(Stage::kGradApply, d, window(local), t0);
      dv.applied[local] = true;
      ++dv.applied_count;
      dv.staleness.push_back(StalenessRecord{static_cast<int>(d), window(local),
                                             c_.window_base + static_cast<std::int64_t>(dv.computed) -
                                                 (window(local) + 1)});
    }
    while (dv.next_unapplied < max_n_ && dv.applied[dv.next_unapplied]) ++dv.next_unapplied;
  }

  bool wait_windows(std::size_t d, std::size_t need) {
    auto& dv = *devices_[d];
    drain_inbox(d);
    while (dv.next_unapplied < need) {
      if (failed_) return false;
      dv.inbox.wait_for_delivery([this] { return now(); }, std::chrono::milliseconds(5));
      drain_inbox(d);
    }
    return true;
  }

  bool rendezvous(std::size_t d, std::int64_t sync_window) {
    const std::int64_t t0 = now();
    const bool ok = barrier_.arrive_and_wait([&] {
      try {
        if (w_) w_->sync();
        pause_ms(c_.durations.sync.draw(sync_rng_));
        ++sync_events_;
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mu_);
        if (!failed_.exchange(true)) error_ = e.what();
      }
    });
    if (failed_) {
      fail(error_);
      return false;
    }
    if (ok) record(Stage::kSync, d, sync_window, t0);
    return ok;
  }

  const EngineConfig& c_;
  Workload* w_;
  std::size_t max_n_ = 0;
  std::size_t min_n_ = std::numeric_limits<std::size_t>::max();
  std::vector<std::unique_ptr<Device>> devices_;
  std::vector<GradientQueue<double>*> inboxes_;
  Rendezvous barrier_;
  std::mt19937_64 sync_rng_;
  std::size_t sync_events_ = 0;
  TraceSink trace_;
  Clock::time_point start_;
  std::atomic<bool> failed_{false};
  std::mutex error_mu_;
  std::string error_;
};

}  // namespace

EngineResult run_threaded(const EngineConfig& config, Workload* workload) {
  return ThreadedRun(config, workload).run();
}

}  // namespace mqgnn
