#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mqgnn/error.hpp"
#include "mqgnn/nn.hpp"

namespace mqgnn {

/// Running mean of incoming gradients for one iteration window:
/// current ← current + (incoming − current) / count, count taken after the
/// increment.
template <typename T>
class Accumulator {
 public:
  explicit Accumulator(std::size_t expected) : expected_(expected) {}

  std::size_t average_count() const { return count_; }
  std::size_t expected() const { return expected_; }
  bool ready() const { return count_ == expected_; }
  const std::vector<Matrix<T>>& current() const { return current_; }
  std::int64_t oldest_source_iteration() const { return oldest_; }

  void accumulate(const GradientPacket<T>& incoming) {
    if (count_ >= expected_) throw std::logic_error("accumulator already holds every device's gradient");
    if (count_ == 0) {
      current_.clear();
      for (const auto& g : incoming.grads) current_.emplace_back(g.rows(), g.cols());
      oldest_ = incoming.iteration;
    } else {
      if (incoming.grads.size() != current_.size()) throw ShapeError("gradient layer count mismatch");
      oldest_ = std::min(oldest_, incoming.iteration);
    }
    ++count_;
    const T inv = T{1} / static_cast<T>(count_);
    for (std::size_t l = 0; l < current_.size(); ++l) {
      if (!incoming.grads[l].same_shape(current_[l])) throw ShapeError("gradient shape mismatch");
      auto* c = current_[l].data();
      const auto* g = incoming.grads[l].data();
      for (std::size_t i = 0; i < current_[l].size(); ++i) c[i] += (g[i] - c[i]) * inv;
    }
  }

  /// Δ^acc once every expected gradient has arrived; resets the window.
  /// nullopt means not ready yet.
  std::optional<std::vector<Matrix<T>>> finalize() {
    if (!ready()) return std::nullopt;
    auto out = std::move(current_);
    current_.clear();
    count_ = 0;
    return out;
  }

 private:
  std::size_t expected_;
  std::size_t count_ = 0;
  std::int64_t oldest_ = 0;
  std::vector<Matrix<T>> current_;
};

/// finalize() guarded against early calls with a descriptive error, for
/// callers that expect readiness.
template <typename T>
std::vector<Matrix<T>> finalize_or_throw(Accumulator<T>& acc) {
  auto r = acc.finalize();
  if (!r) throw std::logic_error("finalize before all gradients arrived");
  return std::move(*r);
}

/// Direct mean Σ g_i / n, the reference form of the running accumulation.
template <typename T>
std::vector<Matrix<T>> direct_mean(std::span<const GradientPacket<T>> packets) {
  if (packets.empty()) throw std::invalid_argument("direct_mean of zero packets");
  std::vector<Matrix<T>> sum;
  for (const auto& g : packets.front().grads) sum.emplace_back(g.rows(), g.cols());
  for (const auto& p : packets)
    for (std::size_t l = 0; l < sum.size(); ++l)
      for (std::size_t i = 0; i < sum[l].size(); ++i) sum[l].data()[i] += p.grads[l].data()[i];
  for (auto& m : sum)
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] /= static_cast<T>(packets.size());
  return sum;
}

template <typename T>
void apply_update(ModelState<T>& model, const std::vector<Matrix<T>>& grads, OptimizerKind optimizer) {
  optimizer_step(model, grads, optimizer);
}

/// Replaces every replica by the element-wise mean of weights and moments.
template <typename T>
void sync_models(std::span<ModelState<T>> replicas) {
  if (replicas.empty()) return;
  const auto& ref = replicas.front();
  for (const auto& r : replicas) {
    if (r.num_layers() != ref.num_layers()) throw ShapeError("replica layer counts differ");
    for (std::size_t l = 0; l < r.num_layers(); ++l)
      if (!r.layer_weights[l].same_shape(ref.layer_weights[l])) throw ShapeError("replica shapes differ");
  }
  if (replicas.size() == 1) return;
  const T n = static_cast<T>(replicas.size());
  auto average = [&](auto member) {
    for (std::size_t l = 0; l < ref.num_layers(); ++l) {
      // Offsets from the first replica, so a consensus is reproduced exactly.
      Matrix<T> mean = (replicas[0].*member)[l];
      Matrix<T> offset(mean.rows(), mean.cols());
      for (const auto& r : replicas.subspan(1))
        for (std::size_t i = 0; i < mean.size(); ++i) offset.data()[i] += (r.*member)[l].data()[i] - mean.data()[i];
      for (std::size_t i = 0; i < mean.size(); ++i) mean.data()[i] += offset.data()[i] / n;
      for (auto& r : replicas) (r.*member)[l] = mean;
    }
  };
  average(&ModelState<T>::layer_weights);
  average(&ModelState<T>::first_moments);
  average(&ModelState<T>::second_moments);
}

// Synchronization period ------------------------------------------------------

enum class SyncMode { kAuto, kFixed };

struct SyncPolicy {
  std::size_t period = 1;
  double scale_k = 1.0;
  SyncMode mode = SyncMode::kAuto;
};

/// ⌈k·√|V| / √(|𝒢|·|E|)⌉, at least 1. With no edges the denominator drops
/// to 1 and `zero_edge_warning` is set.
std::size_t compute_sync_period(std::size_t num_nodes, std::size_t num_edges, std::size_t num_devices,
                                double scale_k = 1.0, bool* zero_edge_warning = nullptr);

/// C(P) = α·P·|E| + β·|V| / (P·|𝒢|).
double staleness_cost(double period, double num_nodes, double num_edges, double num_devices, double alpha,
                      double beta);

SyncPolicy resolve_sync_policy(const std::string& setting, double scale_k, std::size_t num_nodes,
                               std::size_t num_edges, std::size_t num_devices);

// Delivery delays ---------------------------------------------------------------

struct DelayModel {
  enum class Kind { kNone, kFixed, kUniform };
  Kind kind = Kind::kNone;
  double a_ms = 0.0;
  double b_ms = 0.0;
  /// Extra delay added to packets sent by a given device (stragglers).
  std::vector<double> source_extra_ms;

  /// Delay from `src` to `dst`; self-delivery is immediate.
  double sample_ms(int src, int dst, std::mt19937_64& rng) const;
  double max_ms() const;
};

/// none | fixed_ms(x) | uniform_ms(a,b)
DelayModel parse_delay_model(const std::string& text);
std::string delay_model_name(const DelayModel& m);

/// Gradient inbox of one device: multi-producer, single consumer. Packets
/// become visible at their delivery time.
template <typename T>
class GradientQueue {
 public:
  void push(std::int64_t deliver_at_ns, GradientPacket<T> packet) {
    std::lock_guard lock(mu_);
    items_.emplace(std::make_pair(deliver_at_ns, seq_++), std::move(packet));
    ++pushed_;
    cv_.notify_all();
  }

  /// Packets with delivery time ≤ now, in delivery order.
  std::vector<GradientPacket<T>> drain_ready(std::int64_t now_ns) {
    std::lock_guard lock(mu_);
    std::vector<GradientPacket<T>> out;
    while (!items_.empty() && items_.begin()->first.first <= now_ns) {
      out.push_back(std::move(items_.begin()->second));
      items_.erase(items_.begin());
    }
    return out;
  }

  std::optional<std::int64_t> next_delivery_ns() const {
    std::lock_guard lock(mu_);
    if (items_.empty()) return std::nullopt;
    return items_.begin()->first.first;
  }

  /// Blocks (wall clock) until some packet is deliverable per `now_fn` or
  /// the timeout passes.
  template <typename NowFn>
  void wait_for_delivery(NowFn now_fn, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      if (!items_.empty()) {
        const auto wait_ns = items_.begin()->first.first - now_fn();
        if (wait_ns <= 0) return;
        cv_.wait_for(lock, std::chrono::nanoseconds(std::min<std::int64_t>(wait_ns, 1'000'000)));
      } else {
        cv_.wait_until(lock, deadline);
      }
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }
  std::size_t pushed() const {
    std::lock_guard lock(mu_);
    return pushed_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::pair<std::int64_t, std::uint64_t>, GradientPacket<T>> items_;
  std::uint64_t seq_ = 0;
  std::size_t pushed_ = 0;
};

/// Sends `packet` to every device inbox, the sender's own included, with a
/// per-destination delay. Returns the delays used (ms), indexed by device.
template <typename T>
std::vector<double> share_gradient(const GradientPacket<T>& packet, std::span<GradientQueue<T>* const> queues,
                                   const DelayModel& delays, std::mt19937_64& rng, std::int64_t now_ns) {
  std::vector<double> used(queues.size(), 0.0);
  for (std::size_t dst = 0; dst < queues.size(); ++dst) {
    const double d = delays.sample_ms(packet.source_device, static_cast<int>(dst), rng);
    used[dst] = d;
    GradientPacket<T> copy = packet;
    copy.delivery_delay_ms = d;
    queues[dst]->push(now_ns + static_cast<std::int64_t>(std::llround(d * 1e6)), std::move(copy));
  }
  return used;
}

}  // namespace mqgnn
