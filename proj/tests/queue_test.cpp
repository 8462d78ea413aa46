#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>
#include <vector>

#include "mqgnn/queue.hpp"
#include "mqgnn/racom.hpp"

using namespace mqgnn;
using namespace std::chrono_literals;

TEST(BoundedQueue, FifoOrder) {
  BoundedQueue<int> q(4);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(q.push(i));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(q.pop(), i);
  EXPECT_EQ(q.pushed(), 4u);
  EXPECT_EQ(q.popped(), 4u);
}

TEST(BoundedQueue, ZeroCapacityMeansOne) { EXPECT_EQ(BoundedQueue<int>(0).capacity(), 1u); }

TEST(BoundedQueue, FullQueueTimesOut) {
  BoundedQueue<int> q(2);
  q.push(1);
  q.push(2);
  int v = 3;
  EXPECT_FALSE(q.try_push_for(v, 5ms));
  EXPECT_EQ(q.size(), 2u);
  EXPECT_EQ(q.high_water_mark(), 2u);
}

TEST(BoundedQueue, EmptyPopTimesOut) {
  BoundedQueue<int> q(1);
  EXPECT_EQ(q.pop_for(5ms), std::nullopt);
}

TEST(BoundedQueue, BlockedProducerWakesOnPop) {
  BoundedQueue<int> q(1);
  q.push(0);
  std::atomic<bool> done{false};
  std::thread producer([&] {
    q.push(1);
    done = true;
  });
  std::this_thread::sleep_for(10ms);
  EXPECT_FALSE(done.load());
  EXPECT_EQ(q.pop(), 0);
  producer.join();
  EXPECT_TRUE(done.load());
  EXPECT_EQ(q.high_water_mark(), 1u);
}

TEST(BoundedQueue, CloseReleasesWaitersAndDrains) {
  BoundedQueue<int> q(1);
  q.push(7);
  std::thread blocked_producer([&] { EXPECT_FALSE(q.push(8)); });
  std::this_thread::sleep_for(5ms);
  q.close();
  blocked_producer.join();
  EXPECT_EQ(q.pop(), 7);
  EXPECT_EQ(q.pop(), std::nullopt);
  EXPECT_FALSE(q.push(9));

  BoundedQueue<int> empty(1);
  std::thread blocked_consumer([&] { EXPECT_EQ(empty.pop(), std::nullopt); });
  std::this_thread::sleep_for(5ms);
  empty.close();
  blocked_consumer.join();
}

TEST(BoundedQueue, MultiProducerConservation) {
  constexpr int kProducers = 4, kEach = 500;
  BoundedQueue<int> q(3);
  std::vector<std::thread> producers;
  for (int p = 0; p < kProducers; ++p)
    producers.emplace_back([&, p] {
      for (int i = 0; i < kEach; ++i) q.push(p * kEach + i);
    });
  std::vector<int> got;
  std::vector<int> last(kProducers, -1);
  bool per_producer_fifo = true;
  for (int k = 0; k < kProducers * kEach; ++k) {
    const int v = *q.pop();
    got.push_back(v);
    per_producer_fifo &= v > last[v / kEach];
    last[v / kEach] = v;
  }
  for (auto& t : producers) t.join();
  std::sort(got.begin(), got.end());
  for (int i = 0; i < kProducers * kEach; ++i) ASSERT_EQ(got[i], i);
  EXPECT_TRUE(per_producer_fifo);
  EXPECT_LE(q.high_water_mark(), 3u);
}

namespace {

GradientPacket<double> packet(int src, std::int64_t it) {
  GradientPacket<double> p;
  p.source_device = src;
  p.iteration = it;
  p.grads.emplace_back(1, 1);
  p.grads[0](0, 0) = static_cast<double>(src);
  return p;
}

}  // namespace

TEST(GradientQueue, DeliversByTimeThenArrival) {
  GradientQueue<double> q;
  q.push(30, packet(0, 0));
  q.push(10, packet(1, 0));
  q.push(10, packet(2, 0));
  EXPECT_EQ(q.next_delivery_ns(), 10);
  EXPECT_TRUE(q.drain_ready(9).empty());
  const auto first = q.drain_ready(10);
  ASSERT_EQ(first.size(), 2u);
  EXPECT_EQ(first[0].source_device, 1);
  EXPECT_EQ(first[1].source_device, 2);
  EXPECT_EQ(q.drain_ready(100).size(), 1u);
  EXPECT_EQ(q.next_delivery_ns(), std::nullopt);
  EXPECT_EQ(q.pushed(), 3u);
}

TEST(GradientQueue, WaitReturnsOnceDeliverable) {
  GradientQueue<double> q;
  const auto start = std::chrono::steady_clock::now();
  auto now = [&] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
  };
  q.push(now() + 2'000'000, packet(0, 0));
  q.wait_for_delivery(now, 1000ms);
  EXPECT_GE(now(), 2'000'000);
  EXPECT_LT(now(), 500'000'000);
  EXPECT_EQ(q.drain_ready(now()).size(), 1u);
}

TEST(ShareGradient, SingleDeviceSelfDelivery) {
  GradientQueue<double> q;
  std::vector<GradientQueue<double>*> qs{&q};
  std::mt19937_64 rng(1);
  const auto delays = share_gradient(packet(0, 3), std::span<GradientQueue<double>* const>(qs),
                                     parse_delay_model("fixed_ms(5)"), rng, 100);
  EXPECT_EQ(delays, std::vector<double>{0.0});
  const auto got = q.drain_ready(100);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].iteration, 3);
}

TEST(ShareGradient, EveryInboxIncludingSender) {
  std::vector<GradientQueue<double>> inboxes(3);
  std::vector<GradientQueue<double>*> qs{&inboxes[0], &inboxes[1], &inboxes[2]};
  std::mt19937_64 rng(1);
  const auto delays = share_gradient(packet(1, 0), std::span<GradientQueue<double>* const>(qs),
                                     parse_delay_model("uniform_ms(1,2)"), rng, 0);
  EXPECT_EQ(delays[1], 0.0);
  for (int d : {0, 2}) {
    EXPECT_GE(delays[d], 1.0);
    EXPECT_LE(delays[d], 2.0);
    EXPECT_TRUE(inboxes[d].drain_ready(999'999).empty());
    EXPECT_EQ(inboxes[d].drain_ready(2'000'000).size(), 1u);
  }
  EXPECT_EQ(inboxes[1].drain_ready(0).size(), 1u);
}
