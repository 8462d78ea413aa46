#include <gtest/gtest.h>

#include <filesystem>
#include <limits>
#include <random>

#include "mqgnn/autotune.hpp"
#include "mqgnn/error.hpp"

using namespace mqgnn;

namespace {

constexpr std::int64_t kMB = 1'000'000;
constexpr std::size_t kNoCap = std::numeric_limits<std::size_t>::max();

TimingProfile constant_profile(double sample, double transfer, double compute, std::size_t n = 10) {
  TimingProfile p;
  p.sampling_times.assign(n, sample);
  p.transfer_times.assign(n, transfer);
  p.compute_times.assign(n, compute);
  return p;
}

}  // namespace

TEST(MemoryEstimate, RedditBatch) { EXPECT_EQ(minibatch_memory_estimate(1024, 602), 2'465'792); }

TEST(ComputeCap, FloorDivision) {
  EXPECT_EQ(compute_cap(1000 * kMB, 300 * kMB), 3u);
  EXPECT_EQ(compute_cap(900 * kMB, 300 * kMB), 3u);
  EXPECT_EQ(compute_cap(200 * kMB, 300 * kMB), 0u);
  EXPECT_EQ(compute_cap(-5, 300 * kMB), 0u);
  EXPECT_THROW(compute_cap(10, 0), std::invalid_argument);
}

TEST(ComputeCap, AvailableMemorySubtractsMarginedPeak) {
  EXPECT_EQ(available_queue_memory(1000 * kMB, 200 * kMB, 0.1), 780 * kMB);
  EXPECT_EQ(available_queue_memory(1000 * kMB, 0, 0.075), 1000 * kMB);
  EXPECT_EQ(available_queue_memory(100, 10, 0.05), 89);
}

TEST(ProfileCap, ZeroCapIsConfigError) {
  auto p = constant_profile(1, 1, 1);
  p.total_memory_bytes = 1000 * kMB;
  p.peak_memory_bytes = 0;
  p.minibatch_memory_bytes = 300 * kMB;
  EXPECT_EQ(profile_cap(p), 3u);
  p.minibatch_memory_bytes = 2000 * kMB;
  EXPECT_THROW(profile_cap(p), ConfigError);
}

TEST(QueueSize, ReferenceExamples) {
  EXPECT_EQ(compute_queue_size(constant_profile(40, 11, 11.89), kNoCap), 5u);
  EXPECT_EQ(compute_queue_size(constant_profile(40, 11, 11.89), 5), 5u);
  EXPECT_EQ(compute_queue_size(constant_profile(40, 11, 11.89), 3), 3u);
}

TEST(QueueSize, LowerBoundTwo) {
  EXPECT_EQ(compute_queue_size(constant_profile(1, 1, 50), kNoCap), 2u);
  EXPECT_EQ(compute_queue_size(constant_profile(1, 1, 50), 1), 1u);
}

TEST(QueueSize, MaxIsOverPerBatchSums) {
  auto p = constant_profile(1, 1, 10, 3);
  p.sampling_times = {30, 1, 1};
  p.transfer_times = {1, 30, 1};
  // Largest per-batch sum is 31, not 60.
  EXPECT_EQ(compute_queue_size(p, kNoCap), 4u);
}

TEST(QueueSize, ExcludesWarmupAndCooldown) {
  auto p = constant_profile(10, 10, 10, 100);
  for (std::size_t i = 0; i < 20; ++i) p.sampling_times[i] = p.sampling_times[99 - i] = 500;
  for (std::size_t i = 0; i < 20; ++i) p.compute_times[i] = 0.01;
  EXPECT_EQ(compute_queue_size(p, kNoCap), 2u);
  p.sampling_times[20] = 500;  // entry 21 counts
  EXPECT_EQ(compute_queue_size(p, kNoCap), 51u);
}

TEST(QueueSize, EmptyProfileRejected) { EXPECT_THROW(compute_queue_size(TimingProfile{}, 4), std::invalid_argument); }

TEST(QueueSize, Monotonicity) {
  for (std::size_t cap : {2u, 4u, 8u, 100u}) {
    std::size_t last = 0;
    for (double prep = 1; prep < 200; prep += 3.7) {
      const auto q = compute_queue_size(constant_profile(prep, 0.5, 7), cap);
      EXPECT_GE(q, last);
      EXPECT_GE(q, 2u);
      EXPECT_LE(q, cap);
      last = q;
    }
    last = kNoCap;
    for (double compute = 1; compute < 200; compute += 3.7) {
      const auto q = compute_queue_size(constant_profile(40, 11, compute), cap);
      EXPECT_LE(q, last);
      last = q;
    }
  }
}

TEST(ProfileDurations, FixedDurationsEchoed) {
  PipelineConfig pc;
  pc.timing_mode = TimingMode::kSimulated;
  pc.durations.sample = Distribution::fixed(7);
  pc.durations.transfer = Distribution::fixed(2);
  pc.durations.compute = Distribution::fixed(4);
  const auto p = profile_durations(pc, 30);
  ASSERT_EQ(p.compute_times.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_NEAR(p.sampling_times[i], 7.0, 1e-9);
    EXPECT_NEAR(p.transfer_times[i], 2.0, 1e-9);
    EXPECT_NEAR(p.compute_times[i], 4.0, 1e-9);
  }
  EXPECT_EQ(compute_queue_size(p, kNoCap), 3u);
}

TEST(ProfileDurations, QueueFromFormulaIsNoWorseThanOneLess) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ms(1.0, 40.0);
  for (int trial = 0; trial < 40; ++trial) {
    PipelineConfig pc;
    pc.timing_mode = TimingMode::kSimulated;
    pc.seed = static_cast<std::uint64_t>(trial);
    const double s = ms(rng), t = ms(rng), c = ms(rng);
    pc.durations.sample = Distribution::uniform(0.5 * s, s);
    pc.durations.transfer = Distribution::uniform(0.5 * t, t);
    pc.durations.compute = Distribution::uniform(0.8 * c, 1.2 * c);
    const auto q = compute_queue_size(profile_durations(pc, 100), kNoCap);
    pc.queue_capacity = q;
    const double at_q = utilization(simulate_timings(pc, pc.durations, 200).trace, 0);
    pc.queue_capacity = q - 1;
    const double below = utilization(simulate_timings(pc, pc.durations, 200).trace, 0);
    EXPECT_GE(at_q, below - 0.01) << "trial " << trial << " q " << q;
  }
}

TEST(ProfileFromTrace, MatchesStagesByBatch) {
  const Trace t{
      {Stage::kSample, 0, 0, 0, 0, 2'000'000},       {Stage::kTransfer, 0, 0, 0, 2'000'000, 3'000'000},
      {Stage::kComputeFwd, 0, 0, 0, 3'000'000, 4'000'000}, {Stage::kComputeBwd, 0, 0, 0, 4'000'000, 6'000'000},
      {Stage::kSample, 1, 0, 0, 0, 9'000'000},       {Stage::kComputeFwd, 1, 0, 0, 9'000'000, 9'500'000},
  };
  const auto p = profile_from_trace(t);
  ASSERT_EQ(p.compute_times.size(), 1u);
  EXPECT_DOUBLE_EQ(p.sampling_times[0], 2.0);
  EXPECT_DOUBLE_EQ(p.transfer_times[0], 1.0);
  EXPECT_DOUBLE_EQ(p.compute_times[0], 3.0);
}

TEST(ProfileJson, RoundTrip) {
  auto p = constant_profile(1.25, 2.5, 3.75, 4);
  p.peak_memory_bytes = 123456789;
  p.minibatch_memory_bytes = 2465792;
  p.safety_margin = 0.05;
  EXPECT_EQ(profile_from_json(profile_to_json(p)), p);
  const auto path = std::filesystem::temp_directory_path() / "mqgnn_profile_test.json";
  save_profile(p, path);
  EXPECT_EQ(load_profile(path), p);
  EXPECT_THROW(profile_from_json("{\"sampling_times\": 3}"), ParseError);
}

TEST(Profile, RealSingleDeviceRun) {
  const auto g = split_masks(generate_sbm({40, 40}, 0.2, 0.02, 1), {0.8, 0.1, 0.1}, 1);
  PipelineConfig pc;
  TrainSettings settings{parse_method("gcn"), SamplerParams{3, 16, 2}, OptimizerKind::kAdam};
  ProfileOptions opt;
  opt.num_batches = 8;
  const auto p = profile(g, nullptr, pc, settings, 8, {g.feature_dim(), 8, g.num_classes()}, 0.01, opt);
  EXPECT_EQ(p.compute_times.size(), 8u);
  for (double c : p.compute_times) EXPECT_GT(c, 0.0);
  // Sized by the largest sampled input set, which includes the 8 targets.
  EXPECT_GE(p.minibatch_memory_bytes, minibatch_memory_estimate(8, g.feature_dim()));
  EXPECT_EQ(p.minibatch_memory_bytes % minibatch_memory_estimate(1, g.feature_dim()), 0);
  EXPECT_GT(p.peak_memory_bytes, 0);
}
