#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mqgnn/autotune.hpp"
#include "mqgnn/config.hpp"
#include "mqgnn/pipeline.hpp"

namespace mqgnn {

/// Accuracy of `model` on one split with exact full-neighborhood aggregation.
double evaluate(const GraphCSR& g, const ModelState<double>& model, Split split, std::size_t layers);

struct EpochRecord {
  EpochMetrics metrics;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t queue_capacity = 0;
  std::size_t sync_period = 0;
  std::int64_t best_epoch = -1;
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;  // of the best-validation model
  bool early_stopped = false;
  std::size_t batches = 0;
  std::size_t sync_events = 0;
  double cache_hit_rate = 0.0;
  std::vector<double> utilization;  // per device over the whole run
  std::vector<std::size_t> cpu_high_water;
  std::vector<std::size_t> device_high_water;
  double mean_batch_ms = 0.0;
  double training_time_ms = 0.0;
  Trace trace;
  ModelState<double> best_model;
  std::string error;
};

struct TrainOptions {
  std::optional<TimingProfile> profile;  // sizes queue=auto when given
  ApplyObserver observer;
};

/// Full training run: per-epoch cache refresh and pipeline pass, validation
/// after every epoch, early stopping on the batch-count patience rule, and
/// selection of the best-validation model.
RunResult train(const GraphCSR& g, const RunConfig& config, const TrainOptions& options = {});

/// Queue capacity for a run: the configured number, or the profiled queue size
/// from `profile` (or an inline profile) when the setting is auto.
std::size_t resolve_queue_capacity(const GraphCSR& g, const RunConfig& config,
                                   const std::optional<TimingProfile>& profile);

struct RunReport {
  RunConfig config;
  std::string graph;
  std::vector<RunResult> runs;
};

/// Runs `config.repeats` trainings with seeds seed, seed+1, ...
RunReport train_repeats(const GraphCSR& g, const RunConfig& config, const TrainOptions& options = {});

/// Stable JSON rendering: fixed key order, no wall-clock stamps.
std::string report_to_json(const RunReport& report);
void save_report(const RunReport& report, const std::filesystem::path& path);

/// Summary of a timing-only simulation.
std::string simulation_summary_json(const EngineResult& r, std::size_t num_devices, std::size_t queue_capacity);

/// A small table row per report file: method, graph, devices, metrics.
struct TableRow {
  std::string method;
  std::string graph;
  std::size_t devices = 0;
  double mean_batch_ms = 0.0;
  double training_time_ms = 0.0;
  double test_mean = 0.0;
  double test_std = 0.0;
  double utilization = 0.0;
  std::size_t runs = 0;
};

TableRow table_row_from_report_json(const std::string& json_text);
std::string table_csv(const std::vector<TableRow>& rows);

/// Two-column CSV (t_ms, busy) of smoothed per-device utilization.
std::string utilization_csv(const Trace& trace, int device, double bin_ms, double smooth_ms);

/// Model weights as JSON.
std::string model_to_json(const ModelState<double>& m);

}  // namespace mqgnn
