#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mqgnn/cache.hpp"
#include "mqgnn/pipeline.hpp"

namespace mqgnn {

/// Every documented run parameter. `auto` settings stay unresolved here.
struct RunConfig {
  std::string method = "gcn";
  std::size_t fanout = 5;
  std::size_t nodes_per_layer = 512;
  std::size_t layers = 2;
  std::size_t hidden = 16;
  std::size_t batch_size = 1024;
  std::size_t epochs = 100;
  std::string optimizer = "adam";
  double learning_rate = 0.001;
  std::size_t devices = 1;
  std::string queue = "auto";
  std::size_t sampler_workers = 1;
  std::string sync_period = "auto";
  double sync_scale_k = 1.0;
  std::string delay_model = "none";
  double cache_fraction = 0.01;
  std::string cache_mode = "auto";
  std::string timing_mode = "real";
  bool deterministic = false;
  std::uint64_t seed = 0;
  double transfer_base_ms = 0.0;
  double transfer_per_byte_ms = 0.0;
  std::string sim_sample_ms = "fixed(1)";
  std::string sim_transfer_ms = "fixed(1)";
  std::string sim_compute_ms = "fixed(1)";
  std::string sim_share_ms = "fixed(0)";
  std::string sim_apply_ms = "fixed(0)";
  std::string sim_sync_ms = "fixed(0)";
  double fwd_fraction = 1.0 / 3.0;
  std::size_t sim_batches = 100;
  bool pipelined = true;
  std::size_t patience_batches = 200;
  double min_delta = 0.01;
  std::size_t repeats = 1;
  std::int64_t simulated_device_memory = 24LL << 30;
  double safety_margin = 0.075;
  std::size_t profile_batches = 100;
  std::int64_t inject_fault_batch = -1;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Documented keys with their defaults, in display order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text form; unknown keys and bad values throw ConfigError.
void set_config_value(RunConfig& c, const std::string& key, const std::string& value);

/// `key=value` per line; blank lines and `#` comments ignored.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Canonical text form of every key, for report echoes.
std::map<std::string, std::string> config_values(const RunConfig& c);

/// Cross-field checks after all keys are applied.
void validate_config(const RunConfig& c);

Method config_method(const RunConfig& c);
TrainSettings train_settings(const RunConfig& c);
StageDurations stage_durations(const RunConfig& c);

/// Pipeline settings for a graph; queue "auto" resolves to `auto_queue`
/// and sync_period "auto" to the period computed from the graph counts.
PipelineConfig pipeline_config(const RunConfig& c, std::size_t num_nodes, std::size_t num_edges,
                               std::size_t auto_queue = 2);

/// "123", "24GiB", "512MiB", "64KiB".
std::int64_t parse_bytes(const std::string& text);

}  // namespace mqgnn
