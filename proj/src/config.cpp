#include "mqgnn/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "mqgnn/error.hpp"

namespace mqgnn {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  ConfigKey doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MQ_COUNT(name, help)                                                                  \
  Field {                                                                                     \
    {#name, std::to_string(RunConfig{}.name), help},                                          \
        [](RunConfig& c, const std::string& v) { c.name = to_count(#name, v); },              \
        [](const RunConfig& c) { return std::to_string(c.name); }                             \
  }
#define MQ_INT(name, help)                                                                    \
  Field {                                                                                     \
    {#name, std::to_string(RunConfig{}.name), help},                                          \
        [](RunConfig& c, const std::string& v) { c.name = to_int(#name, v); },                \
        [](const RunConfig& c) { return std::to_string(c.name); }                             \
  }
#define MQ_REAL(name, help)                                                                   \
  Field {                                                                                     \
    {#name, fmt(RunConfig{}.name), help}, [](RunConfig& c, const std::string& v) { c.name = to_real(#name, v); }, \
        [](const RunConfig& c) { return fmt(c.name); }                                        \
  }
#define MQ_BOOL(name, help)                                                                   \
  Field {                                                                                     \
    {#name, RunConfig{}.name ? "true" : "false", help},                                       \
        [](RunConfig& c, const std::string& v) { c.name = to_bool(#name, v); },               \
        [](const RunConfig& c) { return std::string(c.name ? "true" : "false"); }             \
  }
#define MQ_TEXT(name, check, help)                                                            \
  Field {                                                                                     \
    {#name, RunConfig{}.name, help},                                                          \
        [](RunConfig& c, const std::string& v) {                                              \
          check(v);                                                                           \
          c.name = v;                                                                         \
        },                                                                                    \
        [](const RunConfig& c) { return c.name; }                                             \
  }

void check_auto_or_count(const std::string& key, const std::string& v) {
  if (v == "auto") return;
  if (to_count(key, v) == 0) throw ConfigError(key + " must be auto or a positive integer");
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      MQ_TEXT(method, [](const std::string& v) { parse_method(v); },
              "sampler: gcn, sage, fastgcn, ladies; layer-wise ones take +flat and/or +debias"),
      MQ_COUNT(fanout, "neighbors per node per layer for node-wise sampling"),
      MQ_COUNT(nodes_per_layer, "node budget per layer for layer-wise sampling"),
      MQ_COUNT(layers, "GNN layers"),
      MQ_COUNT(hidden, "hidden embedding width"),
      MQ_COUNT(batch_size, "target nodes per mini-batch"),
      MQ_COUNT(epochs, "maximum epochs"),
      MQ_TEXT(optimizer, [](const std::string& v) { parse_optimizer(v); }, "adam or sgd"),
      MQ_REAL(learning_rate, "optimizer step size"),
      MQ_COUNT(devices, "simulated devices"),
      MQ_TEXT(queue, [](const std::string& v) { check_auto_or_count("queue", v); },
              "mini-batch queue capacity: auto or a positive integer"),
      MQ_COUNT(sampler_workers, "sampler threads per device"),
      MQ_TEXT(sync_period, [](const std::string& v) { check_auto_or_count("sync_period", v); },
              "iterations between model averaging: auto or a positive integer"),
      MQ_REAL(sync_scale_k, "scale k of the automatic sync period"),
      MQ_TEXT(delay_model, [](const std::string& v) { parse_delay_model(v); },
              "gradient delivery delay: none, fixed_ms(x), uniform_ms(a,b)"),
      MQ_REAL(cache_fraction, "fraction of nodes cached on each device (0 disables)"),
      MQ_TEXT(cache_mode, [](const std::string& v) { parse_cache_mode(v); }, "degree, walk or auto"),
      MQ_TEXT(timing_mode, [](const std::string& v) { parse_timing_mode(v); },
              "real (wall clock) or simulated (virtual clock)"),
      MQ_BOOL(deterministic, "serialize all workers onto one reproducible schedule"),
      MQ_COUNT(seed, "base random seed"),
      MQ_REAL(transfer_base_ms, "fixed transfer latency per batch"),
      MQ_REAL(transfer_per_byte_ms, "transfer latency per missing feature byte"),
      MQ_TEXT(sim_sample_ms, parse_distribution, "simulated sampling time distribution"),
      MQ_TEXT(sim_transfer_ms, parse_distribution, "simulated transfer time distribution"),
      MQ_TEXT(sim_compute_ms, parse_distribution, "simulated compute time distribution"),
      MQ_TEXT(sim_share_ms, parse_distribution, "simulated gradient sharing time distribution"),
      MQ_TEXT(sim_apply_ms, parse_distribution, "simulated gradient apply time distribution"),
      MQ_TEXT(sim_sync_ms, parse_distribution, "simulated model sync time distribution"),
      MQ_REAL(fwd_fraction, "share of compute time spent in the forward pass"),
      MQ_COUNT(sim_batches, "batches in a timing-only simulation"),
      MQ_BOOL(pipelined, "overlap stages (false replays them back to back)"),
      MQ_COUNT(patience_batches, "early stopping patience in batches"),
      MQ_REAL(min_delta, "minimum validation improvement that resets patience"),
      MQ_COUNT(repeats, "independent training runs"),
      Field{{"simulated_device_memory", std::to_string(RunConfig{}.simulated_device_memory),
             "device memory for queue sizing, bytes or with KiB/MiB/GiB suffix"},
            [](RunConfig& c, const std::string& v) { c.simulated_device_memory = parse_bytes(v); },
            [](const RunConfig& c) { return std::to_string(c.simulated_device_memory); }},
      MQ_REAL(safety_margin, "peak-memory safety margin, 0.05 to 0.10"),
      MQ_COUNT(profile_batches, "batches in a profiling run"),
      MQ_INT(inject_fault_batch, "test hook: fail the compute stage on this batch id (-1 disables)"),
  };
  return f;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.doc);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.doc.name == key) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::map<std::string, std::string> config_values(const RunConfig& c) {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.doc.name] = f.get(c);
  return out;
}

void validate_config(const RunConfig& c) {
  if (c.devices == 0) throw ConfigError("devices must be at least 1");
  if (c.layers == 0) throw ConfigError("layers must be at least 1");
  if (c.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (c.hidden == 0) throw ConfigError("hidden must be at least 1");
  if (c.sampler_workers == 0) throw ConfigError("sampler_workers must be at least 1");
  if (c.repeats == 0) throw ConfigError("repeats must be at least 1");
  if (c.fanout == 0) throw ConfigError("fanout must be at least 1");
  if (c.nodes_per_layer == 0) throw ConfigError("nodes_per_layer must be at least 1");
  if (!(c.learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(c.cache_fraction >= 0 && c.cache_fraction <= 1)) throw ConfigError("cache_fraction must lie in [0, 1]");
  if (!(c.safety_margin >= 0.05 && c.safety_margin <= 0.10))
    throw ConfigError("safety_margin must lie in [0.05, 0.10]");
  if (!(c.fwd_fraction >= 0 && c.fwd_fraction <= 1)) throw ConfigError("fwd_fraction must lie in [0, 1]");
  if (!(c.sync_scale_k > 0)) throw ConfigError("sync_scale_k must be positive");
  if (c.transfer_base_ms < 0 || c.transfer_per_byte_ms < 0) throw ConfigError("transfer latency must be >= 0");
  if (c.simulated_device_memory <= 0) throw ConfigError("simulated_device_memory must be positive");
  if (c.profile_batches == 0) throw ConfigError("profile_batches must be at least 1");
}

Method config_method(const RunConfig& c) { return parse_method(c.method); }

TrainSettings train_settings(const RunConfig& c) {
  TrainSettings s;
  s.method = config_method(c);
  s.sampler = SamplerParams{c.fanout, c.nodes_per_layer, c.layers};
  s.optimizer = parse_optimizer(c.optimizer);
  return s;
}

StageDurations stage_durations(const RunConfig& c) {
  StageDurations d;
  d.sample = parse_distribution(c.sim_sample_ms);
  d.transfer = parse_distribution(c.sim_transfer_ms);
  d.compute = parse_distribution(c.sim_compute_ms);
  d.share = parse_distribution(c.sim_share_ms);
  d.apply = parse_distribution(c.sim_apply_ms);
  d.sync = parse_distribution(c.sim_sync_ms);
  d.fwd_fraction = c.fwd_fraction;
  return d;
}

PipelineConfig pipeline_config(const RunConfig& c, std::size_t num_nodes, std::size_t num_edges,
                               std::size_t auto_queue) {
  validate_config(c);
  PipelineConfig p;
  p.num_devices = c.devices;
  p.queue_capacity = c.queue == "auto" ? auto_queue : to_count("queue", c.queue);
  p.sampler_workers = c.sampler_workers;
  p.transfer = TransferLatency{c.transfer_base_ms, c.transfer_per_byte_ms};
  p.timing_mode = parse_timing_mode(c.timing_mode);
  p.deterministic = c.deterministic;
  p.pipelined = c.pipelined;
  p.seed = c.seed;
  p.durations = stage_durations(c);
  p.delays = parse_delay_model(c.delay_model);
  p.sync_period = resolve_sync_policy(c.sync_period, c.sync_scale_k, num_nodes, num_edges, c.devices).period;
  if (c.inject_fault_batch >= 0) p.fault_batch = c.inject_fault_batch;
  return p;
}

std::int64_t parse_bytes(const std::string& text) {
  static const std::vector<std::pair<std::string, std::int64_t>> units = {
      {"GiB", 1LL << 30}, {"MiB", 1LL << 20}, {"KiB", 1LL << 10}, {"B", 1}};
  const std::string t = trim(text);
  for (const auto& [suffix, scale] : units) {
    if (t.size() > suffix.size() && t.ends_with(suffix)) {
      const double v = to_real("bytes", trim(t.substr(0, t.size() - suffix.size())));
      if (v < 0) throw ConfigError("negative byte count '" + text + "'");
      return static_cast<std::int64_t>(std::llround(v * static_cast<double>(scale)));
    }
  }
  return to_int("bytes", t);
}

}  // namespace mqgnn
