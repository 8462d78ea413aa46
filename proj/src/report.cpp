#include "mqgnn/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mqgnn/error.hpp"

namespace mqgnn {

using ojson = nlohmann::ordered_json;

double evaluate(const GraphCSR& g, const ModelState<double>& model, Split split, std::size_t layers) {
  const auto nodes = g.nodes_in(split);
  if (nodes.empty()) return 0.0;
  const bool sage = model.arch == Architecture::kSage;
  constexpr std::size_t kChunk = 512;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < nodes.size(); i += kChunk) {
    const std::span<const NodeId> chunk(nodes.data() + i, std::min(kChunk, nodes.size() - i));
    const auto batch = full_neighborhood_batch(g, chunk, layers, sage);
    const auto logits = forward(batch, model).logits;
    const auto pred = predict(logits);
    for (std::size_t k = 0; k < pred.size(); ++k) correct += pred[k] == batch.target_labels[k] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

namespace {

std::vector<std::size_t> model_dims(const GraphCSR& g, const RunConfig& c) {
  std::vector<std::size_t> dims{g.feature_dim()};
  for (std::size_t l = 1; l < c.layers; ++l) dims.push_back(c.hidden);
  dims.push_back(g.num_classes());
  return dims;
}

}  // namespace

std::size_t resolve_queue_capacity(const GraphCSR& g, const RunConfig& c,
                                   const std::optional<TimingProfile>& given) {
  if (c.queue != "auto") return pipeline_config(c, g.num_nodes(), g.num_edges(), 2).queue_capacity;
  if (given) return compute_queue_size(*given, profile_cap(*given));

  PipelineConfig pc = pipeline_config(c, g.num_nodes(), g.num_edges(), 2);
  const auto settings = train_settings(c);
  TimingProfile p;
  if (pc.event_driven()) {
    p = profile_durations(pc, c.profile_batches);
    const auto train = g.nodes_in(Split::kTrain);
    std::size_t batch_nodes = 1;
    if (!train.empty()) {
      const std::span<const NodeId> first(train.data(), std::min(train.size(), c.batch_size));
      Rng rng(batch_seed(c.seed, 0, 0));
      batch_nodes = build_minibatch(settings.method, g, first, settings.sampler, nullptr, rng).input_nodes().size();
    }
    p.minibatch_memory_bytes = minibatch_memory_estimate(batch_nodes, g.feature_dim());
    p.total_memory_bytes = c.simulated_device_memory;
    p.safety_margin = c.safety_margin;
  } else {
    ProfileOptions opt{c.profile_batches, c.simulated_device_memory, c.safety_margin};
    p = profile(g, nullptr, pc, settings, c.batch_size, model_dims(g, c), c.learning_rate, opt);
  }
  return compute_queue_size(p, profile_cap(p));
}

RunResult train(const GraphCSR& g, const RunConfig& c, const TrainOptions& options) {
  validate_config(c);
  const auto settings = train_settings(c);
  const auto train_nodes = g.nodes_in(Split::kTrain);
  if (train_nodes.empty()) throw ConfigError("graph has no training nodes");

  RunResult r;
  r.seed = c.seed;
  r.queue_capacity = resolve_queue_capacity(g, c, options.profile);
  const PipelineConfig pc = pipeline_config(c, g.num_nodes(), g.num_edges(), r.queue_capacity);
  r.sync_period = pc.sync_period;

  const auto arch = architecture_for(settings.method);
  const auto init = init_model<double>(arch, model_dims(g, c), c.learning_rate, c.seed);
  std::vector<ModelState<double>> replicas(c.devices, init);
  r.best_model = init;

  std::optional<CacheProbs> probs;
  if (c.cache_fraction > 0) probs = cache_probs(g, parse_cache_mode(c.cache_mode), c.fanout, c.layers);

  RacomHandle racom;
  double patience_ref = -1.0;
  std::size_t since_improvement = 0;
  std::uint64_t hits = 0, lookups = 0;
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    const auto e = static_cast<std::int64_t>(epoch);
    std::optional<CacheState> cache;
    if (probs) {
      Rng rng(batch_seed(c.seed, e, -2));
      cache = refresh_cache(g, *probs, c.cache_fraction, rng, e);
    }
    const auto plan = plan_epoch(train_nodes, c.batch_size, c.devices, c.seed, e);
    auto res = run_epoch(g, cache ? &*cache : nullptr, replicas, pc, racom, settings, plan, options.observer);
    r.trace.insert(r.trace.end(), res.engine.trace.begin(), res.engine.trace.end());
    if (!res.engine.ok) {
      r.error = res.engine.error;
      break;
    }
    hits += res.metrics.cache_hits;
    lookups += res.metrics.cache_hits + res.metrics.cache_misses;

    EpochRecord rec;
    rec.metrics = res.metrics;
    rec.val_accuracy = evaluate(g, replicas[0], Split::kVal, c.layers);
    rec.test_accuracy = evaluate(g, replicas[0], Split::kTest, c.layers);
    r.epochs.push_back(rec);
    r.batches += plan.num_batches();

    if (r.best_epoch < 0 || rec.val_accuracy > r.best_val_accuracy) {
      r.best_epoch = e;
      r.best_val_accuracy = rec.val_accuracy;
      r.best_model = replicas[0];
    }
    if (rec.val_accuracy >= patience_ref + c.min_delta) {
      patience_ref = rec.val_accuracy;
      since_improvement = 0;
    } else {
      since_improvement += plan.num_batches();
      if (since_improvement >= c.patience_batches) {
        r.early_stopped = true;
        break;
      }
    }
  }
  r.sync_events = racom.sync_events;
  r.cache_hit_rate = lookups ? static_cast<double>(hits) / static_cast<double>(lookups) : 0.0;
  r.test_accuracy = evaluate(g, r.best_model, Split::kTest, c.layers);

  EngineResult combined;
  combined.trace = r.trace;
  const auto whole = summarize(combined, 0, c.devices);
  r.utilization = whole.utilization;
  r.mean_batch_ms = whole.mean_batch_ms;
  for (const auto& ep : r.epochs) {
    r.training_time_ms += ep.metrics.training_time_ms;
    if (r.cpu_high_water.empty()) {
      r.cpu_high_water = ep.metrics.cpu_high_water;
      r.device_high_water = ep.metrics.device_high_water;
    }
    for (std::size_t d = 0; d < c.devices; ++d) {
      r.cpu_high_water[d] = std::max(r.cpu_high_water[d], ep.metrics.cpu_high_water[d]);
      r.device_high_water[d] = std::max(r.device_high_water[d], ep.metrics.device_high_water[d]);
    }
  }
  return r;
}

RunReport train_repeats(const GraphCSR& g, const RunConfig& config, const TrainOptions& options) {
  RunReport report;
  report.config = config;
  for (std::size_t k = 0; k < config.repeats; ++k) {
    RunConfig c = config;
    c.seed = config.seed + k;
    report.runs.push_back(train(g, c, options));
    if (!report.runs.back().error.empty()) break;
  }
  return report;
}

namespace {

ojson stage_json(const std::map<Stage, StageStats>& stages) {
  ojson j = ojson::object();
  for (const auto& [s, st] : stages) j[stage_name(s)] = {{"mean_ms", st.mean_ms}, {"max_ms", st.max_ms}, {"count", st.count}};
  return j;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

}  // namespace

std::string report_to_json(const RunReport& report) {
  ojson j;
  j["graph"] = report.graph;
  j["seed"] = report.config.seed;
  ojson cfg = ojson::object();
  for (const auto& [k, v] : config_values(report.config)) cfg[k] = v;
  j["config"] = cfg;
  ojson runs = ojson::array();
  std::vector<double> tests;
  for (const auto& r : report.runs) {
    ojson jr;
    jr["seed"] = r.seed;
    jr["queue_capacity"] = r.queue_capacity;
    jr["sync_period"] = r.sync_period;
    jr["best_epoch"] = r.best_epoch;
    jr["best_val_accuracy"] = r.best_val_accuracy;
    jr["test_accuracy"] = r.test_accuracy;
    jr["early_stopped"] = r.early_stopped;
    jr["batches"] = r.batches;
    jr["sync_events"] = r.sync_events;
    jr["cache_hit_rate"] = r.cache_hit_rate;
    jr["mean_batch_ms"] = r.mean_batch_ms;
    jr["training_time_ms"] = r.training_time_ms;
    jr["utilization"] = r.utilization;
    jr["cpu_queue_high_water"] = r.cpu_high_water;
    jr["device_queue_high_water"] = r.device_high_water;
    if (!r.error.empty()) jr["error"] = r.error;
    ojson epochs = ojson::array();
    for (const auto& e : r.epochs) {
      ojson je;
      je["epoch"] = e.metrics.epoch;
      je["batches"] = e.metrics.num_batches;
      je["mean_batch_ms"] = e.metrics.mean_batch_ms;
      je["training_time_ms"] = e.metrics.training_time_ms;
      je["train_loss"] = e.metrics.train_loss;
      je["train_accuracy"] = e.metrics.train_accuracy;
      je["val_accuracy"] = e.val_accuracy;
      je["test_accuracy"] = e.test_accuracy;
      je["utilization"] = e.metrics.utilization;
      je["sync_events"] = e.metrics.sync_events;
      je["cache_hits"] = e.metrics.cache_hits;
      je["cache_misses"] = e.metrics.cache_misses;
      je["stages"] = stage_json(e.metrics.stages);
      epochs.push_back(je);
    }
    jr["epochs"] = epochs;
    runs.push_back(jr);
    tests.push_back(r.test_accuracy);
  }
  j["runs"] = runs;
  const auto [m, s] = mean_std(tests);
  j["test_accuracy_mean"] = m;
  j["test_accuracy_std"] = s;
  return j.dump(2);
}

void save_report(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << report_to_json(report) << "\n";
}

std::string simulation_summary_json(const EngineResult& r, std::size_t num_devices, std::size_t queue_capacity) {
  const auto m = summarize(r, 0, num_devices);
  ojson j;
  j["ok"] = r.ok;
  if (!r.ok) j["error"] = r.error;
  j["devices"] = num_devices;
  j["queue_capacity"] = queue_capacity;
  j["makespan_ms"] = static_cast<double>(makespan_ns(r.trace)) / 1e6;
  j["batches"] = m.num_batches;
  j["mean_batch_ms"] = m.mean_batch_ms;
  j["utilization"] = m.utilization;
  j["cpu_queue_high_water"] = m.cpu_high_water;
  j["device_queue_high_water"] = m.device_high_water;
  j["sync_events"] = r.sync_events;
  j["conserved"] = conserved(r);
  j["fifo"] = fifo_per_device(r);
  j["stages"] = stage_json(m.stages);
  return j.dump(2);
}

TableRow table_row_from_report_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid report: ") + e.what());
  }
  TableRow row;
  try {
    row.method = j.at("config").at("method").get<std::string>();
    row.graph = j.value("graph", std::string());
    row.devices = std::stoul(j.at("config").at("devices").get<std::string>());
    std::vector<double> batch, time, util;
    for (const auto& r : j.at("runs")) {
      batch.push_back(r.at("mean_batch_ms").get<double>());
      time.push_back(r.at("training_time_ms").get<double>());
      const auto u = r.at("utilization").get<std::vector<double>>();
      util.push_back(u.empty() ? 0.0 : std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size()));
    }
    row.runs = batch.size();
    row.mean_batch_ms = mean_std(batch).first;
    row.training_time_ms = mean_std(time).first;
    row.utilization = mean_std(util).first;
    row.test_mean = j.at("test_accuracy_mean").get<double>();
    row.test_std = j.at("test_accuracy_std").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report is missing fields: ") + e.what());
  }
  return row;
}

std::string table_csv(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "method,graph,devices,runs,mean_batch_ms,training_time_ms,test_accuracy_mean,test_accuracy_std,utilization\n";
  for (const auto& r : rows)
    os << r.method << ',' << r.graph << ',' << r.devices << ',' << r.runs << ',' << r.mean_batch_ms << ','
       << r.training_time_ms << ',' << r.test_mean << ',' << r.test_std << ',' << r.utilization << '\n';
  return os.str();
}

std::string utilization_csv(const Trace& trace, int device, double bin_ms, double smooth_ms) {
  const auto series = utilization_series(trace, device, bin_ms);
  const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(smooth_ms / bin_ms)));
  const auto smoothed = smooth_series(series, window);
  std::ostringstream os;
  os.precision(10);
  os << "t_ms,utilization\n";
  for (std::size_t i = 0; i < smoothed.size(); ++i) os << (static_cast<double>(i) + 0.5) * bin_ms << ',' << smoothed[i] << '\n';
  return os.str();
}

std::string model_to_json(const ModelState<double>& m) {
  ojson j;
  j["architecture"] = m.arch == Architecture::kSage ? "sage" : "gcn";
  j["step_count"] = m.step_count;
  ojson layers = ojson::array();
  for (const auto& w : m.layer_weights) {
    std::vector<double> values(w.data(), w.data() + w.size());
    layers.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"values", values}});
  }
  j["layers"] = layers;
  return j.dump();
}

}  // namespace mqgnn
