#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mqgnn/autotune.hpp"
#include "mqgnn/config.hpp"
#include "mqgnn/error.hpp"
#include "mqgnn/graph.hpp"
#include "mqgnn/report.hpp"
#include "mqgnn/trace.hpp"

namespace {

using namespace mqgnn;

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<std::size_t> devices;
  std::optional<std::string> queue, sync, method, optimizer;
  std::optional<std::size_t> fanout, nodes_per_layer, repeats;
  std::optional<double> cache_fraction;
  std::vector<std::string> sets;
  std::string config_path;
};

void add_global_flags(CLI::App* cmd, GlobalFlags& f) {
  cmd->add_option("--config", f.config_path, "flat key=value config file");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_flag("--deterministic", f.deterministic, "reproducible serialized schedule");
  cmd->add_option("--devices", f.devices, "simulated devices");
  cmd->add_option("--queue", f.queue, "queue capacity: auto or N");
  cmd->add_option("--sync", f.sync, "sync period: auto or N");
  cmd->add_option("--method", f.method, "gcn | sage | fastgcn | ladies, with +flat / +debias");
  cmd->add_option("--fanout", f.fanout, "node-wise fanout");
  cmd->add_option("--nodes-per-layer", f.nodes_per_layer, "layer-wise node budget");
  cmd->add_option("--cache-fraction", f.cache_fraction, "cached node fraction");
  cmd->add_option("--optimizer", f.optimizer, "adam | sgd");
  cmd->add_option("--repeats", f.repeats, "independent runs");
  cmd->add_option("--set", f.sets, "override any config key: key=value");
}

RunConfig build_config(const GlobalFlags& f) {
  RunConfig c = f.config_path.empty() ? RunConfig{} : load_config(f.config_path);
  if (f.seed) c.seed = *f.seed;
  if (f.deterministic) c.deterministic = true;
  if (f.devices) c.devices = *f.devices;
  if (f.queue) set_config_value(c, "queue", *f.queue);
  if (f.sync) set_config_value(c, "sync_period", *f.sync);
  if (f.method) set_config_value(c, "method", *f.method);
  if (f.optimizer) set_config_value(c, "optimizer", *f.optimizer);
  if (f.fanout) c.fanout = *f.fanout;
  if (f.nodes_per_layer) c.nodes_per_layer = *f.nodes_per_layer;
  if (f.repeats) c.repeats = *f.repeats;
  if (f.cache_fraction) c.cache_fraction = *f.cache_fraction;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  validate_config(c);
  return c;
}

GraphCSR open_graph(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("graph file not found: " + path);
  return load_graph(path);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string keys_help() {
  std::ostringstream os;
  os << "\nConfig keys (key=value, defaults shown):\n";
  for (const auto& k : config_keys()) os << "  " << k.name << " = " << k.default_value << "\n      " << k.help << "\n";
  return os.str();
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw ConfigError("bad list element '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-queue pipelined GNN training: generate, profile, train, simulate, report"};
  app.require_subcommand(1);
  app.footer(keys_help());

  // generate
  struct {
    std::string kind = "sbm", out, blocks = "100,100", split = "0.5,0.25,0.25";
    std::size_t nodes = 10000;
    double exponent = 2.1, p_in = 0.1, p_out = 0.01, noise = 1.0;
    std::uint64_t seed = 0;
  } gen;
  auto* generate = app.add_subcommand("generate", "write a synthetic graph container");
  generate->add_option("--kind", gen.kind, "powerlaw | sbm")->check(CLI::IsMember({"powerlaw", "sbm"}));
  generate->add_option("--out", gen.out, "output path")->required();
  generate->add_option("--nodes", gen.nodes, "power-law node count");
  generate->add_option("--exponent", gen.exponent, "power-law degree exponent");
  generate->add_option("--blocks", gen.blocks, "SBM block sizes, comma separated");
  generate->add_option("--p-in", gen.p_in, "SBM intra-block edge probability");
  generate->add_option("--p-out", gen.p_out, "SBM inter-block edge probability");
  generate->add_option("--noise", gen.noise, "SBM feature noise std");
  generate->add_option("--split", gen.split, "train,val,test ratios");
  generate->add_option("--seed", gen.seed, "random seed");

  GlobalFlags pflags, tflags, sflags;
  std::string graph_path, out_path, trace_path, profile_path, model_path;
  std::size_t sim_batches = 0;

  auto* profile_cmd = app.add_subcommand("profile", "measure stage timings and derive the queue size");
  add_global_flags(profile_cmd, pflags);
  profile_cmd->add_option("--graph", graph_path, "graph container")->required();
  profile_cmd->add_option("--out", out_path, "profile JSON path (stdout when omitted)");

  auto* train_cmd = app.add_subcommand("train", "train with the pipelined multi-device runtime");
  add_global_flags(train_cmd, tflags);
  train_cmd->add_option("--graph", graph_path, "graph container")->required();
  train_cmd->add_option("--out", out_path, "report JSON path (stdout when omitted)");
  train_cmd->add_option("--trace", trace_path, "write the event trace (JSON lines)");
  train_cmd->add_option("--profile", profile_path, "timing profile used when queue=auto");
  train_cmd->add_option("--model", model_path, "write the selected model as JSON");

  auto* sim_cmd = app.add_subcommand("simulate", "timing-only discrete-event simulation");
  add_global_flags(sim_cmd, sflags);
  sim_cmd->add_option("--batches", sim_batches, "batches to simulate (default: sim_batches)");
  sim_cmd->add_option("--out", out_path, "summary JSON path (stdout when omitted)");
  sim_cmd->add_option("--trace", trace_path, "write the event trace (JSON lines)");

  std::vector<std::string> reports, traces;
  std::string out_dir = ".";
  double bin_ms = 10.0, smooth_ms = 150.0;
  auto* report_cmd = app.add_subcommand("report", "tables and smoothed utilization series");
  report_cmd->add_option("--reports", reports, "report JSON files");
  report_cmd->add_option("--traces", traces, "trace files");
  report_cmd->add_option("--out-dir", out_dir, "output directory");
  report_cmd->add_option("--bin-ms", bin_ms, "utilization bin width");
  report_cmd->add_option("--smooth-ms", smooth_ms, "smoothing window");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*generate) {
      GraphCSR g;
      if (gen.kind == "sbm") {
        g = generate_sbm(parse_list<std::size_t>(gen.blocks), gen.p_in, gen.p_out, gen.seed, SbmOptions{gen.noise});
      } else {
        g = generate_power_law(gen.nodes, gen.exponent, gen.seed);
      }
      const auto r = parse_list<double>(gen.split);
      if (r.size() != 3) throw ConfigError("--split needs three ratios");
      g = split_masks(g, {r[0], r[1], r[2]}, gen.seed);
      save_graph(g, gen.out);
      const double avg = g.num_nodes() ? static_cast<double>(g.num_edges()) / static_cast<double>(g.num_nodes()) : 0.0;
      std::printf("nodes=%zu edges=%zu avg_degree=%.4f\n", g.num_nodes(), g.num_edges(), avg);
      return 0;
    }
    if (*profile_cmd) {
      const auto c = build_config(pflags);
      const auto g = open_graph(graph_path);
      const auto pc = pipeline_config(c, g.num_nodes(), g.num_edges(), 2);
      TimingProfile p;
      if (pc.event_driven()) {
        p = profile_durations(pc, c.profile_batches);
        p.total_memory_bytes = c.simulated_device_memory;
        p.safety_margin = c.safety_margin;
      } else {
        std::vector<std::size_t> dims{g.feature_dim()};
        for (std::size_t l = 1; l < c.layers; ++l) dims.push_back(c.hidden);
        dims.push_back(g.num_classes());
        p = profile(g, nullptr, pc, train_settings(c), c.batch_size, dims, c.learning_rate,
                    ProfileOptions{c.profile_batches, c.simulated_device_memory, c.safety_margin});
      }
      write_text(out_path, profile_to_json(p) + "\n");
      return 0;
    }
    if (*train_cmd) {
      const auto c = build_config(tflags);
      const auto g = open_graph(graph_path);
      TrainOptions opt;
      if (!profile_path.empty()) {
        if (!std::filesystem::exists(profile_path)) throw ConfigError("profile file not found: " + profile_path);
        opt.profile = load_profile(profile_path);
      }
      auto report = train_repeats(g, c, opt);
      report.graph = std::filesystem::path(graph_path).filename().string();
      write_text(out_path, report_to_json(report) + "\n");
      if (!trace_path.empty() && !report.runs.empty()) save_trace(report.runs.back().trace, trace_path);
      if (!model_path.empty() && !report.runs.empty()) write_text(model_path, model_to_json(report.runs.back().best_model) + "\n");
      for (const auto& r : report.runs) {
        if (!r.error.empty()) {
          std::fprintf(stderr, "error: %s\n", r.error.c_str());
          return kExitRuntime;
        }
      }
      return 0;
    }
    if (*sim_cmd) {
      const auto c = build_config(sflags);
      PipelineConfig pc = pipeline_config(c, 1, 1, 2);
      pc.timing_mode = TimingMode::kSimulated;
      if (c.queue == "auto") {
        auto p = profile_durations(pc, c.profile_batches);
        pc.queue_capacity = compute_queue_size(p, std::numeric_limits<std::size_t>::max());
      }
      const std::size_t n = sim_batches ? sim_batches : c.sim_batches;
      const auto r = simulate_timings(pc, pc.durations, n);
      write_text(out_path, simulation_summary_json(r, pc.num_devices, pc.queue_capacity) + "\n");
      if (!trace_path.empty()) save_trace(r.trace, trace_path);
      return r.ok ? 0 : kExitRuntime;
    }
    if (*report_cmd) {
      std::filesystem::create_directories(out_dir);
      std::vector<TableRow> rows;
      for (const auto& path : reports) {
        std::ifstream in(path);
        if (!in) throw ConfigError("report file not found: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        rows.push_back(table_row_from_report_json(ss.str()));
      }
      if (!rows.empty()) write_text((std::filesystem::path(out_dir) / "table.csv").string(), table_csv(rows));
      for (std::size_t k = 0; k < traces.size(); ++k) {
        if (!std::filesystem::exists(traces[k])) throw ConfigError("trace file not found: " + traces[k]);
        const auto trace = load_trace(traces[k]);
        const int devices = device_count(trace);
        for (int d = 0; d < devices; ++d) {
          const auto name = std::filesystem::path(traces[k]).stem().string() + "_device" + std::to_string(d) +
                            "_utilization.csv";
          write_text((std::filesystem::path(out_dir) / name).string(), utilization_csv(trace, d, bin_ms, smooth_ms));
          std::printf("%s device=%d utilization=%.6f\n", traces[k].c_str(), d, utilization(trace, d));
        }
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
