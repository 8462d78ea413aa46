#include "mqgnn/racom.hpp"

#include <cmath>
#include <cstdio>
#include <regex>

namespace mqgnn {

std::size_t compute_sync_period(std::size_t num_nodes, std::size_t num_edges, std::size_t num_devices,
                                double scale_k, bool* zero_edge_warning) {
  if (num_nodes == 0 || num_devices == 0) throw std::invalid_argument("sync period needs |V| >= 1 and |G| >= 1");
  if (!(scale_k > 0.0)) throw std::invalid_argument("sync scale k must be positive");
  if (zero_edge_warning) *zero_edge_warning = num_edges == 0;
  const double denom =
      num_edges == 0 ? 1.0 : std::sqrt(static_cast<double>(num_devices) * static_cast<double>(num_edges));
  const double p = scale_k * std::sqrt(static_cast<double>(num_nodes)) / denom;
  // Guard against ceil(10.000000000000002) = 11 on exact quotients.
  const double rounded = std::round(p);
  const double c = std::abs(p - rounded) < 1e-9 * std::max(1.0, rounded) ? rounded : std::ceil(p);
  return std::max<std::size_t>(1, static_cast<std::size_t>(c));
}

double staleness_cost(double period, double num_nodes, double num_edges, double num_devices, double alpha,
                      double beta) {
  if (!(period > 0.0)) throw std::invalid_argument("period must be positive");
  return alpha * period * num_edges + beta * (1.0 / period) * (num_nodes / num_devices);
}

SyncPolicy resolve_sync_policy(const std::string& setting, double scale_k, std::size_t num_nodes,
                               std::size_t num_edges, std::size_t num_devices) {
  SyncPolicy p;
  p.scale_k = scale_k;
  if (setting == "auto") {
    p.mode = SyncMode::kAuto;
    bool warn = false;
    p.period = compute_sync_period(num_nodes, num_edges, num_devices, scale_k, &warn);
    if (warn) std::fprintf(stderr, "warning: graph has no edges, sync period uses |E| = 1\n");
    return p;
  }
  p.mode = SyncMode::kFixed;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(setting, &used);
    if (used != setting.size() || v < 1) throw ConfigError("");
    p.period = static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("sync_period must be auto or a positive integer, got '" + setting + "'");
  }
  return p;
}

double DelayModel::sample_ms(int src, int dst, std::mt19937_64& rng) const {
  if (src == dst) return 0.0;
  double d = 0.0;
  switch (kind) {
    case Kind::kNone: break;
    case Kind::kFixed: d = a_ms; break;
    case Kind::kUniform: d = std::uniform_real_distribution<double>(a_ms, b_ms)(rng); break;
  }
  if (src >= 0 && static_cast<std::size_t>(src) < source_extra_ms.size()) d += source_extra_ms[src];
  return d;
}

double DelayModel::max_ms() const {
  double base = kind == Kind::kFixed ? a_ms : kind == Kind::kUniform ? b_ms : 0.0;
  double extra = 0.0;
  for (double e : source_extra_ms) extra = std::max(extra, e);
  return base + extra;
}

DelayModel parse_delay_model(const std::string& text) {
  DelayModel m;
  if (text == "none" || text.empty()) return m;
  static const std::regex fixed(R"(fixed_ms\(\s*([0-9.eE+-]+)\s*\))");
  static const std::regex uniform(R"(uniform_ms\(\s*([0-9.eE+-]+)\s*,\s*([0-9.eE+-]+)\s*\))");
  std::smatch match;
  try {
    if (std::regex_match(text, match, fixed)) {
      m.kind = DelayModel::Kind::kFixed;
      m.a_ms = std::stod(match[1]);
    } else if (std::regex_match(text, match, uniform)) {
      m.kind = DelayModel::Kind::kUniform;
      m.a_ms = std::stod(match[1]);
      m.b_ms = std::stod(match[2]);
    } else {
      throw ConfigError("");
    }
  } catch (const std::exception&) {
    throw ConfigError("delay_model must be none, fixed_ms(x) or uniform_ms(a,b); got '" + text + "'");
  }
  if (m.a_ms < 0.0 || m.b_ms < 0.0 || (m.kind == DelayModel::Kind::kUniform && m.b_ms < m.a_ms))
    throw ConfigError("delay_model bounds must be nonnegative and ordered");
  return m;
}

std::string delay_model_name(const DelayModel& m) {
  char buf[96];
  switch (m.kind) {
    case DelayModel::Kind::kNone: return "none";
    case DelayModel::Kind::kFixed: std::snprintf(buf, sizeof buf, "fixed_ms(%g)", m.a_ms); return buf;
    case DelayModel::Kind::kUniform:
      std::snprintf(buf, sizeof buf, "uniform_ms(%g,%g)", m.a_ms, m.b_ms);
      return buf;
  }
  return "none";
}

}  // namespace mqgnn
