#include <algorithm>
#include <cmath>
#include <limits>
#include <regex>
#include <sstream>

#include "mqgnn/engine.hpp"
#include "mqgnn/error.hpp"

namespace mqgnn {

double Distribution::draw(std::mt19937_64& rng) const {
  double x = 0.0;
  switch (kind) {
    case Kind::kFixed: x = a; break;
    case Kind::kUniform: x = std::uniform_real_distribution<double>(a, b)(rng); break;
    case Kind::kNormal: x = std::normal_distribution<double>(a, b)(rng); break;
    case Kind::kExponential: x = a > 0.0 ? std::exponential_distribution<double>(1.0 / a)(rng) : 0.0; break;
  }
  return std::max(0.0, x);
}

double Distribution::mean() const {
  switch (kind) {
    case Kind::kUniform: return 0.5 * (a + b);
    default: return a;
  }
}

double Distribution::max() const {
  switch (kind) {
    case Kind::kFixed: return a;
    case Kind::kUniform: return b;
    default: return std::numeric_limits<double>::infinity();
  }
}

Distribution parse_distribution(const std::string& text) {
  static const std::regex one(R"(\s*(fixed|exponential)\(\s*([0-9.eE+-]+)\s*\)\s*)");
  static const std::regex two(R"(\s*(uniform|normal)\(\s*([0-9.eE+-]+)\s*,\s*([0-9.eE+-]+)\s*\)\s*)");
  static const std::regex bare(R"(\s*([0-9.eE+-]+)\s*)");
  std::smatch m;
  auto num = [&](const std::string& s) {
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size() || !std::isfinite(v)) throw ConfigError("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("bad number in distribution spec: " + text);
    }
  };
  Distribution d;
  if (std::regex_match(text, m, one)) {
    d.kind = m[1] == "fixed" ? Distribution::Kind::kFixed : Distribution::Kind::kExponential;
    d.a = num(m[2]);
  } else if (std::regex_match(text, m, two)) {
    d.kind = m[1] == "uniform" ? Distribution::Kind::kUniform : Distribution::Kind::kNormal;
    d.a = num(m[2]);
    d.b = num(m[3]);
    if (d.kind == Distribution::Kind::kUniform && d.b < d.a) throw ConfigError("uniform bounds reversed: " + text);
    if (d.kind == Distribution::Kind::kNormal && d.b < 0) throw ConfigError("negative standard deviation: " + text);
  } else if (std::regex_match(text, m, bare)) {
    d.a = num(m[1]);
  } else {
    throw ConfigError("invalid distribution spec: " + text);
  }
  if (d.a < 0) throw ConfigError("negative duration in distribution spec: " + text);
  return d;
}

std::string distribution_name(const Distribution& d) {
  std::ostringstream os;
  switch (d.kind) {
    case Distribution::Kind::kFixed: os << "fixed(" << d.a << ")"; break;
    case Distribution::Kind::kUniform: os << "uniform(" << d.a << "," << d.b << ")"; break;
    case Distribution::Kind::kNormal: os << "normal(" << d.a << "," << d.b << ")"; break;
    case Distribution::Kind::kExponential: os << "exponential(" << d.a << ")"; break;
  }
  return os.str();
}

std::vector<std::vector<std::int64_t>> round_robin_batches(std::size_t num_batches, std::size_t num_devices,
                                                           std::int64_t first_id) {
  if (num_devices == 0) throw ConfigError("num_devices must be at least 1");
  std::vector<std::vector<std::int64_t>> out(num_devices);
  for (std::size_t k = 0; k < num_batches; ++k)
    out[k % num_devices].push_back(first_id + static_cast<std::int64_t>(k));
  return out;
}

bool is_sync_point(const EngineConfig& config, std::size_t local, std::size_t min_batches) {
  std::size_t max_batches = 0;
  for (const auto& ids : config.batch_ids) max_batches = std::max(max_batches, ids.size());
  if (local >= min_batches || local + 1 >= max_batches) return false;
  const auto period = static_cast<std::int64_t>(std::max<std::size_t>(1, config.sync_period));
  return (config.window_base + static_cast<std::int64_t>(local) + 1) % period == 0;
}

}  // namespace mqgnn
