#include "mqgnn/graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "mqgnn/error.hpp"

namespace mqgnn {

namespace {

std::array<std::vector<std::uint8_t>, 3> empty_masks(std::size_t n) {
  return {std::vector<std::uint8_t>(n, 0), std::vector<std::uint8_t>(n, 0),
          std::vector<std::uint8_t>(n, 0)};
}

void check_node(const GraphCSR& g, NodeId v) {
  if (v >= g.num_nodes())
    throw BoundsError("node id " + std::to_string(v) + " out of range for graph with " +
                      std::to_string(g.num_nodes()) + " nodes");
}

}  // namespace

GraphCSR::GraphCSR(std::vector<EdgeIndex> row_offsets, std::vector<NodeId> col_indices,
                   Matrix<float> features, std::vector<std::int32_t> labels,
                   std::size_t num_classes, std::array<std::vector<std::uint8_t>, 3> masks)
    : num_nodes_(row_offsets.empty() ? 0 : row_offsets.size() - 1),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      masks_(std::move(masks)) {
  validate();
  index_in_degrees();
}

void GraphCSR::validate() const {
  if (row_offsets_.size() != num_nodes_ + 1 || row_offsets_.front() != 0)
    throw ShapeError("row_offsets must have num_nodes+1 entries starting at 0");
  for (std::size_t v = 0; v < num_nodes_; ++v) {
    if (row_offsets_[v + 1] < row_offsets_[v]) throw ShapeError("row_offsets must be nondecreasing");
  }
  if (row_offsets_.back() != col_indices_.size())
    throw ShapeError("row_offsets[num_nodes] must equal num_edges");
  for (std::size_t v = 0; v < num_nodes_; ++v) {
    for (EdgeIndex e = row_offsets_[v]; e < row_offsets_[v + 1]; ++e) {
      if (col_indices_[e] >= num_nodes_) throw BoundsError("column index out of range");
      if (e > row_offsets_[v] && col_indices_[e] <= col_indices_[e - 1])
        throw ShapeError("neighbor rows must be sorted and duplicate-free");
    }
  }
  if (features_.rows() != num_nodes_) throw ShapeError("feature rows must equal num_nodes");
  if (labels_.size() != num_nodes_) throw ShapeError("label count must equal num_nodes");
  if (num_classes_ == 0) throw ShapeError("num_classes must be positive");
  for (auto y : labels_) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes_)
      throw BoundsError("label outside [0, num_classes)");
  }
  for (const auto& m : masks_) {
    if (m.size() != num_nodes_) throw ShapeError("mask length must equal num_nodes");
  }
  for (std::size_t v = 0; v < num_nodes_; ++v) {
    if (masks_[0][v] + masks_[1][v] + masks_[2][v] > 1)
      throw ShapeError("train/val/test masks must be disjoint");
  }
}

void GraphCSR::index_in_degrees() {
  in_degree_.assign(num_nodes_, 0);
  for (auto c : col_indices_) ++in_degree_[c];
}

std::span<const NodeId> GraphCSR::neighbors(NodeId v) const {
  return {col_indices_.data() + row_offsets_[v], row_offsets_[v + 1] - row_offsets_[v]};
}

std::size_t GraphCSR::out_degree(NodeId v) const { return row_offsets_[v + 1] - row_offsets_[v]; }
std::size_t GraphCSR::in_degree(NodeId v) const { return in_degree_[v]; }
double GraphCSR::hat_degree(NodeId v) const { return static_cast<double>(out_degree(v)) + 1.0; }

bool GraphCSR::has_edge(NodeId u, NodeId v) const {
  auto row = neighbors(u);
  return std::binary_search(row.begin(), row.end(), v);
}

std::size_t GraphCSR::max_out_degree() const {
  std::size_t m = 0;
  for (std::size_t v = 0; v < num_nodes_; ++v) m = std::max(m, out_degree(static_cast<NodeId>(v)));
  return m;
}

std::vector<NodeId> GraphCSR::nodes_in(Split s) const {
  std::vector<NodeId> out;
  const auto& m = mask(s);
  for (std::size_t v = 0; v < num_nodes_; ++v)
    if (m[v]) out.push_back(static_cast<NodeId>(v));
  return out;
}

GraphCSR GraphCSR::with_features(Matrix<float> features) const {
  return GraphCSR(row_offsets_, col_indices_, std::move(features), labels_, num_classes_, masks_);
}

GraphCSR GraphCSR::with_labels(std::vector<std::int32_t> labels, std::size_t num_classes) const {
  return GraphCSR(row_offsets_, col_indices_, features_, std::move(labels), num_classes, masks_);
}

GraphCSR GraphCSR::with_masks(std::array<std::vector<std::uint8_t>, 3> masks) const {
  return GraphCSR(row_offsets_, col_indices_, features_, labels_, num_classes_, std::move(masks));
}

bool GraphCSR::operator==(const GraphCSR& o) const {
  return row_offsets_ == o.row_offsets_ && col_indices_ == o.col_indices_ &&
         features_ == o.features_ && labels_ == o.labels_ && num_classes_ == o.num_classes_ &&
         masks_ == o.masks_;
}

Matrix<float> degree_bucket_features(const std::vector<EdgeIndex>& row_offsets) {
  const std::size_t n = row_offsets.empty() ? 0 : row_offsets.size() - 1;
  std::vector<std::size_t> bucket(n);
  std::size_t max_bucket = 0;
  for (std::size_t v = 0; v < n; ++v) {
    const auto deg = row_offsets[v + 1] - row_offsets[v];
    bucket[v] = static_cast<std::size_t>(std::bit_width(deg + 1)) - 1;  // ⌊log2(deg+1)⌋
    max_bucket = std::max(max_bucket, bucket[v]);
  }
  Matrix<float> f(n, n == 0 ? 0 : max_bucket + 1);
  for (std::size_t v = 0; v < n; ++v) f(v, bucket[v]) = 1.0f;
  return f;
}

GraphCSR build_csr(const EdgeList& edges, std::size_t num_nodes) {
  for (const auto& [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes)
      throw BoundsError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                        ") out of range for " + std::to_string(num_nodes) + " nodes");
  }
  EdgeList sorted = edges;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<EdgeIndex> offsets(num_nodes + 1, 0);
  for (const auto& e : sorted) ++offsets[e.first + 1];
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<NodeId> cols;
  cols.reserve(sorted.size());
  for (const auto& e : sorted) cols.push_back(e.second);

  auto features = degree_bucket_features(offsets);
  return GraphCSR(std::move(offsets), std::move(cols), std::move(features),
                  std::vector<std::int32_t>(num_nodes, 0), 1, empty_masks(num_nodes));
}

EdgeList symmetrize(const EdgeList& edges) {
  EdgeList out;
  out.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    out.emplace_back(u, v);
    out.emplace_back(v, u);
  }
  return out;
}

GraphCSR load_edge_list(const std::filesystem::path& path, std::size_t num_nodes,
                        const std::optional<std::filesystem::path>& feature_path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open edge list " + path.string());
  EdgeList edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    std::istringstream full(line);
    long long u = -1, v = -1;
    std::string extra;
    if (!(full >> u >> v) || (full >> extra) || u < 0 || v < 0)
      throw ParseError("malformed edge line '" + line + "'", lineno);
    if (static_cast<std::size_t>(u) >= num_nodes || static_cast<std::size_t>(v) >= num_nodes)
      throw BoundsError("edge id out of range at line " + std::to_string(lineno));
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  }
  GraphCSR g = build_csr(edges, num_nodes);
  if (!feature_path) return g;

  std::ifstream fin(*feature_path);
  if (!fin) throw std::runtime_error("cannot open feature file " + feature_path->string());
  std::vector<std::vector<float>> rows;
  lineno = 0;
  while (std::getline(fin, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<float> row;
    std::string tok;
    while (ls >> tok) {
      try {
        row.push_back(std::stof(tok));
      } catch (const std::exception&) {
        throw ParseError("malformed feature value '" + tok + "'", lineno);
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError("inconsistent feature width", lineno);
    rows.push_back(std::move(row));
  }
  if (rows.size() != num_nodes) throw ParseError("feature file must have one row per node");
  Matrix<float> f(num_nodes, rows.empty() ? 0 : rows.front().size());
  for (std::size_t v = 0; v < num_nodes; ++v)
    std::copy(rows[v].begin(), rows[v].end(), f.row(v).begin());
  return g.with_features(std::move(f));
}

std::size_t in_degree(const GraphCSR& g, NodeId v) {
  check_node(g, v);
  return g.in_degree(v);
}

LaplacianRow laplacian_row(const GraphCSR& g, NodeId v) {
  check_node(g, v);
  LaplacianRow row;
  const double dv = g.hat_degree(v);
  bool self_done = false;
  auto push_self = [&](double a) {
    row.indices.push_back(v);
    row.values.push_back(a / dv);
    self_done = true;
  };
  for (NodeId u : g.neighbors(v)) {
    if (!self_done && u > v) push_self(1.0);
    if (u == v) {
      push_self(2.0);  // raw self-loop plus the injected identity
      continue;
    }
    row.indices.push_back(u);
    row.values.push_back(1.0 / std::sqrt(dv * g.hat_degree(u)));
  }
  if (!self_done) push_self(1.0);
  return row;
}

double laplacian_entry(const GraphCSR& g, NodeId u, NodeId v) {
  check_node(g, u);
  check_node(g, v);
  if (u == v) return (g.has_edge(u, u) ? 2.0 : 1.0) / g.hat_degree(u);
  if (!g.has_edge(u, v)) return 0.0;
  return 1.0 / std::sqrt(g.hat_degree(u) * g.hat_degree(v));
}

GraphCSR generate_power_law(std::size_t num_nodes, double exponent, std::uint64_t seed) {
  if (num_nodes < 2) throw std::invalid_argument("power-law graph needs at least 2 nodes");
  if (!(exponent > 1.0)) throw std::invalid_argument("power-law exponent must exceed 1");
  std::mt19937_64 rng(seed);
  const std::size_t kmax = num_nodes - 1;
  std::vector<double> weights(kmax);
  for (std::size_t k = 1; k <= kmax; ++k) weights[k - 1] = std::pow(static_cast<double>(k), -exponent);
  std::discrete_distribution<std::size_t> degree_dist(weights.begin(), weights.end());

  std::vector<std::size_t> degree(num_nodes);
  std::size_t total = 0;
  for (auto& d : degree) {
    d = degree_dist(rng) + 1;
    total += d;
  }
  // Odd stub count: resample one node until the parity flips.
  std::uniform_int_distribution<std::size_t> pick(0, num_nodes - 1);
  while (total % 2 == 1) {
    const auto v = pick(rng);
    total -= degree[v];
    degree[v] = degree_dist(rng) + 1;
    total += degree[v];
  }

  std::vector<NodeId> stubs;
  stubs.reserve(total);
  for (std::size_t v = 0; v < num_nodes; ++v) stubs.insert(stubs.end(), degree[v], static_cast<NodeId>(v));
  std::shuffle(stubs.begin(), stubs.end(), rng);

  EdgeList edges;
  edges.reserve(total);
  for (std::size_t i = 0; i + 1 < stubs.size(); i += 2) {
    if (stubs[i] == stubs[i + 1]) continue;
    edges.emplace_back(stubs[i], stubs[i + 1]);
    edges.emplace_back(stubs[i + 1], stubs[i]);
  }
  return build_csr(edges, num_nodes);
}

GraphCSR generate_sbm(const std::vector<std::size_t>& block_sizes, double p_in, double p_out,
                      std::uint64_t seed, SbmOptions options) {
  if (!(p_out >= 0.0 && p_out < p_in && p_in <= 1.0))
    throw std::invalid_argument("SBM requires 0 <= p_out < p_in <= 1");
  if (block_sizes.empty()) throw std::invalid_argument("SBM needs at least one block");
  std::vector<std::int32_t> labels;
  for (std::size_t b = 0; b < block_sizes.size(); ++b)
    labels.insert(labels.end(), block_sizes[b], static_cast<std::int32_t>(b));
  const std::size_t n = labels.size();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  EdgeList edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = labels[u] == labels[v] ? p_in : p_out;
      if (unif(rng) < p) {
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
        edges.emplace_back(static_cast<NodeId>(v), static_cast<NodeId>(u));
      }
    }
  }
  GraphCSR g = build_csr(edges, n);

  std::normal_distribution<float> noise(0.0f, static_cast<float>(options.feature_noise));
  Matrix<float> f(n, block_sizes.size());
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < f.cols(); ++c) f(v, c) = noise(rng);
    f(v, static_cast<std::size_t>(labels[v])) += 1.0f;
  }
  return g.with_features(std::move(f)).with_labels(std::move(labels), block_sizes.size());
}

GraphCSR split_masks(const GraphCSR& g, std::array<double, 3> ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw std::invalid_argument("split ratios must be nonnegative");
    sum += r;
  }
  if (sum > 1.0 + 1e-9) throw std::invalid_argument("split ratios sum to more than 1");
  const std::size_t n = g.num_nodes();
  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  auto masks = empty_masks(n);
  std::size_t pos = 0;
  for (int s = 0; s < 3; ++s) {
    // Small epsilon so exact products like 0.66*100 are not floored down.
    auto count = static_cast<std::size_t>(std::floor(ratios[s] * static_cast<double>(n) + 1e-9));
    count = std::min(count, n - pos);
    for (std::size_t i = 0; i < count; ++i) masks[s][perm[pos + i]] = 1;
    pos += count;
  }
  return g.with_masks(std::move(masks));
}

// MQG1 container -----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'Q', 'G', '1'};

template <typename U>
void put_le(std::ostream& out, U value) {
  static_assert(std::is_integral_v<U>);
  unsigned char buf[sizeof(U)];
  auto v = static_cast<std::make_unsigned_t<U>>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw ParseError("MQG1: truncated file");
  std::make_unsigned_t<U> v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::make_unsigned_t<U>>(buf[i]) << (8 * i);
  return static_cast<U>(v);
}

}  // namespace

void write_mqg1(const GraphCSR& g, std::ostream& out) {
  out.write(kMagic, 4);
  put_le<std::uint64_t>(out, g.num_nodes());
  put_le<std::uint64_t>(out, g.num_edges());
  put_le<std::uint64_t>(out, g.feature_dim());
  put_le<std::uint64_t>(out, g.num_classes());
  for (auto o : g.row_offsets()) put_le<std::uint64_t>(out, o);
  for (auto c : g.col_indices()) put_le<std::uint64_t>(out, c);
  const auto& f = g.features();
  for (std::size_t i = 0; i < f.size(); ++i) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f.data()[i]));
  for (auto y : g.labels()) put_le<std::int32_t>(out, y);
  for (int s = 0; s < 3; ++s) {
    const auto& m = g.mask(static_cast<Split>(s));
    std::vector<std::uint8_t> bits((g.num_nodes() + 7) / 8, 0);
    for (std::size_t v = 0; v < m.size(); ++v)
      if (m[v]) bits[v / 8] |= static_cast<std::uint8_t>(1u << (v % 8));
    out.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
  }
  if (!out) throw std::runtime_error("MQG1: write failed");
}

GraphCSR read_mqg1(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("MQG1: bad magic");
  const auto n = get_le<std::uint64_t>(in);
  const auto m = get_le<std::uint64_t>(in);
  const auto d = get_le<std::uint64_t>(in);
  const auto k = get_le<std::uint64_t>(in);
  std::vector<EdgeIndex> offsets(n + 1);
  for (auto& o : offsets) o = get_le<std::uint64_t>(in);
  std::vector<NodeId> cols(m);
  for (auto& c : cols) {
    const auto raw = get_le<std::uint64_t>(in);
    if (raw >= n) throw BoundsError("MQG1: column index out of range");
    c = static_cast<NodeId>(raw);
  }
  Matrix<float> f(n, d);
  for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = std::bit_cast<float>(get_le<std::uint32_t>(in));
  std::vector<std::int32_t> labels(n);
  for (auto& y : labels) y = get_le<std::int32_t>(in);
  std::array<std::vector<std::uint8_t>, 3> masks;
  for (auto& mask : masks) {
    std::vector<std::uint8_t> bits((n + 7) / 8);
    if (!in.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size())))
      throw ParseError("MQG1: truncated mask");
    mask.assign(n, 0);
    for (std::size_t v = 0; v < n; ++v) mask[v] = (bits[v / 8] >> (v % 8)) & 1u;
  }
  return GraphCSR(std::move(offsets), std::move(cols), std::move(f), std::move(labels), k,
                  std::move(masks));
}

void save_graph(const GraphCSR& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_mqg1(g, out);
}

GraphCSR load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_mqg1(in);
}

}  // namespace mqgnn
