#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mqgnn/matrix.hpp"

namespace mqgnn {

using NodeId = std::uint32_t;
using EdgeIndex = std::uint64_t;

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

/// One row of P = D̂^{-1/2} Â D̂^{-1/2}, sorted by column, with the Â
/// self-loop merged in.
struct LaplacianRow {
  std::vector<NodeId> indices;
  std::vector<double> values;
};

/// Immutable directed CSR graph with node features, labels and split masks.
/// Neighbor rows are sorted and duplicate-free. Â = A + I is never stored:
/// the identity is injected by laplacian_row().
class GraphCSR {
 public:
  GraphCSR() = default;

  /// Takes ownership of prebuilt arrays and validates every invariant.
  GraphCSR(std::vector<EdgeIndex> row_offsets, std::vector<NodeId> col_indices,
           Matrix<float> features, std::vector<std::int32_t> labels, std::size_t num_classes,
           std::array<std::vector<std::uint8_t>, 3> masks);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return col_indices_.size(); }
  std::size_t feature_dim() const { return features_.cols(); }
  std::size_t num_classes() const { return num_classes_; }

  std::span<const NodeId> neighbors(NodeId v) const;
  std::size_t out_degree(NodeId v) const;
  std::size_t in_degree(NodeId v) const;
  /// Row sum of Â = A + I.
  double hat_degree(NodeId v) const;
  bool has_edge(NodeId u, NodeId v) const;
  std::size_t max_out_degree() const;

  const std::vector<EdgeIndex>& row_offsets() const { return row_offsets_; }
  const std::vector<NodeId>& col_indices() const { return col_indices_; }
  const Matrix<float>& features() const { return features_; }
  const std::vector<std::int32_t>& labels() const { return labels_; }
  const std::vector<std::uint8_t>& mask(Split s) const { return masks_[static_cast<int>(s)]; }
  std::vector<NodeId> nodes_in(Split s) const;

  GraphCSR with_features(Matrix<float> features) const;
  GraphCSR with_labels(std::vector<std::int32_t> labels, std::size_t num_classes) const;
  GraphCSR with_masks(std::array<std::vector<std::uint8_t>, 3> masks) const;

  bool operator==(const GraphCSR& o) const;

 private:
  void validate() const;
  void index_in_degrees();

  std::size_t num_nodes_ = 0;
  std::vector<EdgeIndex> row_offsets_{0};
  std::vector<NodeId> col_indices_;
  std::vector<std::uint32_t> in_degree_;
  Matrix<float> features_;
  std::vector<std::int32_t> labels_;
  std::size_t num_classes_ = 1;
  std::array<std::vector<std::uint8_t>, 3> masks_;
};

using EdgeList = std::vector<std::pair<NodeId, NodeId>>;

/// Sorts and deduplicates, so the layout is independent of input order.
/// Features default to the degree-bucket one-hot; labels to 0; masks empty.
GraphCSR build_csr(const EdgeList& edges, std::size_t num_nodes);

/// Adds (v,u) for every (u,v).
EdgeList symmetrize(const EdgeList& edges);

/// One "src dst" pair per line; '#' starts a comment. Optional feature file:
/// one whitespace-separated row of floats per node.
GraphCSR load_edge_list(const std::filesystem::path& path, std::size_t num_nodes,
                        const std::optional<std::filesystem::path>& feature_path = std::nullopt);

/// One-hot of ⌊log2(out_degree + 1)⌋.
Matrix<float> degree_bucket_features(const std::vector<EdgeIndex>& row_offsets);

std::size_t in_degree(const GraphCSR& g, NodeId v);
LaplacianRow laplacian_row(const GraphCSR& g, NodeId v);

/// Value P(u, v); zero when v ∉ N̂(u).
double laplacian_entry(const GraphCSR& g, NodeId u, NodeId v);

GraphCSR generate_power_law(std::size_t num_nodes, double exponent, std::uint64_t seed);

struct SbmOptions {
  double feature_noise = 1.0;
};
GraphCSR generate_sbm(const std::vector<std::size_t>& block_sizes, double p_in, double p_out,
                      std::uint64_t seed, SbmOptions options = {});

GraphCSR split_masks(const GraphCSR& g, std::array<double, 3> ratios, std::uint64_t seed);

// MQG1 binary container.
void write_mqg1(const GraphCSR& g, std::ostream& out);
GraphCSR read_mqg1(std::istream& in);
void save_graph(const GraphCSR& g, const std::filesystem::path& path);
GraphCSR load_graph(const std::filesystem::path& path);

}  // namespace mqgnn
