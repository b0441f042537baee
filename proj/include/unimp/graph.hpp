#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "unimp/ops.hpp"
#include "unimp/tensor.hpp"

namespace unimp {

/// Immutable CSR graph over in-neighbors, without parallel edges.
///
/// Edges are grouped by destination node and, within a destination, sorted by
/// source id. Edge e runs from sources()[e] to destinations()[e]. Undirected
/// graphs store both directions. Optional per-edge features form a
/// [num_edges x d_e] matrix aligned with the edge order.
class Graph {
 public:
  struct Edge {
    std::size_t src;
    std::size_t dst;
  };

  Graph() = default;
  /// Validates the CSR invariants; throws IntegrityError on violation.
  Graph(std::size_t num_nodes, std::vector<std::size_t> offsets, std::vector<std::size_t> sources,
        Matrix edge_features = {}, bool directed = false);

  /// Canonicalizes an edge list: sorts by (dst, src) and drops repeated
  /// (src, dst) pairs, keeping the first occurrence and its feature row.
  static Graph from_edges(std::size_t num_nodes, std::span<const Edge> edges, const Matrix* edge_features = nullptr,
                          bool directed = false);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return sources_.size(); }
  bool directed() const { return directed_; }

  std::span<const std::size_t> offsets() const { return offsets_; }
  std::span<const std::size_t> sources() const { return sources_; }
  std::span<const std::size_t> destinations() const { return destinations_; }
  std::span<const std::size_t> in_neighbors(std::size_t node) const {
    return {sources_.data() + offsets_[node], offsets_[node + 1] - offsets_[node]};
  }
  std::size_t in_degree(std::size_t node) const { return offsets_[node + 1] - offsets_[node]; }
  /// In-degree with self-loops excluded.
  std::size_t neighbor_count(std::size_t node) const { return neighbor_count_[node]; }
  bool has_self_loop(std::size_t node) const;
  std::vector<Edge> edges() const;

  bool has_edge_features() const { return edge_features_.cols > 0; }
  std::size_t edge_feature_dim() const { return edge_features_.cols; }
  const Matrix& edge_features() const { return edge_features_; }

 private:
  std::size_t num_nodes_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> sources_;
  std::vector<std::size_t> destinations_;
  std::vector<std::size_t> neighbor_count_;
  Matrix edge_features_;
  bool directed_ = false;
};

/// Returns g with exactly one self-edge per node. Existing self-edges are kept
/// as is; new ones get zero feature rows.
Graph add_self_loops(const Graph& g);

/// D^{-1} A over in-edges: entry (i, j) is 1/d_i for every edge j -> i, where
/// d_i counts all in-edges of i. Degree-0 nodes get an all-zero row.
CsrMatrix row_normalized_adjacency(const Graph& g);

/// Exact counts of in-degree (self-loops excluded) over all nodes.
std::map<std::size_t, std::size_t> degree_histogram(const Graph& g);

enum class Split : std::uint8_t { train, valid, test };
enum class TaskKind : std::uint8_t { multiclass, multilabel };

std::string to_string(Split split);
Split split_from_string(const std::string& text);

struct NodeData {
  Matrix features;  // X, [n x m]
  TaskKind task = TaskKind::multiclass;
  std::size_t num_classes = 0;
  std::vector<std::size_t> classes;  // per node, multiclass only
  Matrix label_matrix;               // [n x c]: one-hot rows or binary task matrix
  std::vector<Split> split;

  std::size_t num_nodes() const { return split.size(); }
  std::vector<std::size_t> nodes_in(Split s) const;
  /// Throws IntegrityError when sizes or label ranges are inconsistent.
  void validate() const;

  static NodeData multiclass(Matrix features, std::vector<std::size_t> classes, std::size_t num_classes,
                             std::vector<Split> split);
  static NodeData multilabel(Matrix features, Matrix label_matrix, std::vector<Split> split);
};

struct Dataset {
  Graph graph;
  NodeData nodes;
};

/// Partially observed label matrix together with per-node observed and masked
/// flags. Rows of unobserved nodes are zero; a masked node is always observed.
struct LabelState {
  Matrix one_hot;
  std::vector<std::uint8_t> observed;
  std::vector<std::uint8_t> masked;

  /// Observes exactly the listed nodes, nothing masked.
  static LabelState observe(const NodeData& nodes, std::span<const std::size_t> observed_nodes);

  std::size_t num_nodes() const { return observed.size(); }
  bool visible(std::size_t node) const { return observed[node] && !masked[node]; }
  /// The model-input view: rows of unobserved or masked nodes are zeroed.
  Matrix input_view() const;
  void validate() const;
};

}  // namespace unimp
