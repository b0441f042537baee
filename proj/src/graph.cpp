#include "unimp/graph.hpp"

#include <algorithm>
#include <numeric>

#include "unimp/errors.hpp"

namespace unimp {

Graph::Graph(std::size_t num_nodes, std::vector<std::size_t> offsets, std::vector<std::size_t> sources,
             Matrix edge_features, bool directed)
    : num_nodes_(num_nodes),
      offsets_(std::move(offsets)),
      sources_(std::move(sources)),
      edge_features_(std::move(edge_features)),
      directed_(directed) {
  if (offsets_.size() != num_nodes_ + 1 || offsets_.front() != 0 || offsets_.back() != sources_.size()) {
    throw IntegrityError("graph: offsets must have n+1 entries from 0 to num_edges");
  }
  for (std::size_t i = 0; i < num_nodes_; ++i) {
    if (offsets_[i] > offsets_[i + 1]) throw IntegrityError("graph: offsets decrease at node " + std::to_string(i));
  }
  for (std::size_t s : sources_) {
    if (s >= num_nodes_) throw IntegrityError("graph: source id " + std::to_string(s) + " out of range");
  }
  if (edge_features_.cols > 0 && edge_features_.rows != sources_.size()) {
    throw IntegrityError("graph: " + std::to_string(edge_features_.rows) + " edge feature rows for " +
                         std::to_string(sources_.size()) + " edges");
  }
  destinations_.resize(sources_.size());
  neighbor_count_.assign(num_nodes_, 0);
  for (std::size_t i = 0; i < num_nodes_; ++i)
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      destinations_[e] = i;
      if (sources_[e] != i) ++neighbor_count_[i];
    }
}

Graph Graph::from_edges(std::size_t num_nodes, std::span<const Edge> edges, const Matrix* edge_features,
                        bool directed) {
  const bool with_features = edge_features != nullptr && edge_features->cols > 0;
  if (with_features && edge_features->rows != edges.size()) {
    throw IntegrityError("graph: edge feature rows do not match edge count");
  }
  for (const Edge& e : edges) {
    if (e.src >= num_nodes || e.dst >= num_nodes) {
      throw IntegrityError("graph: edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                           ") references a node outside [0, " + std::to_string(num_nodes) + ")");
    }
  }
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return edges[a].dst != edges[b].dst ? edges[a].dst < edges[b].dst : edges[a].src < edges[b].src;
  });
  order.erase(std::unique(order.begin(), order.end(),
                          [&](std::size_t a, std::size_t b) {
                            return edges[a].dst == edges[b].dst && edges[a].src == edges[b].src;
                          }),
              order.end());

  std::vector<std::size_t> offsets(num_nodes + 1, 0), sources(order.size());
  Matrix features;
  if (with_features) features = Matrix(order.size(), edge_features->cols);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Edge& e = edges[order[k]];
    ++offsets[e.dst + 1];
    sources[k] = e.src;
    if (with_features) std::copy_n(edge_features->row(order[k]).data(), features.cols, features.row(k).data());
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return Graph(num_nodes, std::move(offsets), std::move(sources), std::move(features), directed);
}

bool Graph::has_self_loop(std::size_t node) const {
  const auto nb = in_neighbors(node);
  return std::binary_search(nb.begin(), nb.end(), node);
}

std::vector<Graph::Edge> Graph::edges() const {
  std::vector<Edge> out(num_edges());
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = {sources_[e], destinations_[e]};
  return out;
}

Graph add_self_loops(const Graph& g) {
  std::vector<Graph::Edge> edges = g.edges();
  Matrix features = g.edge_features();
  const std::size_t de = g.edge_feature_dim();
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (!g.has_self_loop(i)) {
      edges.push_back({i, i});
      if (de > 0) {
        features.values.resize(features.values.size() + de, 0.0);
        ++features.rows;
      }
    }
  }
  return Graph::from_edges(g.num_nodes(), edges, de > 0 ? &features : nullptr, g.directed());
}

CsrMatrix row_normalized_adjacency(const Graph& g) {
  CsrMatrix a;
  a.rows = a.cols = g.num_nodes();
  a.offsets.assign(g.offsets().begin(), g.offsets().end());
  a.indices.assign(g.sources().begin(), g.sources().end());
  a.values.resize(g.num_edges());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const double w = 1.0 / static_cast<double>(std::max<std::size_t>(g.in_degree(i), 1));
    for (std::size_t e = a.offsets[i]; e < a.offsets[i + 1]; ++e) a.values[e] = w;
  }
  return a;
}

std::map<std::size_t, std::size_t> degree_histogram(const Graph& g) {
  std::map<std::size_t, std::size_t> hist;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) ++hist[g.neighbor_count(i)];
  return hist;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::valid:
      return "valid";
    case Split::test:
      return "test";
  }
  return "?";
}

Split split_from_string(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "valid") return Split::valid;
  if (text == "test") return Split::test;
  throw ParseError("unknown split tag '" + text + "'");
}

std::vector<std::size_t> NodeData::nodes_in(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

void NodeData::validate() const {
  const std::size_t n = num_nodes();
  if (features.rows != n) {
    throw IntegrityError("node data: " + std::to_string(features.rows) + " feature rows for " + std::to_string(n) +
                         " nodes");
  }
  if (num_classes == 0) throw IntegrityError("node data: at least one class is required");
  if (label_matrix.rows != n || label_matrix.cols != num_classes) {
    throw IntegrityError("node data: label matrix must be [n x num_classes]");
  }
  if (task == TaskKind::multiclass) {
    if (classes.size() != n) throw IntegrityError("node data: one class per node is required");
    for (std::size_t i = 0; i < n; ++i) {
      if (classes[i] >= num_classes) {
        throw IntegrityError("node data: label " + std::to_string(classes[i]) + " of node " + std::to_string(i) +
                             " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
  }
  for (double v : label_matrix.values) {
    if (v != 0.0 && v != 1.0) throw IntegrityError("node data: label matrix entries must be 0 or 1");
  }
}

NodeData NodeData::multiclass(Matrix features, std::vector<std::size_t> classes, std::size_t num_classes,
                              std::vector<Split> split) {
  NodeData d;
  d.features = std::move(features);
  d.task = TaskKind::multiclass;
  d.num_classes = num_classes;
  d.label_matrix = Matrix(classes.size(), num_classes);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= num_classes) {
      throw IntegrityError("node data: label " + std::to_string(classes[i]) + " of node " + std::to_string(i) +
                           " outside [0, " + std::to_string(num_classes) + ")");
    }
    d.label_matrix(i, classes[i]) = 1.0;
  }
  d.classes = std::move(classes);
  d.split = std::move(split);
  d.validate();
  return d;
}

NodeData NodeData::multilabel(Matrix features, Matrix label_matrix, std::vector<Split> split) {
  NodeData d;
  d.features = std::move(features);
  d.task = TaskKind::multilabel;
  d.num_classes = label_matrix.cols;
  d.label_matrix = std::move(label_matrix);
  d.split = std::move(split);
  d.validate();
  return d;
}

LabelState LabelState::observe(const NodeData& nodes, std::span<const std::size_t> observed_nodes) {
  const std::size_t n = nodes.num_nodes();
  LabelState s;
  s.one_hot = Matrix(n, nodes.num_classes);
  s.observed.assign(n, 0);
  s.masked.assign(n, 0);
  for (std::size_t i : observed_nodes) {
    if (i >= n) throw ContractError("label state: node " + std::to_string(i) + " out of range");
    s.observed[i] = 1;
    std::copy_n(nodes.label_matrix.row(i).data(), nodes.num_classes, s.one_hot.row(i).data());
  }
  return s;
}

Matrix LabelState::input_view() const {
  Matrix view = one_hot;
  for (std::size_t i = 0; i < num_nodes(); ++i)
    if (!visible(i)) std::fill(view.row(i).begin(), view.row(i).end(), 0.0);
  return view;
}

void LabelState::validate() const {
  const std::size_t n = num_nodes();
  if (one_hot.rows != n || masked.size() != n) throw IntegrityError("label state: inconsistent sizes");
  for (std::size_t i = 0; i < n; ++i) {
    if (masked[i] && !observed[i]) throw IntegrityError("label state: node " + std::to_string(i) + " masked but not observed");
    if (!observed[i]) {
      for (double v : one_hot.row(i))
        if (v != 0.0) throw IntegrityError("label state: unobserved node " + std::to_string(i) + " has a label row");
    }
  }
}

}  // namespace unimp
