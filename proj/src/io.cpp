#include "unimp/io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "unimp/errors.hpp"

namespace fs = std::filesystem;

namespace unimp {
namespace {

struct Line {
  std::size_t number;
  std::string text;
};

std::vector<Line> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<Line> lines;
  std::string text;
  std::size_t number = 0;
  while (std::getline(in, text)) {
    ++number;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back({number, text});
  }
  return lines;
}

[[noreturn]] void fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> tokens(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (sep == ' ') {
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
  }
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
  }
  return out;
}

double parse_double(const std::string& tok, const fs::path& path, std::size_t line) {
  if (tok.empty()) fail(path, line, "empty number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || errno == ERANGE) fail(path, line, "not a number: '" + tok + "'");
  return v;
}

long long parse_int(const std::string& tok, const fs::path& path, std::size_t line) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) fail(path, line, "not an integer: '" + tok + "'");
  return v;
}

}  // namespace

DatasetPaths DatasetPaths::in_directory(const fs::path& dir) {
  return {dir / "edges.txt", dir / "features.csv", dir / "labels.txt", dir / "splits.txt"};
}

Dataset load_graph(const DatasetPaths& paths, const LoadOptions& options) {
  // Edges.
  std::vector<Graph::Edge> edges;
  std::vector<double> edge_values;
  std::size_t edge_dim = 0;
  std::size_t max_id = 0;
  bool any_edge = false;
  const auto edge_lines = read_lines(paths.edges);
  for (const Line& line : edge_lines) {
    const auto tok = tokens(line.text, ' ');
    if (tok.size() < 2) fail(paths.edges, line.number, "expected 'src dst [features...]'");
    const long long src = parse_int(tok[0], paths.edges, line.number);
    const long long dst = parse_int(tok[1], paths.edges, line.number);
    if (src < 0 || dst < 0) fail(paths.edges, line.number, "negative node id");
    if (!any_edge) edge_dim = tok.size() - 2;
    if (tok.size() - 2 != edge_dim) {
      fail(paths.edges, line.number,
           "expected " + std::to_string(edge_dim) + " edge features, got " + std::to_string(tok.size() - 2));
    }
    any_edge = true;
    edges.push_back({static_cast<std::size_t>(src), static_cast<std::size_t>(dst)});
    for (std::size_t k = 2; k < tok.size(); ++k) edge_values.push_back(parse_double(tok[k], paths.edges, line.number));
    max_id = std::max({max_id, edges.back().src, edges.back().dst});
  }

  // Labels.
  const auto label_lines = read_lines(paths.labels);
  bool multilabel = false;
  std::size_t label_width = 0;
  std::vector<long long> classes;
  std::vector<double> bits;
  for (const Line& line : label_lines) {
    const auto tok = tokens(line.text, ' ');
    if (label_width == 0) {
      label_width = tok.size();
      multilabel = label_width > 1;
    }
    if (tok.size() != label_width) {
      fail(paths.labels, line.number,
           "expected " + std::to_string(label_width) + " label fields, got " + std::to_string(tok.size()));
    }
    if (multilabel) {
      for (const auto& t : tok) {
        const long long b = parse_int(t, paths.labels, line.number);
        if (b != 0 && b != 1) {
          throw IntegrityError(paths.labels.string() + ":" + std::to_string(line.number) +
                               ": multi-label entries must be 0 or 1");
        }
        bits.push_back(static_cast<double>(b));
      }
    } else {
      const long long c = parse_int(tok[0], paths.labels, line.number);
      if (c < 0 || (options.num_classes > 0 && static_cast<std::size_t>(c) >= options.num_classes)) {
        throw IntegrityError(paths.labels.string() + ":" + std::to_string(line.number) + ": label " +
                             std::to_string(c) + " out of range");
      }
      classes.push_back(c);
    }
  }
  const std::size_t n_labels = label_lines.size();

  // Features.
  Matrix features;
  const bool have_feature_file = !paths.features.empty();
  if (have_feature_file) {
    const auto feature_lines = read_lines(paths.features);
    std::size_t m = 0;
    std::vector<double> values;
    for (const Line& line : feature_lines) {
      const auto tok = tokens(line.text, ',');
      if (m == 0) m = tok.size();
      if (tok.size() != m) {
        fail(paths.features, line.number, "expected " + std::to_string(m) + " columns, got " + std::to_string(tok.size()));
      }
      for (const auto& t : tok) values.push_back(parse_double(t, paths.features, line.number));
    }
    features.rows = feature_lines.size();
    features.cols = m;
    features.values = std::move(values);
  } else if (!options.average_edge_features) {
    throw IntegrityError("no feature file given and edge-feature averaging disabled");
  }
  const std::size_t n = have_feature_file ? features.rows : n_labels;

  if (n_labels != n) {
    throw IntegrityError(std::to_string(n) + " nodes in " + paths.features.string() + " but " +
                         std::to_string(n_labels) + " lines in " + paths.labels.string());
  }
  if (any_edge && max_id >= n) {
    throw IntegrityError("edge file references node " + std::to_string(max_id) + " but only " + std::to_string(n) +
                         " nodes are described");
  }

  // Splits.
  std::vector<Split> split;
  for (const Line& line : read_lines(paths.splits)) {
    const auto tok = tokens(line.text, ' ');
    if (tok.size() != 1) fail(paths.splits, line.number, "expected a single split tag");
    try {
      split.push_back(split_from_string(tok[0]));
    } catch (const ParseError& e) {
      fail(paths.splits, line.number, e.what());
    }
  }
  if (split.size() != n) {
    throw IntegrityError(std::to_string(split.size()) + " split lines for " + std::to_string(n) + " nodes");
  }

  Matrix edge_features;
  if (edge_dim > 0) {
    edge_features.rows = edges.size();
    edge_features.cols = edge_dim;
    edge_features.values = std::move(edge_values);
  }
  if (!options.directed) {
    const std::size_t original = edges.size();
    for (std::size_t k = 0; k < original; ++k) edges.push_back({edges[k].dst, edges[k].src});
    if (edge_dim > 0) {
      edge_features.values.reserve(edge_features.values.size() * 2);
      for (std::size_t k = 0; k < original * edge_dim; ++k) edge_features.values.push_back(edge_features.values[k]);
      edge_features.rows *= 2;
    }
  }
  Graph graph = Graph::from_edges(n, edges, edge_dim > 0 ? &edge_features : nullptr, options.directed);

  if (options.average_edge_features) {
    if (!graph.has_edge_features()) throw IntegrityError("edge-feature averaging requested but edges carry no features");
    Matrix averaged(n, edge_dim);
    std::vector<std::size_t> count(n, 0);
    const auto& ef = graph.edge_features();
    for (std::size_t e = 0; e < graph.num_edges(); ++e) {
      for (std::size_t endpoint : {graph.sources()[e], graph.destinations()[e]}) {
        ++count[endpoint];
        for (std::size_t k = 0; k < edge_dim; ++k) averaged(endpoint, k) += ef(e, k);
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      if (count[i] > 0)
        for (std::size_t k = 0; k < edge_dim; ++k) averaged(i, k) /= static_cast<double>(count[i]);
    features = std::move(averaged);
  }

  NodeData nodes;
  if (multilabel) {
    Matrix labels(n, label_width);
    labels.values = std::move(bits);
    nodes = NodeData::multilabel(std::move(features), std::move(labels), std::move(split));
  } else {
    std::vector<std::size_t> cls(classes.begin(), classes.end());
    std::size_t c = options.num_classes;
    if (c == 0)
      for (std::size_t v : cls) c = std::max(c, v + 1);
    nodes = NodeData::multiclass(std::move(features), std::move(cls), c, std::move(split));
  }
  return {std::move(graph), std::move(nodes)};
}

std::string format_exact(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_dataset(const Dataset& data, const DatasetPaths& paths) {
  const Graph& g = data.graph;
  const NodeData& nodes = data.nodes;
  std::ostringstream edges, features, labels, splits;
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    edges << g.sources()[e] << ' ' << g.destinations()[e];
    for (std::size_t k = 0; k < g.edge_feature_dim(); ++k) edges << ' ' << format_exact(g.edge_features()(e, k));
    edges << '\n';
  }
  for (std::size_t i = 0; i < nodes.num_nodes(); ++i) {
    for (std::size_t k = 0; k < nodes.features.cols; ++k) {
      if (k) features << ',';
      features << format_exact(nodes.features(i, k));
    }
    features << '\n';
    if (nodes.task == TaskKind::multiclass) {
      labels << nodes.classes[i] << '\n';
    } else {
      for (std::size_t k = 0; k < nodes.num_classes; ++k) labels << (k ? " " : "") << nodes.label_matrix(i, k);
      labels << '\n';
    }
    splits << to_string(nodes.split[i]) << '\n';
  }
  write_file_atomic(paths.edges, edges.str());
  if (!paths.features.empty()) write_file_atomic(paths.features, features.str());
  write_file_atomic(paths.labels, labels.str());
  write_file_atomic(paths.splits, splits.str());
}

}  // namespace unimp
