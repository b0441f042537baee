#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "doctest.h"
#include "unimp/errors.hpp"
#include "unimp/io.hpp"
#include "unimp/synth.hpp"

using namespace unimp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("unimp_graph_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

DatasetPaths write_dataset(const TempDir& dir, const std::string& edges, const std::string& features,
                           const std::string& labels, const std::string& splits) {
  return {dir.write("edges.txt", edges), dir.write("features.csv", features), dir.write("labels.txt", labels),
          dir.write("splits.txt", splits)};
}

Graph triangle() {
  const std::vector<Graph::Edge> e{{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 0}, {0, 2}};
  return Graph::from_edges(3, e);
}

}  // namespace

TEST_CASE("load_graph reads a triangle and symmetrizes it") {
  TempDir dir;
  auto paths = write_dataset(dir, "0 1\n1 2\n2 0\n", "1,0\n0,1\n1,1\n", "0\n1\n0\n", "train\nvalid\ntest\n");
  Dataset d = load_graph(paths);
  CHECK(d.graph.num_nodes() == 3);
  CHECK(d.graph.num_edges() == 6);
  CHECK(d.nodes.features.cols == 2);
  CHECK(d.nodes.num_classes == 2);
  CHECK(d.nodes.split[1] == Split::valid);
  for (std::size_t i = 0; i < 3; ++i) CHECK(d.graph.in_degree(i) == 2);

  LoadOptions directed;
  directed.directed = true;
  Dataset dd = load_graph(paths, directed);
  CHECK(dd.graph.num_edges() == 3);
  CHECK(dd.graph.directed());
}

TEST_CASE("load_graph integrity and parse errors") {
  TempDir dir;
  SUBCASE("node ids beyond the feature rows") {
    auto paths = write_dataset(dir, "0 1\n4 5\n", "1\n2\n3\n4\n", "0\n0\n0\n0\n", "train\ntrain\ntest\ntest\n");
    CHECK_THROWS_AS(load_graph(paths), IntegrityError);
  }
  SUBCASE("label count disagrees with features") {
    auto paths = write_dataset(dir, "0 1\n", "1\n2\n", "0\n", "train\ntest\n");
    CHECK_THROWS_AS(load_graph(paths), IntegrityError);
  }
  SUBCASE("out-of-range label") {
    auto paths = write_dataset(dir, "0 1\n", "1\n2\n", "0\n3\n", "train\ntest\n");
    LoadOptions opt;
    opt.num_classes = 3;
    CHECK_THROWS_AS(load_graph(paths, opt), IntegrityError);
    auto negative = write_dataset(dir, "0 1\n", "1\n2\n", "0\n-1\n", "train\ntest\n");
    CHECK_THROWS_AS(load_graph(negative), IntegrityError);
  }
  SUBCASE("malformed line reports its number") {
    auto paths = write_dataset(dir, "0 1\n1 x\n", "1\n2\n", "0\n1\n", "train\ntest\n");
    try {
      load_graph(paths);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("edges.txt:2") != std::string::npos);
    }
  }
  SUBCASE("ragged feature rows") {
    auto paths = write_dataset(dir, "0 1\n", "1,2\n2\n", "0\n1\n", "train\ntest\n");
    CHECK_THROWS_AS(load_graph(paths), ParseError);
  }
  SUBCASE("unknown split tag") {
    auto paths = write_dataset(dir, "0 1\n", "1\n2\n", "0\n1\n", "train\nholdout\n");
    CHECK_THROWS_AS(load_graph(paths), ParseError);
  }
}

TEST_CASE("proteins-style edge features and multi-label targets") {
  TempDir dir;
  std::string edges;
  for (int e = 0; e < 3; ++e) {
    edges += std::to_string(e) + " " + std::to_string(e + 1);
    for (int k = 0; k < 8; ++k) edges += " " + std::to_string(0.1 * (e + 1) * (k + 1));
    edges += "\n";
  }
  DatasetPaths paths{dir.write("edges.txt", edges), {}, dir.write("labels.txt", "1 0 1\n0 0 1\n1 1 0\n0 0 0\n"),
                     dir.write("splits.txt", "train\ntrain\nvalid\ntest\n")};
  LoadOptions opt;
  opt.average_edge_features = true;
  Dataset d = load_graph(paths, opt);
  CHECK(d.graph.has_edge_features());
  CHECK(d.graph.edge_features().rows == d.graph.num_edges());
  CHECK(d.graph.edge_feature_dim() == 8);
  CHECK(d.nodes.task == TaskKind::multilabel);
  CHECK(d.nodes.num_classes == 3);
  // Node 1 touches edges 0-1 (0.1*(k+1)) and 1-2 (0.2*(k+1)).
  CHECK(d.nodes.features(1, 0) == doctest::Approx(0.15));
  CHECK(d.nodes.features(0, 7) == doctest::Approx(0.8));
  CHECK(d.nodes.features(3, 0) == doctest::Approx(0.3));
}

TEST_CASE("add_self_loops") {
  Graph empty = Graph::from_edges(4, std::vector<Graph::Edge>{});
  Graph looped = add_self_loops(empty);
  CHECK(looped.num_edges() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(looped.has_self_loop(i));

  const std::vector<Graph::Edge> e{{0, 1}, {2, 2}, {1, 2}};
  Matrix feats(3, 2, 1.0);
  Graph g = Graph::from_edges(3, e, &feats, true);
  Graph once = add_self_loops(g);
  Graph twice = add_self_loops(once);
  CHECK(once.num_edges() == g.num_edges() + 3 - 1);
  CHECK(std::vector<std::size_t>(once.sources().begin(), once.sources().end()) ==
        std::vector<std::size_t>(twice.sources().begin(), twice.sources().end()));
  CHECK(once.edge_features() == twice.edge_features());
  std::size_t count22 = 0;
  for (std::size_t s : once.in_neighbors(2)) count22 += s == 2;
  CHECK(count22 == 1);
  for (std::size_t k = 0; k < once.num_edges(); ++k) {
    const bool self = once.sources()[k] == once.destinations()[k];
    const bool original_self = self && once.destinations()[k] == 2;
    CHECK(once.edge_features()(k, 0) == ((self && !original_self) ? 0.0 : 1.0));
  }
}

TEST_CASE("row_normalized_adjacency") {
  Matrix a = row_normalized_adjacency(triangle()).to_dense();
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a(i, i) == 0.0);
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) CHECK(a(i, j) == 0.5);
  }
  const std::vector<Graph::Edge> path{{0, 1}, {1, 0}, {1, 2}, {2, 1}};
  Matrix p = row_normalized_adjacency(Graph::from_edges(4, path)).to_dense();
  CHECK(p(0, 1) == 1.0);
  CHECK(p(0, 0) + p(0, 2) + p(0, 3) == 0.0);
  for (std::size_t j = 0; j < 4; ++j) CHECK(p(3, j) == 0.0);

  SbmSpec spec;
  spec.n = 300;
  spec.p_in = 0.02;
  spec.p_out = 0.002;
  Graph g = generate_sbm(spec).data.graph;
  CsrMatrix an = row_normalized_adjacency(g);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    double total = 0.0;
    for (std::size_t e = an.offsets[i]; e < an.offsets[i + 1]; ++e) total += an.values[e];
    CHECK(std::abs(total - (g.in_degree(i) > 0 ? 1.0 : 0.0)) < 1e-12);
  }
}

TEST_CASE("degree_histogram") {
  CHECK(degree_histogram(triangle()) == std::map<std::size_t, std::size_t>{{2, 3}});
  const std::vector<Graph::Edge> star{{0, 1}, {1, 0}, {0, 2}, {2, 0}, {0, 3}, {3, 0}, {0, 4}, {4, 0}};
  CHECK(degree_histogram(Graph::from_edges(5, star)) == std::map<std::size_t, std::size_t>{{1, 4}, {4, 1}});
  CHECK(degree_histogram(add_self_loops(triangle())) == std::map<std::size_t, std::size_t>{{2, 3}});

  SbmSpec spec;
  spec.n = 500;
  spec.seed = 3;
  Graph g = generate_sbm(spec).data.graph;
  std::size_t total = 0, edge_total = 0;
  for (auto [deg, count] : degree_histogram(g)) {
    total += count;
    edge_total += deg * count;
  }
  CHECK(total == 500);
  CHECK(edge_total == g.num_edges());
}

TEST_CASE("dataset files round-trip losslessly") {
  TempDir dir;
  SbmSpec spec;
  spec.n = 200;
  spec.seed = 12;
  Dataset original = generate_sbm(spec).data;
  const auto paths = DatasetPaths::in_directory(dir.path);
  save_dataset(original, paths);
  Dataset loaded = load_graph(paths, LoadOptions{false, false, spec.c});
  CHECK(std::vector<std::size_t>(loaded.graph.offsets().begin(), loaded.graph.offsets().end()) ==
        std::vector<std::size_t>(original.graph.offsets().begin(), original.graph.offsets().end()));
  CHECK(std::vector<std::size_t>(loaded.graph.sources().begin(), loaded.graph.sources().end()) ==
        std::vector<std::size_t>(original.graph.sources().begin(), original.graph.sources().end()));
  CHECK(loaded.nodes.features == original.nodes.features);
  CHECK(loaded.nodes.classes == original.nodes.classes);
  CHECK(loaded.nodes.split == original.nodes.split);

  // Serialize the reloaded copy once more: still identical.
  TempDir again;
  save_dataset(loaded, DatasetPaths::in_directory(again.path));
  Dataset third = load_graph(DatasetPaths::in_directory(again.path), LoadOptions{false, false, spec.c});
  CHECK(std::vector<std::size_t>(third.graph.sources().begin(), third.graph.sources().end()) ==
        std::vector<std::size_t>(original.graph.sources().begin(), original.graph.sources().end()));
}

TEST_CASE("LabelState views and invariants") {
  NodeData nodes = NodeData::multiclass(Matrix(4, 1), {0, 1, 2, 1}, 3,
                                        {Split::train, Split::train, Split::valid, Split::test});
  const std::vector<std::size_t> observed{0, 1};
  LabelState s = LabelState::observe(nodes, observed);
  s.validate();
  CHECK(s.one_hot(1, 1) == 1.0);
  CHECK(s.one_hot(2, 2) == 0.0);
  s.masked[1] = 1;
  Matrix view = s.input_view();
  CHECK(view(0, 0) == 1.0);
  CHECK(view(1, 1) == 0.0);
  s.masked[3] = 1;
  CHECK_THROWS_AS(s.validate(), IntegrityError);
  CHECK_THROWS_AS(NodeData::multiclass(Matrix(2, 1), {0, 3}, 3, {Split::train, Split::test}), IntegrityError);
}
