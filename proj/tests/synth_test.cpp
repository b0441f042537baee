#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "unimp/errors.hpp"
#include "unimp/synth.hpp"

using namespace unimp;

TEST_CASE("sbm with p_out = 0 only has within-class edges") {
  SbmSpec spec;
  spec.n = 400;
  spec.p_in = 0.05;
  spec.p_out = 0.0;
  const Dataset d = generate_sbm(spec).data;
  CHECK(d.graph.num_edges() > 0);
  for (const auto& e : d.graph.edges()) CHECK(d.nodes.classes[e.src] == d.nodes.classes[e.dst]);
}

TEST_CASE("sbm within-class edge fraction matches the analytic expectation") {
  SbmSpec spec;
  spec.n = 1000;
  spec.c = 4;
  spec.p_in = 0.03;
  spec.p_out = 0.002;
  spec.seed = 9;
  const Dataset d = generate_sbm(spec).data;
  std::size_t within = 0;
  for (const auto& e : d.graph.edges()) within += d.nodes.classes[e.src] == d.nodes.classes[e.dst];
  const double block = 250.0;
  const double within_pairs = 4.0 * block * (block - 1.0) / 2.0;
  const double cross_pairs = 1000.0 * 999.0 / 2.0 - within_pairs;
  const double expected = within_pairs * spec.p_in / (within_pairs * spec.p_in + cross_pairs * spec.p_out);
  const double observed = static_cast<double>(within) / static_cast<double>(d.graph.num_edges());
  CHECK(std::abs(observed - expected) < 0.03);
}

TEST_CASE("sbm feature signal controls class separation") {
  SbmSpec spec;
  spec.n = 4000;
  spec.m = 8;
  spec.feature_signal = 0.0;
  const Dataset flat = generate_sbm(spec).data;
  // Per-class feature means sit at the origin up to sampling noise.
  for (std::size_t k = 0; k < spec.c; ++k) {
    std::vector<double> mean(spec.m, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < spec.n; ++i)
      if (flat.nodes.classes[i] == k) {
        ++count;
        for (std::size_t j = 0; j < spec.m; ++j) mean[j] += flat.nodes.features(i, j);
      }
    for (double v : mean) CHECK(std::abs(v / static_cast<double>(count)) < 0.15);
  }
}

TEST_CASE("sbm determinism, balance, splits and validation") {
  SbmSpec spec;
  spec.n = 503;
  spec.c = 5;
  spec.seed = 4;
  const Dataset a = generate_sbm(spec).data, b = generate_sbm(spec).data;
  CHECK(a.nodes.features == b.nodes.features);
  CHECK(a.nodes.classes == b.nodes.classes);
  CHECK(std::vector<std::size_t>(a.graph.sources().begin(), a.graph.sources().end()) ==
        std::vector<std::size_t>(b.graph.sources().begin(), b.graph.sources().end()));

  std::vector<std::size_t> sizes(spec.c, 0);
  for (std::size_t c : a.nodes.classes) ++sizes[c];
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
  CHECK(a.nodes.nodes_in(Split::train).size() == 50);
  CHECK(a.nodes.nodes_in(Split::valid).size() == 100);
  CHECK(a.nodes.nodes_in(Split::test).size() == 353);

  SbmSpec sparse = spec;
  sparse.p_in = 0.001;
  sparse.p_out = 0.0;
  CHECK_FALSE(generate_sbm(sparse).warnings.empty());
  CHECK(generate_sbm(spec).warnings.empty());

  SbmSpec bad = spec;
  bad.p_out = 0.5;
  CHECK_THROWS_AS(generate_sbm(bad), ConfigError);
  bad = spec;
  bad.c = 1;
  CHECK_THROWS_AS(generate_sbm(bad), ConfigError);
}
