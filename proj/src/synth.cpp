#include "unimp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unimp/errors.hpp"

namespace unimp {

void SbmSpec::validate() const {
  if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0)) {
    throw ConfigError("sbm: need 0 <= p_out <= p_in <= 1");
  }
  if (c < 2 || n < c) throw ConfigError("sbm: need n >= c >= 2");
  if (m == 0) throw ConfigError("sbm: feature dimension must be positive");
  if (train_fraction < 0.0 || valid_fraction < 0.0 || train_fraction + valid_fraction > 1.0) {
    throw ConfigError("sbm: split fractions must be non-negative and sum to at most 1");
  }
}

double SbmSpec::expected_degree() const {
  const double block = static_cast<double>(n) / static_cast<double>(c);
  return (block - 1.0) * p_in + (static_cast<double>(n) - block) * p_out;
}

SbmResult generate_sbm(const SbmSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SbmResult result;
  if (spec.expected_degree() < 1.0) {
    result.warnings.push_back("sbm: expected degree " + std::to_string(spec.expected_degree()) +
                              " < 1, the graph will be mostly disconnected");
  }

  std::vector<std::size_t> classes(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) classes[i] = i % spec.c;
  std::shuffle(classes.begin(), classes.end(), rng);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Graph::Edge> edges;
  for (std::size_t i = 0; i < spec.n; ++i)
    for (std::size_t j = i + 1; j < spec.n; ++j) {
      const double p = classes[i] == classes[j] ? spec.p_in : spec.p_out;
      if (unit(rng) < p) {
        edges.push_back({i, j});
        edges.push_back({j, i});
      }
    }

  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means(spec.c, spec.m);
  const double mean_scale = spec.feature_signal / std::sqrt(static_cast<double>(spec.m));
  for (double& v : means.values) v = mean_scale * normal(rng);
  Matrix features(spec.n, spec.m);
  for (std::size_t i = 0; i < spec.n; ++i)
    for (std::size_t k = 0; k < spec.m; ++k) features(i, k) = means(classes[i], k) + normal(rng);

  std::vector<std::size_t> perm(spec.n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(spec.n)));
  const auto n_valid = static_cast<std::size_t>(std::floor(spec.valid_fraction * static_cast<double>(spec.n)));
  std::vector<Split> split(spec.n, Split::test);
  for (std::size_t r = 0; r < n_train + n_valid && r < spec.n; ++r) split[perm[r]] = r < n_train ? Split::train : Split::valid;

  result.data.graph = Graph::from_edges(spec.n, edges);
  result.data.nodes = NodeData::multiclass(std::move(features), std::move(classes), spec.c, std::move(split));
  return result;
}

}  // namespace unimp
