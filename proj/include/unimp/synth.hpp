#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unimp/graph.hpp"

namespace unimp {

/// Stochastic block model with Gaussian class-conditional features.
struct SbmSpec {
  std::size_t n = 2000;
  std::size_t c = 4;
  double p_in = 0.02;
  double p_out = 0.002;
  std::size_t m = 16;
  /// Expected Euclidean norm of each class mean. Noise is N(0, I_m).
  double feature_signal = 1.0;
  std::uint64_t seed = 0;
  double train_fraction = 0.1;
  double valid_fraction = 0.2;

  /// Throws ConfigError unless 0 <= p_out <= p_in <= 1, n >= c >= 2, m >= 1.
  void validate() const;
  /// Expected number of neighbors of a node.
  double expected_degree() const;
};

struct SbmResult {
  Dataset data;
  std::vector<std::string> warnings;
};

/// Classes are balanced (sizes differ by at most one) and randomly placed;
/// undirected edges are drawn independently with p_in inside a class and
/// p_out across. Splits are drawn at random: train_fraction / valid_fraction /
/// rest, floored. Deterministic in spec.seed.
SbmResult generate_sbm(const SbmSpec& spec);

}  // namespace unimp
