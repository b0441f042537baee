#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "unimp/graph.hpp"

namespace unimp {

/// A training subgraph expressed in local ids.
struct Subgraph {
  std::vector<std::size_t> node_map;  // local -> parent node id, injective
  Graph graph;                        // local ids, canonical CSR
  std::vector<std::size_t> edge_map;  // local edge -> parent edge id
  /// Neighbor sampling only: frontier[0] holds the seeds, frontier[l] the
  /// nodes reached after l hops (parent ids). Seeds are local ids [0, #seeds).
  std::vector<std::vector<std::size_t>> layer_frontiers;

  std::size_t num_nodes() const { return node_map.size(); }
};

/// Multi-hop neighbor sampling without replacement. Each expanded node keeps
/// at most fanouts[l] of its non-self in-edges at hop l + 1; every local node
/// keeps its parent self-loop. Throws ContractError for an empty seed set.
Subgraph sample_neighbors(const Graph& g, std::span<const std::size_t> seeds, std::span<const std::size_t> fanouts,
                          Rng& rng);

/// Shuffles the nodes and cuts them into k parts whose sizes differ by at most
/// one; returns the induced subgraph of each part with node ids ascending.
/// Throws ContractError unless 1 <= k <= n.
std::vector<Subgraph> random_partition(const Graph& g, std::size_t num_parts, Rng& rng);

/// Identity view of the whole graph.
Subgraph full_batch(const Graph& g);

}  // namespace unimp
