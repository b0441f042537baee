#include "unimp/samplers.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>
#include <unordered_map>

#include "unimp/errors.hpp"

namespace unimp {
namespace {

// Builds a Subgraph from parent edges whose endpoints are all in node_map.
Subgraph build_subgraph(const Graph& parent, std::vector<std::size_t> node_map,
                        const std::vector<std::size_t>& parent_edges) {
  std::unordered_map<std::size_t, std::size_t> local;
  local.reserve(node_map.size() * 2);
  for (std::size_t i = 0; i < node_map.size(); ++i) local.emplace(node_map[i], i);

  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> triples;  // (dst, src, parent edge)
  triples.reserve(parent_edges.size());
  for (std::size_t e : parent_edges) {
    triples.emplace_back(local.at(parent.destinations()[e]), local.at(parent.sources()[e]), e);
  }
  std::sort(triples.begin(), triples.end());

  const std::size_t n = node_map.size();
  std::vector<std::size_t> offsets(n + 1, 0), sources(triples.size()), edge_map(triples.size());
  Matrix features;
  const std::size_t de = parent.edge_feature_dim();
  if (de > 0) features = Matrix(triples.size(), de);
  for (std::size_t k = 0; k < triples.size(); ++k) {
    const auto [dst, src, e] = triples[k];
    ++offsets[dst + 1];
    sources[k] = src;
    edge_map[k] = e;
    if (de > 0) std::copy_n(parent.edge_features().row(e).data(), de, features.row(k).data());
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());

  Subgraph sub;
  sub.graph = Graph(n, std::move(offsets), std::move(sources), std::move(features), parent.directed());
  sub.node_map = std::move(node_map);
  sub.edge_map = std::move(edge_map);
  return sub;
}

}  // namespace

Subgraph sample_neighbors(const Graph& g, std::span<const std::size_t> seeds, std::span<const std::size_t> fanouts,
                          Rng& rng) {
  if (seeds.empty()) throw ContractError("sample_neighbors: empty seed set");
  std::vector<std::size_t> node_map;
  std::vector<std::uint8_t> in_sub(g.num_nodes(), 0), expanded(g.num_nodes(), 0);
  for (std::size_t s : seeds) {
    if (s >= g.num_nodes()) throw ContractError("sample_neighbors: seed " + std::to_string(s) + " out of range");
    if (!in_sub[s]) {
      in_sub[s] = 1;
      node_map.push_back(s);
    }
  }

  std::vector<std::vector<std::size_t>> frontiers{node_map};
  std::vector<std::size_t> chosen_edges;
  std::vector<std::size_t> candidates;
  for (std::size_t fanout : fanouts) {
    std::vector<std::size_t> next = frontiers.back();
    for (std::size_t v : frontiers.back()) {
      if (expanded[v]) continue;
      expanded[v] = 1;
      candidates.clear();
      for (std::size_t e = g.offsets()[v]; e < g.offsets()[v + 1]; ++e)
        if (g.sources()[e] != v) candidates.push_back(e);
      const std::size_t take = std::min(fanout, candidates.size());
      for (std::size_t k = 0; k < take; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
        std::swap(candidates[k], candidates[pick(rng)]);
        const std::size_t e = candidates[k];
        chosen_edges.push_back(e);
        const std::size_t u = g.sources()[e];
        if (!in_sub[u]) {
          in_sub[u] = 1;
          node_map.push_back(u);
          next.push_back(u);
        }
      }
    }
    frontiers.push_back(std::move(next));
  }
  for (std::size_t v : node_map) {
    const auto nb = g.in_neighbors(v);
    const auto it = std::lower_bound(nb.begin(), nb.end(), v);
    if (it != nb.end() && *it == v) chosen_edges.push_back(g.offsets()[v] + static_cast<std::size_t>(it - nb.begin()));
  }

  Subgraph sub = build_subgraph(g, std::move(node_map), chosen_edges);
  sub.layer_frontiers = std::move(frontiers);
  return sub;
}

std::vector<Subgraph> random_partition(const Graph& g, std::size_t num_parts, Rng& rng) {
  const std::size_t n = g.num_nodes();
  if (num_parts < 1 || num_parts > n) {
    throw ContractError("random_partition: need 1 <= k <= n, got k = " + std::to_string(num_parts) + ", n = " +
                        std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::size_t> part_of(n);
  std::vector<std::vector<std::size_t>> members(num_parts);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t p = r * num_parts / n;
    part_of[perm[r]] = p;
  }
  for (std::size_t v = 0; v < n; ++v) members[part_of[v]].push_back(v);

  std::vector<std::vector<std::size_t>> part_edges(num_parts);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const std::size_t p = part_of[g.destinations()[e]];
    if (part_of[g.sources()[e]] == p) part_edges[p].push_back(e);
  }
  std::vector<Subgraph> parts;
  parts.reserve(num_parts);
  for (std::size_t p = 0; p < num_parts; ++p) parts.push_back(build_subgraph(g, std::move(members[p]), part_edges[p]));
  return parts;
}

Subgraph full_batch(const Graph& g) {
  Subgraph sub;
  sub.graph = g;
  sub.node_map.resize(g.num_nodes());
  std::iota(sub.node_map.begin(), sub.node_map.end(), std::size_t{0});
  sub.edge_map.resize(g.num_edges());
  std::iota(sub.edge_map.begin(), sub.edge_map.end(), std::size_t{0});
  return sub;
}

}  // namespace unimp
