#pragma once

// All-pairs shortest paths on the line graph plus its virtual node.
//
// Real-to-real distances ignore the virtual node; otherwise every pair would be
// at most two hops apart. The virtual node sits one hop from every real node,
// through a single shared virtual edge whose index is n_edges().

#include <cstddef>
#include <deque>
#include <vector>

#include "galformer/linegraph/line_graph.hpp"

namespace galformer::sc {

inline constexpr int kUnreachable = -1;

struct ShortestPathTable {
  std::size_t V = 0;  // n + 1
  std::vector<int> length;                           // [V x V]
  std::vector<std::vector<std::size_t>> node_seq;    // V*V entries, both endpoints included
  std::vector<std::vector<std::size_t>> edge_seq;    // V*V entries, length node_seq - 1

  int len(std::size_t i, std::size_t j) const { return length[i * V + j]; }
  const std::vector<std::size_t>& nodes(std::size_t i, std::size_t j) const { return node_seq[i * V + j]; }
  const std::vector<std::size_t>& edges(std::size_t i, std::size_t j) const { return edge_seq[i * V + j]; }
};

/// BFS from every real node. Among equal-length paths the node sequence that is
/// lexicographically smallest is kept.
inline ShortestPathTable all_pairs_shortest_paths(const lg::LineGraph& g) {
  const std::size_t n = g.n_nodes();
  const std::size_t V = n + 1;
  const std::size_t virt = n;
  const std::size_t virt_edge = g.n_edges();
  const auto nb = g.neighbours();

  // edge index lookup for adjacent real pairs
  std::vector<std::size_t> edge_id(n * n, 0);
  for (std::size_t k = 0; k < g.n_edges(); ++k) {
    edge_id[g.edges[k].i * n + g.edges[k].j] = k;
    edge_id[g.edges[k].j * n + g.edges[k].i] = k;
  }

  ShortestPathTable t;
  t.V = V;
  t.length.assign(V * V, kUnreachable);
  t.node_seq.assign(V * V, {});
  t.edge_seq.assign(V * V, {});

  std::vector<int> dist(n * n, kUnreachable);  // real part
  for (std::size_t s = 0; s < n; ++s) {
    std::deque<std::size_t> q{s};
    dist[s * n + s] = 0;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop_front();
      for (auto w : nb[u])
        if (dist[s * n + w] == kUnreachable) {
          dist[s * n + w] = dist[s * n + u] + 1;
          q.push_back(w);
        }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const int d = dist[i * n + j];
      t.length[i * V + j] = d;
      if (d == kUnreachable) continue;
      auto& nodes = t.node_seq[i * V + j];
      auto& edges = t.edge_seq[i * V + j];
      nodes.push_back(i);
      std::size_t u = i;
      while (u != j) {
        // neighbours are sorted, so the first one on a shortest path is the smallest
        for (auto w : nb[u])
          if (dist[w * n + j] == dist[u * n + j] - 1) {
            edges.push_back(edge_id[u * n + w]);
            u = w;
            break;
          }
        nodes.push_back(u);
      }
    }
    t.length[i * V + virt] = 1;
    t.length[virt * V + i] = 1;
    t.node_seq[i * V + virt] = {i, virt};
    t.node_seq[virt * V + i] = {virt, i};
    t.edge_seq[i * V + virt] = {virt_edge};
    t.edge_seq[virt * V + i] = {virt_edge};
  }
  t.length[virt * V + virt] = 0;
  t.node_seq[virt * V + virt] = {virt};
  return t;
}

}  // namespace galformer::sc
