#pragma once

// Line graph of a molecule: one node per bond, one edge per pair of bonds that
// share an atom. An extra virtual node (index n_nodes()) links to everything;
// it is not stored in `edges`.

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "galformer/errors.hpp"
#include "galformer/molio/types.hpp"

namespace galformer::lg {

enum class Modality { d2, d3 };

inline const char* modality_name(Modality m) { return m == Modality::d2 ? "2d" : "3d"; }

struct LineEdge {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  int shared_atom = 0;
  bool operator==(const LineEdge&) const = default;
};

struct NodeTarget {
  int pair_class = 0;
  int bond_type = -1;  // 2-D only
  bool operator==(const NodeTarget&) const = default;
};

struct LineGraph {
  Modality modality = Modality::d2;
  std::vector<std::pair<int, int>> node_origin;  // canonical u < v
  std::vector<LineEdge> edges;                    // sorted by (i, j)
  std::vector<NodeTarget> node_target;

  std::size_t n_nodes() const { return node_origin.size(); }
  std::size_t n_edges() const { return edges.size(); }
  std::size_t virtual_node() const { return node_origin.size(); }

  /// Neighbour lists of the real nodes (virtual node excluded).
  std::vector<std::vector<std::size_t>> neighbours() const {
    std::vector<std::vector<std::size_t>> nb(n_nodes());
    for (const auto& e : edges) {
      nb[e.i].push_back(e.j);
      nb[e.j].push_back(e.i);
    }
    for (auto& v : nb) std::sort(v.begin(), v.end());
    return nb;
  }
};

namespace detail {

inline LineGraph build_structure(std::size_t n_atoms, const std::vector<std::pair<int, int>>& bonds) {
  if (bonds.empty()) throw EmptyLineGraph("molecule has no bonds");
  LineGraph g;
  std::vector<std::vector<std::size_t>> incident(n_atoms);
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    auto [u, v] = bonds[b];
    if (u > v) std::swap(u, v);
    if (u < 0 || static_cast<std::size_t>(v) >= n_atoms || u == v)
      throw IndexOutOfRange("bond " + std::to_string(b) + " endpoints out of range");
    g.node_origin.emplace_back(u, v);
    incident[static_cast<std::size_t>(u)].push_back(b);
    incident[static_cast<std::size_t>(v)].push_back(b);
  }
  for (std::size_t a = 0; a < n_atoms; ++a) {
    const auto& inc = incident[a];
    for (std::size_t x = 0; x < inc.size(); ++x)
      for (std::size_t y = x + 1; y < inc.size(); ++y)
        g.edges.push_back({std::min(inc[x], inc[y]), std::max(inc[x], inc[y]), static_cast<int>(a)});
  }
  std::sort(g.edges.begin(), g.edges.end(),
            [](const LineEdge& a, const LineEdge& b) { return std::pair(a.i, a.j) < std::pair(b.i, b.j); });
  return g;
}

}  // namespace detail

inline LineGraph to_line_graph(const molio::MolGraph2D& m, int theta_t) {
  std::vector<std::pair<int, int>> bonds;
  for (const auto& b : m.bonds) bonds.emplace_back(b.u, b.v);
  auto g = detail::build_structure(m.atom_count(), bonds);
  g.modality = Modality::d2;
  for (std::size_t k = 0; k < bonds.size(); ++k) {
    const auto [u, v] = g.node_origin[k];
    g.node_target.push_back({molio::pair_class(m.atom_types[static_cast<std::size_t>(u)],
                                               m.atom_types[static_cast<std::size_t>(v)], theta_t),
                             m.bonds[k].type});
  }
  return g;
}

inline LineGraph to_line_graph(const molio::MolGraph3D& m, int theta_t) {
  auto g = detail::build_structure(m.atom_types.size(), m.bonds);
  g.modality = Modality::d3;
  for (const auto& [u, v] : g.node_origin)
    g.node_target.push_back({molio::pair_class(m.atom_types[static_cast<std::size_t>(u)],
                                               m.atom_types[static_cast<std::size_t>(v)], theta_t),
                             -1});
  return g;
}

}  // namespace galformer::lg
