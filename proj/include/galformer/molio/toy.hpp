#pragma once

// Synthetic molecule corpus for desk-scale experiments. Atom and bond types are
// tied to local structure (degree, ring membership) so masked prediction has
// something learnable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "galformer/errors.hpp"
#include "galformer/molio/geometry.hpp"
#include "galformer/molio/types.hpp"
#include "galformer/numcore/rng.hpp"

namespace galformer::molio {

enum class ToyKind { trees, rings, mixed };

inline ToyKind toy_kind_from_string(const std::string& s) {
  if (s == "trees") return ToyKind::trees;
  if (s == "rings") return ToyKind::rings;
  if (s == "mixed") return ToyKind::mixed;
  throw ConfigError("unknown toy corpus kind '" + s + "' (trees|rings|mixed)");
}

struct ToyOptions {
  int theta_v = 16;
  int theta_e = 4;
  int theta_t = 8;
  int tasks = 0;
  TaskKind task_kind = TaskKind::classification;
  double missing_label_frac = 0.0;
};

namespace detail {

struct ToyTopology {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<bool> in_ring;
  int ring_size = 0;  // first ring_size atoms form the ring
};

inline ToyTopology toy_topology(nc::Rng& rng, bool ring) {
  ToyTopology t;
  t.n = 3 + static_cast<int>(rng.below(10));  // 3..12 atoms
  t.in_ring.assign(static_cast<std::size_t>(t.n), false);
  std::vector<int> degree(static_cast<std::size_t>(t.n), 0);
  int start = 1;
  if (ring) {
    t.ring_size = 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(t.n, 8) - 2)));
    for (int i = 0; i < t.ring_size; ++i) {
      const int j = (i + 1) % t.ring_size;
      t.edges.emplace_back(i, j);
      ++degree[static_cast<std::size_t>(i)];
      ++degree[static_cast<std::size_t>(j)];
      t.in_ring[static_cast<std::size_t>(i)] = true;
    }
    start = t.ring_size;
  }
  for (int i = start; i < t.n; ++i) {
    std::vector<int> open;
    for (int p = 0; p < i; ++p)
      if (degree[static_cast<std::size_t>(p)] < 4) open.push_back(p);
    const int p = open[rng.below(open.size())];
    t.edges.emplace_back(p, i);
    ++degree[static_cast<std::size_t>(p)];
    ++degree[static_cast<std::size_t>(i)];
  }
  return t;
}

inline Vec3 random_unit(nc::Rng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

inline double bond_length(int bond_type, nc::Rng& rng) {
  switch (bond_type) {
    case 1: return rng.uniform(1.25, 1.35);
    case 2: return rng.uniform(1.15, 1.22);
    case 3: return rng.uniform(1.36, 1.42);
    default: return rng.uniform(1.45, 1.60);
  }
}

}  // namespace detail

/// Deterministic synthetic corpus: connected graphs of 3-12 atoms with a 3-D
/// embedding whose bond lengths lie in [1.0, 1.8] Angstrom.
inline Dataset generate_toy_corpus(int n, std::uint64_t seed, ToyKind kind, const ToyOptions& opt = {}) {
  if (n < 1) throw ConfigError("toy corpus size must be >= 1");
  if (opt.theta_t < 8 || opt.theta_e < 4 || opt.theta_v < opt.theta_t + 4 + 1)
    throw ConfigError("toy corpus needs theta_t >= 8, theta_e >= 4, theta_v >= theta_t + 5");

  Dataset ds;
  ds.meta.theta_v = opt.theta_v;
  ds.meta.theta_e = opt.theta_e;
  ds.meta.theta_t = opt.theta_t;
  ds.meta.task_count = opt.tasks;
  ds.meta.task_kind = opt.task_kind;
  for (int t = 0; t < opt.theta_t; ++t) ds.meta.atom_type_vocab.push_back("T" + std::to_string(t));
  ds.meta.bond_type_vocab = {"single", "double", "triple", "aromatic"};

  nc::Rng rng(nc::mix_keys(seed, 0x70C0));
  for (int m = 0; m < n; ++m) {
    const bool ring = kind == ToyKind::rings || (kind == ToyKind::mixed && rng.bernoulli(0.5));
    auto topo = detail::toy_topology(rng, ring);
    const auto natoms = static_cast<std::size_t>(topo.n);
    std::vector<int> degree(natoms, 0);
    for (auto [u, v] : topo.edges) {
      ++degree[static_cast<std::size_t>(u)];
      ++degree[static_cast<std::size_t>(v)];
    }

    MolRecord rec;
    auto& g = rec.g2d;
    g.id = "toy-" + std::to_string(seed) + "-" + std::to_string(m);
    g.theta_v = static_cast<std::size_t>(opt.theta_v);
    for (std::size_t a = 0; a < natoms; ++a) {
      const int base = std::min(degree[a], 4) - 1;
      int t = 2 * base + (topo.in_ring[a] ? 1 : 0);
      if (rng.bernoulli(0.15)) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.theta_t)));
      g.atom_types.push_back(t);
      std::vector<double> f(static_cast<std::size_t>(opt.theta_v), 0.0);
      f[static_cast<std::size_t>(t)] = 1.0;
      f[static_cast<std::size_t>(opt.theta_t + base)] = 1.0;
      f[static_cast<std::size_t>(opt.theta_t + 4)] = topo.in_ring[a] ? 1.0 : 0.0;
      if (opt.theta_v > opt.theta_t + 5) f[static_cast<std::size_t>(opt.theta_t + 5)] = (4.0 - degree[a]) / 4.0;
      if (opt.theta_v > opt.theta_t + 6) f.back() = 1.0;
      g.atom_feats.insert(g.atom_feats.end(), f.begin(), f.end());
    }
    for (auto [u, v] : topo.edges) {
      Bond b;
      b.u = u;
      b.v = v;
      const auto du = degree[static_cast<std::size_t>(u)], dv = degree[static_cast<std::size_t>(v)];
      if (topo.in_ring[static_cast<std::size_t>(u)] && topo.in_ring[static_cast<std::size_t>(v)]) b.type = 3;
      else if (std::min(du, dv) == 1 && std::max(du, dv) <= 2 && rng.bernoulli(0.3)) b.type = 2;
      else if (std::max(du, dv) <= 2 && rng.bernoulli(0.35)) b.type = 1;
      else b.type = 0;
      b.feats.assign(static_cast<std::size_t>(opt.theta_e), 0.0);
      b.feats[static_cast<std::size_t>(b.type)] = 1.0;
      g.bonds.push_back(std::move(b));
    }

    // 3-D embedding: planar regular ring, tree atoms grown outward
    MolGraph3D g3;
    g3.id = g.id;
    g3.atom_types = g.atom_types;
    g3.coords.assign(natoms, Vec3{0, 0, 0});
    std::vector<bool> placed(natoms, false);
    if (topo.ring_size > 0) {
      const double side = rng.uniform(1.36, 1.42);
      const double radius = side / (2.0 * std::sin(std::numbers::pi / topo.ring_size));
      for (int i = 0; i < topo.ring_size; ++i) {
        const double phi = 2.0 * std::numbers::pi * i / topo.ring_size;
        g3.coords[static_cast<std::size_t>(i)] = {radius * std::cos(phi), radius * std::sin(phi), 0.0};
        placed[static_cast<std::size_t>(i)] = true;
      }
    } else {
      placed[0] = true;
    }
    for (std::size_t e = static_cast<std::size_t>(topo.ring_size); e < topo.edges.size(); ++e) {
      const auto [p, c] = topo.edges[e];
      const double len = detail::bond_length(g.bonds[e].type, rng);
      Vec3 best{};
      double best_clear = -1.0;
      for (int attempt = 0; attempt < 64; ++attempt) {
        const Vec3 dir = detail::random_unit(rng);
        const Vec3& o = g3.coords[static_cast<std::size_t>(p)];
        const Vec3 cand{o[0] + len * dir[0], o[1] + len * dir[1], o[2] + len * dir[2]};
        double clear = 1e9;
        for (std::size_t a = 0; a < natoms; ++a)
          if (placed[a] && static_cast<int>(a) != p) clear = std::min(clear, norm3(sub(cand, g3.coords[a])));
        if (clear > best_clear) {
          best_clear = clear;
          best = cand;
        }
        if (clear >= 1.2) break;
      }
      g3.coords[static_cast<std::size_t>(c)] = best;
      placed[static_cast<std::size_t>(c)] = true;
    }
    for (auto [u, v] : topo.edges) g3.bonds.emplace_back(u, v);

    if (opt.tasks > 0) {
      std::vector<std::optional<double>> labels;
      for (int t = 0; t < opt.tasks; ++t) {
        double y = 0.0;
        if (opt.task_kind == TaskKind::classification) {
          if (t == 0) {
            y = topo.ring_size > 0 ? 1.0 : 0.0;
            if (kind != ToyKind::mixed) y = topo.n >= 7 ? 1.0 : 0.0;
          } else {
            int hits = 0;
            for (int at : g.atom_types) hits += (at == t % opt.theta_t || at == (t + 3) % opt.theta_t);
            y = hits >= 2 ? 1.0 : 0.0;
          }
        } else {
          // linear in the mean atom attribute vector
          for (std::size_t a = 0; a < natoms; ++a) {
            auto f = g.atom_feat(a);
            for (std::size_t k = 0; k < f.size(); ++k) y += std::cos(static_cast<double>(k + 1 + 2 * t)) * f[k];
          }
          y /= static_cast<double>(natoms);
        }
        if (opt.missing_label_frac > 0.0 && rng.bernoulli(opt.missing_label_frac)) labels.emplace_back(std::nullopt);
        else labels.emplace_back(y);
      }
      g.labels = std::move(labels);
    }
    rec.g3d = std::move(g3);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace galformer::molio
