#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "galformer/linegraph/features.hpp"
#include "galformer/molio/toy.hpp"
#include "galformer/structcode/encoding.hpp"
#include "test_support.hpp"

using namespace galformer;
using namespace galformer::sc;
using lg::LineGraph;

namespace {

LineGraph from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  LineGraph g;
  for (std::size_t k = 0; k < n; ++k) g.node_origin.emplace_back(int(k), int(k) + 1);
  for (auto [i, j] : edges) g.edges.push_back({std::min(i, j), std::max(i, j), 0});
  std::sort(g.edges.begin(), g.edges.end(),
            [](const auto& a, const auto& b) { return std::pair(a.i, a.j) < std::pair(b.i, b.j); });
  return g;
}

LineGraph cycle(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t k = 0; k < n; ++k) e.emplace_back(k, (k + 1) % n);
  return from_edges(n, e);
}

LineGraph random_graph(nc::Rng& rng, std::size_t n, double p) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) e.emplace_back(i, j);
  return from_edges(n, e);
}

// Floyd-Warshall with the virtual node held at distance 1.
std::vector<int> floyd_warshall(const LineGraph& g) {
  const std::size_t n = g.n_nodes(), V = n + 1;
  const int inf = 1 << 20;
  std::vector<int> d(n * n, inf);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0;
  for (const auto& e : g.edges) d[e.i * n + e.j] = d[e.j * n + e.i] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] = std::min(d[i * n + j], d[i * n + k] + d[k * n + j]);
  std::vector<int> out(V * V, 1);
  out[n * V + n] = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * V + j] = d[i * n + j] >= inf ? kUnreachable : d[i * n + j];
  return out;
}

// All shortest node sequences from i to j, by exhaustive DFS over shortest-path DAG.
void all_shortest(const std::vector<std::vector<std::size_t>>& nb, const std::vector<int>& fw, std::size_t V,
                  std::size_t u, std::size_t j, std::vector<std::size_t>& cur,
                  std::vector<std::vector<std::size_t>>& out) {
  if (u == j) {
    out.push_back(cur);
    return;
  }
  for (auto w : nb[u])
    if (fw[w * V + j] == fw[u * V + j] - 1) {
      cur.push_back(w);
      all_shortest(nb, fw, V, w, j, cur, out);
      cur.pop_back();
    }
}

void jitter(nc::ParamStore<double>& store, std::uint64_t seed, double amp) {
  nc::Rng rng(seed);
  for (auto& [_, t] : store)
    for (auto& v : t.mutable_data()) v += rng.uniform(-amp, amp);
}

std::vector<double> laplacian_times(const LineGraph& g, const std::vector<double>& q) {
  const auto L = normalized_laplacian(g);
  const std::size_t n = g.n_nodes();
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r] += L[r * n + c] * q[c];
  return out;
}

EncodingConfig small_cfg() {
  EncodingConfig c;
  c.heads = 2;
  c.max_path = 3;
  c.path_dim = 3;
  c.pe_dim = 4;
  return c;
}

}  // namespace

TEST(Laplacian, TwoNodeGraph) {
  const auto pe = normalized_laplacian_eigenvectors(from_edges(2, {{0, 1}}), 1);
  ASSERT_EQ(pe.eigenvalues.size(), 1u);
  EXPECT_NEAR(pe.eigenvalues[0], 2.0, 1e-12);
  EXPECT_NEAR(pe.vectors[0], 0.7071067811865476, 1e-9);
  EXPECT_NEAR(pe.vectors[1], -0.7071067811865476, 1e-9);
}

TEST(Laplacian, FourCycleSpectrum) {
  const auto eig = jacobi_eigen(normalized_laplacian(cycle(4)), 4);
  const std::vector<double> want{0, 1, 1, 2};
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(eig.values[k], want[k], 1e-12);
}

TEST(Laplacian, CycleSpectraMatchClosedForm) {
  for (std::size_t n = 3; n <= 12; ++n) {
    const auto eig = jacobi_eigen(normalized_laplacian(cycle(n)), n);
    std::vector<double> want;
    for (std::size_t k = 0; k < n; ++k) want.push_back(1.0 - std::cos(2.0 * std::numbers::pi * double(k) / double(n)));
    std::sort(want.begin(), want.end());
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(eig.values[k], want[k], 1e-10) << n;
  }
}

TEST(Laplacian, PaddingWhenTooFewEigenvectors) {
  const auto pe = normalized_laplacian_eigenvectors(from_edges(3, {{0, 1}, {1, 2}}), 8);
  EXPECT_EQ(pe.eigenvalues.size(), 2u);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 3; c < 8; ++c) EXPECT_EQ(pe.vectors[r * 8 + c], 0.0);
  const auto single = normalized_laplacian_eigenvectors(from_edges(1, {}), 4);
  for (double v : single.vectors) EXPECT_EQ(v, 0.0);
}

TEST(Laplacian, ResidualOrthogonalityAndRange) {
  nc::Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const auto n = 2 + rng.below(24);
    const auto g = random_graph(rng, n, rng.uniform(0.1, 0.6));
    const auto pe = normalized_laplacian_eigenvectors(g, n);
    const auto eig = jacobi_eigen(normalized_laplacian(g), n);
    for (double lam : eig.values) {
      EXPECT_GE(lam, -1e-9);
      EXPECT_LE(lam, 2.0 + 1e-9);
    }
    for (std::size_t a = 0; a < pe.eigenvalues.size(); ++a) {
      std::vector<double> q(n);
      double big = 0.0, big_signed = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        q[r] = pe.vectors[r * n + a];
        if (std::abs(q[r]) > big + 1e-10) big = std::abs(q[r]), big_signed = q[r];
      }
      EXPECT_GT(big_signed, 0.0);
      const auto lq = laplacian_times(g, q);
      for (std::size_t r = 0; r < n; ++r) EXPECT_LT(std::abs(lq[r] - pe.eigenvalues[a] * q[r]), 1e-8);
      for (std::size_t b = 0; b < pe.eigenvalues.size(); ++b) {
        double d = 0;
        for (std::size_t r = 0; r < n; ++r) d += q[r] * pe.vectors[r * n + b];
        EXPECT_NEAR(d, a == b ? 1.0 : 0.0, 1e-8);
      }
    }
  }
}

TEST(Laplacian, SweepBudgetExhausted) {
  EXPECT_THROW(normalized_laplacian_eigenvectors(cycle(5), 2, 0), EigenNoConvergence);
}

TEST(ShortestPaths, SixCycleAndDisconnected) {
  const auto t = all_pairs_shortest_paths(cycle(6));
  EXPECT_EQ(t.len(0, 3), 3);
  EXPECT_EQ(t.len(1, 4), 3);
  EXPECT_EQ(t.len(0, 6), 1);
  EXPECT_EQ(t.len(6, 6), 0);
  const auto split = all_pairs_shortest_paths(from_edges(4, {{0, 1}, {2, 3}}));
  EXPECT_EQ(split.len(0, 2), kUnreachable);
  EXPECT_TRUE(split.nodes(0, 2).empty());
  EXPECT_EQ(split.len(0, 4), 1);
}

TEST(ShortestPaths, MatchFloydWarshallAndAreConsistent) {
  nc::Rng rng(17);
  for (int trial = 0; trial < 150; ++trial) {
    const auto n = 1 + rng.below(20);
    const auto g = random_graph(rng, n, rng.uniform(0.05, 0.5));
    const auto t = all_pairs_shortest_paths(g);
    const auto fw = floyd_warshall(g);
    ASSERT_EQ(t.length, fw);
    const auto V = n + 1;
    const auto nb = g.neighbours();
    for (std::size_t i = 0; i < V; ++i)
      for (std::size_t j = 0; j < V; ++j) {
        EXPECT_EQ(t.len(i, j), t.len(j, i));
        if (t.len(i, j) == kUnreachable) continue;
        const auto& ns = t.nodes(i, j);
        const auto& es = t.edges(i, j);
        ASSERT_EQ(ns.size(), std::size_t(t.len(i, j)) + 1);
        ASSERT_EQ(es.size() + 1, ns.size());
        EXPECT_EQ(ns.front(), i);
        EXPECT_EQ(ns.back(), j);
        for (std::size_t m = 0; m < es.size(); ++m) {
          const auto a = ns[m], b = ns[m + 1];
          if (a == n || b == n) {
            EXPECT_EQ(es[m], g.n_edges());
          } else {
            ASSERT_LT(es[m], g.n_edges());
            EXPECT_EQ(std::pair(g.edges[es[m]].i, g.edges[es[m]].j), std::pair(std::min(a, b), std::max(a, b)));
          }
        }
        if (i < n && j < n) {
          std::vector<std::vector<std::size_t>> paths;
          std::vector<std::size_t> cur{i};
          all_shortest(nb, fw, V, i, j, cur, paths);
          EXPECT_EQ(ns, *std::min_element(paths.begin(), paths.end()));
        }
      }
  }
}

TEST(PathLengthBias, ZeroSharedAndDense) {
  const auto cfg = small_cfg();
  const auto ds = molio::generate_toy_corpus(4, 3, molio::ToyKind::mixed);
  for (const auto& rec : ds.records) {
    const auto g = lg::to_line_graph(rec.g2d, ds.meta.theta_t);
    const auto s = compute_structure<double>(g, cfg);
    nc::ParamStore<double> store;
    register_encoding_params(store, lg::Modality::d2, cfg, 6, 3, 1);
    for (auto& v : store.get("2d.enc.path_len_table").mutable_data()) v = 0.0;
    {
      const auto zero = path_length_bias(s, store, cfg);
      for (double v : zero.data()) EXPECT_EQ(v, 0.0);
    }

    jitter(store, 4, 1.0);
    const auto b = path_length_bias(s, store, cfg);
    const auto& tab = store.get("2d.enc.path_len_table");
    const auto& proj = store.get("2d.enc.path_len_proj");
    const auto V = s.V();
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = 0; j < V; ++j) {
          const auto row = length_row(s.spt.len(i, j), cfg.max_path);
          double want = 0;
          for (std::size_t k = 0; k < 3; ++k) want += tab(row, h * 3 + k) * proj(0, h * 3 + k);
          EXPECT_NEAR(b(h * V + i, j), want, 1e-12);
          for (std::size_t k = 0; k < V; ++k)
            for (std::size_t l = 0; l < V; ++l)
              if (s.spt.len(i, j) == s.spt.len(k, l)) {
                EXPECT_EQ(b(h * V + i, j), b(h * V + k, l));
              }
        }
  }
}

TEST(PathNodeBias, ZeroAdjacentAndPathWalk) {
  auto cfg = small_cfg();
  cfg.max_path = 2;  // exercise clamping
  nc::Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = 2 + rng.below(9);
    const auto g = random_graph(rng, n, 0.35);
    const auto s = compute_structure<double>(g, cfg);
    const auto V = s.V();
    nc::ParamStore<double> store;
    register_encoding_params(store, lg::Modality::d2, cfg, 5, 3, 2);
    std::vector<double> xv(V * 5);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    const auto x = nc::Tensor<double>::from(V, 5, xv);
    for (auto& v : store.get("2d.enc.path_node_proj").mutable_data()) v = 0.0;
    {
      const auto zero = path_node_bias(s, x, store, cfg);
      for (double v : zero.data()) EXPECT_EQ(v, 0.0);
    }

    jitter(store, 9 + trial, 1.0);
    const auto& W = store.get("2d.enc.path_node_proj");
    const auto c = path_node_bias(s, x, store, cfg);
    auto xw = [&](std::size_t node, std::size_t h, std::size_t pos) {
      double d = 0;
      for (std::size_t k = 0; k < 5; ++k) d += x(node, k) * W(k, h * 2 + pos);
      return d;
    };
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = 0; j < V; ++j) {
          const auto& seq = s.spt.nodes(i, j);
          double want = 0;
          for (std::size_t m = 0; m < seq.size(); ++m) want += xw(seq[m], h, std::min<std::size_t>(m, 1));
          if (!seq.empty()) want /= double(seq.size());
          EXPECT_NEAR(c(h * V + i, j), want, 1e-12);
          EXPECT_TRUE(std::isfinite(c(h * V + i, j)));
          if (i == j) {
            EXPECT_NEAR(c(h * V + i, j), xw(i, h, 0), 1e-12);
          }
          if (s.spt.len(i, j) == 1) {
            EXPECT_NEAR(c(h * V + i, j), 0.5 * (xw(i, h, 0) + xw(j, h, 1)), 1e-12);
          }
          if (s.spt.len(i, j) == kUnreachable) {
            EXPECT_EQ(c(h * V + i, j), 0.0);
          }
        }
  }
}

TEST(AngleBias, ZeroOneEdgeAndPathWalk) {
  const auto cfg = small_cfg();
  const auto ds = molio::generate_toy_corpus(6, 13, molio::ToyKind::mixed);
  for (const auto& rec : ds.records) {
    const auto g = lg::to_line_graph(*rec.g3d, ds.meta.theta_t);
    const auto s = compute_structure<double>(g, cfg);
    const auto V = s.V();
    nc::ParamStore<double> store;
    lg::FeatureConfig fc;
    fc.hidden = 6;
    lg::register_feature_params(store, lg::Modality::d3, ds.meta, fc, 1);
    register_encoding_params(store, lg::Modality::d3, cfg, 6, 3, 1);
    const auto f = lg::build_3d_features(lg::gather_3d_inputs(*rec.g3d, g, ds.meta.theta_t), store, -1.0);
    for (auto& v : store.get("3d.enc.angle_proj").mutable_data()) v = 0.0;
    {
      const auto zero = angle_bias(s, f.edge_feat, store, cfg);
      for (double v : zero.data()) EXPECT_EQ(v, 0.0);
    }

    jitter(store, 3, 1.0);
    const auto f2 = lg::build_3d_features(lg::gather_3d_inputs(*rec.g3d, g, ds.meta.theta_t), store, -1.0);
    const auto gb = angle_bias(s, f2.edge_feat, store, cfg);
    const auto& W = store.get("3d.enc.angle_proj");
    const auto& ve = store.get("3d.feat.virtual_edge");
    auto ew = [&](std::size_t e, std::size_t h, std::size_t pos) {
      double d = 0;
      for (std::size_t k = 0; k < 3; ++k) d += (e == g.n_edges() ? ve(0, k) : f2.edge_feat(e, k)) * W(k, h * 3 + pos);
      return d;
    };
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = 0; j < V; ++j) {
          const auto& es = s.spt.edges(i, j);
          double want = 0;
          for (std::size_t m = 0; m < es.size(); ++m) want += ew(es[m], h, std::min<std::size_t>(m, 2));
          if (!es.empty()) want /= double(es.size());
          EXPECT_NEAR(gb(h * V + i, j), want, 1e-12);
          if (i == j) {
            EXPECT_EQ(gb(h * V + i, j), 0.0);
          }
          if (s.spt.len(i, j) == 1) {
            EXPECT_NEAR(gb(h * V + i, j), ew(es[0], h, 0), 1e-12);
          }
        }
  }
}

TEST(EncodeGraph, ZeroPeProjectionAndModalityContract) {
  const auto cfg = small_cfg();
  const auto ds = molio::generate_toy_corpus(2, 4, molio::ToyKind::rings);
  const auto& rec = ds.records[0];
  nc::ParamStore<double> store;
  lg::FeatureConfig fc;
  fc.hidden = 6;
  lg::register_feature_params(store, lg::Modality::d2, ds.meta, fc, 1);
  lg::register_feature_params(store, lg::Modality::d3, ds.meta, fc, 1);
  register_encoding_params(store, lg::Modality::d2, cfg, 6, 3, 1);
  register_encoding_params(store, lg::Modality::d3, cfg, 6, 3, 1);
  const auto g2 = lg::to_line_graph(rec.g2d, ds.meta.theta_t);
  const auto s2 = compute_structure<double>(g2, cfg);
  const auto n2 = lg::build_2d_features(lg::gather_2d_inputs(rec.g2d, g2), store);
  auto e2 = encode_2d(s2, n2, store, cfg);
  bool moved = false;
  for (std::size_t i = 0; i + n2.cols() < n2.size(); ++i) moved |= e2.x.data()[i] != n2.data()[i];
  EXPECT_TRUE(moved);
  for (std::size_t c = 0; c < n2.cols(); ++c) EXPECT_EQ(e2.x(s2.V() - 1, c), n2(s2.V() - 1, c));
  EXPECT_GT(e2.bias_b.size(), 0u);
  EXPECT_GT(e2.bias_c.size(), 0u);
  EXPECT_EQ(e2.bias_g.size(), 0u);
  EXPECT_EQ(e2.bias.rows(), 2 * s2.V());

  for (auto& v : store.get("2d.enc.pe_proj").mutable_data()) v = 0.0;
  e2 = encode_2d(s2, n2, store, cfg);
  for (std::size_t i = 0; i < n2.size(); ++i) EXPECT_EQ(e2.x.data()[i], n2.data()[i]);

  const auto g3 = lg::to_line_graph(*rec.g3d, ds.meta.theta_t);
  const auto s3 = compute_structure<double>(g3, cfg);
  const auto f3 = lg::build_3d_features(lg::gather_3d_inputs(*rec.g3d, g3, ds.meta.theta_t), store, -1.0);
  const auto e3 = encode_3d(s3, f3.node_input, f3.edge_feat, store, cfg);
  EXPECT_EQ(e3.bias_b.size(), 0u);
  EXPECT_EQ(e3.bias_c.size(), 0u);
  EXPECT_GT(e3.bias_g.size(), 0u);
  EXPECT_TRUE(s3.pe.vectors.empty());
}

// Smallest molecule, fully by hand: two line nodes plus the virtual node.
TEST(EncodeGraph, PathOfThreeByHand) {
  EncodingConfig cfg;
  cfg.heads = 1;
  cfg.max_path = 4;
  cfg.path_dim = 2;
  cfg.pe_dim = 1;
  molio::MolGraph2D m;
  m.theta_v = 2;
  m.atom_types = {0, 1, 0};
  m.atom_feats = {1, 0, 0, 1, 1, 0};
  m.bonds = {{0, 1, 0, {1.0}}, {1, 2, 0, {1.0}}};
  molio::DatasetMeta meta;
  meta.theta_v = 2;
  meta.theta_e = 1;
  meta.theta_t = 2;
  nc::ParamStore<double> store;
  lg::FeatureConfig fc;
  fc.hidden = 2;
  lg::register_feature_params(store, lg::Modality::d2, meta, fc, 1);
  register_encoding_params(store, lg::Modality::d2, cfg, 2, 1, 1);
  jitter(store, 6, 0.5);
  const auto g = lg::to_line_graph(m, meta.theta_t);
  const auto s = compute_structure<double>(g, cfg);
  const auto e = encode_2d(s, lg::build_2d_features(lg::gather_2d_inputs(m, g), store), store, cfg);

  // lengths: 0-1 adjacent, both one hop from virtual node 2
  const int len[3][3] = {{0, 1, 1}, {1, 0, 1}, {1, 1, 0}};
  const auto& tab = store.get("2d.enc.path_len_table");
  const auto& proj = store.get("2d.enc.path_len_proj");
  const auto& W = store.get("2d.enc.path_node_proj");
  auto xw = [&](std::size_t node, std::size_t pos) { return e.x(node, 0) * W(0, pos) + e.x(node, 1) * W(1, pos); };
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double b = tab(len[i][j], 0) * proj(0, 0) + tab(len[i][j], 1) * proj(0, 1);
      const double c = i == j ? xw(i, 0) : 0.5 * (xw(i, 0) + xw(j, 1));
      EXPECT_NEAR(e.bias_b(i, j), b, 1e-12);
      EXPECT_NEAR(e.bias_c(i, j), c, 1e-12);
      EXPECT_NEAR(e.bias(i, j), b + c, 1e-12);
    }
  // PE of a 2-node line graph is (+1/sqrt2, -1/sqrt2)
  const auto& n = lg::build_2d_features(lg::gather_2d_inputs(m, g), store);
  const double wv = store.get("2d.enc.pe_proj")(0, 0);
  EXPECT_NEAR(e.x(0, 0) - n(0, 0), wv / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(e.x(1, 0) - n(1, 0), -wv / std::sqrt(2.0), 1e-12);
  EXPECT_EQ(e.x(2, 0), n(2, 0));
}

// On trees every shortest path in the line graph is unique, so relabelling
// bonds must permute the bias matrices exactly.
TEST(EncodeGraph, BiasesArePermutationConsistent) {
  const auto cfg = small_cfg();
  const auto ds = molio::generate_toy_corpus(10, 23, molio::ToyKind::trees);
  nc::ParamStore<double> store;
  lg::FeatureConfig fc;
  fc.hidden = 6;
  lg::register_feature_params(store, lg::Modality::d3, ds.meta, fc, 1);
  register_encoding_params(store, lg::Modality::d2, cfg, 6, 3, 1);
  register_encoding_params(store, lg::Modality::d3, cfg, 6, 3, 1);
  jitter(store, 12, 0.5);
  nc::Rng rng(31);
  for (const auto& rec : ds.records) {
    const auto& m3 = *rec.g3d;
    const std::size_t nb = m3.bonds.size();
    std::vector<std::size_t> perm(nb);
    for (std::size_t k = 0; k < nb; ++k) perm[k] = k;
    rng.shuffle(perm);
    auto p3 = m3;
    for (std::size_t k = 0; k < nb; ++k) p3.bonds[k] = m3.bonds[perm[k]];
    const auto V = nb + 1;
    auto pi = [&](std::size_t a) { return a == nb ? nb : perm[a]; };

    const auto g = lg::to_line_graph(m3, ds.meta.theta_t);
    const auto gp = lg::to_line_graph(p3, ds.meta.theta_t);
    const auto s = compute_structure<double>(g, cfg);
    const auto sp = compute_structure<double>(gp, cfg);
    const auto s2 = structure_from<double>(lg::Modality::d2, all_pairs_shortest_paths(g), {}, cfg);
    const auto s2p = structure_from<double>(lg::Modality::d2, all_pairs_shortest_paths(gp), {}, cfg);
    // 2-D style biases on shared line-node inputs
    std::vector<double> xv(V * 6), xpv(V * 6);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    for (std::size_t a = 0; a < V; ++a)
      for (std::size_t k = 0; k < 6; ++k) xpv[a * 6 + k] = xv[pi(a) * 6 + k];
    const auto x = nc::Tensor<double>::from(V, 6, xv), xp = nc::Tensor<double>::from(V, 6, xpv);
    const auto b = path_length_bias(s2, store, cfg), bp = path_length_bias(s2p, store, cfg);
    const auto c = path_node_bias(s2, x, store, cfg), cp = path_node_bias(s2p, xp, store, cfg);
    EXPECT_THROW(path_length_bias(s, store, cfg), DimensionMismatch);
    const auto f = lg::build_3d_features(lg::gather_3d_inputs(m3, g, ds.meta.theta_t), store, -1.0);
    const auto fp = lg::build_3d_features(lg::gather_3d_inputs(p3, gp, ds.meta.theta_t), store, -1.0);
    const auto gb = angle_bias(s, f.edge_feat, store, cfg), gbp = angle_bias(sp, fp.edge_feat, store, cfg);
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t a = 0; a < V; ++a)
        for (std::size_t bb = 0; bb < V; ++bb) {
          EXPECT_EQ(bp(h * V + a, bb), b(h * V + pi(a), pi(bb)));
          EXPECT_NEAR(cp(h * V + a, bb), c(h * V + pi(a), pi(bb)), 1e-12);
          EXPECT_NEAR(gbp(h * V + a, bb), gb(h * V + pi(a), pi(bb)), 1e-12);
        }
  }
}

TEST(EncodeGraph, GradientsMatchFiniteDifferences) {
  const auto cfg = small_cfg();
  const auto ds = molio::generate_toy_corpus(1, 9, molio::ToyKind::rings);
  const auto& rec = ds.records[0];
  nc::ParamStore<double> store;
  lg::FeatureConfig fc;
  fc.hidden = 4;
  fc.kernels = 3;
  lg::register_feature_params(store, lg::Modality::d2, ds.meta, fc, 1);
  lg::register_feature_params(store, lg::Modality::d3, ds.meta, fc, 1);
  register_encoding_params(store, lg::Modality::d2, cfg, 4, 2, 1);
  register_encoding_params(store, lg::Modality::d3, cfg, 4, 2, 1);
  jitter(store, 5, 0.3);
  const auto g2 = lg::to_line_graph(rec.g2d, ds.meta.theta_t);
  const auto g3 = lg::to_line_graph(*rec.g3d, ds.meta.theta_t);
  const auto s2 = compute_structure<double>(g2, cfg);
  const auto s3 = compute_structure<double>(g3, cfg);
  const auto i2 = lg::gather_2d_inputs(rec.g2d, g2);
  const auto i3 = lg::gather_3d_inputs(*rec.g3d, g3, ds.meta.theta_t);
  const auto r = nc::check_gradients<double>(
      [&] {
        const auto e2 = encode_2d(s2, lg::build_2d_features(i2, store), store, cfg);
        const auto f3 = lg::build_3d_features(i3, store, -1.0);
        const auto e3 = encode_3d(s3, f3.node_input, f3.edge_feat, store, cfg);
        return nc::sum(nc::square(e2.bias)) + nc::sum(nc::square(e2.x)) + nc::sum(nc::square(e3.bias));
      },
      store, 1e-5, 1e-3);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst_param << "[" << r.worst_index << "]";
}
