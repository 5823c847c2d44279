#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "galformer/linegraph/features.hpp"
#include "galformer/linegraph/line_graph.hpp"
#include "galformer/molio/toy.hpp"
#include "test_support.hpp"

using namespace galformer;
using namespace galformer::lg;
using molio::MolGraph2D;
using molio::MolGraph3D;

namespace {

MolGraph3D graph3d(std::vector<std::pair<int, int>> bonds, std::size_t n_atoms) {
  MolGraph3D g;
  g.atom_types.assign(n_atoms, 0);
  g.coords.resize(n_atoms);
  for (std::size_t i = 0; i < n_atoms; ++i) g.coords[i] = {double(i), 0.3 * double(i * i), 0.0};
  g.bonds = std::move(bonds);
  return g;
}

void jitter(nc::ParamStore<double>& store, std::uint64_t seed, double amp) {
  nc::Rng rng(seed);
  for (auto& [_, t] : store)
    for (auto& v : t.mutable_data()) v += rng.uniform(-amp, amp);
}

molio::DatasetMeta toy_meta() {
  return molio::generate_toy_corpus(1, 1, molio::ToyKind::trees).meta;
}

}  // namespace

TEST(LineGraph, PathOfThree) {
  const auto lg = to_line_graph(graph3d({{0, 1}, {1, 2}}, 3), 8);
  EXPECT_EQ(lg.n_nodes(), 2u);
  ASSERT_EQ(lg.n_edges(), 1u);
  EXPECT_EQ(lg.edges[0], (LineEdge{0, 1, 1}));
  EXPECT_EQ(lg.virtual_node(), 2u);
}

TEST(LineGraph, SixRingBecomesSixCycle) {
  std::vector<std::pair<int, int>> bonds;
  for (int i = 0; i < 6; ++i) bonds.emplace_back(i, (i + 1) % 6);
  const auto lg = to_line_graph(graph3d(bonds, 6), 8);
  EXPECT_EQ(lg.n_nodes(), 6u);
  EXPECT_EQ(lg.n_edges(), 6u);
  for (const auto& nb : lg.neighbours()) EXPECT_EQ(nb.size(), 2u);
  EXPECT_EQ(lg.node_origin[5], (std::pair<int, int>{0, 5}));
}

TEST(LineGraph, StarBecomesTriangle) {
  const auto lg = to_line_graph(graph3d({{0, 1}, {0, 2}, {3, 0}}, 4), 8);
  const std::vector<LineEdge> want{{0, 1, 0}, {0, 2, 0}, {1, 2, 0}};
  EXPECT_EQ(lg.edges, want);
  EXPECT_EQ(lg.node_origin[2], (std::pair<int, int>{0, 3}));
}

TEST(LineGraph, NoBondsRejectedSingleBondAllowed) {
  EXPECT_THROW(to_line_graph(graph3d({}, 2), 8), EmptyLineGraph);
  const auto one = to_line_graph(graph3d({{0, 1}}, 2), 8);
  EXPECT_EQ(one.n_nodes(), 1u);
  EXPECT_EQ(one.n_edges(), 0u);
}

// Every simple graph on up to six labelled vertices.
TEST(LineGraph, ExhaustiveSmallGraphsMatchDefinition) {
  std::size_t graphs = 0;
  for (int n = 2; n <= 6; ++n) {
    std::vector<std::pair<int, int>> all;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v) all.emplace_back(u, v);
    for (std::uint32_t mask = 1; mask < (1u << all.size()); ++mask) {
      std::vector<std::pair<int, int>> bonds;
      for (std::size_t k = 0; k < all.size(); ++k)
        if (mask & (1u << k)) bonds.push_back(all[k]);
      const auto lg = to_line_graph(graph3d(bonds, static_cast<std::size_t>(n)), 8);
      ASSERT_EQ(lg.n_nodes(), bonds.size());
      std::set<std::pair<std::size_t, std::size_t>> have;
      for (const auto& e : lg.edges) {
        ASSERT_LT(e.i, e.j);
        have.emplace(e.i, e.j);
        const auto [a, b] = bonds[e.i];
        const auto [c, d] = bonds[e.j];
        ASSERT_TRUE(e.shared_atom == a || e.shared_atom == b);
        ASSERT_TRUE(e.shared_atom == c || e.shared_atom == d);
      }
      ASSERT_EQ(have.size(), lg.n_edges());
      for (std::size_t i = 0; i < bonds.size(); ++i)
        for (std::size_t j = i + 1; j < bonds.size(); ++j) {
          const auto [a, b] = bonds[i];
          const auto [c, d] = bonds[j];
          const int common = (a == c) + (a == d) + (b == c) + (b == d);
          ASSERT_EQ(have.count({i, j}) == 1, common == 1);
        }
      ++graphs;
    }
  }
  EXPECT_EQ(graphs, 1u + 7u + 63u + 1023u + 32767u);
}

TEST(GaussianKernel, PeakTailAndSymmetry) {
  const std::vector<double> mu{0.0, 2.0}, sigma{1.0, 0.25};
  EXPECT_NEAR(gaussian_kernel_vector(0.0, 1.0, 0.0, mu, sigma)[0], -0.398942, 1e-6);
  EXPECT_NEAR(gaussian_kernel_vector(0.0, 1.0, 0.0, mu, sigma, +1.0)[0], 0.398942, 1e-6);
  EXPECT_LT(std::abs(gaussian_kernel_vector(2.0 + 10 * 0.25, 1.0, 0.0, mu, sigma)[1]), 1e-20);
  for (double delta : {0.01, 0.3, 1.7}) {
    const auto a = gaussian_kernel_vector(2.0 + delta, 1.0, 0.0, mu, sigma);
    const auto b = gaussian_kernel_vector(2.0 - delta, 1.0, 0.0, mu, sigma);
    EXPECT_NEAR(a[1], b[1], 1e-12);
  }
  // sigma clamped, never divides by zero
  const std::vector<double> zero_sigma{0.0};
  const auto c = gaussian_kernel_vector(0.0, 1.0, 0.0, std::vector<double>{0.0}, zero_sigma);
  EXPECT_NEAR(c[0], -1.0 / (std::sqrt(2 * std::numbers::pi) * kSigmaFloor), 1e-9);
}

TEST(GaussianKernel, TensorFormMatchesScalarForm) {
  nc::Rng rng(4);
  const std::vector<double> x{0.7, 1.5, 3.1};
  const std::vector<std::size_t> idx{0, 1, 0};
  const auto alpha = nc::Tensor<double>::from(2, 1, {1.2, 0.8});
  const auto beta = nc::Tensor<double>::from(2, 1, {-0.1, 0.3});
  const auto mu = nc::Tensor<double>::from(1, 3, {0.0, 1.0, 2.5});
  const auto sigma = nc::Tensor<double>::from(1, 3, {0.5, -0.7, 0.0005});
  const auto k = gaussian_kernels<double>(x, idx, alpha, beta, mu, sigma, -1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto want = gaussian_kernel_vector(x[i], alpha(idx[i], 0), beta(idx[i], 0), mu.data(), sigma.data());
    for (std::size_t m = 0; m < 3; ++m) EXPECT_NEAR(k(i, m), want[m], 1e-12);
  }
}

TEST(TypeIndex, PairAndTripleBuckets) {
  std::set<std::size_t> triples;
  for (int a = 0; a < 8; ++a)
    for (int v = 0; v < 8; ++v)
      for (int b = 0; b < 8; ++b) {
        EXPECT_EQ(triple_type_index(a, v, b, 8), triple_type_index(b, v, a, 8));
        triples.insert(triple_type_index(a, v, b, 8));
      }
  EXPECT_EQ(triples.size() + 1, triple_type_count(8));
  EXPECT_EQ(*triples.rbegin() + 2, triple_type_count(8));
  EXPECT_EQ(pair_type_index(9, 0, 8), pair_type_count(8) - 1);
  EXPECT_EQ(triple_type_index(0, -1, 0, 8), triple_type_count(8) - 1);
}

TEST(Features2D, ZeroInputsGiveZeroRow) {
  const auto meta = toy_meta();
  MolGraph2D g;
  g.theta_v = static_cast<std::size_t>(meta.theta_v);
  g.atom_types = {0, 0};
  g.atom_feats.assign(2 * g.theta_v, 0.0);
  g.bonds.push_back({0, 1, 0, std::vector<double>(static_cast<std::size_t>(meta.theta_e), 0.0)});
  nc::ParamStore<double> store;
  FeatureConfig cfg;
  cfg.hidden = 8;
  register_feature_params(store, Modality::d2, meta, cfg, 3);
  const auto lg = to_line_graph(g, meta.theta_t);
  const auto x = build_2d_features(gather_2d_inputs(g, lg), store);
  ASSERT_EQ(x.rows(), 2u);
  ASSERT_EQ(x.cols(), 8u);
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_EQ(x(0, c), 0.0);
    EXPECT_EQ(x(1, c), store.get("2d.feat.virtual")(0, c));
  }
}

TEST(Features2D, MatchesDenseOracleAndIgnoresBondOrientation) {
  const auto ds = molio::generate_toy_corpus(6, 21, molio::ToyKind::mixed);
  nc::ParamStore<double> store;
  FeatureConfig cfg;
  cfg.hidden = 10;
  register_feature_params(store, Modality::d2, ds.meta, cfg, 5);
  jitter(store, 8, 0.3);
  const auto& Wg = store.get("2d.feat.W_g");
  const auto& We = store.get("2d.feat.W_e");
  for (const auto& rec : ds.records) {
    auto g = rec.g2d;
    nc::Rng rng(1);
    for (auto& v : g.atom_feats) v = rng.uniform(-1, 1);
    for (auto& b : g.bonds)
      for (auto& v : b.feats) v = rng.uniform(-1, 1);
    const auto lg = to_line_graph(g, ds.meta.theta_t);
    const auto x = build_2d_features(gather_2d_inputs(g, lg), store);
    for (std::size_t k = 0; k < g.bonds.size(); ++k) {
      const auto& b = g.bonds[k];
      const auto hu = g.atom_feat(static_cast<std::size_t>(b.u));
      const auto hv = g.atom_feat(static_cast<std::size_t>(b.v));
      for (std::size_t c = 0; c < 5; ++c) {
        double a = 0, e = 0;
        for (std::size_t r = 0; r < g.theta_v; ++r) a += hu[r] * Wg(r, c) + hv[r] * Wg(r, c);
        for (std::size_t r = 0; r < b.feats.size(); ++r) e += b.feats[r] * We(r, c);
        EXPECT_NEAR(x(k, c), a, 1e-12);
        EXPECT_NEAR(x(k, 5 + c), e, 1e-12);
      }
    }
    auto flipped = g;
    for (auto& b : flipped.bonds) std::swap(b.u, b.v);
    const auto lf = to_line_graph(flipped, ds.meta.theta_t);
    EXPECT_EQ(lf.node_origin, lg.node_origin);
    const auto xf = build_2d_features(gather_2d_inputs(flipped, lf), store);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(xf.data()[i], x.data()[i]);
  }
}

TEST(Features2D, WidthMismatchRejected) {
  const auto ds = molio::generate_toy_corpus(1, 2, molio::ToyKind::trees);
  nc::ParamStore<double> store;
  auto meta = ds.meta;
  meta.theta_v += 1;
  register_feature_params(store, Modality::d2, meta, FeatureConfig{}, 1);
  const auto lg = to_line_graph(ds.records[0].g2d, meta.theta_t);
  EXPECT_THROW(build_2d_features(gather_2d_inputs(ds.records[0].g2d, lg), store), DimensionMismatch);
}

TEST(Features3D, RigidMotionAndReflectionInvariance) {
  const auto ds = molio::generate_toy_corpus(8, 31, molio::ToyKind::mixed);
  nc::ParamStore<double> store;
  FeatureConfig cfg;
  cfg.hidden = 8;
  register_feature_params(store, Modality::d3, ds.meta, cfg, 9);
  jitter(store, 10, 0.2);
  nc::Rng rng(77);
  for (const auto& rec : ds.records) {
    const auto& g = *rec.g3d;
    const auto lg = to_line_graph(g, ds.meta.theta_t);
    const auto base = build_3d_features(gather_3d_inputs(g, lg, ds.meta.theta_t), store, -1.0);
    for (int k = 0; k < 6; ++k) {
      auto moved = g;
      moved.coords = tst::rigid_motion(g.coords, tst::random_orthogonal(rng, k % 2 == 0), tst::random_translation(rng));
      const auto f = build_3d_features(gather_3d_inputs(moved, lg, ds.meta.theta_t), store, -1.0);
      for (std::size_t i = 0; i < base.node_input.size(); ++i)
        EXPECT_NEAR(f.node_input.data()[i], base.node_input.data()[i], 1e-7);
      for (std::size_t i = 0; i < base.edge_feat.size(); ++i)
        EXPECT_NEAR(f.edge_feat.data()[i], base.edge_feat.data()[i], 1e-7);
    }
  }
}

TEST(Features3D, OutOfVocabularyTypesHaveNoTypeContribution) {
  auto g = graph3d({{0, 1}, {1, 2}}, 3);
  g.atom_types = {8, 9, 10};  // all outside an 8-type vocabulary
  const auto meta = toy_meta();
  nc::ParamStore<double> store;
  FeatureConfig cfg;
  cfg.hidden = 6;
  register_feature_params(store, Modality::d3, meta, cfg, 2);
  const auto lg = to_line_graph(g, meta.theta_t);
  const auto in = gather_3d_inputs(g, lg, meta.theta_t);
  EXPECT_EQ(in.pair_idx[0], pair_type_count(8) - 1);
  const auto f = build_3d_features(in, store, -1.0);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(f.node_input(r, c), 0.0);
  EXPECT_NE(f.node_input(0, 3), 0.0);
}

TEST(Features3D, CollinearPathEdgeIsKernelOfPi) {
  MolGraph3D g;
  g.atom_types = {1, 0, 2};
  g.coords = {{0, 0, 0}, {1.4, 0, 0}, {2.9, 0, 0}};
  g.bonds = {{0, 1}, {1, 2}};
  const auto meta = toy_meta();
  nc::ParamStore<double> store;
  FeatureConfig cfg;
  cfg.hidden = 8;
  cfg.kernels = 5;
  register_feature_params(store, Modality::d3, meta, cfg, 12);
  jitter(store, 13, 0.2);
  const auto lg = to_line_graph(g, meta.theta_t);
  const auto f = build_3d_features(gather_3d_inputs(g, lg, meta.theta_t), store, -1.0);
  ASSERT_EQ(f.edge_feat.rows(), 1u);
  const auto t = triple_type_index(1, 0, 2, meta.theta_t);
  const auto kv = gaussian_kernel_vector(std::numbers::pi, store.get("3d.feat.alpha_theta")(t, 0),
                                         store.get("3d.feat.beta_theta")(t, 0), store.get("3d.feat.mu_theta").data(),
                                         store.get("3d.feat.sigma_theta").data());
  const auto& Wp = store.get("3d.feat.W_p");
  for (std::size_t c = 0; c < Wp.cols(); ++c) {
    double want = 0;
    for (std::size_t m = 0; m < kv.size(); ++m) want += kv[m] * Wp(m, c);
    EXPECT_NEAR(f.edge_feat(0, c), want, 1e-12);
  }
}

TEST(Features3D, GradientsMatchFiniteDifferences) {
  const auto ds = molio::generate_toy_corpus(1, 5, molio::ToyKind::rings);
  const auto& g = *ds.records[0].g3d;
  nc::ParamStore<double> store;
  FeatureConfig cfg;
  cfg.hidden = 4;
  cfg.kernels = 3;
  register_feature_params(store, Modality::d3, ds.meta, cfg, 1);
  jitter(store, 2, 0.3);
  const auto lg = to_line_graph(g, ds.meta.theta_t);
  const auto in = gather_3d_inputs(g, lg, ds.meta.theta_t);
  const auto w = nc::Tensor<double>::from(1, 4, {0.3, -1.1, 0.7, 0.2});
  const auto r = nc::check_gradients<double>(
      [&] {
        const auto f = build_3d_features(in, store, -1.0);
        return nc::sum(nc::square(f.node_input * w)) + nc::sum(nc::square(f.edge_feat));
      },
      store, 1e-5, 1e-3);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst_param << "[" << r.worst_index << "]";
}
