#pragma once

// Initial line-node and line-edge features. Molecule-dependent constants are
// gathered once into FeatureInputs*; the differentiable part reads parameters
// from a ParamStore under "<2d|3d>.feat.".

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "galformer/errors.hpp"
#include "galformer/linegraph/line_graph.hpp"
#include "galformer/molio/geometry.hpp"
#include "galformer/molio/types.hpp"
#include "galformer/numcore/numcore.hpp"

namespace galformer::lg {

inline constexpr double kSigmaFloor = 1e-3;

struct FeatureConfig {
  int hidden = 64;       // line-node width
  int kernels = 16;      // Gaussian basis size M
  int edge_dim = 0;      // line-edge width; 0 means hidden / 2
  double kernel_sign = -1.0;
  double mu_d_max = 4.0;  // Angstrom

  int edge_width() const { return edge_dim > 0 ? edge_dim : hidden / 2; }
  void validate() const {
    if (hidden < 2 || hidden % 2 != 0) throw ConfigError("hidden must be even and >= 2");
    if (kernels < 1) throw ConfigError("kernels must be >= 1");
    if (kernel_sign != 1.0 && kernel_sign != -1.0) throw ConfigError("kernel_sign must be +1 or -1");
  }
};

/// Type-pair bucket; out-of-vocabulary types map to the last bucket.
inline std::size_t pair_type_index(int a, int b, int theta_t) {
  if (a < 0 || b < 0 || a >= theta_t || b >= theta_t) return static_cast<std::size_t>(theta_t * (theta_t + 1) / 2);
  return static_cast<std::size_t>(molio::pair_class(a, b, theta_t));
}
inline std::size_t pair_type_count(int theta_t) { return static_cast<std::size_t>(theta_t * (theta_t + 1) / 2 + 1); }

/// Angle-type bucket for the canonical triple (min(tu,tw), tv, max(tu,tw)).
inline std::size_t triple_type_index(int tu, int tv, int tw, int theta_t) {
  const int pairs = theta_t * (theta_t + 1) / 2;
  if (tu < 0 || tv < 0 || tw < 0 || tu >= theta_t || tv >= theta_t || tw >= theta_t)
    return static_cast<std::size_t>(theta_t * pairs);
  return static_cast<std::size_t>(tv * pairs + molio::pair_class(tu, tw, theta_t));
}
inline std::size_t triple_type_count(int theta_t) {
  return static_cast<std::size_t>(theta_t * (theta_t * (theta_t + 1) / 2) + 1);
}

/// Scalar reference form of the kernel bank, mostly for checks.
inline std::vector<double> gaussian_kernel_vector(double x, double alpha, double beta, std::span<const double> mu,
                                                  std::span<const double> sigma, double sign = -1.0) {
  if (mu.size() != sigma.size()) throw DimensionMismatch("kernel centers vs widths");
  std::vector<double> out(mu.size());
  const double lin = alpha * x + beta;
  for (std::size_t m = 0; m < mu.size(); ++m) {
    const double s = std::max(std::abs(sigma[m]), kSigmaFloor);
    const double z = (lin - mu[m]) / s;
    out[m] = sign * std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * s);
  }
  return out;
}

/// Differentiable kernel bank over a column of scalars.
/// x: [n x 1] constants, type_idx selects (alpha, beta) rows; mu, sigma: [1 x M].
template <std::floating_point T>
nc::Tensor<T> gaussian_kernels(const std::vector<double>& x, const std::vector<std::size_t>& type_idx,
                               const nc::Tensor<T>& alpha, const nc::Tensor<T>& beta, const nc::Tensor<T>& mu,
                               const nc::Tensor<T>& sigma, double sign) {
  std::vector<T> xv(x.begin(), x.end());
  const auto xt = nc::Tensor<T>::from(x.size(), 1, std::move(xv));
  const auto lin = nc::index_rows(alpha, type_idx) * xt + nc::index_rows(beta, type_idx);
  const auto s = nc::abs_floor(sigma, T(kSigmaFloor));
  const auto z = (lin - mu) / s;
  const auto g = nc::exp(nc::scale(nc::square(z), T(-0.5))) / s;
  return nc::scale(g, static_cast<T>(sign / std::sqrt(2.0 * std::numbers::pi)));
}

struct FeatureInputs2D {
  std::size_t n = 0;
  std::size_t theta_v = 0, theta_e = 0;
  std::vector<double> atom_sum;  // [n x theta_v], h_u + h_v
  std::vector<double> bond;      // [n x theta_e]
};

struct FeatureInputs3D {
  std::size_t n = 0;
  std::size_t theta_t = 0;
  std::vector<double> type_sum;  // [n x theta_t], onehot(t_u) + onehot(t_v)
  std::vector<double> distance;  // per line node
  std::vector<std::size_t> pair_idx;
  std::vector<double> angle;     // per line edge
  std::vector<std::size_t> triple_idx;
};

inline FeatureInputs2D gather_2d_inputs(const molio::MolGraph2D& g, const LineGraph& lg) {
  FeatureInputs2D in;
  in.n = lg.n_nodes();
  in.theta_v = g.theta_v;
  in.theta_e = g.bonds.empty() ? 0 : g.bonds[0].feats.size();
  in.atom_sum.assign(in.n * in.theta_v, 0.0);
  in.bond.assign(in.n * in.theta_e, 0.0);
  if (g.bonds.size() != in.n) throw DimensionMismatch("line graph does not match molecule bonds");
  for (std::size_t k = 0; k < in.n; ++k) {
    const auto& b = g.bonds[k];
    const auto fu = g.atom_feat(static_cast<std::size_t>(b.u));
    const auto fv = g.atom_feat(static_cast<std::size_t>(b.v));
    for (std::size_t c = 0; c < in.theta_v; ++c) in.atom_sum[k * in.theta_v + c] = fu[c] + fv[c];
    if (b.feats.size() != in.theta_e) throw DimensionMismatch("bond feature width varies within molecule");
    for (std::size_t c = 0; c < in.theta_e; ++c) in.bond[k * in.theta_e + c] = b.feats[c];
  }
  return in;
}

inline FeatureInputs3D gather_3d_inputs(const molio::MolGraph3D& g, const LineGraph& lg, int theta_t) {
  FeatureInputs3D in;
  in.n = lg.n_nodes();
  in.theta_t = static_cast<std::size_t>(theta_t);
  in.type_sum.assign(in.n * in.theta_t, 0.0);
  const auto type_of = [&](int atom) { return g.atom_types.at(static_cast<std::size_t>(atom)); };
  for (std::size_t k = 0; k < in.n; ++k) {
    const auto [u, v] = lg.node_origin[k];
    for (int a : {u, v}) {
      const int t = type_of(a);
      if (t >= 0 && t < theta_t) in.type_sum[k * in.theta_t + static_cast<std::size_t>(t)] += 1.0;
    }
    in.distance.push_back(molio::pair_distance(g.coords, static_cast<std::size_t>(u), static_cast<std::size_t>(v)));
    in.pair_idx.push_back(pair_type_index(type_of(u), type_of(v), theta_t));
  }
  for (const auto& e : lg.edges) {
    const auto [a0, a1] = lg.node_origin[e.i];
    const auto [b0, b1] = lg.node_origin[e.j];
    const int v = e.shared_atom;
    const int u = a0 == v ? a1 : a0;
    const int w = b0 == v ? b1 : b0;
    in.angle.push_back(molio::bond_angle(g.coords, static_cast<std::size_t>(u), static_cast<std::size_t>(v),
                                         static_cast<std::size_t>(w)));
    in.triple_idx.push_back(triple_type_index(type_of(u), type_of(v), type_of(w), theta_t));
  }
  return in;
}

inline std::string feature_prefix(Modality m) { return std::string(modality_name(m)) + ".feat."; }

/// Creates the feature parameters of one modality in `store`.
template <std::floating_point T>
void register_feature_params(nc::ParamStore<T>& store, Modality m, const molio::DatasetMeta& meta,
                             const FeatureConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto p = feature_prefix(m);
  const auto half = static_cast<std::size_t>(cfg.hidden / 2);
  const auto hidden = static_cast<std::size_t>(cfg.hidden);
  const auto M = static_cast<std::size_t>(cfg.kernels);
  using nc::InitScheme;
  store.create(p + "virtual", 1, hidden, InitScheme::normal(0.02), seed);
  if (m == Modality::d2) {
    store.create(p + "W_g", static_cast<std::size_t>(meta.theta_v), half, InitScheme::xavier(), seed);
    store.create(p + "W_e", static_cast<std::size_t>(meta.theta_e), half, InitScheme::xavier(), seed);
    return;
  }
  const auto tt = meta.theta_t;
  store.create(p + "W_l", static_cast<std::size_t>(tt), half, InitScheme::xavier(), seed);
  store.create(p + "W_d", M, half, InitScheme::xavier(), seed);
  store.create(p + "W_p", M, static_cast<std::size_t>(cfg.edge_width()), InitScheme::xavier(), seed);
  store.create(p + "mu_d", 1, M, InitScheme::linspace(0.0, cfg.mu_d_max), seed);
  store.create(p + "sigma_d", 1, M, InitScheme::constant(0.5), seed);
  store.create(p + "mu_theta", 1, M, InitScheme::linspace(0.0, std::numbers::pi), seed);
  store.create(p + "sigma_theta", 1, M, InitScheme::constant(0.5), seed);
  store.create(p + "alpha_d", pair_type_count(tt), 1, InitScheme::constant(1.0), seed);
  store.create(p + "beta_d", pair_type_count(tt), 1, InitScheme::zeros(), seed);
  store.create(p + "alpha_theta", triple_type_count(tt), 1, InitScheme::constant(1.0), seed);
  store.create(p + "beta_theta", triple_type_count(tt), 1, InitScheme::zeros(), seed);
  store.create(p + "virtual_edge", 1, static_cast<std::size_t>(cfg.edge_width()), InitScheme::normal(0.02), seed);
}

namespace detail {

template <std::floating_point T>
nc::Tensor<T> constant(std::size_t r, std::size_t c, const std::vector<double>& v) {
  return nc::Tensor<T>::from(r, c, std::vector<T>(v.begin(), v.end()));
}

}  // namespace detail

/// Line-node inputs [n + 1 x hidden]; last row is the virtual node.
template <std::floating_point T>
nc::Tensor<T> build_2d_features(const FeatureInputs2D& in, const nc::ParamStore<T>& store) {
  const auto p = feature_prefix(Modality::d2);
  const auto& Wg = store.get(p + "W_g");
  const auto& We = store.get(p + "W_e");
  if (Wg.rows() != in.theta_v)
    throw DimensionMismatch("atom feature width " + std::to_string(in.theta_v) + " vs W_g " +
                            nc::shape_str(Wg.rows(), Wg.cols()));
  if (We.rows() != in.theta_e)
    throw DimensionMismatch("bond feature width " + std::to_string(in.theta_e) + " vs W_e " +
                            nc::shape_str(We.rows(), We.cols()));
  const auto atoms = nc::matmul(detail::constant<T>(in.n, in.theta_v, in.atom_sum), Wg);
  const auto bonds = nc::matmul(detail::constant<T>(in.n, in.theta_e, in.bond), We);
  return nc::concat_rows(nc::concat_cols(atoms, bonds), store.get(p + "virtual"));
}

template <std::floating_point T>
struct Features3D {
  nc::Tensor<T> node_input;  // [n + 1 x hidden]
  nc::Tensor<T> edge_feat;   // [n_edges x edge_dim]
};

template <std::floating_point T>
Features3D<T> build_3d_features(const FeatureInputs3D& in, const nc::ParamStore<T>& store, double kernel_sign) {
  const auto p = feature_prefix(Modality::d3);
  const auto& Wl = store.get(p + "W_l");
  if (Wl.rows() != in.theta_t)
    throw DimensionMismatch("atom type count " + std::to_string(in.theta_t) + " vs W_l " +
                            nc::shape_str(Wl.rows(), Wl.cols()));
  const auto types = nc::matmul(detail::constant<T>(in.n, in.theta_t, in.type_sum), Wl);
  const auto dk = gaussian_kernels<T>(in.distance, in.pair_idx, store.get(p + "alpha_d"), store.get(p + "beta_d"),
                                      store.get(p + "mu_d"), store.get(p + "sigma_d"), kernel_sign);
  const auto dist = nc::matmul(dk, store.get(p + "W_d"));
  Features3D<T> out;
  out.node_input = nc::concat_rows(nc::concat_cols(types, dist), store.get(p + "virtual"));
  const auto& Wp = store.get(p + "W_p");
  if (in.angle.empty()) {
    out.edge_feat = nc::Tensor<T>::zeros(0, Wp.cols());
  } else {
    const auto ak = gaussian_kernels<T>(in.angle, in.triple_idx, store.get(p + "alpha_theta"),
                                        store.get(p + "beta_theta"), store.get(p + "mu_theta"),
                                        store.get(p + "sigma_theta"), kernel_sign);
    out.edge_feat = nc::matmul(ak, Wp);
  }
  return out;
}

}  // namespace galformer::lg
