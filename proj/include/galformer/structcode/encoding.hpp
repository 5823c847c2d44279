#pragma once

// Attention biases from shortest paths, and the position-aware node inputs.
//
// Bias tensors are stacked per head: shape [heads * V x V], head h occupying
// rows h*V .. h*V + V - 1. Each bias is a fixed sparse linear map (gather_sum)
// of a small projected tensor, so the index bookkeeping is done once per
// molecule and shared by every forward pass.

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "galformer/errors.hpp"
#include "galformer/linegraph/line_graph.hpp"
#include "galformer/numcore/numcore.hpp"
#include "galformer/structcode/shortest_paths.hpp"
#include "galformer/structcode/spectral.hpp"

namespace galformer::sc {

struct EncodingConfig {
  int heads = 4;
  int max_path = 20;   // L_max
  int path_dim = 8;    // p
  int pe_dim = 8;      // K
  int eigen_sweeps = 100;

  void validate() const {
    if (heads < 1) throw ConfigError("heads must be >= 1");
    if (max_path < 1) throw ConfigError("max_path must be >= 1");
    if (path_dim < 1) throw ConfigError("path_dim must be >= 1");
    if (pe_dim < 1) throw ConfigError("pe_dim must be >= 1");
  }
};

inline std::string encoding_prefix(lg::Modality m) { return std::string(lg::modality_name(m)) + ".enc."; }

template <std::floating_point T>
void register_encoding_params(nc::ParamStore<T>& store, lg::Modality m, const EncodingConfig& cfg,
                              std::size_t hidden, std::size_t edge_dim, std::uint64_t seed) {
  cfg.validate();
  const auto p = encoding_prefix(m);
  const auto H = static_cast<std::size_t>(cfg.heads);
  const auto L = static_cast<std::size_t>(cfg.max_path);
  using nc::InitScheme;
  if (m == lg::Modality::d2) {
    const auto P = static_cast<std::size_t>(cfg.path_dim);
    store.create(p + "pe_proj", static_cast<std::size_t>(cfg.pe_dim), hidden, InitScheme::xavier(), seed);
    store.create(p + "path_len_table", L + 2, H * P, InitScheme::normal(0.1), seed);
    store.create(p + "path_len_proj", 1, H * P, InitScheme::normal(0.1), seed);
    store.create(p + "path_node_proj", hidden, H * L, InitScheme::normal(0.02), seed);
  } else {
    store.create(p + "angle_proj", edge_dim, H * L, InitScheme::normal(0.02), seed);
  }
}

/// Row of the path-length table used for a given length.
inline std::size_t length_row(int len, int max_path) {
  if (len == kUnreachable) return static_cast<std::size_t>(max_path) + 1;
  return static_cast<std::size_t>(std::min(len, max_path));
}

template <std::floating_point T>
using Terms = std::shared_ptr<const std::vector<nc::GatherTerm<T>>>;

/// b: sums p products per (head, i, j) from the elementwise product table*proj.
template <std::floating_point T>
Terms<T> path_length_terms(const ShortestPathTable& spt, const EncodingConfig& cfg) {
  const auto V = spt.V;
  const auto H = static_cast<std::size_t>(cfg.heads);
  const auto P = static_cast<std::size_t>(cfg.path_dim);
  auto terms = std::make_shared<std::vector<nc::GatherTerm<T>>>();
  terms->reserve(H * V * V * P);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < V; ++i)
      for (std::size_t j = 0; j < V; ++j) {
        const auto row = length_row(spt.len(i, j), cfg.max_path);
        for (std::size_t k = 0; k < P; ++k)
          terms->push_back({(h * V + i) * V + j, row * H * P + h * P + k, T(1)});
      }
  return terms;
}

/// c: walks node_seq; input is X * path_node_proj, shape [V x heads*L].
template <std::floating_point T>
Terms<T> path_node_terms(const ShortestPathTable& spt, const EncodingConfig& cfg) {
  const auto V = spt.V;
  const auto H = static_cast<std::size_t>(cfg.heads);
  const auto L = static_cast<std::size_t>(cfg.max_path);
  auto terms = std::make_shared<std::vector<nc::GatherTerm<T>>>();
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < V; ++i)
      for (std::size_t j = 0; j < V; ++j) {
        const auto& seq = spt.nodes(i, j);
        if (seq.empty()) continue;
        const T w = T(1) / static_cast<T>(seq.size());
        for (std::size_t n = 0; n < seq.size(); ++n) {
          const auto pos = std::min(n, L - 1);
          terms->push_back({(h * V + i) * V + j, seq[n] * H * L + h * L + pos, w});
        }
      }
  return terms;
}

/// g: walks edge_seq; input is [edge feats; virtual edge] * angle_proj.
template <std::floating_point T>
Terms<T> angle_terms(const ShortestPathTable& spt, const EncodingConfig& cfg) {
  const auto V = spt.V;
  const auto H = static_cast<std::size_t>(cfg.heads);
  const auto L = static_cast<std::size_t>(cfg.max_path);
  auto terms = std::make_shared<std::vector<nc::GatherTerm<T>>>();
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < V; ++i)
      for (std::size_t j = 0; j < V; ++j) {
        const auto& seq = spt.edges(i, j);
        if (seq.empty()) continue;
        const T w = T(1) / static_cast<T>(seq.size());
        for (std::size_t m = 0; m < seq.size(); ++m) {
          const auto pos = std::min(m, L - 1);
          terms->push_back({(h * V + i) * V + j, seq[m] * H * L + h * L + pos, w});
        }
      }
  return terms;
}

/// Per-molecule constants: everything structural that does not depend on
/// parameters.
template <std::floating_point T>
struct Structure {
  lg::Modality modality = lg::Modality::d2;
  ShortestPathTable spt;
  PositionalEncoding pe;  // 2-D only
  Terms<T> b_terms, c_terms, g_terms;

  std::size_t V() const { return spt.V; }
};

template <std::floating_point T>
Structure<T> structure_from(lg::Modality m, ShortestPathTable spt, PositionalEncoding pe, const EncodingConfig& cfg) {
  Structure<T> s;
  s.modality = m;
  s.spt = std::move(spt);
  s.pe = std::move(pe);
  if (m == lg::Modality::d2) {
    s.b_terms = path_length_terms<T>(s.spt, cfg);
    s.c_terms = path_node_terms<T>(s.spt, cfg);
  } else {
    s.g_terms = angle_terms<T>(s.spt, cfg);
  }
  return s;
}

template <std::floating_point T>
Structure<T> compute_structure(const lg::LineGraph& g, const EncodingConfig& cfg) {
  cfg.validate();
  PositionalEncoding pe;
  if (g.modality == lg::Modality::d2)
    pe = normalized_laplacian_eigenvectors(g, static_cast<std::size_t>(cfg.pe_dim), cfg.eigen_sweeps);
  return structure_from<T>(g.modality, all_pairs_shortest_paths(g), std::move(pe), cfg);
}

template <std::floating_point T>
nc::Tensor<T> path_length_bias(const Structure<T>& s, const nc::ParamStore<T>& store, const EncodingConfig& cfg) {
  if (!s.b_terms) throw DimensionMismatch("path-length bias needs a 2-D structure");
  const auto p = encoding_prefix(lg::Modality::d2);
  const auto q = store.get(p + "path_len_table") * store.get(p + "path_len_proj");
  return nc::gather_sum(q, static_cast<std::size_t>(cfg.heads) * s.V(), s.V(), s.b_terms);
}

/// x: position-aware node inputs [V x hidden].
template <std::floating_point T>
nc::Tensor<T> path_node_bias(const Structure<T>& s, const nc::Tensor<T>& x, const nc::ParamStore<T>& store,
                             const EncodingConfig& cfg) {
  if (!s.c_terms) throw DimensionMismatch("path-node bias needs a 2-D structure");
  const auto proj = nc::matmul(x, store.get(encoding_prefix(lg::Modality::d2) + "path_node_proj"));
  return nc::gather_sum(proj, static_cast<std::size_t>(cfg.heads) * s.V(), s.V(), s.c_terms);
}

/// edge_feats: [n_edges x edge_dim]; the learned virtual edge is appended here.
template <std::floating_point T>
nc::Tensor<T> angle_bias(const Structure<T>& s, const nc::Tensor<T>& edge_feats, const nc::ParamStore<T>& store,
                         const EncodingConfig& cfg) {
  if (!s.g_terms) throw DimensionMismatch("angle bias needs a 3-D structure");
  const auto& virt = store.get("3d.feat.virtual_edge");
  const auto all = edge_feats.rows() == 0 ? virt : nc::concat_rows(edge_feats, virt);
  const auto proj = nc::matmul(all, store.get(encoding_prefix(lg::Modality::d3) + "angle_proj"));
  return nc::gather_sum(proj, static_cast<std::size_t>(cfg.heads) * s.V(), s.V(), s.g_terms);
}

template <std::floating_point T>
struct EncodedGraph {
  nc::Tensor<T> x;     // [V x hidden]
  nc::Tensor<T> bias;  // [heads*V x V]: b + c (2-D) or g (3-D)
  nc::Tensor<T> bias_b, bias_c, bias_g;  // components; empty when not applicable
};

/// 2-D: x = node input + PE * W_v (virtual row gets no PE), bias = b + c.
template <std::floating_point T>
EncodedGraph<T> encode_2d(const Structure<T>& s, const nc::Tensor<T>& node_input, const nc::ParamStore<T>& store,
                          const EncodingConfig& cfg) {
  if (node_input.rows() != s.V()) throw DimensionMismatch("node input rows vs structure");
  const auto& Wv = store.get(encoding_prefix(lg::Modality::d2) + "pe_proj");
  if (Wv.rows() != s.pe.k) throw DimensionMismatch("pe_proj rows vs positional encoding width");
  std::vector<T> pev(s.pe.vectors.begin(), s.pe.vectors.end());
  const auto pe = nc::Tensor<T>::from(s.pe.n, s.pe.k, std::move(pev));
  const auto pos = nc::concat_rows(nc::matmul(pe, Wv), nc::Tensor<T>::zeros(1, Wv.cols()));
  EncodedGraph<T> out;
  out.x = node_input + pos;
  out.bias_b = path_length_bias(s, store, cfg);
  out.bias_c = path_node_bias(s, out.x, store, cfg);
  out.bias = out.bias_b + out.bias_c;
  return out;
}

/// 3-D: x = node input, bias = g.
template <std::floating_point T>
EncodedGraph<T> encode_3d(const Structure<T>& s, const nc::Tensor<T>& node_input, const nc::Tensor<T>& edge_feats,
                          const nc::ParamStore<T>& store, const EncodingConfig& cfg) {
  if (node_input.rows() != s.V()) throw DimensionMismatch("node input rows vs structure");
  EncodedGraph<T> out;
  out.x = node_input;
  out.bias_g = angle_bias(s, edge_feats, store, cfg);
  out.bias = out.bias_g;
  return out;
}

}  // namespace galformer::sc
