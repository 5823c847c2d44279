#pragma once

// Line-graph transformer: pre-norm blocks of biased multi-head attention and a
// GELU feed-forward network, read out through the virtual node.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "galformer/errors.hpp"
#include "galformer/linegraph/features.hpp"
#include "galformer/model/config.hpp"
#include "galformer/model/prepared.hpp"
#include "galformer/numcore/numcore.hpp"
#include "galformer/structcode/encoding.hpp"

namespace galformer::model {

using lg::Modality;

/// Training-time switches for one forward pass. Dropout masks come from a
/// counter stream, so a given (seed, step) reproduces exactly.
struct ForwardContext {
  bool train = false;
  double dropout = 0.0;
  nc::CounterRng rng{0, "dropout"};
  std::uint64_t counter = 0;
  // observer(layer, head, V, row-major attention weights [V x V])
  std::function<void(int, int, std::size_t, const std::vector<double>&)> attention_observer;

  template <std::floating_point T>
  nc::Tensor<T> drop(const nc::Tensor<T>& x) {
    if (!train || dropout <= 0.0) return x;
    const auto base = counter;
    counter += x.size();
    return nc::dropout(x, dropout, rng, base);
  }
};

inline ForwardContext training_context(double dropout, std::uint64_t seed, std::uint64_t step) {
  ForwardContext c;
  c.train = true;
  c.dropout = dropout;
  c.rng = nc::CounterRng(nc::mix_keys(seed, step), "dropout");
  return c;
}

inline std::string layer_prefix(Modality m, int k) {
  return std::string(lg::modality_name(m)) + ".layer" + std::to_string(k) + ".";
}

template <std::floating_point T>
void register_transformer_params(nc::ParamStore<T>& store, Modality m, const ModelConfig& cfg, std::uint64_t seed) {
  using nc::InitScheme;
  const auto h = static_cast<std::size_t>(cfg.hidden);
  const auto f = static_cast<std::size_t>(cfg.hidden * cfg.ffn_mult);
  for (int k = 0; k < cfg.layers; ++k) {
    const auto p = layer_prefix(m, k);
    store.create(p + "ln1.gamma", 1, h, InitScheme::constant(1.0), seed);
    store.create(p + "ln1.beta", 1, h, InitScheme::zeros(), seed);
    store.create(p + "attn.W_q", h, h, InitScheme::xavier(), seed);
    store.create(p + "attn.W_k", h, h, InitScheme::xavier(), seed);
    store.create(p + "attn.W_v", h, h, InitScheme::xavier(), seed);
    store.create(p + "attn.W_o", h, h, InitScheme::xavier(), seed);
    store.create(p + "attn.b_o", 1, h, InitScheme::zeros(), seed);
    store.create(p + "ln2.gamma", 1, h, InitScheme::constant(1.0), seed);
    store.create(p + "ln2.beta", 1, h, InitScheme::zeros(), seed);
    store.create(p + "ffn.W_1", h, f, InitScheme::xavier(), seed);
    store.create(p + "ffn.b_1", 1, f, InitScheme::zeros(), seed);
    store.create(p + "ffn.W_2", f, h, InitScheme::xavier(), seed);
    store.create(p + "ffn.b_2", 1, h, InitScheme::zeros(), seed);
  }
}

/// Feature, encoding and transformer parameters of one modality's encoder.
template <std::floating_point T>
void register_encoder_params(nc::ParamStore<T>& store, Modality m, const molio::DatasetMeta& meta,
                             const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  lg::register_feature_params(store, m, meta, cfg.feature_config(), seed);
  sc::register_encoding_params(store, m, cfg.encoding_config(), static_cast<std::size_t>(cfg.hidden),
                               static_cast<std::size_t>(cfg.edge_width()), seed);
  register_transformer_params(store, m, cfg, seed);
}

template <std::floating_point T>
nc::Tensor<T> affine_layer_norm(const nc::Tensor<T>& x, const nc::Tensor<T>& gamma, const nc::Tensor<T>& beta) {
  return nc::layer_norm(x) * gamma + beta;
}

/// Multi-head self-attention with additive per-head bias [heads*V x V].
/// `prefix` names the W_q/W_k/W_v/W_o/b_o parameters.
template <std::floating_point T>
nc::Tensor<T> biased_attention(const nc::Tensor<T>& x, const nc::Tensor<T>& bias, const nc::ParamStore<T>& store,
                               const std::string& prefix, int heads, ForwardContext& ctx, int layer = 0) {
  const auto V = x.rows();
  const auto H = static_cast<std::size_t>(heads);
  if (bias.rows() != H * V || bias.cols() != V)
    throw ShapeMismatch("attention bias " + nc::shape_str(bias.rows(), bias.cols()) + " for " + std::to_string(V) +
                        " nodes and " + std::to_string(H) + " heads");
  const auto hidden = x.cols();
  if (hidden % H != 0) throw ShapeMismatch("hidden width not divisible by heads");
  const auto dk = hidden / H;
  const auto q = nc::matmul(x, store.get(prefix + "W_q"));
  const auto k = nc::matmul(x, store.get(prefix + "W_k"));
  const auto v = nc::matmul(x, store.get(prefix + "W_v"));
  const T inv = T(1) / std::sqrt(static_cast<T>(dk));
  std::vector<nc::Tensor<T>> outs;
  outs.reserve(H);
  for (std::size_t h = 0; h < H; ++h) {
    const auto qh = nc::slice_cols(q, h * dk, (h + 1) * dk);
    const auto kh = nc::slice_cols(k, h * dk, (h + 1) * dk);
    const auto vh = nc::slice_cols(v, h * dk, (h + 1) * dk);
    const auto scores = nc::scale(nc::matmul(qh, nc::transpose(kh)), inv) + nc::slice_rows(bias, h * V, (h + 1) * V);
    const auto a = nc::softmax(scores);
    if (ctx.attention_observer)
      ctx.attention_observer(layer, static_cast<int>(h), V, std::vector<double>(a.data().begin(), a.data().end()));
    outs.push_back(nc::matmul(ctx.drop(a), vh));
  }
  const auto cat = nc::concat_cols(std::span<const nc::Tensor<T>>(outs));
  return nc::matmul(cat, store.get(prefix + "W_o")) + store.get(prefix + "b_o");
}

template <std::floating_point T>
struct EncoderOutput {
  nc::Tensor<T> node_states;          // [V x hidden]
  nc::Tensor<T> graph_embedding;      // [1 x hidden], virtual node
  nc::Tensor<T> mean_node_embedding;  // [1 x hidden], real nodes only
};

template <std::floating_point T>
EncoderOutput<T> run_transformer(const sc::EncodedGraph<T>& enc, const nc::ParamStore<T>& store, Modality m,
                                 const ModelConfig& cfg, ForwardContext& ctx) {
  auto x = enc.x;
  if (x.cols() != static_cast<std::size_t>(cfg.hidden))
    throw ShapeMismatch("encoder input width " + std::to_string(x.cols()) + " vs hidden " +
                        std::to_string(cfg.hidden));
  for (int k = 0; k < cfg.layers; ++k) {
    const auto p = layer_prefix(m, k);
    const auto a = affine_layer_norm(x, store.get(p + "ln1.gamma"), store.get(p + "ln1.beta"));
    x = x + ctx.drop(biased_attention(a, enc.bias, store, p + "attn.", cfg.heads, ctx, k));
    const auto f = affine_layer_norm(x, store.get(p + "ln2.gamma"), store.get(p + "ln2.beta"));
    const auto hdn = nc::gelu(nc::matmul(f, store.get(p + "ffn.W_1")) + store.get(p + "ffn.b_1"));
    x = x + ctx.drop(nc::matmul(hdn, store.get(p + "ffn.W_2")) + store.get(p + "ffn.b_2"));
  }
  const auto V = x.rows();
  EncoderOutput<T> out;
  out.node_states = x;
  out.graph_embedding = nc::slice_rows(x, V - 1, V);
  out.mean_node_embedding = nc::mean(nc::slice_rows(x, 0, V - 1), 0);
  return out;
}

/// Line-node inputs before any masking.
template <std::floating_point T>
nc::Tensor<T> node_input_2d(const Prepared2D<T>& p, const nc::ParamStore<T>& store) {
  return lg::build_2d_features(p.inputs, store);
}

template <std::floating_point T>
lg::Features3D<T> features_3d(const Prepared3D<T>& p, const nc::ParamStore<T>& store, const ModelConfig& cfg) {
  return lg::build_3d_features(p.inputs, store, cfg.kernel_sign);
}

template <std::floating_point T>
EncoderOutput<T> encode_2d_from(const Prepared2D<T>& p, const nc::Tensor<T>& node_input,
                                const nc::ParamStore<T>& store, const ModelConfig& cfg, ForwardContext& ctx) {
  const auto enc = sc::encode_2d(p.structure, node_input, store, cfg.encoding_config());
  return run_transformer(enc, store, Modality::d2, cfg, ctx);
}

template <std::floating_point T>
EncoderOutput<T> encode_3d_from(const Prepared3D<T>& p, const nc::Tensor<T>& node_input,
                                const nc::Tensor<T>& edge_feat, const nc::ParamStore<T>& store,
                                const ModelConfig& cfg, ForwardContext& ctx) {
  const auto enc = sc::encode_3d(p.structure, node_input, edge_feat, store, cfg.encoding_config());
  return run_transformer(enc, store, Modality::d3, cfg, ctx);
}

template <std::floating_point T>
EncoderOutput<T> forward_2d(const Prepared2D<T>& p, const nc::ParamStore<T>& store, const ModelConfig& cfg,
                            ForwardContext& ctx) {
  return encode_2d_from(p, node_input_2d(p, store), store, cfg, ctx);
}

template <std::floating_point T>
EncoderOutput<T> forward_3d(const Prepared3D<T>& p, const nc::ParamStore<T>& store, const ModelConfig& cfg,
                            ForwardContext& ctx) {
  const auto f = features_3d(p, store, cfg);
  return encode_3d_from(p, f.node_input, f.edge_feat, store, cfg, ctx);
}

}  // namespace galformer::model
