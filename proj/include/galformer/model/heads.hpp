#pragma once

// Small MLP heads: per-modality projection into the contrastive space, and the
// downstream prediction head.

#include <string>

#include "galformer/model/config.hpp"
#include "galformer/model/transformer.hpp"
#include "galformer/numcore/numcore.hpp"

namespace galformer::model {

template <std::floating_point T>
void register_mlp(nc::ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t mid,
                  std::size_t out, std::uint64_t seed) {
  using nc::InitScheme;
  store.create(prefix + "W_1", in, mid, InitScheme::xavier(), seed);
  store.create(prefix + "b_1", 1, mid, InitScheme::zeros(), seed);
  store.create(prefix + "W_2", mid, out, InitScheme::xavier(), seed);
  store.create(prefix + "b_2", 1, out, InitScheme::zeros(), seed);
}

/// Two linear layers with ReLU between; rows of x are independent.
template <std::floating_point T>
nc::Tensor<T> mlp(const nc::Tensor<T>& x, const nc::ParamStore<T>& store, const std::string& prefix) {
  const auto h = nc::relu(nc::matmul(x, store.get(prefix + "W_1")) + store.get(prefix + "b_1"));
  return nc::matmul(h, store.get(prefix + "W_2")) + store.get(prefix + "b_2");
}

inline std::string projection_prefix(Modality m) { return std::string(lg::modality_name(m)) + ".proj."; }
inline const std::string kPredictionPrefix = "head.";

template <std::floating_point T>
void register_projection_head(nc::ParamStore<T>& store, Modality m, const ModelConfig& cfg, std::uint64_t seed) {
  const auto h = static_cast<std::size_t>(cfg.hidden);
  register_mlp(store, projection_prefix(m), h, h, static_cast<std::size_t>(cfg.proj_dim), seed);
}

/// z: [rows x hidden] graph embeddings -> [rows x proj_dim], unnormalised.
template <std::floating_point T>
nc::Tensor<T> projection_head(const nc::Tensor<T>& z, const nc::ParamStore<T>& store, Modality m) {
  return mlp(z, store, projection_prefix(m));
}

/// Concat(virtual-node embedding, mean of real line nodes): [1 x 2*hidden].
template <std::floating_point T>
nc::Tensor<T> downstream_representation(const EncoderOutput<T>& out) {
  return nc::concat_cols(out.graph_embedding, out.mean_node_embedding);
}

template <std::floating_point T>
void register_prediction_head(nc::ParamStore<T>& store, const ModelConfig& cfg, int tasks, std::uint64_t seed) {
  if (tasks < 1) throw ConfigError("prediction head needs at least one task");
  register_mlp(store, kPredictionPrefix, static_cast<std::size_t>(2 * cfg.hidden),
               static_cast<std::size_t>(cfg.pred_hidden), static_cast<std::size_t>(tasks), seed);
}

/// Raw logits (classification) or values (regression), [rows x tasks].
template <std::floating_point T>
nc::Tensor<T> prediction_head(const nc::Tensor<T>& rep, const nc::ParamStore<T>& store) {
  return mlp(rep, store, kPredictionPrefix);
}

}  // namespace galformer::model
