#pragma once

// Self-supervised objectives: masked line-node prediction and the two-way
// in-batch InfoNCE between 2-D and 3-D graph embeddings.

#include <cmath>
#include <string>
#include <vector>

#include "galformer/errors.hpp"
#include "galformer/model/config.hpp"
#include "galformer/model/heads.hpp"
#include "galformer/molio/types.hpp"
#include "galformer/numcore/numcore.hpp"

namespace galformer::pretrain {

using lg::Modality;

enum class MaskAction { mask, random, keep };

struct MaskPlan {
  Modality modality = Modality::d2;
  std::vector<std::size_t> selected;
  std::vector<MaskAction> action;
  std::vector<std::size_t> replacement;  // meaningful for random only

  bool empty() const { return selected.empty(); }
};

/// round(ratio * n) distinct real nodes (at least one), each masked / replaced
/// by another node of the same graph / kept with probability 0.8 / 0.1 / 0.1.
/// A one-node graph has nothing to swap with, so a random draw keeps instead.
inline MaskPlan sample_mask_plan(std::size_t n, double ratio, nc::Rng& rng, Modality m = Modality::d2) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("mask_ratio must be in (0, 1)");
  MaskPlan plan;
  plan.modality = m;
  if (n == 0) return plan;
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))));
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t k = 0; k < count; ++k) {
    const auto j = k + static_cast<std::size_t>(rng.below(n - k));
    std::swap(pool[k], pool[j]);
  }
  plan.selected.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  for (auto i : plan.selected) {
    const double u = rng.uniform();
    std::size_t rep = i;
    MaskAction a = u < 0.8 ? MaskAction::mask : (u < 0.9 ? MaskAction::random : MaskAction::keep);
    if (a == MaskAction::random) {
      if (n < 2) {
        a = MaskAction::keep;
      } else {
        rep = static_cast<std::size_t>(rng.below(n - 1));
        if (rep >= i) ++rep;
      }
    }
    plan.action.push_back(a);
    plan.replacement.push_back(rep);
  }
  return plan;
}

inline std::string mask_embedding_name(Modality m) { return std::string(lg::modality_name(m)) + ".mask.embedding"; }
inline std::string mask_head_prefix(Modality m) { return std::string(lg::modality_name(m)) + ".mask_head."; }

/// Row substitution on position-aware node inputs x [V x hidden]; the virtual
/// row (last) is never touched.
template <std::floating_point T>
nc::Tensor<T> apply_mask(const nc::Tensor<T>& x, const MaskPlan& plan, const nc::Tensor<T>& mask_embedding) {
  if (plan.empty()) return x;
  const auto V = x.rows();
  std::vector<std::size_t> idx(V);
  for (std::size_t i = 0; i < V; ++i) idx[i] = i;
  for (std::size_t k = 0; k < plan.selected.size(); ++k) {
    const auto i = plan.selected[k];
    if (i + 1 >= V) throw IndexOutOfRange("mask plan selects node " + std::to_string(i) + " of " + std::to_string(V - 1));
    switch (plan.action[k]) {
      case MaskAction::mask: idx[i] = V; break;
      case MaskAction::random:
        if (plan.replacement[k] + 1 >= V) throw IndexOutOfRange("mask replacement out of range");
        idx[i] = plan.replacement[k];
        break;
      case MaskAction::keep: break;
    }
  }
  return nc::index_rows(nc::concat_rows(x, mask_embedding), std::move(idx));
}

inline int bond_classes(const molio::DatasetMeta& meta) {
  return meta.bond_type_count() > 0 ? meta.bond_type_count() : meta.theta_e;
}

template <std::floating_point T>
void register_mask_params(nc::ParamStore<T>& store, Modality m, const molio::DatasetMeta& meta,
                          const model::ModelConfig& cfg, std::uint64_t seed) {
  using nc::InitScheme;
  const auto h = static_cast<std::size_t>(cfg.hidden);
  const auto p = mask_head_prefix(m);
  store.create(mask_embedding_name(m), 1, h, InitScheme::normal(0.02), seed);
  store.create(p + "W_1", h, h, InitScheme::xavier(), seed);
  store.create(p + "b_1", 1, h, InitScheme::zeros(), seed);
  const auto pairs = static_cast<std::size_t>(meta.pair_class_count());
  store.create(p + "W_pair", h, pairs, InitScheme::xavier(), seed);
  store.create(p + "b_pair", 1, pairs, InitScheme::zeros(), seed);
  if (m == Modality::d2) {
    const auto bonds = static_cast<std::size_t>(bond_classes(meta));
    store.create(p + "W_bond", h, bonds, InitScheme::xavier(), seed);
    store.create(p + "b_bond", 1, bonds, InitScheme::zeros(), seed);
  }
}

template <std::floating_point T>
T mask_accuracy_count(const nc::Tensor<T>& logits, const std::vector<std::size_t>& target) {
  T hits = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    hits += best == target[r] ? T(1) : T(0);
  }
  return hits;
}

/// Mean negative log-likelihood of `target` under row-wise softmax(logits).
template <std::floating_point T>
nc::Tensor<T> cross_entropy(const nc::Tensor<T>& logits, const std::vector<std::size_t>& target) {
  for (auto t : target)
    if (t >= logits.cols()) throw IndexOutOfRange("class " + std::to_string(t) + " of " + std::to_string(logits.cols()));
  return nc::neg(nc::mean(nc::pick(nc::log_softmax(logits), target)));
}

template <std::floating_point T>
struct MaskLoss {
  nc::Tensor<T> loss;  // 1 x 1
  double pair_accuracy = 0.0;
  double bond_accuracy = 0.0;
  std::size_t positions = 0;
};

/// states: node states gathered at every selected position [P x hidden].
/// 2-D adds the bond-type cross entropy to the pair-class one.
template <std::floating_point T>
MaskLoss<T> mask_loss(const nc::Tensor<T>& states, Modality m, const std::vector<std::size_t>& pair_target,
                      const std::vector<std::size_t>& bond_target, const nc::ParamStore<T>& store) {
  if (states.rows() == 0) throw ConfigError("mask loss needs at least one selected position");
  const auto p = mask_head_prefix(m);
  const auto h = nc::relu(nc::matmul(states, store.get(p + "W_1")) + store.get(p + "b_1"));
  const auto pair_logits = nc::matmul(h, store.get(p + "W_pair")) + store.get(p + "b_pair");
  MaskLoss<T> out;
  out.positions = states.rows();
  out.loss = cross_entropy(pair_logits, pair_target);
  out.pair_accuracy = static_cast<double>(mask_accuracy_count(pair_logits, pair_target)) / double(out.positions);
  if (m == Modality::d2) {
    const auto bond_logits = nc::matmul(h, store.get(p + "W_bond")) + store.get(p + "b_bond");
    out.loss = out.loss + cross_entropy(bond_logits, bond_target);
    out.bond_accuracy = static_cast<double>(mask_accuracy_count(bond_logits, bond_target)) / double(out.positions);
  }
  return out;
}

/// (L_2d + L_3d) / M with S = z2d z3d^T / tau; each direction sums
/// -log softmax(S)[i][i] over the rows.
template <std::floating_point T>
nc::Tensor<T> infonce_loss(const nc::Tensor<T>& z2d, const nc::Tensor<T>& z3d, double tau) {
  if (z2d.rows() != z3d.rows() || z2d.cols() != z3d.cols())
    throw ShapeMismatch("infonce: " + nc::shape_str(z2d.rows(), z2d.cols()) + " vs " +
                        nc::shape_str(z3d.rows(), z3d.cols()));
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
  const auto M = z2d.rows();
  std::vector<std::size_t> diag(M);
  for (std::size_t i = 0; i < M; ++i) diag[i] = i;
  const auto s = nc::scale(nc::matmul(z2d, nc::transpose(z3d)), static_cast<T>(1.0 / tau));
  const auto l2d = nc::sum(nc::pick(nc::log_softmax(s), diag));
  const auto l3d = nc::sum(nc::pick(nc::log_softmax(nc::transpose(s)), diag));
  return nc::scale(l2d + l3d, static_cast<T>(-1.0 / static_cast<double>(M)));
}

}  // namespace galformer::pretrain
