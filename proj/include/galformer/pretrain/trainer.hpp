#pragma once

// Joint pre-training: both encoders see independently masked views of each
// molecule; the loss adds the two masked-prediction terms and the
// cross-modal contrastive term.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "galformer/errors.hpp"
#include "galformer/io/config_json.hpp"
#include "galformer/model/heads.hpp"
#include "galformer/model/prepared.hpp"
#include "galformer/molio/dataset.hpp"
#include "galformer/model/transformer.hpp"
#include "galformer/pretrain/checkpoint.hpp"
#include "galformer/pretrain/config.hpp"
#include "galformer/pretrain/objectives.hpp"

namespace galformer::pretrain {

template <std::floating_point T>
using ContrastiveFn = std::function<nc::Tensor<T>(const nc::Tensor<T>&, const nc::Tensor<T>&, double)>;

/// Every parameter pre-training touches: both encoders, projection heads,
/// masked-prediction heads and mask embeddings.
template <std::floating_point T>
void register_pretrain_params(nc::ParamStore<T>& store, const molio::DatasetMeta& meta,
                              const model::ModelConfig& cfg, std::uint64_t seed) {
  for (auto m : {Modality::d2, Modality::d3}) {
    model::register_encoder_params(store, m, meta, cfg, seed);
    model::register_projection_head(store, m, cfg, seed);
    register_mask_params(store, m, meta, cfg, seed);
  }
}

struct StepTelemetry {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double mask_2d = 0.0;
  double mask_3d = 0.0;
  double contrastive = 0.0;
  double pair_acc_2d = 0.0;
  double bond_acc_2d = 0.0;
  double pair_acc_3d = 0.0;
  std::size_t batch = 0;

  json to_json() const {
    return {{"step", step},           {"epoch", epoch},         {"lr", lr},
            {"loss", loss},           {"mask_2d", mask_2d},     {"mask_3d", mask_3d},
            {"contrastive", contrastive}, {"pair_acc_2d", pair_acc_2d}, {"bond_acc_2d", bond_acc_2d},
            {"pair_acc_3d", pair_acc_3d}, {"batch", batch}};
  }
};

template <std::floating_point T>
struct CombinedLoss {
  nc::Tensor<T> loss;
  nc::Tensor<T> mask_2d, mask_3d, contrastive;
  nc::Tensor<T> z2d, z3d;  // projected embeddings of the masked views [M x proj_dim]
  StepTelemetry telemetry;
  std::vector<MaskPlan> plans_2d, plans_3d;
};

template <std::floating_point T>
struct MaskedView {
  model::EncoderOutput<T> out;
  MaskPlan plan;
};

template <std::floating_point T>
MaskedView<T> masked_forward_2d(const model::Prepared2D<T>& p, const nc::ParamStore<T>& store,
                                const model::ModelConfig& cfg, double ratio, nc::Rng& rng, model::ForwardContext& ctx) {
  auto enc = sc::encode_2d(p.structure, model::node_input_2d(p, store), store, cfg.encoding_config());
  MaskedView<T> v;
  v.plan = sample_mask_plan(p.graph.n_nodes(), ratio, rng, Modality::d2);
  enc.x = apply_mask(enc.x, v.plan, store.get(mask_embedding_name(Modality::d2)));
  v.out = model::run_transformer(enc, store, Modality::d2, cfg, ctx);
  return v;
}

template <std::floating_point T>
MaskedView<T> masked_forward_3d(const model::Prepared3D<T>& p, const nc::ParamStore<T>& store,
                                const model::ModelConfig& cfg, double ratio, nc::Rng& rng, model::ForwardContext& ctx) {
  const auto f = model::features_3d(p, store, cfg);
  auto enc = sc::encode_3d(p.structure, f.node_input, f.edge_feat, store, cfg.encoding_config());
  MaskedView<T> v;
  v.plan = sample_mask_plan(p.graph.n_nodes(), ratio, rng, Modality::d3);
  enc.x = apply_mask(enc.x, v.plan, store.get(mask_embedding_name(Modality::d3)));
  v.out = model::run_transformer(enc, store, Modality::d3, cfg, ctx);
  return v;
}

inline bool finite(double v) { return std::isfinite(v); }

/// L = l1 * mask_2d + l2 * mask_3d + l3 * contrastive over one batch. Mask
/// plans are drawn from `mask_rng`, 2-D then 3-D, molecule by molecule.
template <std::floating_point T>
CombinedLoss<T> combined_loss(const std::vector<const model::PreparedMolecule<T>*>& batch,
                              const nc::ParamStore<T>& store, const model::ModelConfig& cfg,
                              const PretrainConfig& pcfg, nc::Rng& mask_rng, model::ForwardContext& ctx,
                              const ContrastiveFn<T>& contrastive = {}) {
  if (batch.empty()) throw ConfigError("empty pre-training batch");
  std::vector<nc::Tensor<T>> states2, states3, g2, g3;
  std::vector<std::size_t> pair2, bond2, pair3;
  CombinedLoss<T> res;
  for (const auto* mol : batch) {
    if (!mol->d3) throw MissingConformer("molecule '" + mol->id + "' has no 3-D view");
    auto v2 = masked_forward_2d(mol->d2, store, cfg, pcfg.mask_ratio, mask_rng, ctx);
    auto v3 = masked_forward_3d(*mol->d3, store, cfg, pcfg.mask_ratio, mask_rng, ctx);
    for (auto i : v2.plan.selected) {
      const auto& t = mol->d2.graph.node_target[i];
      pair2.push_back(static_cast<std::size_t>(t.pair_class));
      bond2.push_back(static_cast<std::size_t>(t.bond_type));
    }
    for (auto i : v3.plan.selected) pair3.push_back(static_cast<std::size_t>(mol->d3->graph.node_target[i].pair_class));
    states2.push_back(nc::index_rows(v2.out.node_states, v2.plan.selected));
    states3.push_back(nc::index_rows(v3.out.node_states, v3.plan.selected));
    g2.push_back(v2.out.graph_embedding);
    g3.push_back(v3.out.graph_embedding);
    res.plans_2d.push_back(std::move(v2.plan));
    res.plans_3d.push_back(std::move(v3.plan));
  }
  using Span = std::span<const nc::Tensor<T>>;
  const auto m2 = mask_loss(nc::concat_rows(Span(states2)), Modality::d2, pair2, bond2, store);
  const auto m3 = mask_loss(nc::concat_rows(Span(states3)), Modality::d3, pair3, {}, store);
  res.z2d = model::projection_head(nc::concat_rows(Span(g2)), store, Modality::d2);
  res.z3d = model::projection_head(nc::concat_rows(Span(g3)), store, Modality::d3);
  res.mask_2d = m2.loss;
  res.mask_3d = m3.loss;
  res.contrastive = contrastive ? contrastive(res.z2d, res.z3d, pcfg.temperature)
                                : infonce_loss(res.z2d, res.z3d, pcfg.temperature);
  res.loss = nc::scale(res.mask_2d, static_cast<T>(pcfg.lambda_mask_2d)) +
             nc::scale(res.mask_3d, static_cast<T>(pcfg.lambda_mask_3d)) +
             nc::scale(res.contrastive, static_cast<T>(pcfg.lambda_contrastive));
  auto& t = res.telemetry;
  t.loss = res.loss.item();
  t.mask_2d = res.mask_2d.item();
  t.mask_3d = res.mask_3d.item();
  t.contrastive = res.contrastive.item();
  t.pair_acc_2d = m2.pair_accuracy;
  t.bond_acc_2d = m2.bond_accuracy;
  t.pair_acc_3d = m3.pair_accuracy;
  t.batch = batch.size();
  return res;
}

/// Names the molecules whose forward pass produced a non-finite value.
template <std::floating_point T>
std::string nonfinite_diagnostic(const std::vector<const model::PreparedMolecule<T>*>& batch,
                                 const nc::ParamStore<T>& store, const model::ModelConfig& cfg) {
  nc::NoGradGuard ng;
  std::string bad;
  model::ForwardContext eval;
  for (const auto* mol : batch) {
    bool ok = true;
    auto check = [&](const model::EncoderOutput<T>& o) {
      const auto s = o.node_states;
      for (auto v : s.data()) ok = ok && std::isfinite(static_cast<double>(v));
    };
    check(model::forward_2d(mol->d2, store, cfg, eval));
    if (mol->d3) check(model::forward_3d(*mol->d3, store, cfg, eval));
    if (!ok) bad += (bad.empty() ? "" : ", ") + mol->id;
  }
  if (bad.empty()) {
    for (const auto* mol : batch) bad += (bad.empty() ? "" : ", ") + mol->id;
    return "non-finite loss in the loss heads; batch molecules: " + bad;
  }
  return "non-finite encoder output for molecule(s): " + bad;
}

/// Stateful pre-training run. Step s (1-based) always sees the same batch,
/// mask draws and dropout masks for a given seed, so a resumed run continues
/// exactly where an uninterrupted one would be.
template <std::floating_point T>
class Pretrainer {
 public:
  Pretrainer(const std::vector<model::PreparedMolecule<T>>& mols, molio::DatasetMeta meta, model::ModelConfig mcfg,
             PretrainConfig pcfg, nc::OptimizerConfig ocfg)
      : mols_(&mols), meta_(std::move(meta)), mcfg_(mcfg), pcfg_(pcfg), ocfg_(ocfg) {
    mcfg_.validate();
    pcfg_.validate();
    if (mols.empty()) throw DatasetTooSmall("pre-training needs at least one molecule");
    const auto n = static_cast<std::int64_t>(mols.size());
    const auto b = static_cast<std::int64_t>(pcfg_.batch_size);
    steps_per_epoch_ = (n + b - 1) / b;
    ocfg_.total_steps = pcfg_.max_steps > 0 ? pcfg_.max_steps : steps_per_epoch_ * pcfg_.epochs;
    ocfg_.validate();
    register_pretrain_params(store_, meta_, mcfg_, pcfg_.seed);
  }

  std::int64_t step() const { return step_; }
  std::int64_t total_steps() const { return ocfg_.total_steps; }
  std::int64_t steps_per_epoch() const { return steps_per_epoch_; }
  bool done() const { return step_ >= ocfg_.total_steps; }
  const nc::ParamStore<T>& store() const { return store_; }
  nc::ParamStore<T>& store() { return store_; }
  const model::ModelConfig& model_config() const { return mcfg_; }
  const PretrainConfig& pretrain_config() const { return pcfg_; }
  const nc::OptimizerConfig& optimizer_config() const { return ocfg_; }
  void set_contrastive(ContrastiveFn<T> f) { contrastive_ = std::move(f); }

  /// Molecule indices for a 1-based step.
  std::vector<std::size_t> batch_indices(std::int64_t s) const {
    const auto epoch = (s - 1) / steps_per_epoch_;
    const auto k = static_cast<std::size_t>((s - 1) % steps_per_epoch_);
    std::vector<std::size_t> order(mols_->size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    nc::Rng rng(nc::mix_keys(nc::mix_keys(pcfg_.seed, nc::fnv1a64("epoch")), static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    const auto b = static_cast<std::size_t>(pcfg_.batch_size);
    const auto lo = k * b;
    const auto hi = std::min(order.size(), lo + b);
    return {order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi)};
  }

  /// Runs step() + 1: forward, backward, Adam update.
  StepTelemetry train_step() {
    const auto s = step_ + 1;
    std::vector<const model::PreparedMolecule<T>*> batch;
    for (auto i : batch_indices(s)) batch.push_back(&(*mols_)[i]);
    nc::Rng mask_rng(nc::mix_keys(nc::mix_keys(pcfg_.seed, nc::fnv1a64("mask")), static_cast<std::uint64_t>(s)));
    auto ctx = model::training_context(mcfg_.dropout, pcfg_.seed, static_cast<std::uint64_t>(s));
    auto res = combined_loss(batch, store_, mcfg_, pcfg_, mask_rng, ctx, contrastive_);
    if (!finite(res.telemetry.loss))
      throw NonFiniteLoss("step " + std::to_string(s) + ": " + nonfinite_diagnostic(batch, store_, mcfg_));
    nc::backward(res.loss);
    res.telemetry.lr = nc::adam_step(store_, ocfg_, s);
    res.telemetry.step = s;
    res.telemetry.epoch = (s - 1) / steps_per_epoch_;
    step_ = s;
    return res.telemetry;
  }

  json config_snapshot() const {
    return {{"model", io::config_to_json(mcfg_)},
            {"pretrain", io::config_to_json(pcfg_)},
            {"optimizer", io::config_to_json(ocfg_)},
            {"meta", molio::meta_to_json(meta_)}};
  }

  void save(const std::filesystem::path& path) const {
    save_checkpoint(path, store_, {{"kind", "pretrain"}, {"step", step_}, {"config", config_snapshot()}});
  }

  /// Adopts parameters, optimizer state and step count. The model config in
  /// the checkpoint must match this run's.
  void restore(const Checkpoint<T>& ck) {
    const auto& h = ck.header;
    if (!h.contains("config") || !h.contains("step")) throw CheckpointError("checkpoint lacks run state");
    if (h["config"].value("model", json()) != io::config_to_json(mcfg_))
      throw CheckpointError("checkpoint model config differs from the current one");
    const auto& mine = store_;
    for (const auto& [name, t] : mine) {
      if (!ck.store.contains(name)) throw CheckpointError("checkpoint lacks parameter '" + name + "'");
      const auto& other = ck.store.get(name);
      if (other.rows() != t.rows() || other.cols() != t.cols())
        throw CheckpointError("shape mismatch for '" + name + "'");
    }
    store_ = ck.store.clone();
    step_ = h["step"].template get<std::int64_t>();
  }

 private:
  const std::vector<model::PreparedMolecule<T>>* mols_;
  molio::DatasetMeta meta_;
  model::ModelConfig mcfg_;
  PretrainConfig pcfg_;
  nc::OptimizerConfig ocfg_;
  nc::ParamStore<T> store_;
  std::int64_t steps_per_epoch_ = 1;
  std::int64_t step_ = 0;
  ContrastiveFn<T> contrastive_;
};

/// Runs to completion, appending one JSONL object per logged step to
/// out_dir/metrics.jsonl and writing checkpoints as configured.
template <std::floating_point T>
std::vector<StepTelemetry> pretrain_loop(Pretrainer<T>& tr, const std::filesystem::path& out_dir,
                                         const std::function<void(const StepTelemetry&)>& on_step = {}) {
  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir / "metrics.jsonl", tr.step() > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw ConfigError("cannot write " + (out_dir / "metrics.jsonl").string());
  const auto& pc = tr.pretrain_config();
  std::vector<StepTelemetry> history;
  while (!tr.done()) {
    auto t = tr.train_step();
    history.push_back(t);
    if (t.step % pc.log_every == 0 || tr.done()) log << t.to_json().dump() << '\n' << std::flush;
    if (pc.checkpoint_every > 0 && t.step % pc.checkpoint_every == 0)
      tr.save(out_dir / ("checkpoint-" + std::to_string(t.step) + ".ckpt"));
    if (on_step) on_step(t);
  }
  tr.save(out_dir / "final.ckpt");
  return history;
}

}  // namespace galformer::pretrain
