#pragma once

// Gradient checks of every parameter along the full pre-training loss and
// the fine-tuning losses, on tiny molecules.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "galformer/finetune/finetune.hpp"
#include "galformer/molio/toy.hpp"
#include "galformer/numcore/gradcheck.hpp"
#include "galformer/pretrain/trainer.hpp"

namespace galformer::app {

struct GradCase {
  std::string name;
  nc::GradCheckResult result;
  double tolerance = 0.0;
  bool pass() const { return result.max_rel_error < tolerance; }
};

struct GradSuiteOptions {
  std::uint64_t seed = 12;
  std::size_t molecules = 2;
  std::size_t max_line_nodes = 6;
};

/// A deliberately small model so that every entry can be perturbed.
inline model::ModelConfig gradcheck_model_config() {
  model::ModelConfig c;
  c.layers = 1;
  c.hidden = 4;
  c.heads = 2;
  c.ffn_mult = 1;
  c.dropout = 0.0;
  c.proj_dim = 3;
  c.pred_hidden = 5;
  c.pe_dim = 2;
  c.kernels = 3;
  c.max_path = 4;
  c.path_dim = 1;
  return c;
}

namespace detail {

template <std::floating_point T>
struct GradFixture {
  molio::DatasetMeta meta;
  std::vector<model::PreparedMolecule<T>> mols;
  std::vector<std::vector<eval::Label>> labels;
};

template <std::floating_point T>
GradFixture<T> grad_fixture(const GradSuiteOptions& o, const model::ModelConfig& cfg) {
  molio::ToyOptions topt;
  topt.tasks = 2;
  const auto ds = molio::generate_toy_corpus(40, o.seed, molio::ToyKind::trees, topt);
  GradFixture<T> f;
  f.meta = ds.meta;
  for (const auto& r : ds.records) {
    if (f.mols.size() == o.molecules) break;
    if (r.g2d.bonds.size() > o.max_line_nodes) continue;
    f.mols.push_back(model::prepare_molecule<T>(r, ds.meta, cfg, true));
    f.labels.push_back(*r.g2d.labels);
  }
  if (f.mols.size() < o.molecules) throw DatasetTooSmall("not enough small molecules for the gradient check");
  return f;
}

inline const char* const kCases[] = {"combined_loss", "finetune_bce", "finetune_rmse"};

// Parameters are always drawn in double so both precisions see the same point.
inline nc::ParamStore<double> case_store(int which, const molio::DatasetMeta& meta, const model::ModelConfig& cfg) {
  nc::ParamStore<double> s;
  if (which == 0) {
    pretrain::register_pretrain_params(s, meta, cfg, 3);
  } else {
    model::register_encoder_params(s, lg::Modality::d2, meta, cfg, 6);
    model::register_prediction_head(s, cfg, 2, 7);
  }
  nc::Rng rng(which == 0 ? 4 : 8);
  for (auto& [_, t] : s)
    for (auto& v : t.mutable_data()) v += rng.uniform(-0.1, 0.1);
  return s;
}

template <std::floating_point T>
nc::ParamStore<T> cast_store(const nc::ParamStore<double>& s) {
  nc::ParamStore<T> out;
  for (const auto& [name, t] : s) {
    const auto d = t.data();
    out.put(name, nc::Tensor<T>::from(t.rows(), t.cols(), std::vector<T>(d.begin(), d.end())));
  }
  return out;
}

template <std::floating_point T>
std::function<nc::Tensor<T>()> case_loss(int which, GradFixture<T>& f, nc::ParamStore<T>& store,
                                         const model::ModelConfig& cfg) {
  if (which == 0)
    return [&f, &store, cfg] {
      std::vector<const model::PreparedMolecule<T>*> batch;
      for (const auto& m : f.mols) batch.push_back(&m);
      nc::Rng rng(5);
      model::ForwardContext ctx;
      return pretrain::combined_loss(batch, store, cfg, pretrain::PretrainConfig{}, rng, ctx).loss;
    };
  const auto kind = which == 1 ? molio::TaskKind::classification : molio::TaskKind::regression;
  return [&f, &store, cfg, kind] {
    finetune::LabeledSet<T> data;
    data.mols = &f.mols;
    data.labels = f.labels;
    data.tasks = 2;
    data.kind = kind;
    std::vector<std::size_t> idx(f.mols.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    model::ForwardContext ctx;
    return finetune::finetune_loss(finetune::batch_outputs(data, idx, store, cfg, ctx), f.labels, kind);
  };
}

template <std::floating_point T>
std::map<std::string, std::vector<double>> analytic_gradients(const std::function<nc::Tensor<T>()>& loss,
                                                              nc::ParamStore<T>& store) {
  for (auto& [_, t] : store) t.zero_grad();
  nc::backward(loss());
  std::map<std::string, std::vector<double>> g;
  for (auto& [name, t] : store) {
    if (t.has_grad()) g[name].assign(t.grad().begin(), t.grad().end());
    else g[name].assign(t.size(), 0.0);
    t.zero_grad();
  }
  return g;
}

}  // namespace detail

/// f64: every parameter entry against a five-point finite difference.
/// f32: differences at single precision are dominated by roundoff, so the f32
/// backward pass is compared against the (separately verified) f64 one at the
/// same parameter values instead.
template <std::floating_point T>
std::vector<GradCase> run_gradcheck_suite(const GradSuiteOptions& o = {}) {
  const auto cfg = gradcheck_model_config();
  auto f64 = detail::grad_fixture<double>(o, cfg);
  std::vector<GradCase> out;
  [[maybe_unused]] std::optional<detail::GradFixture<T>> low;
  for (int which = 0; which < 3; ++which) {
    auto ref = detail::case_store(which, f64.meta, cfg);
    const auto ref_loss = detail::case_loss<double>(which, f64, ref, cfg);
    GradCase c{detail::kCases[which], {}, 1e-4};
    if constexpr (std::is_same_v<T, double>) {
      std::vector<std::pair<std::string, nc::Tensor<double>>> inputs;
      for (auto& [name, t] : ref) inputs.emplace_back(name, t);
      c.result = nc::check_gradients<double>(ref_loss, std::move(inputs), 1e-4, 1e-6, nc::Stencil::central5);
    } else {
      if (!low) low = detail::grad_fixture<T>(o, cfg);
      auto store = detail::cast_store<T>(ref);
      const auto want = detail::analytic_gradients<double>(ref_loss, ref);
      const auto got = detail::analytic_gradients<T>(detail::case_loss<T>(which, *low, store, cfg), store);
      c.tolerance = 1e-3;
      for (const auto& [name, w] : want) {
        const auto& g = got.at(name);
        for (std::size_t k = 0; k < w.size(); ++k) {
          const double err = nc::relative_error(g[k], w[k], 1e-3);
          ++c.result.checked;
          if (err > c.result.max_rel_error || c.result.checked == 1) {
            c.result.max_rel_error = err;
            c.result.worst_param = name;
            c.result.worst_index = k;
            c.result.worst_analytic = g[k];
            c.result.worst_numeric = w[k];
          }
        }
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace galformer::app
