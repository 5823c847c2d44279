#pragma once

// JSON codecs for every configuration struct. Unknown keys are rejected so a
// typo in a config file cannot silently fall back to a default.

#include <set>
#include <string>

#include <json.hpp>

#include "galformer/errors.hpp"
#include "galformer/finetune/config.hpp"
#include "galformer/model/config.hpp"
#include "galformer/numcore/optim.hpp"
#include "galformer/pretrain/config.hpp"

namespace galformer::io {

using json = nlohmann::json;

template <class F>
void visit_fields(model::ModelConfig& c, F&& f) {
  f("layers", c.layers);
  f("hidden", c.hidden);
  f("heads", c.heads);
  f("ffn_mult", c.ffn_mult);
  f("dropout", c.dropout);
  f("proj_dim", c.proj_dim);
  f("pred_hidden", c.pred_hidden);
  f("pe_dim", c.pe_dim);
  f("kernels", c.kernels);
  f("max_path", c.max_path);
  f("path_dim", c.path_dim);
  f("edge_dim", c.edge_dim);
  f("kernel_sign", c.kernel_sign);
}

template <class F>
void visit_fields(nc::OptimizerConfig& c, F&& f) {
  f("peak_lr", c.peak_lr);
  f("weight_decay", c.weight_decay);
  f("beta1", c.beta1);
  f("beta2", c.beta2);
  f("eps", c.eps);
  f("warmup_frac", c.warmup_frac);
  f("total_steps", c.total_steps);
  f("poly_power", c.poly_power);
}

template <class F>
void visit_fields(pretrain::PretrainConfig& c, F&& f) {
  f("mask_ratio", c.mask_ratio);
  f("temperature", c.temperature);
  f("lambda_mask_2d", c.lambda_mask_2d);
  f("lambda_mask_3d", c.lambda_mask_3d);
  f("lambda_contrastive", c.lambda_contrastive);
  f("batch_size", c.batch_size);
  f("epochs", c.epochs);
  f("max_steps", c.max_steps);
  f("checkpoint_every", c.checkpoint_every);
  f("log_every", c.log_every);
  f("seed", c.seed);
}

template <class F>
void visit_fields(finetune::FinetuneConfig& c, F&& f) {
  f("lr_grid", c.lr_grid);
  f("weight_decay_grid", c.weight_decay_grid);
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("train_frac", c.train_frac);
  f("valid_frac", c.valid_frac);
  f("test_frac", c.test_frac);
  f("seeds", c.seeds);
  f("freeze_encoder", c.freeze_encoder);
  f("warmup_frac", c.warmup_frac);
}

template <class C>
json config_to_json(C c) {
  json j = json::object();
  visit_fields(c, [&](const char* key, auto& v) { j[key] = v; });
  return j;
}

/// Overlays `j` onto `c`; `where` names the section in error messages.
template <class C>
void overlay_config(C& c, const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> known;
  visit_fields(c, [&](const char* key, auto& v) {
    known.insert(key);
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
      v = it->template get<std::decay_t<decltype(v)>>();
    } catch (const json::exception& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    }
  });
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class C>
C config_from_json(const json& j, const std::string& where) {
  C c;
  overlay_config(c, j, where);
  return c;
}

}  // namespace galformer::io
