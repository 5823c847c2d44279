#pragma once

#include "galformer/errors.hpp"
#include "galformer/linegraph/features.hpp"
#include "galformer/structcode/encoding.hpp"

namespace galformer::model {

struct ModelConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int ffn_mult = 4;
  double dropout = 0.1;
  int proj_dim = 128;
  int pred_hidden = 256;
  // encodings
  int pe_dim = 8;      // K
  int kernels = 16;    // M
  int max_path = 20;   // L_max
  int path_dim = 8;    // p
  int edge_dim = 0;    // 0 means hidden / 2
  double kernel_sign = -1.0;

  int head_dim() const { return hidden / heads; }
  int edge_width() const { return edge_dim > 0 ? edge_dim : hidden / 2; }

  void validate() const {
    if (layers < 1 || hidden < 1 || heads < 1 || ffn_mult < 1 || proj_dim < 1 || pred_hidden < 1)
      throw ConfigError("model dimensions must be >= 1");
    if (hidden % heads != 0) throw ConfigError("hidden must be divisible by heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    feature_config().validate();
    encoding_config().validate();
  }

  lg::FeatureConfig feature_config() const {
    lg::FeatureConfig f;
    f.hidden = hidden;
    f.kernels = kernels;
    f.edge_dim = edge_dim;
    f.kernel_sign = kernel_sign;
    return f;
  }

  sc::EncodingConfig encoding_config() const {
    sc::EncodingConfig e;
    e.heads = heads;
    e.max_path = max_path;
    e.path_dim = path_dim;
    e.pe_dim = pe_dim;
    return e;
  }
};

}  // namespace galformer::model
