#pragma once

#include <cstdint>

#include "galformer/errors.hpp"

namespace galformer::pretrain {

struct PretrainConfig {
  double mask_ratio = 0.4;
  double temperature = 0.1;
  double lambda_mask_2d = 1.0;
  double lambda_mask_3d = 1.0;
  double lambda_contrastive = 1.0;
  int batch_size = 16;
  int epochs = 50;
  std::int64_t max_steps = 0;        // > 0 overrides epochs
  std::int64_t checkpoint_every = 0; // 0: final checkpoint only
  int log_every = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio must be in (0, 1)");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1 && max_steps < 1) throw ConfigError("need epochs >= 1 or max_steps >= 1");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  }
};

}  // namespace galformer::pretrain
