#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "galformer/errors.hpp"

namespace galformer::finetune {

struct FinetuneConfig {
  std::vector<double> lr_grid{3e-5, 1e-5, 3e-6};
  std::vector<double> weight_decay_grid{0.0, 1e-6};
  int epochs = 50;
  int batch_size = 32;
  double train_frac = 0.8;
  double valid_frac = 0.1;
  double test_frac = 0.1;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  bool freeze_encoder = false;
  double warmup_frac = 0.05;

  void validate() const {
    if (lr_grid.empty() || weight_decay_grid.empty()) throw ConfigError("grids must be nonempty");
    if (seeds.empty()) throw ConfigError("need at least one seed");
    if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch_size must be >= 1");
    if (train_frac <= 0.0 || valid_frac < 0.0 || test_frac < 0.0 ||
        std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9)
      throw ConfigError("split ratios must be non-negative and sum to 1");
  }
};

}  // namespace galformer::finetune
