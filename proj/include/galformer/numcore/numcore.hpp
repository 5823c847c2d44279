#pragma once

#include "galformer/numcore/gradcheck.hpp"
#include "galformer/numcore/ops.hpp"
#include "galformer/numcore/optim.hpp"
#include "galformer/numcore/param_store.hpp"
#include "galformer/numcore/rng.hpp"
#include "galformer/numcore/tensor.hpp"
