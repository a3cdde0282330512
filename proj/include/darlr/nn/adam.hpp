#pragma once

#include "darlr/nn/param.hpp"

namespace darlr::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update of every block, then clears the gradients.
// Throws before touching any value if a gradient entry is not finite.
void adam_step(const ParamRefs& blocks, const AdamConfig& cfg);

}  // namespace darlr::nn
