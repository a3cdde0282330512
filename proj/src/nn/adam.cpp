#include "darlr/nn/adam.hpp"

#include <cmath>

#include "darlr/error.hpp"

namespace darlr::nn {

void adam_step(const ParamRefs& blocks, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw Error("adam: learning rate must be positive");
  for (const ParamBlock* b : blocks) {
    if (!b->grad.allFinite()) throw Error("adam: non-finite gradient in block " + b->name);
  }
  for (ParamBlock* b : blocks) {
    b->step_count += 1;
    const double t = static_cast<double>(b->step_count);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    b->adam_m = cfg.beta1 * b->adam_m + (1.0 - cfg.beta1) * b->grad;
    b->adam_v = cfg.beta2 * b->adam_v + (1.0 - cfg.beta2) * b->grad.cwiseProduct(b->grad);
    b->value.array() -=
        cfg.lr * (b->adam_m.array() / c1) / ((b->adam_v.array() / c2).sqrt() + cfg.eps);
    b->grad.setZero();
  }
}

}  // namespace darlr::nn
