#pragma once

#include <functional>
#include <string>

#include "darlr/nn/param.hpp"

namespace darlr::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Compares the gradients already accumulated in `blocks` against central
// differences of `loss` (which must not touch the accumulators). Relative
// error is |a - n| / max(|a|, |n|, floor).
GradCheckReport check_gradients(const ParamRefs& blocks, const std::function<double()>& loss,
                                double step = 1e-5, double floor = 1e-6);

}  // namespace darlr::nn
