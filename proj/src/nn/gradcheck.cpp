#include "darlr/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace darlr::nn {

GradCheckReport check_gradients(const ParamRefs& blocks, const std::function<double()>& loss,
                                double step, double floor) {
  GradCheckReport report;
  for (ParamBlock* b : blocks) {
    for (Index k = 0; k < b->size(); ++k) {
      double& x = b->value.data()[k];
      const double original = x;
      x = original + step;
      const double up = loss();
      x = original - step;
      const double down = loss();
      x = original;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = b->grad.data()[k];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        if (rel >= report.max_rel_error) {
          report.worst_block = b->name;
          report.worst_index = k;
          report.analytic = analytic;
          report.numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace darlr::nn
