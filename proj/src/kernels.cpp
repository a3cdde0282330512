#include "darlr/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include <omp.h>

namespace darlr::kernels {

int worker_count() {
  if (const char* env = std::getenv("DARLR_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n > 0) return static_cast<int>(n);
  }
  return omp_get_max_threads();
}

Eigen::VectorXd row_cosines(const Eigen::MatrixXd& m, int target) {
  const Eigen::Index n = m.rows();
  Eigen::VectorXd out(n);
  const Eigen::VectorXd t = m.row(target).transpose();
  const double tn = t.norm();
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (Eigen::Index r = 0; r < n; ++r) {
    const double rn = m.row(r).norm();
    out(r) = (tn == 0.0 || rn == 0.0) ? 0.0 : m.row(r).dot(t) / (rn * tn);
  }
  return out;
}

Eigen::VectorXd row_cosines_serial(const Eigen::MatrixXd& m, int target) {
  Eigen::VectorXd out(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double dot = 0.0, nr = 0.0, nt = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      dot += m(r, c) * m(target, c);
      nr += m(r, c) * m(r, c);
      nt += m(target, c) * m(target, c);
    }
    out(r) = (nr == 0.0 || nt == 0.0) ? 0.0 : dot / (std::sqrt(nr) * std::sqrt(nt));
  }
  return out;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace darlr::kernels
