#pragma once

#include <Eigen/Dense>

#include <span>

namespace darlr::kernels {

// Evaluation/prediction worker count: DARLR_THREADS when set and positive,
// otherwise the OpenMP default.
int worker_count();

// Cosine similarity of every row of `m` against row `target`. Rows with zero
// norm (and the target itself, if zero) get similarity 0. OpenMP over rows.
Eigen::VectorXd row_cosines(const Eigen::MatrixXd& m, int target);

// Serial reference for row_cosines, one explicit loop per pair.
Eigen::VectorXd row_cosines_serial(const Eigen::MatrixXd& m, int target);

// Pairwise (cascade) summation; the result depends only on the values and
// their order, never on how they were produced.
double pairwise_sum(std::span<const double> values);

}  // namespace darlr::kernels
