#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace darlr::reward {

using Eigen::VectorXd;

struct GainPair {
  double sim = 0.0;  // in [-1, 1]
  double div = 0.0;  // in [0, 2]
};

struct PenaltyCoeffs {
  double uncertainty = 0.1;  // lambda_U
  double entropy = 0.1;      // lambda_E
  double similarity = 1.0;   // lambda_s
  double diversity = 0.1;    // lambda_d
};

// a.b / (|a| |b|), clamped to [-1, 1]. Throws on a zero-norm argument.
double cosine(const VectorXd& a, const VectorXd& b);

// Cosine between the target user's preference row and a candidate's row.
double similarity_gain(const VectorXd& target, const VectorXd& candidate);

// Mean of (1 - cos(selected_k, candidate)) over the already-selected rows;
// 0 when nothing has been selected yet.
double diversity_gain(const VectorXd& candidate, std::span<const VectorXd> selected);

// r_hat + lambda_s * sim + lambda_d * div
double intrinsic_reward(double r_hat, const GainPair& gains, const PenaltyCoeffs& c);

// Arithmetic mean of the reference users' current estimates for the item.
double shape_reward(std::span<const double> reference_rewards);

// |r_new - r_prev| / max(mean_sim + mean_div, eps)
double dynamic_uncertainty(double r_new, double r_prev, double mean_sim, double mean_div,
                           double eps);

// r_hat - lambda_U * uncertainty + lambda_E * entropy_penalty
double recommender_reward(double r_hat, double uncertainty, double entropy_penalty,
                          const PenaltyCoeffs& c);

}  // namespace darlr::reward
