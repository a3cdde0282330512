#include "darlr/reward_math.hpp"

#include <algorithm>
#include <cmath>

#include "darlr/error.hpp"

namespace darlr::reward {

double cosine(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size()) throw Error("cosine: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error("cosine: zero-norm input");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double similarity_gain(const VectorXd& target, const VectorXd& candidate) {
  return cosine(target, candidate);
}

double diversity_gain(const VectorXd& candidate, std::span<const VectorXd> selected) {
  if (selected.empty()) return 0.0;
  double total = 0.0;
  for (const VectorXd& s : selected) total += 1.0 - cosine(s, candidate);
  return total / static_cast<double>(selected.size());
}

double intrinsic_reward(double r_hat, const GainPair& gains, const PenaltyCoeffs& c) {
  return r_hat + c.similarity * gains.sim + c.diversity * gains.div;
}

double shape_reward(std::span<const double> reference_rewards) {
  if (reference_rewards.empty()) throw Error("shape_reward: empty reference set");
  double total = 0.0;
  for (double r : reference_rewards) total += r;
  return total / static_cast<double>(reference_rewards.size());
}

double dynamic_uncertainty(double r_new, double r_prev, double mean_sim, double mean_div,
                           double eps) {
  if (!(eps > 0.0)) throw Error("dynamic_uncertainty: eps must be positive");
  return std::abs(r_new - r_prev) / std::max(mean_sim + mean_div, eps);
}

double recommender_reward(double r_hat, double uncertainty, double entropy_penalty,
                          const PenaltyCoeffs& c) {
  return r_hat - c.uncertainty * uncertainty + c.entropy * entropy_penalty;
}

}  // namespace darlr::reward
