#include "darlr/a2c.hpp"

#include <limits>

namespace darlr {

void record_critic(StepRecord& step, const HeadOutput& head, const A2CConfig& cfg) {
  if (!cfg.q_critic) {
    step.value = head.critic(0);
    step.baseline = step.value;
    return;
  }
  const nn::Vec probs = nn::masked_softmax(head.logits, step.mask, cfg.temperature);
  step.value = head.critic(step.action);
  step.baseline = probs.dot(head.critic);
}

double bootstrap_value(const HeadOutput& head, const nn::ActionMask& next_mask,
                       const A2CConfig& cfg) {
  if (!cfg.q_critic) return head.critic(0);
  double best = -std::numeric_limits<double>::infinity();
  for (nn::Index a = 0; a < head.critic.size(); ++a) {
    if (next_mask[a]) best = std::max(best, head.critic(a));
  }
  return std::isfinite(best) ? best : 0.0;
}

void compute_advantages(std::span<StepRecord> steps, double gamma) {
  double g = 0.0;
  for (std::size_t t = steps.size(); t-- > 0;) {
    g = steps[t].reward + gamma * g;
    steps[t].ret = g;
    steps[t].advantage = g - steps[t].baseline;
  }
}

}  // namespace darlr
