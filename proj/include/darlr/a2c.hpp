#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "darlr/error.hpp"
#include "darlr/nn/policy.hpp"

namespace darlr {

struct A2CConfig {
  double gamma = 0.99;
  double value_coef = 0.5;
  double temperature = 1.0;
  // false: state-value critic with target r + gamma V(s').
  // true: action-value critic with target r + gamma max_a' Q(s', a').
  bool q_critic = false;
};

// Output of an agent's actor and critic heads for one state. The critic has
// one entry (V) or one per action (Q).
struct HeadOutput {
  nn::Vec logits;
  nn::Vec critic;
};

struct StepRecord {
  nn::ActionMask mask;
  int action = -1;
  double logprob = 0.0;
  double reward = 0.0;
  double value = 0.0;      // critic estimate used by the TD loss
  double baseline = 0.0;   // V(s) used by the advantage
  double bootstrap = 0.0;  // V(s') or max_a' Q(s', a'); unused when done
  bool done = false;
  double ret = 0.0;        // Monte Carlo return G_t
  double advantage = 0.0;  // G_t - V(s_t)
};

// Fills value/baseline of a step from a head evaluated at its state.
void record_critic(StepRecord& step, const HeadOutput& head, const A2CConfig& cfg);
// Bootstrap value contributed by a successor state.
double bootstrap_value(const HeadOutput& head, const nn::ActionMask& next_mask,
                       const A2CConfig& cfg);

// G_t = sum_k gamma^(k-t) r_k and A_t = G_t - baseline_t.
void compute_advantages(std::span<StepRecord> steps, double gamma);

struct A2CLosses {
  double actor = 0.0;   // -mean(log pi(a|s) * A)
  double critic = 0.0;  // mean((r + gamma * bootstrap * !done - value)^2)
  double total(const A2CConfig& cfg) const { return actor + cfg.value_coef * critic; }
};

// Recomputes the heads for every recorded input and returns both losses.
// With `accumulate`, gradients of actor + value_coef * critic are added to
// the agent's parameters; advantages and TD targets are constants.
//
// Agent requirements:
//   HeadOutput forward(const Input&, Tape*) const;
//   void backward(const Tape&, const nn::Vec& d_logits, const nn::Vec& d_critic);
template <class Agent, class Input>
A2CLosses a2c_losses(Agent& agent, std::span<const Input> inputs,
                     std::span<const StepRecord> steps, const A2CConfig& cfg, bool accumulate) {
  if (inputs.size() != steps.size()) throw Error("a2c: inputs and steps differ in length");
  A2CLosses losses;
  if (steps.empty()) return losses;
  const double n = static_cast<double>(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const StepRecord& s = steps[t];
    typename Agent::Tape tape;
    const HeadOutput head = agent.forward(inputs[t], accumulate ? &tape : nullptr);
    const nn::Vec probs = nn::masked_softmax(head.logits, s.mask, cfg.temperature);
    const double logp = std::log(probs(s.action));
    const nn::Index slot = cfg.q_critic ? s.action : 0;
    const double value = head.critic(slot);
    const double target = s.reward + (s.done ? 0.0 : cfg.gamma * s.bootstrap);
    const double td = value - target;
    losses.actor -= logp * s.advantage / n;
    losses.critic += td * td / n;
    if (accumulate) {
      const nn::Vec d_logits = (-s.advantage / n) * nn::logprob_grad(probs, s.action, cfg.temperature);
      nn::Vec d_critic = nn::Vec::Zero(head.critic.size());
      d_critic(slot) = cfg.value_coef * 2.0 * td / n;
      agent.backward(tape, d_logits, d_critic);
    }
  }
  return losses;
}

}  // namespace darlr
