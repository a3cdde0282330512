#include "darlr/nn/policy.hpp"

#include <cmath>
#include <limits>

#include "darlr/error.hpp"

namespace darlr::nn {

Vec masked_softmax(const Vec& logits, std::span<const std::uint8_t> available, double temperature) {
  if (static_cast<Index>(available.size()) != logits.size()) {
    throw Error("policy: mask length " + std::to_string(available.size()) +
                " does not match logits length " + std::to_string(logits.size()));
  }
  if (!(temperature > 0.0)) throw Error("policy: temperature must be positive");
  double mx = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < logits.size(); ++i) {
    if (available[i]) mx = std::max(mx, logits(i) / temperature);
  }
  if (mx == -std::numeric_limits<double>::infinity()) throw Error("policy: every action is masked");
  Vec probs = Vec::Zero(logits.size());
  double total = 0.0;
  for (Index i = 0; i < logits.size(); ++i) {
    if (!available[i]) continue;
    probs(i) = std::exp(logits(i) / temperature - mx);
    total += probs(i);
  }
  probs /= total;
  return probs;
}

PolicySample softmax_policy(const Vec& logits, std::span<const std::uint8_t> available,
                            double temperature, Rng& rng) {
  PolicySample out;
  out.probs = masked_softmax(logits, available, temperature);
  const double u = uniform01(rng);
  double cumulative = 0.0;
  int last_available = -1;
  for (Index i = 0; i < out.probs.size(); ++i) {
    if (!available[i]) continue;
    last_available = static_cast<int>(i);
    cumulative += out.probs(i);
    if (u < cumulative) {
      out.action = static_cast<int>(i);
      break;
    }
  }
  // Rounding can leave the cumulative sum a hair below u.
  if (out.action < 0) out.action = last_available;
  out.logprob = std::log(out.probs(out.action));
  return out;
}

PolicySample greedy_policy(const Vec& logits, std::span<const std::uint8_t> available,
                           double temperature) {
  PolicySample out;
  out.probs = masked_softmax(logits, available, temperature);
  Index best = -1;
  for (Index i = 0; i < out.probs.size(); ++i) {
    if (available[i] && (best < 0 || out.probs(i) > out.probs(best))) best = i;
  }
  out.action = static_cast<int>(best);
  out.logprob = std::log(out.probs(best));
  return out;
}

Vec logprob_grad(const Vec& probs, int action, double temperature) {
  Vec g = -probs;
  g(action) += 1.0;
  return g / temperature;
}

}  // namespace darlr::nn
