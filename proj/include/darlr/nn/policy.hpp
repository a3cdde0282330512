#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "darlr/nn/param.hpp"
#include "darlr/rng.hpp"

namespace darlr::nn {

// 1 = action may be chosen, 0 = blocked.
using ActionMask = std::vector<std::uint8_t>;

struct PolicySample {
  int action = -1;
  double logprob = 0.0;
  Vec probs;
};

// Softmax of logits / temperature restricted to available entries; blocked
// entries get probability exactly 0.
Vec masked_softmax(const Vec& logits, std::span<const std::uint8_t> available, double temperature);

PolicySample softmax_policy(const Vec& logits, std::span<const std::uint8_t> available,
                            double temperature, Rng& rng);

// Highest-probability available action; ties go to the lowest index.
PolicySample greedy_policy(const Vec& logits, std::span<const std::uint8_t> available,
                           double temperature);

// d log pi(action) / d logits for the masked, tempered softmax.
Vec logprob_grad(const Vec& probs, int action, double temperature);

}  // namespace darlr::nn
