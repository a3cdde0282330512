#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "darlr/a2c.hpp"
#include "darlr/nn/layers.hpp"
#include "darlr/nn/policy.hpp"
#include "darlr/nn/seq_encoder.hpp"

namespace darlr {

struct RecommenderConfig {
  int num_users = 0;
  int num_items = 0;
  int state_width = 32;  // d_R
  int user_width = 16;   // d_U
  int item_width = 16;   // d_I
  int hidden = 64;
  int window = 5;        // w_rec
  int heads = 1;
  int layers = 1;
  bool q_critic = false;
};

// One entry of the recommender's interaction history. item < 0 marks the
// start-of-episode token derived from the user embedding alone.
struct RecEvent {
  int item = -1;
  double reward = 0.0;
};

struct RecInput {
  int user = 0;
  std::vector<RecEvent> events;  // at most `window`, oldest first
};

struct RecState {
  RecInput input;
  nn::Vec encoding;  // s_rec
};

class RecommenderAgent {
 public:
  struct Tape {
    RecInput input;
    nn::Mat raw;  // token inputs, one column per event
    nn::Mat tokens;
    nn::SeqEncoder::Tape encoder;
    nn::Vec state;
    nn::Mlp::Tape actor, critic;
  };

  RecommenderAgent() = default;
  RecommenderAgent(const RecommenderConfig& cfg, std::uint64_t seed);

  const RecommenderConfig& config() const { return cfg_; }

  RecState init_episode(int user) const;
  // Appends (item, reward) and re-encodes the last `window` events.
  RecState track(const RecState& state, int item, double reward) const;

  nn::Vec encode(const RecInput& input, Tape* tape) const;
  HeadOutput forward(const RecInput& input, Tape* tape) const;
  HeadOutput heads(const nn::Vec& state) const;
  void backward(const Tape& tape, const nn::Vec& d_logits, const nn::Vec& d_critic);

  // Samples (or picks greedily) an unmasked item from the actor.
  nn::PolicySample recommend(const RecState& state, const nn::ActionMask& mask,
                             double temperature, Rng& rng, bool greedy = false) const;

  nn::ParamRefs params();
  nn::SeqEncoder& encoder() { return encoder_; }
  nn::ParamBlock& user_embedding() { return user_emb_; }
  nn::ParamBlock& item_embedding() { return item_emb_; }

 private:
  RecommenderConfig cfg_;
  nn::ParamBlock user_emb_;  // d_U x |U|
  nn::ParamBlock item_emb_;  // d_I x |I|, also the action representation
  nn::Linear start_proj_;    // d_U -> d_R
  nn::Linear token_proj_;    // d_U + d_I + 1 -> d_R
  nn::SeqEncoder encoder_;
  nn::Mlp actor_;
  nn::Mlp critic_;
};

}  // namespace darlr
