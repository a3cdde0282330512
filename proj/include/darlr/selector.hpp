#pragma once

#include <cstdint>
#include <vector>

#include "darlr/a2c.hpp"
#include "darlr/nn/layers.hpp"
#include "darlr/nn/policy.hpp"
#include "darlr/nn/seq_encoder.hpp"
#include "darlr/reward_math.hpp"
#include "darlr/shaped_matrix.hpp"

namespace darlr {

struct SelectorConfig {
  int num_items = 0;      // preference row width
  int rec_width = 32;     // d_R
  int pref_width = 32;    // d_P
  int pool_size = 10;     // C, actor output width
  int hidden = 64;
  int window = 5;         // w_sel
  int heads = 1;
  int layers = 1;
  bool q_critic = false;
};

// Inputs of one selector state: the (detached) recommender state and the
// preference rows seen so far, p_u first, then the rows of the users selected
// at earlier steps. Only the newest `window` rows enter the encoder.
struct SelInput {
  nn::Vec rec_state;
  std::vector<nn::Vec> rows;
};

struct SelectionEpisode {
  std::vector<int> selected;                // user ids in selection order
  std::vector<reward::GainPair> gains;
  std::vector<double> intrinsic;            // per-step r_sel
  std::vector<double> prefix_mean;          // per-step r_hat term
  std::vector<SelInput> inputs;
  std::vector<StepRecord> steps;
  std::vector<int> pool;
};

// Top-C users other than `user` by cosine similarity of their current rows
// to row `user`; ties go to the lower id. Users with an all-zero row are
// skipped. Throws when fewer than `min_size` users remain.
std::vector<int> candidate_pool(int user, const ShapedRewardMatrix& matrix, int pool_size,
                                int min_size);

class SelectorAgent {
 public:
  struct Tape {
    SelInput input;
    nn::Mat rows;      // raw rows entering the tokens
    nn::Mat tokens;
    nn::SeqEncoder::Tape encoder;
    bool encoded = false;
    nn::Vec state;
    nn::Mlp::Tape actor, critic;
  };

  SelectorAgent() = default;
  SelectorAgent(const SelectorConfig& cfg, std::uint64_t seed);

  const SelectorConfig& config() const { return cfg_; }
  int state_width() const { return cfg_.rec_width + cfg_.pref_width; }

  // s_rec (+) projection(p).
  nn::Vec token(const nn::Vec& rec_state, const nn::Vec& row) const;
  // One row: the projected initial token; more rows: the encoder over the
  // newest `window` tokens.
  nn::Vec state(const SelInput& input, Tape* tape) const;
  HeadOutput forward(const SelInput& input, Tape* tape) const;
  void backward(const Tape& tape, const nn::Vec& d_logits, const nn::Vec& d_critic);

  nn::ParamRefs params();
  nn::Linear& projection() { return proj_; }
  nn::SeqEncoder& encoder() { return encoder_; }

 private:
  SelectorConfig cfg_;
  nn::Linear proj_;  // |I| -> d_P
  nn::SeqEncoder encoder_;
  nn::Mlp actor_;
  nn::Mlp critic_;
};

struct SelectionParams {
  int k_sel = 10;
  reward::PenaltyCoeffs coeffs;
  A2CConfig a2c;
};

// Selects k_sel distinct reference users for (user, item) from the
// candidate pool. The r_hat term of each intrinsic reward is the running mean
// of the selected users' current estimates for the item; gains are computed
// on the matrix as it stands before the write-back.
SelectionEpisode run_selection(int user, int item, const nn::Vec& rec_state,
                               const ShapedRewardMatrix& matrix, const SelectorAgent& agent,
                               const SelectionParams& params, Rng& rng);

}  // namespace darlr
