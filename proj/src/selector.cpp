#include "darlr/selector.hpp"

#include <algorithm>
#include <numeric>

#include "darlr/error.hpp"
#include "darlr/kernels.hpp"

namespace darlr {

using nn::Index;
using nn::Mat;
using nn::Vec;

std::vector<int> candidate_pool(int user, const ShapedRewardMatrix& matrix, int pool_size,
                                int min_size) {
  const int n = matrix.rows();
  if (user < 0 || user >= n) throw Error("candidate_pool: user out of range");
  const Vec sims = kernels::row_cosines(matrix.current(), user);
  std::vector<int> ids;
  ids.reserve(n);
  for (int v = 0; v < n; ++v) {
    if (v != user && matrix.current().row(v).squaredNorm() > 0.0) ids.push_back(v);
  }
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return sims(a) > sims(b); });
  if (static_cast<int>(ids.size()) > pool_size) ids.resize(pool_size);
  if (static_cast<int>(ids.size()) < min_size) {
    throw Error("candidate_pool: only " + std::to_string(ids.size()) + " candidates, need " +
                std::to_string(min_size));
  }
  return ids;
}

SelectorAgent::SelectorAgent(const SelectorConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), proj_("sel.projection", cfg.num_items, cfg.pref_width, seed) {
  if (cfg.num_items < 1 || cfg.pool_size < 1) throw Error("selector: empty configuration");
  if (cfg.window < 1) throw Error("selector: window must be >= 1");
  const Index width = cfg.rec_width + cfg.pref_width;
  encoder_ = nn::SeqEncoder(
      "sel.encoder",
      {.width = width, .heads = cfg.heads, .layers = cfg.layers, .window = cfg.window}, seed);
  actor_ = nn::Mlp("sel.actor", {width, cfg.hidden, cfg.pool_size}, seed);
  critic_ = nn::Mlp("sel.critic", {width, cfg.hidden, cfg.q_critic ? cfg.pool_size : 1}, seed);
}

Vec SelectorAgent::token(const Vec& rec_state, const Vec& row) const {
  if (rec_state.size() != cfg_.rec_width) throw Error("selector: recommender state width mismatch");
  Vec t(state_width());
  t.head(cfg_.rec_width) = rec_state;
  t.tail(cfg_.pref_width) = proj_.forward(row).col(0);
  return t;
}

Vec SelectorAgent::state(const SelInput& input, Tape* tape) const {
  if (input.rows.empty()) throw Error("selector: state needs at least one preference row");
  const std::size_t keep = std::min<std::size_t>(input.rows.size(), cfg_.window);
  const std::size_t first = input.rows.size() - keep;
  Mat rows(cfg_.num_items, static_cast<Index>(keep));
  Mat tokens(state_width(), static_cast<Index>(keep));
  for (std::size_t k = 0; k < keep; ++k) {
    if (input.rows[first + k].size() != cfg_.num_items) {
      throw Error("selector: preference row width mismatch");
    }
    rows.col(static_cast<Index>(k)) = input.rows[first + k];
    tokens.col(static_cast<Index>(k)) = token(input.rec_state, input.rows[first + k]);
  }
  const bool encoded = input.rows.size() > 1;
  nn::SeqEncoder::Tape enc_tape;
  Vec s = encoded ? encoder_.encode(tokens, tape ? &enc_tape : nullptr) : Vec(tokens.col(0));
  if (tape) {
    tape->input = input;
    tape->rows = std::move(rows);
    tape->tokens = std::move(tokens);
    tape->encoder = std::move(enc_tape);
    tape->encoded = encoded;
    tape->state = s;
  }
  return s;
}

HeadOutput SelectorAgent::forward(const SelInput& input, Tape* tape) const {
  const Vec s = state(input, tape);
  HeadOutput out;
  out.logits = actor_.forward(s, tape ? &tape->actor : nullptr).col(0);
  out.critic = critic_.forward(s, tape ? &tape->critic : nullptr).col(0);
  return out;
}

void SelectorAgent::backward(const Tape& tape, const Vec& d_logits, const Vec& d_critic) {
  Vec d_state = actor_.backward(tape.actor, d_logits).col(0);
  d_state += critic_.backward(tape.critic, d_critic).col(0);
  const Mat d_tokens = tape.encoded ? encoder_.backward(tape.encoder, d_state) : Mat(d_state);
  // The recommender state is an input here; its gradient is dropped.
  proj_.backward(tape.rows, d_tokens.bottomRows(cfg_.pref_width));
}

nn::ParamRefs SelectorAgent::params() {
  nn::ParamRefs refs;
  proj_.collect(refs);
  encoder_.collect(refs);
  actor_.collect(refs);
  critic_.collect(refs);
  return refs;
}

SelectionEpisode run_selection(int user, int item, const Vec& rec_state,
                               const ShapedRewardMatrix& matrix, const SelectorAgent& agent,
                               const SelectionParams& params, Rng& rng) {
  const SelectorConfig& cfg = agent.config();
  if (params.k_sel < 1) throw Error("run_selection: k_sel must be >= 1");
  SelectionEpisode ep;
  ep.pool = candidate_pool(user, matrix, cfg.pool_size, params.k_sel);

  const Vec target = matrix.current().row(user).transpose();
  const bool target_zero = target.squaredNorm() == 0.0;
  nn::ActionMask mask(cfg.pool_size, 0);
  for (std::size_t k = 0; k < ep.pool.size(); ++k) mask[k] = 1;

  SelInput input{rec_state, {target}};
  std::vector<Vec> chosen_rows;
  HeadOutput head = agent.forward(input, nullptr);
  double reward_sum = 0.0;
  for (int t = 0; t < params.k_sel; ++t) {
    const nn::PolicySample pick = nn::softmax_policy(head.logits, mask, params.a2c.temperature, rng);
    const int v = ep.pool[pick.action];
    const Vec row = matrix.current().row(v).transpose();

    reward::GainPair g;
    g.sim = target_zero ? 0.0 : reward::similarity_gain(target, row);
    g.div = reward::diversity_gain(row, chosen_rows);
    reward_sum += matrix(v, item);
    const double prefix = reward_sum / static_cast<double>(t + 1);
    const double r = reward::intrinsic_reward(prefix, g, params.coeffs);

    StepRecord step;
    step.mask = mask;
    step.action = pick.action;
    step.logprob = pick.logprob;
    step.reward = r;
    record_critic(step, head, params.a2c);
    step.done = t + 1 == params.k_sel;

    ep.selected.push_back(v);
    ep.gains.push_back(g);
    ep.prefix_mean.push_back(prefix);
    ep.intrinsic.push_back(r);
    ep.inputs.push_back(input);

    mask[pick.action] = 0;
    chosen_rows.push_back(row);
    input.rows.push_back(row);
    if (!step.done) {
      head = agent.forward(input, nullptr);
      step.bootstrap = bootstrap_value(head, mask, params.a2c);
    }
    ep.steps.push_back(std::move(step));
  }
  return ep;
}

}  // namespace darlr
