#include "darlr/recommender.hpp"

#include "darlr/error.hpp"

namespace darlr {

using nn::Index;
using nn::Mat;
using nn::Vec;

RecommenderAgent::RecommenderAgent(const RecommenderConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      user_emb_("rec.user_embedding", cfg.user_width, cfg.num_users),
      item_emb_("rec.item_embedding", cfg.item_width, cfg.num_items),
      start_proj_("rec.start", cfg.user_width, cfg.state_width, seed),
      token_proj_("rec.token", cfg.user_width + cfg.item_width + 1, cfg.state_width, seed) {
  if (cfg.num_users < 1 || cfg.num_items < 1) throw Error("recommender: empty catalog");
  if (cfg.window < 1) throw Error("recommender: window must be >= 1");
  nn::uniform_init(user_emb_, seed, 0.1);
  nn::uniform_init(item_emb_, seed, 0.1);
  encoder_ = nn::SeqEncoder("rec.encoder",
                            {.width = cfg.state_width, .heads = cfg.heads, .layers = cfg.layers,
                             .window = cfg.window},
                            seed);
  actor_ = nn::Mlp("rec.actor", {cfg.state_width, cfg.hidden, cfg.num_items}, seed);
  critic_ = nn::Mlp("rec.critic", {cfg.state_width, cfg.hidden, cfg.q_critic ? cfg.num_items : 1},
                    seed);
}

RecState RecommenderAgent::init_episode(int user) const {
  if (user < 0 || user >= cfg_.num_users) throw Error("recommender: user out of range");
  RecState s;
  s.input.user = user;
  s.input.events.push_back({});
  s.encoding = encode(s.input, nullptr);
  return s;
}

RecState RecommenderAgent::track(const RecState& state, int item, double reward) const {
  if (item < 0 || item >= cfg_.num_items) throw Error("recommender: item out of range");
  RecState next;
  next.input.user = state.input.user;
  const auto& ev = state.input.events;
  const std::size_t keep = std::min<std::size_t>(ev.size(), cfg_.window - 1);
  next.input.events.assign(ev.end() - static_cast<std::ptrdiff_t>(keep), ev.end());
  next.input.events.push_back({item, reward});
  next.encoding = encode(next.input, nullptr);
  return next;
}

Vec RecommenderAgent::encode(const RecInput& input, Tape* tape) const {
  const auto& ev = input.events;
  if (ev.empty() || ev.size() > static_cast<std::size_t>(cfg_.window)) {
    throw Error("recommender: history must hold 1..window events");
  }
  const Index n = static_cast<Index>(ev.size());
  const Index du = cfg_.user_width, di = cfg_.item_width;
  const Vec eu = user_emb_.value.col(input.user);
  Mat raw = Mat::Zero(du + di + 1, n);
  Mat tokens(cfg_.state_width, n);
  for (Index t = 0; t < n; ++t) {
    raw.col(t).head(du) = eu;
    if (ev[t].item < 0) {
      tokens.col(t) = start_proj_.forward(eu);
    } else {
      raw.col(t).segment(du, di) = item_emb_.value.col(ev[t].item);
      raw(du + di, t) = ev[t].reward;
      tokens.col(t) = token_proj_.forward(raw.col(t));
    }
  }
  nn::SeqEncoder::Tape enc_tape;
  Vec state = encoder_.encode(tokens, tape ? &enc_tape : nullptr);
  if (tape) {
    tape->input = input;
    tape->raw = std::move(raw);
    tape->tokens = std::move(tokens);
    tape->encoder = std::move(enc_tape);
    tape->state = state;
  }
  return state;
}

HeadOutput RecommenderAgent::heads(const Vec& state) const {
  return {actor_.forward(state, nullptr).col(0), critic_.forward(state, nullptr).col(0)};
}

HeadOutput RecommenderAgent::forward(const RecInput& input, Tape* tape) const {
  const Vec state = encode(input, tape);
  if (!tape) return heads(state);
  HeadOutput out;
  out.logits = actor_.forward(state, &tape->actor).col(0);
  out.critic = critic_.forward(state, &tape->critic).col(0);
  return out;
}

void RecommenderAgent::backward(const Tape& tape, const Vec& d_logits, const Vec& d_critic) {
  Vec d_state = actor_.backward(tape.actor, d_logits).col(0);
  d_state += critic_.backward(tape.critic, d_critic).col(0);
  const Mat d_tokens = encoder_.backward(tape.encoder, d_state);
  const Index du = cfg_.user_width, di = cfg_.item_width;
  const int user = tape.input.user;
  for (Index t = 0; t < d_tokens.cols(); ++t) {
    const int item = tape.input.events[t].item;
    if (item < 0) {
      const Mat eu = tape.raw.col(t).head(du);
      user_emb_.grad.col(user) += start_proj_.backward(eu, d_tokens.col(t)).col(0);
    } else {
      const Vec dx = token_proj_.backward(tape.raw.col(t), d_tokens.col(t)).col(0);
      user_emb_.grad.col(user) += dx.head(du);
      item_emb_.grad.col(item) += dx.segment(du, di);
    }
  }
}

nn::PolicySample RecommenderAgent::recommend(const RecState& state, const nn::ActionMask& mask,
                                             double temperature, Rng& rng, bool greedy) const {
  const Vec logits = actor_.forward(state.encoding, nullptr).col(0);
  return greedy ? nn::greedy_policy(logits, mask, temperature)
                : nn::softmax_policy(logits, mask, temperature, rng);
}

nn::ParamRefs RecommenderAgent::params() {
  nn::ParamRefs refs{&user_emb_, &item_emb_};
  start_proj_.collect(refs);
  token_proj_.collect(refs);
  encoder_.collect(refs);
  actor_.collect(refs);
  critic_.collect(refs);
  return refs;
}

}  // namespace darlr
