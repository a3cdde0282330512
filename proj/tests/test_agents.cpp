#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "darlr/a2c.hpp"
#include "darlr/error.hpp"
#include "darlr/nn/adam.hpp"
#include "darlr/nn/gradcheck.hpp"
#include "darlr/recommender.hpp"
#include "darlr/rng.hpp"
#include "darlr/selector.hpp"

using namespace darlr;
using nn::Vec;

namespace {

RecommenderConfig small_rec(int window = 3) {
  return {.num_users = 4, .num_items = 6, .state_width = 6, .user_width = 3, .item_width = 3,
          .hidden = 5, .window = window};
}

SelectorConfig small_sel(int window = 3) {
  return {.num_items = 5, .rec_width = 4, .pref_width = 3, .pool_size = 6, .hidden = 5,
          .window = window};
}

Vec random_vec(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (int k = 0; k < n; ++k) v(k) = lo + (hi - lo) * uniform01(rng);
  return v;
}

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) m.row(r) = random_vec(rng, cols, 0.05, 1.0).transpose();
  return m;
}

// A short synthetic trajectory with random masks, rewards and advantages.
std::vector<StepRecord> random_steps(Rng& rng, int n, int actions) {
  std::vector<StepRecord> steps(n);
  for (int t = 0; t < n; ++t) {
    StepRecord& s = steps[t];
    s.mask.assign(actions, 1);
    s.mask[uniform_index(rng, actions)] = 0;
    do {
      s.action = static_cast<int>(uniform_index(rng, actions));
    } while (!s.mask[s.action]);
    s.reward = uniform01(rng);
    s.bootstrap = uniform01(rng) - 0.5;
    s.done = t + 1 == n;
    s.advantage = 2.0 * uniform01(rng) - 1.0;
  }
  return steps;
}

}  // namespace

TEST_CASE("advantages") {
  std::vector<StepRecord> one(1);
  one[0].reward = 1.0;
  one[0].baseline = 0.4;
  compute_advantages(one, 0.99);
  CHECK(one[0].ret == 1.0);
  CHECK(std::abs(one[0].advantage - 0.6) < 1e-12);

  std::vector<StepRecord> two(2);
  two[0].reward = two[1].reward = 1.0;
  compute_advantages(two, 0.5);
  CHECK(two[0].ret == 1.5);
  CHECK(two[1].ret == 1.0);
  CHECK(two[0].advantage == 1.5);

  Rng rng(3);
  std::vector<StepRecord> many(7);
  for (auto& s : many) {
    s.reward = uniform01(rng);
    s.baseline = uniform01(rng);
  }
  compute_advantages(many, 0.0);
  for (const auto& s : many) CHECK(s.advantage == s.reward - s.baseline);
}

TEST_CASE("loss closed forms") {
  RecommenderAgent agent(small_rec(), 1);
  const RecInput input{0, {{}}};
  std::vector<StepRecord> steps(1);
  steps[0].mask.assign(6, 1);
  steps[0].action = 2;
  steps[0].advantage = 0.0;
  steps[0].reward = 1.0;
  steps[0].done = true;
  const std::vector<RecInput> inputs{input};
  A2CConfig cfg;
  const A2CLosses zero_adv = a2c_losses<RecommenderAgent, RecInput>(agent, inputs, steps, cfg, false);
  CHECK(zero_adv.actor == 0.0);

  // Critic head zeroed so V == 0: terminal r = 1 gives loss 1.
  for (auto* b : agent.params()) {
    if (b->name.rfind("rec.critic", 0) == 0) b->value.setZero();
  }
  const A2CLosses l = a2c_losses<RecommenderAgent, RecInput>(agent, inputs, steps, cfg, false);
  CHECK(l.critic == 1.0);
}

TEST_CASE("recommender losses match finite differences") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const bool q = seed % 4 == 0;
    RecommenderConfig rc = small_rec();
    rc.q_critic = q;
    RecommenderAgent agent(rc, seed);
    std::vector<RecInput> inputs;
    RecState s = agent.init_episode(static_cast<int>(seed % 4));
    for (int t = 0; t < 5; ++t) {
      inputs.push_back(s.input);
      s = agent.track(s, static_cast<int>(uniform_index(rng, 6)), uniform01(rng));
    }
    const auto steps = random_steps(rng, 5, 6);
    const A2CConfig cfg{.gamma = 0.9, .value_coef = 0.7, .temperature = 0.8, .q_critic = q};
    nn::ParamRefs refs = agent.params();
    nn::zero_grads(refs);
    a2c_losses<RecommenderAgent, RecInput>(agent, inputs, steps, cfg, true);
    const auto report = nn::check_gradients(refs, [&] {
      return a2c_losses<RecommenderAgent, RecInput>(agent, inputs, steps, cfg, false).total(cfg);
    });
    CHECK_MESSAGE(report.max_rel_error < 1e-4, "seed " << seed << " " << report.worst_block);
  }
}

TEST_CASE("selector losses match finite differences") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(100 + seed);
    const bool q = seed % 4 == 1;
    SelectorConfig sc = small_sel();
    sc.q_critic = q;
    SelectorAgent agent(sc, seed);
    const Vec s_rec = random_vec(rng, 4);
    std::vector<SelInput> inputs;
    SelInput in{s_rec, {random_vec(rng, 5, 0.0, 1.0)}};
    for (int t = 0; t < 5; ++t) {
      inputs.push_back(in);
      in.rows.push_back(random_vec(rng, 5, 0.0, 1.0));
    }
    const auto steps = random_steps(rng, 5, 6);
    const A2CConfig cfg{.gamma = 0.95, .value_coef = 0.5, .temperature = 1.3, .q_critic = q};
    nn::ParamRefs refs = agent.params();
    nn::zero_grads(refs);
    a2c_losses<SelectorAgent, SelInput>(agent, inputs, steps, cfg, true);
    const auto report = nn::check_gradients(refs, [&] {
      return a2c_losses<SelectorAgent, SelInput>(agent, inputs, steps, cfg, false).total(cfg);
    });
    CHECK_MESSAGE(report.max_rel_error < 1e-4, "seed " << seed << " " << report.worst_block);
  }
}

TEST_CASE("recommender state tracking") {
  RecommenderAgent agent(small_rec(3), 7);
  const RecState a = agent.init_episode(0);
  const RecState b = agent.init_episode(1);
  CHECK((a.encoding - b.encoding).norm() > 1e-9);

  // Reward enters the token.
  const RecState r0 = agent.track(a, 2, 0.0);
  const RecState r1 = agent.track(a, 2, 1.0);
  CHECK((r0.encoding - r1.encoding).norm() > 1e-9);

  // Window bound.
  RecState s = a;
  for (int t = 0; t < 40; ++t) s = agent.track(s, t % 6, 0.5);
  CHECK(s.input.events.size() == 3);

  // Causality: an event outside the window has no influence.
  RecState x = agent.track(agent.track(agent.track(agent.track(a, 0, 0.1), 1, 0.2), 2, 0.3), 3, 0.4);
  RecState y = agent.track(agent.track(agent.track(agent.track(a, 5, 0.9), 1, 0.2), 2, 0.3), 3, 0.4);
  CHECK(x.encoding == y.encoding);

  // Window 1 keeps only the latest interaction.
  RecommenderAgent single(small_rec(1), 7);
  const RecState p = single.track(single.track(single.init_episode(0), 1, 0.3), 4, 0.6);
  const RecState q = single.track(single.track(single.init_episode(0), 2, 0.9), 4, 0.6);
  CHECK(p.encoding == q.encoding);
}

TEST_CASE("recommender with zeroed embeddings uses the bias pathway") {
  RecommenderAgent agent(small_rec(), 2);
  agent.user_embedding().value.setZero();
  const RecState a = agent.init_episode(0);
  const RecState b = agent.init_episode(3);
  CHECK(a.encoding == b.encoding);
}

TEST_CASE("recommend sampling") {
  RecommenderAgent agent(small_rec(), 3);
  RecState s = agent.init_episode(0);
  Rng rng(5);
  nn::ActionMask only(6, 0);
  only[4] = 1;
  for (int k = 0; k < 20; ++k) CHECK(agent.recommend(s, only, 1.0, rng).action == 4);
  nn::ActionMask none(6, 0);
  CHECK_THROWS_AS(agent.recommend(s, none, 1.0, rng), Error);

  // Empirical frequencies within 3 sigma of the policy probabilities.
  nn::ActionMask mask(6, 1);
  mask[1] = 0;
  const auto ref = agent.recommend(s, mask, 1.0, rng);
  const int draws = 100000;
  std::vector<int> counts(6, 0);
  for (int k = 0; k < draws; ++k) ++counts[agent.recommend(s, mask, 1.0, rng).action];
  CHECK(counts[1] == 0);
  for (int a = 0; a < 6; ++a) {
    const double p = ref.probs(a);
    const double sigma = std::sqrt(p * (1.0 - p) / draws);
    CHECK(std::abs(counts[a] / static_cast<double>(draws) - p) <= 3.0 * sigma + 1e-12);
  }
}

TEST_CASE("selector state construction") {
  SelectorConfig sc = small_sel();
  sc.pref_width = 5;
  SelectorAgent agent(sc, 4);
  agent.projection().weight.value.setIdentity();
  agent.projection().bias.value.setZero();
  Rng rng(1);
  const Vec s_rec = random_vec(rng, 4);
  const Vec p = random_vec(rng, 5);
  const Vec s0 = agent.state({s_rec, {p}}, nullptr);
  CHECK(s0.head(4) == s_rec);
  CHECK(s0.tail(5) == p);

  SelectorAgent plain(small_sel(), 4);
  const Vec z = plain.state({Vec::Zero(4), {Vec::Zero(5)}}, nullptr);
  CHECK(z.head(4).isZero());
  CHECK(z.tail(3) == plain.projection().bias.value.col(0));

  CHECK_THROWS_AS(plain.state({Vec::Zero(3), {Vec::Zero(5)}}, nullptr), Error);
  CHECK_THROWS_AS(plain.state({Vec::Zero(4), {Vec::Zero(4)}}, nullptr), Error);
}

TEST_CASE("selector state transitions") {
  Rng rng(9);
  SelectorAgent agent(small_sel(3), 6);
  const Vec s_rec = random_vec(rng, 4);
  const Vec p_u = random_vec(rng, 5, 0.0, 1.0);
  const Vec a = random_vec(rng, 5, 0.0, 1.0);
  const Vec b = random_vec(rng, 5, 0.0, 1.0);
  CHECK((agent.state({s_rec, {p_u, a}}, nullptr) - agent.state({s_rec, {p_u, b}}, nullptr)).norm() > 1e-9);

  SelectorAgent single(small_sel(1), 6);
  CHECK(single.state({s_rec, {p_u, a, b}}, nullptr) == single.state({s_rec, {a, b}}, nullptr));

  // Zero positional offsets: repeating one token equals the single-token case.
  SelectorAgent enc(small_sel(4), 6);
  enc.encoder().positions().value.setZero();
  const Vec once = enc.state({s_rec, {a, a}}, nullptr);
  const Vec thrice = enc.state({s_rec, {a, a, a, a}}, nullptr);
  CHECK((once - thrice).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("candidate pool") {
  Rng rng(2);
  Eigen::MatrixXd m = random_matrix(rng, 10, 6);
  m.row(7) = m.row(3);
  const ShapedRewardMatrix matrix(m, 0.0, 1.0);

  const auto all = candidate_pool(3, matrix, 100, 2);
  CHECK(all.size() == 9);
  CHECK(all.front() == 7);
  CHECK(std::find(all.begin(), all.end(), 3) == all.end());

  // Exhaustive oracle: sort every other user by (-cosine, id).
  for (int u = 0; u < 10; ++u) {
    std::vector<std::pair<double, int>> order;
    for (int v = 0; v < 10; ++v) {
      if (v == u) continue;
      const double c = m.row(u).dot(m.row(v)) / (m.row(u).norm() * m.row(v).norm());
      order.emplace_back(-c, v);
    }
    std::sort(order.begin(), order.end());
    const auto pool = candidate_pool(u, matrix, 4, 4);
    REQUIRE(pool.size() == 4);
    for (int k = 0; k < 4; ++k) CHECK(pool[k] == order[k].second);
  }
  CHECK_THROWS_AS(candidate_pool(0, matrix, 4, 10), Error);

  // Ties go to the lower id.
  Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(5, 3, 0.5);
  const auto tied = candidate_pool(2, ShapedRewardMatrix(flat, 0.0, 1.0), 3, 1);
  CHECK(tied == std::vector<int>{0, 1, 3});
}

TEST_CASE("selection episode") {
  Rng data(4);
  const Eigen::MatrixXd m = random_matrix(data, 12, 5);
  const ShapedRewardMatrix matrix(m, 0.0, 1.0);
  SelectorConfig sc = small_sel();
  sc.pool_size = 8;
  SelectorAgent agent(sc, 11);
  const Vec s_rec = random_vec(data, 4);
  SelectionParams params{.k_sel = 6};

  Rng rng(21);
  const SelectionEpisode ep = run_selection(0, 3, s_rec, matrix, agent, params, rng);
  REQUIRE(ep.selected.size() == 6);
  const std::set<int> distinct(ep.selected.begin(), ep.selected.end());
  CHECK(distinct.size() == 6);
  CHECK(!distinct.count(0));

  // Scripted replay of the same stream with the same frozen agent.
  Rng replay(21);
  nn::ActionMask mask(8, 1);
  SelInput in{s_rec, {m.row(0).transpose()}};
  std::vector<Vec> chosen;
  double sum = 0.0;
  for (int t = 0; t < 6; ++t) {
    const HeadOutput head = agent.forward(in, nullptr);
    const auto pick = nn::softmax_policy(head.logits, mask, 1.0, replay);
    const int v = ep.pool[pick.action];
    CHECK(v == ep.selected[t]);
    CHECK(ep.steps[t].mask[pick.action] == 1);
    const Vec row = m.row(v).transpose();
    sum += m(v, 3);
    const double sim = reward::similarity_gain(m.row(0).transpose(), row);
    const double div = reward::diversity_gain(row, chosen);
    CHECK(std::abs(ep.gains[t].sim - sim) < 1e-12);
    CHECK(std::abs(ep.gains[t].div - div) < 1e-12);
    const double expected = sum / (t + 1) + params.coeffs.similarity * sim + params.coeffs.diversity * div;
    CHECK(std::abs(ep.intrinsic[t] - expected) < 1e-12);
    mask[pick.action] = 0;
    chosen.push_back(row);
    in.rows.push_back(row);
  }
  CHECK(ep.steps.back().done);

  // Frozen agent + fixed stream: deterministic.
  Rng again(21);
  CHECK(run_selection(0, 3, s_rec, matrix, agent, params, again).selected == ep.selected);
}

TEST_CASE("selection reward special cases") {
  Rng data(8);
  const Eigen::MatrixXd m = random_matrix(data, 12, 5);
  const ShapedRewardMatrix matrix(m, 0.0, 1.0);
  SelectorAgent agent(small_sel(), 3);
  const Vec s_rec = Vec::Zero(4);

  Rng rng(1);
  const auto one = run_selection(2, 1, s_rec, matrix, agent,
                                 {.k_sel = 1, .coeffs = {.similarity = 0, .diversity = 0}}, rng);
  REQUIRE(one.selected.size() == 1);
  CHECK(one.intrinsic[0] == m(one.selected[0], 1));

  const auto plain = run_selection(2, 1, s_rec, matrix, agent,
                                   {.k_sel = 5, .coeffs = {.similarity = 0, .diversity = 0}}, rng);
  double sum = 0.0;
  for (int t = 0; t < 5; ++t) {
    sum += m(plain.selected[t], 1);
    CHECK(std::abs(plain.intrinsic[t] - sum / (t + 1)) < 1e-12);
  }
  CHECK_THROWS_AS(run_selection(2, 1, s_rec, matrix, agent, {.k_sel = 7}, rng), Error);
}

TEST_CASE("policy gradient raises the probability of an advantaged action") {
  RecommenderAgent agent(small_rec(), 5);
  const RecInput input{1, {{}}};
  const std::vector<RecInput> inputs{input};
  const HeadOutput before = agent.forward(input, nullptr);
  nn::ActionMask mask(6, 1);
  const Vec p0 = nn::masked_softmax(before.logits, mask, 1.0);
  std::vector<StepRecord> steps(1);
  steps[0].mask = mask;
  steps[0].action = 4;
  steps[0].advantage = 1.0;
  steps[0].done = true;
  A2CConfig cfg;
  cfg.value_coef = 0.0;
  a2c_losses<RecommenderAgent, RecInput>(agent, inputs, steps, cfg, true);
  nn::adam_step(agent.params(), {.lr = 1e-2});
  const Vec p1 = nn::masked_softmax(agent.forward(input, nullptr).logits, mask, 1.0);
  CHECK(p1(4) > p0(4));
}
