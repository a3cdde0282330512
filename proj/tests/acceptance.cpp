// Acceptance gate: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "darlr/a2c.hpp"
#include "darlr/engine.hpp"
#include "darlr/nn/adam.hpp"
#include "darlr/nn/gradcheck.hpp"
#include "darlr/nn/layers.hpp"
#include "darlr/nn/seq_encoder.hpp"
#include "darlr/recommender.hpp"
#include "darlr/reward_math.hpp"
#include "darlr/selector.hpp"
#include "darlr/world_model.hpp"
#include "test_util.hpp"

using namespace darlr;
using nn::Vec;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks; the first few are kept for the report line.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    ++failed_;
    if (failed_ <= 3) notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream os;
    os << what << " got " << got << " want " << want;
    expect(std::abs(got - want) <= tol, os.str());
  }
  Outcome outcome(const std::string& extra = "") const {
    std::ostringstream os;
    os << total_ - failed_ << "/" << total_ << " checks";
    if (!extra.empty()) os << ", " << extra;
    if (!notes_.empty()) os << " [" << notes_ << "]";
    return {failed_ == 0, os.str()};
  }

 private:
  int total_ = 0;
  int failed_ = 0;
  std::string notes_;
};

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

nn::Mat random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
  nn::Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * uniform01(rng);
  return m;
}

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

Outcome formula_exactness() {
  using namespace reward;
  constexpr double arith = 1e-12, cos_tol = 1e-9;
  Checker c;

  double mean = 0.0, unc = 0.0;
  const std::vector<double> means{0.2, 0.6}, vars{0.01, 0.09};
  combine_members(means, vars, mean, unc);
  c.near(mean, 0.4, arith, "ensemble mean");
  c.near(unc, 0.09, arith, "ensemble uncertainty");

  const Vec a = vec({0.2, 0.8, 0.1});
  c.near(similarity_gain(a, a), 1.0, cos_tol, "similarity self");
  c.near(similarity_gain(a, -2.0 * a), -1.0, cos_tol, "similarity opposite");
  c.near(similarity_gain(a, vec({0.1, 0.9, 0.0})), 0.9837851170821987, cos_tol, "similarity value");
  c.near(cosine(vec({1, 1}), vec({1, 0})), 1.0 / std::sqrt(2.0), cos_tol, "cosine 45 degrees");

  const Vec cand = vec({0.3, 0.4});
  c.near(diversity_gain(cand, {}), 0.0, arith, "diversity empty");
  c.near(diversity_gain(cand, std::vector<Vec>{cand}), 0.0, cos_tol, "diversity self");
  c.near(diversity_gain(cand, std::vector<Vec>{vec({-0.4, 0.3})}), 1.0, cos_tol, "diversity orthogonal");

  const GainPair g{.sim = 0.8, .div = 0.3};
  c.near(intrinsic_reward(0.4, g, {.similarity = 0.0, .diversity = 0.0}), 0.4, arith, "intrinsic plain");
  c.near(intrinsic_reward(0.5, {.sim = 1.0, .div = 0.0}, {.similarity = 2.0, .diversity = 0.0}), 2.5, arith,
         "intrinsic similarity");
  c.near(intrinsic_reward(0.4, g, {.similarity = 1.0, .diversity = 0.1}), 1.23, arith, "intrinsic full");

  c.near(shape_reward(std::vector<double>{0.5}), 0.5, arith, "shape single");
  c.near(shape_reward(std::vector<double>{0.2, 0.4, 0.6}), 0.4, arith, "shape mean");

  c.near(dynamic_uncertainty(0.4, 0.4, 0.5, 0.1, 1e-6), 0.0, arith, "uncertainty unchanged");
  c.near(dynamic_uncertainty(0.7, 0.4, 0.5, 0.1, 1e-6), 0.5, arith, "uncertainty value");
  c.near(dynamic_uncertainty(0.7, 0.4, -0.3, 0.1, 1e-6), 0.3 / 1e-6, 1e-6, "uncertainty epsilon floor");

  const PenaltyCoeffs none{.uncertainty = 0, .entropy = 0, .similarity = 0, .diversity = 0};
  c.near(recommender_reward(0.8, 0.5, -0.69, none), 0.8, arith, "reward no penalties");
  c.near(recommender_reward(0.8, 0.5, -0.69, {.uncertainty = 0.1, .entropy = 0.1}), 0.681, arith,
         "reward with penalties");
  return c.outcome();
}

Outcome gradient_correctness() {
  Checker c;
  double worst = 0.0;
  auto record = [&](const nn::GradCheckReport& r, const std::string& what) {
    worst = std::max(worst, r.max_rel_error);
    c.expect(r.max_rel_error < 1e-4, what + " " + r.worst_block);
  };

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    nn::Mlp mlp("m", {4, 6, 5, 3}, seed, seed % 2 ? nn::Activation::Tanh : nn::Activation::Identity);
    nn::ParamBlock input("input", 4, 2);
    input.value = random_matrix(rng, 4, 2);
    const nn::Mat w = random_matrix(rng, 3, 2);
    nn::Mlp::Tape tape;
    mlp.forward(input.value, &tape);
    input.grad = mlp.backward(tape, w);
    nn::ParamRefs ps;
    mlp.collect(ps);
    ps.push_back(&input);
    record(nn::check_gradients(ps, [&] { return (mlp.forward(input.value, nullptr).array() * w.array()).sum(); }),
           "mlp seed " + std::to_string(seed));
  }

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(2000 + seed);
    const nn::Index len = 1 + static_cast<nn::Index>(seed % 4);
    nn::SeqEncoder enc("enc",
                       {.width = 4, .heads = 1 + static_cast<nn::Index>(seed % 2),
                        .layers = 1 + static_cast<nn::Index>(seed % 3 == 0), .window = 4},
                       seed);
    nn::ParamBlock input("tokens", 4, len);
    input.value = random_matrix(rng, 4, len);
    const Vec w = random_matrix(rng, 4, 1).col(0);
    nn::SeqEncoder::Tape tape;
    enc.encode(input.value, &tape);
    input.grad = enc.backward(tape, w);
    nn::ParamRefs ps;
    enc.collect(ps);
    ps.push_back(&input);
    record(nn::check_gradients(ps, [&] { return enc.encode(input.value, nullptr).dot(w); }),
           "encoder seed " + std::to_string(seed));
  }

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(3000 + seed);
    const bool q = seed % 4 == 0;
    RecommenderAgent agent({.num_users = 4, .num_items = 6, .state_width = 6, .user_width = 3,
                            .item_width = 3, .hidden = 5, .window = 3, .q_critic = q},
                           seed);
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
    record(nn::check_gradients(refs,
                               [&] {
                                 return a2c_losses<RecommenderAgent, RecInput>(agent, inputs, steps, cfg,
                                                                               false)
                                     .total(cfg);
                               }),
           "recommender a2c seed " + std::to_string(seed));
  }

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(4000 + seed);
    const bool q = seed % 4 == 1;
    SelectorAgent agent({.num_items = 5, .rec_width = 4, .pref_width = 3, .pool_size = 6, .hidden = 5,
                         .window = 3, .q_critic = q},
                        seed);
    const Vec s_rec = random_matrix(rng, 4, 1).col(0);
    std::vector<SelInput> inputs;
    SelInput in{s_rec, {random_matrix(rng, 5, 1, 0.0, 1.0).col(0)}};
    for (int t = 0; t < 5; ++t) {
      inputs.push_back(in);
      in.rows.push_back(random_matrix(rng, 5, 1, 0.0, 1.0).col(0));
    }
    const auto steps = random_steps(rng, 5, 6);
    const A2CConfig cfg{.gamma = 0.95, .value_coef = 0.5, .temperature = 1.3, .q_critic = q};
    nn::ParamRefs refs = agent.params();
    nn::zero_grads(refs);
    a2c_losses<SelectorAgent, SelInput>(agent, inputs, steps, cfg, true);
    record(nn::check_gradients(
               refs,
               [&] { return a2c_losses<SelectorAgent, SelInput>(agent, inputs, steps, cfg, false).total(cfg); }),
           "selector a2c seed " + std::to_string(seed));
  }
  std::ostringstream os;
  os << "max relative error " << worst;
  return c.outcome(os.str());
}

Outcome termination_protocol() {
  Checker c;
  Rng rng(7);
  for (int trial = 0; trial < 5000; ++trial) {
    const int n = static_cast<int>(uniform_index(rng, 35));
    std::vector<int> cats(n);
    for (int& x : cats) x = static_cast<int>(uniform_index(rng, 8));
    const int cat = static_cast<int>(uniform_index(rng, 8));
    bool repeat = false;
    for (int k = std::max(0, n - 4); k < n; ++k) repeat |= cats[k] == cat;
    const DoneReason r = termination(cats, cat, n + 1);
    c.expect((r == DoneReason::CategoryRepeat) == repeat, "repeat rule");
    if (!repeat) c.expect((r == DoneReason::MaxLength) == (n + 1 >= 30), "length cap");
  }

  // Every item in its own category: only the cap can end an episode.
  Dataset d = generate_synthetic({.users = 10, .items = 40, .categories = 5, .seed = 3});
  for (int i = 0; i < d.num_items(); ++i) d.items.category[i] = i;
  d.items.num_categories = d.num_items();
  EngineConfig cfg;
  RecommenderAgent agent({.num_users = d.num_users(), .num_items = d.num_items()}, 1);
  int longest = 0;
  for (int e = 0; e < 200; ++e) {
    Rng erng(stream_seed(5, static_cast<std::uint64_t>(e)));
    const EpisodeOutcome ep = evaluate_episode(agent, e % d.num_users(), d.items.category, *d.truth, cfg, erng);
    longest = std::max(longest, ep.length);
    c.expect(ep.length <= 30, "length above 30");
  }
  c.expect(longest == 30, "cap never reached");
  return c.outcome("longest episode " + std::to_string(longest));
}

struct RunSummary {
  double reward_error = 0.0;
  double r_tra = 0.0;
};

RunSummary run_default(std::uint64_t seed, Variant v) {
  const Dataset d = generate_synthetic({.seed = seed});
  WorldModelConfig wc;
  wc.seed = seed;
  const WorldModel wm = train_world_model(d, wc);
  EngineConfig cfg;
  cfg.variant = v;
  cfg.seed = seed;
  Trainer t(d, wm, cfg);
  t.train(nullptr);
  const EvalReport& r = t.history().back().report;
  return {r.reward_error, r.r_tra};
}

// Shared by the reward-error and ablation criteria.
struct Sweep {
  std::vector<RunSummary> full, r_static, rhat;
};

const Sweep& sweep() {
  static const Sweep s = [] {
    Sweep out;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      out.full.push_back(run_default(seed, Variant::Full));
      out.r_static.push_back(run_default(seed, Variant::RStatic));
      out.rhat.push_back(run_default(seed, Variant::Rhat));
    }
    return out;
  }();
  return s;
}

double mean_of(const std::vector<RunSummary>& runs, double RunSummary::*field) {
  double s = 0.0;
  for (const auto& r : runs) s += r.*field;
  return s / static_cast<double>(runs.size());
}

Outcome reward_error_property() {
  const Sweep& s = sweep();
  int wins = 0;
  std::ostringstream os;
  os << "full vs r_static error per seed:";
  for (std::size_t k = 0; k < s.full.size(); ++k) {
    wins += s.full[k].reward_error < s.r_static[k].reward_error;
    os << ' ' << s.full[k].reward_error << '/' << s.r_static[k].reward_error;
  }
  const double mf = mean_of(s.full, &RunSummary::reward_error);
  const double ms = mean_of(s.r_static, &RunSummary::reward_error);
  os << "; wins " << wins << "/5, means " << mf << " vs " << ms;
  return {wins >= 4 && mf < ms, os.str()};
}

Outcome ablation_ordering() {
  const Sweep& s = sweep();
  const double full = mean_of(s.full, &RunSummary::r_tra);
  const double stat = mean_of(s.r_static, &RunSummary::r_tra);
  const double rhat = mean_of(s.rhat, &RunSummary::r_tra);
  std::ostringstream os;
  os << "mean R_tra full " << full << ", r_static " << stat << ", rhat " << rhat;
  return {full >= stat && full >= rhat, os.str()};
}

Outcome bandit_sanity() {
  constexpr int arms = 5, best = 3;
  Checker c;
  double lowest = 1.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RecommenderAgent agent({.num_users = 1, .num_items = arms}, seed);
    const std::vector<RecInput> inputs{agent.init_episode(0).input};
    const A2CConfig a2c;
    const nn::AdamConfig adam = EngineConfig{}.adam;
    const nn::ActionMask mask(arms, 1);
    Rng rng(stream_seed(seed, "bandit"));
    for (int update = 0; update < 500; ++update) {
      const HeadOutput head = agent.forward(inputs[0], nullptr);
      const nn::PolicySample pick = nn::softmax_policy(head.logits, mask, a2c.temperature, rng);
      std::vector<StepRecord> steps(1);
      StepRecord& s = steps[0];
      s.mask = mask;
      s.action = pick.action;
      s.logprob = pick.logprob;
      s.reward = pick.action == best ? 1.0 : 0.0;
      s.done = true;
      record_critic(s, head, a2c);
      compute_advantages(steps, a2c.gamma);
      a2c_losses<RecommenderAgent, RecInput>(agent, inputs, steps, a2c, true);
      nn::adam_step(agent.params(), adam);
    }
    const Vec p = nn::masked_softmax(agent.forward(inputs[0], nullptr).logits, mask, a2c.temperature);
    lowest = std::min(lowest, p(best));
    c.expect(p(best) > 0.9, "seed " + std::to_string(seed) + " p=" + std::to_string(p(best)));
  }
  return c.outcome("lowest p(best) " + std::to_string(lowest));
}

Outcome entropy_endpoints() {
  Checker c;
  // Every context is followed by each of the 4 items equally often.
  BehaviorStats uniform(2, 1.0, 4);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      for (int i = 0; i < 4; ++i) uniform.add(std::vector<int>{a, b}, i);
    }
  }
  const EntropyTable flat(uniform);
  c.near(flat.state_penalty(std::vector<int>{}), 0.0, 1e-6, "uniform empty context");
  c.near(flat.state_penalty(std::vector<int>{2}), 0.0, 1e-6, "uniform one-item context");
  c.near(flat.state_penalty(std::vector<int>{1, 3}), 0.0, 1e-6, "uniform full context");

  // Sessions that always return to item 0.
  BehaviorStats skewed(2, 1.0, 4);
  std::vector<int> history;
  for (int n = 0; n < 200; ++n) {
    skewed.add(history, 0);
    history.push_back(0);
    if (history.size() > 2) history.erase(history.begin());
  }
  const EntropyTable sharp(skewed);
  const double pe = sharp.state_penalty(std::vector<int>{0, 0});
  c.expect(pe < -0.2, "concentrated penalty " + std::to_string(pe));
  return c.outcome("concentrated P_E " + std::to_string(pe));
}

Dataset smoke_data() {
  return generate_synthetic({.users = 20, .items = 30, .categories = 5, .log_density = 0.1, .seed = 1});
}

EngineConfig smoke_config() {
  EngineConfig cfg;
  cfg.k_sel = 4;
  cfg.epochs = 3;
  cfg.trajectories = 20;
  cfg.eval_episodes = 50;
  return cfg;
}

Outcome determinism_and_persistence() {
  Checker c;
  const Dataset d = smoke_data();
  const WorldModel wm = train_world_model(d, {.epochs = 50, .seed = 1});
  const WorldModel wm2 = train_world_model(d, {.epochs = 50, .seed = 1});
  c.expect(wm.predict().mean == wm2.predict().mean, "world model training not reproducible");

  test::TempDir dir("acceptance");
  save_world_model(wm, dir.path() / "wm.txt");
  const WorldModel back = load_world_model(dir.path() / "wm.txt", d);
  c.expect(back.predict().mean == wm.predict().mean &&
               back.predict().static_uncertainty == wm.predict().static_uncertainty,
           "world model reload changes predictions");

  auto train_csv = [&] {
    Trainer t(d, wm, smoke_config());
    std::ostringstream csv;
    t.train(&csv);
    return csv.str();
  };
  c.expect(train_csv() == train_csv(), "metrics CSV differs between identical runs");

  EngineConfig cfg = smoke_config();
  Trainer straight(d, wm, cfg);
  straight.train_epoch();
  straight.save_bundle(dir.path() / "b1");
  Trainer resumed = Trainer::load_bundle(dir.path() / "b1", d);
  resumed.save_bundle(dir.path() / "b2");
  for (const char* f : {"config.json", "world_model.txt", "recommender.txt", "selector.txt", "matrix.txt",
                        "rng.txt", "metrics.csv"}) {
    c.expect(test::read_file(dir.path() / "b1" / f) == test::read_file(dir.path() / "b2" / f),
             std::string("bundle file changed on reload: ") + f);
  }
  const EvalReport e1 = straight.evaluate(60, 17);
  const EvalReport e2 = resumed.evaluate(60, 17);
  c.expect(e1.r_tra == e2.r_tra && e1.length == e2.length && e1.mcd == e2.mcd, "resumed evaluation differs");
  std::ostringstream a, b;
  straight.train(&a);
  resumed.train(&b);
  c.expect(a.str() == b.str(), "resumed training differs");
  return c.outcome();
}

Outcome bookkeeping_replay() {
  const Dataset d = smoke_data();
  const WorldModel wm = train_world_model(d, {.epochs = 50, .seed = 1});
  Trainer t(d, wm, smoke_config());
  long checked = 0, mismatched = 0;
  t.set_step_observer([&](const Transition& tr, const ShapedRewardMatrix& m) {
    double sim = 0.0, div = 0.0;
    for (const auto& g : tr.gains) {
      sim += g.sim;
      div += g.div;
    }
    sim /= static_cast<double>(tr.gains.size());
    div /= static_cast<double>(tr.gains.size());
    const double replay = reward::dynamic_uncertainty(m(tr.user, tr.item), m.previous()(tr.user, tr.item), sim,
                                                      div, t.config().uncertainty_eps);
    ++checked;
    mismatched += replay != tr.uncertainty || m.previous()(tr.user, tr.item) != tr.previous;
  });
  t.train(nullptr);
  std::ostringstream os;
  os << checked << " steps replayed, " << mismatched << " mismatched";
  return {checked > 0 && mismatched == 0, os.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"formula exactness", formula_exactness},
      {"gradient correctness", gradient_correctness},
      {"termination protocol", termination_protocol},
      {"dynamic reward error", reward_error_property},
      {"ablation ordering", ablation_ordering},
      {"policy-gradient bandit", bandit_sanity},
      {"entropy penalty endpoints", entropy_endpoints},
      {"determinism and persistence", determinism_and_persistence},
      {"shaping bookkeeping replay", bookkeeping_replay},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s %d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", static_cast<int>(k + 1),
                criteria[k].first.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
