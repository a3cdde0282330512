#include "darlr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "darlr/config.hpp"
#include "darlr/error.hpp"
#include "darlr/kernels.hpp"
#include "darlr/nn/checkpoint.hpp"

namespace darlr {

namespace fs = std::filesystem;
using nn::Vec;

namespace {

constexpr int kBundleVersion = 1;

const std::vector<std::pair<Variant, std::string>>& variant_table() {
  static const std::vector<std::pair<Variant, std::string>> table = {
      {Variant::Full, "full"},       {Variant::RStatic, "r_static"}, {Variant::PuStatic, "pu_static"},
      {Variant::Rhat, "rhat"},       {Variant::RhatRs, "rhat_rs"},   {Variant::RhatRd, "rhat_rd"},
  };
  return table;
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(const std::vector<double>& v) {
  if (v.empty()) return {};
  const double n = static_cast<double>(v.size());
  const double mean = kernels::pairwise_sum(v) / n;
  std::vector<double> sq(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) sq[k] = (v[k] - mean) * (v[k] - mean);
  return {mean, std::sqrt(kernels::pairwise_sum(sq) / n)};
}

void check_finite(const A2CLosses& l, const char* agent, int epoch) {
  if (!std::isfinite(l.actor) || !std::isfinite(l.critic)) {
    throw Error(std::string("non-finite ") + agent + " loss in epoch " + std::to_string(epoch) +
                " (actor " + nn::format_double(l.actor) + ", critic " +
                nn::format_double(l.critic) + ")");
  }
}

// Parameters plus Adam state, so training resumes bit-exactly.
void write_agent(std::ostream& os, const nn::ParamRefs& refs) {
  nn::ConstParamRefs out(refs.begin(), refs.end());
  nn::write_fragment(os, out);
  for (const nn::ParamBlock* b : refs) {
    nn::write_matrix(os, "adam_m/" + b->name, b->adam_m);
    nn::write_matrix(os, "adam_v/" + b->name, b->adam_v);
    nn::write_matrix(os, "adam_t/" + b->name,
                     nn::Mat::Constant(1, 1, static_cast<double>(b->step_count)));
  }
}

void read_agent(std::istream& is, const nn::ParamRefs& refs) {
  std::vector<nn::ParamBlock> shadow;
  shadow.reserve(3 * refs.size());
  for (const nn::ParamBlock* b : refs) {
    shadow.emplace_back("adam_m/" + b->name, b->rows(), b->cols());
    shadow.emplace_back("adam_v/" + b->name, b->rows(), b->cols());
    shadow.emplace_back("adam_t/" + b->name, 1, 1);
  }
  nn::ParamRefs all = refs;
  for (auto& s : shadow) all.push_back(&s);
  nn::read_fragment(is, all);
  for (std::size_t k = 0; k < refs.size(); ++k) {
    refs[k]->adam_m = shadow[3 * k].value;
    refs[k]->adam_v = shadow[3 * k + 1].value;
    refs[k]->step_count = static_cast<std::int64_t>(shadow[3 * k + 2].value(0, 0));
  }
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw Error("cannot open " + p.string());
  return is;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

}  // namespace

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [v, n] : variant_table()) out.push_back(n);
    return out;
  }();
  return names;
}

std::string_view variant_name(Variant v) {
  for (const auto& [var, name] : variant_table()) {
    if (var == v) return name;
  }
  return "unknown";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (const auto& [var, n] : variant_table()) {
    if (n == name) return var;
  }
  return std::nullopt;
}

void validate(const EngineConfig& c) {
  const auto& k = c.coeffs;
  if (k.similarity < 0 || k.diversity < 0 || k.uncertainty < 0 || k.entropy < 0) {
    throw Error("engine config: coefficients must be >= 0");
  }
  if (!(c.a2c.gamma >= 0.0 && c.a2c.gamma <= 1.0)) throw Error("engine config: gamma must lie in [0, 1]");
  if (!(c.a2c.temperature > 0.0)) throw Error("engine config: temperature must be positive");
  if (c.a2c.value_coef < 0.0) throw Error("engine config: value_coef must be >= 0");
  if (!(c.adam.lr > 0.0)) throw Error("engine config: lr must be positive");
  if (c.k_sel < 1) throw Error("engine config: k_sel must be >= 1");
  if (c.pool_size < 0 || (c.pool_size > 0 && c.pool_size < c.k_sel)) {
    throw Error("engine config: pool_size must be 0 or >= k_sel");
  }
  if (c.w_sel < 1 || c.w_rec < 1) throw Error("engine config: windows must be >= 1");
  if (!(c.alpha_shape > 0.0 && c.alpha_shape <= 1.0)) {
    throw Error("engine config: alpha_shape must lie in (0, 1]");
  }
  if (c.rec_width < 1 || c.pref_width < 1 || c.embed_width < 1 || c.hidden < 1) {
    throw Error("engine config: widths must be >= 1");
  }
  if (c.epochs < 0 || c.trajectories < 1 || c.eval_episodes < 1 || c.eval_every < 1) {
    throw Error("engine config: bad epoch/trajectory/eval counts");
  }
  if (c.max_steps < 0) throw Error("engine config: max_steps must be >= 0");
  if (c.entropy_order < 0 || !(c.entropy_alpha > 0.0)) {
    throw Error("engine config: bad entropy settings");
  }
  if (!(c.uncertainty_eps > 0.0)) throw Error("engine config: uncertainty_eps must be positive");
  if (c.max_length < 1 || c.repeat_window < 0) throw Error("engine config: bad termination settings");
}

reward::PenaltyCoeffs selection_coeffs(const EngineConfig& cfg) {
  reward::PenaltyCoeffs c = cfg.coeffs;
  switch (cfg.variant) {
    case Variant::Rhat:
      c.similarity = 0.0;
      c.diversity = 0.0;
      break;
    case Variant::RhatRs:
      c.diversity = 0.0;
      break;
    case Variant::RhatRd:
      c.similarity = 0.0;
      break;
    default:
      break;
  }
  return c;
}

std::string_view done_reason_name(DoneReason r) {
  switch (r) {
    case DoneReason::CategoryRepeat:
      return "category_repeat";
    case DoneReason::MaxLength:
      return "max_length";
    default:
      return "none";
  }
}

DoneReason termination(std::span<const int> prior_categories, int category, int length,
                       int window, int max_length) {
  const std::size_t n = std::min<std::size_t>(prior_categories.size(), window);
  const auto recent = prior_categories.last(n);
  if (std::find(recent.begin(), recent.end(), category) != recent.end()) {
    return DoneReason::CategoryRepeat;
  }
  if (length >= max_length) return DoneReason::MaxLength;
  return DoneReason::None;
}

double majority_category_share(std::span<const int> categories) {
  if (categories.empty()) return 0.0;
  std::map<int, int> counts;
  int best = 0;
  for (int c : categories) best = std::max(best, ++counts[c]);
  return static_cast<double>(best) / static_cast<double>(categories.size());
}

EpisodeOutcome evaluate_episode(const RecommenderAgent& agent, int user,
                                const std::vector<int>& item_category,
                                const Eigen::MatrixXd& truth, const EngineConfig& cfg, Rng& rng) {
  const int items = agent.config().num_items;
  EpisodeOutcome out;
  nn::ActionMask mask(items, 1);
  std::vector<int> cats;
  RecState state = agent.init_episode(user);
  for (int t = 0;; ++t) {
    const nn::PolicySample pick =
        agent.recommend(state, mask, cfg.a2c.temperature, rng, cfg.greedy_eval);
    const int item = pick.action;
    const double r = truth(user, item);
    out.r_tra += r;
    out.items.push_back(item);
    DoneReason reason =
        termination(cats, item_category[item], t + 1, cfg.repeat_window, cfg.max_length);
    cats.push_back(item_category[item]);
    mask[item] = 0;
    if (reason == DoneReason::None && std::find(mask.begin(), mask.end(), 1) == mask.end()) {
      reason = DoneReason::MaxLength;
    }
    if (reason != DoneReason::None) break;
    state = agent.track(state, item, r);
  }
  out.length = static_cast<int>(out.items.size());
  out.mcd = majority_category_share(cats);
  return out;
}

EvalReport evaluate(const RecommenderAgent& agent, const std::vector<int>& item_category,
                    const Eigen::MatrixXd& truth, const EngineConfig& cfg, int episodes,
                    std::uint64_t seed) {
  if (episodes < 1) throw Error("evaluate: need at least one episode");
  const int users = agent.config().num_users;
  std::vector<EpisodeOutcome> outcomes(episodes);
  std::vector<std::string> errors(episodes);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::worker_count())
  for (int k = 0; k < episodes; ++k) {
    try {
      Rng rng(stream_seed(seed, static_cast<std::uint64_t>(k)));
      const int user = static_cast<int>(uniform_index(rng, users));
      outcomes[k] = evaluate_episode(agent, user, item_category, truth, cfg, rng);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error("evaluation failed: " + e);
  }
  std::vector<double> tra(episodes), each(episodes), len(episodes), mcd(episodes);
  for (int k = 0; k < episodes; ++k) {
    tra[k] = outcomes[k].r_tra;
    len[k] = outcomes[k].length;
    each[k] = outcomes[k].r_tra / outcomes[k].length;
    mcd[k] = outcomes[k].mcd;
  }
  EvalReport rep;
  rep.episodes = episodes;
  const Moments a = moments(tra), b = moments(each), c = moments(len), d = moments(mcd);
  rep.r_tra = a.mean;
  rep.r_tra_std = a.sd;
  rep.r_each = b.mean;
  rep.r_each_std = b.sd;
  rep.length = c.mean;
  rep.length_std = c.sd;
  rep.mcd = d.mean;
  rep.mcd_std = d.sd;
  rep.reward_error = std::numeric_limits<double>::quiet_NaN();
  return rep;
}

std::string metrics_header() { return "epoch,steps,R_tra,R_tra_std,R_each,Length,MCD,reward_error"; }

std::string format_metrics_row(const MetricsRow& row) {
  const EvalReport& r = row.report;
  std::ostringstream os;
  os << row.epoch << ',' << row.steps << ',' << nn::format_double(r.r_tra) << ','
     << nn::format_double(r.r_tra_std) << ',' << nn::format_double(r.r_each) << ','
     << nn::format_double(r.length) << ',' << nn::format_double(r.mcd) << ','
     << nn::format_double(r.reward_error);
  return os.str();
}

Trainer::Trainer(const Dataset& d, const WorldModel& wm, const EngineConfig& cfg)
    : cfg_(cfg),
      wm_(wm),
      data_hash_(dataset_hash(d)),
      item_category_(d.items.category),
      truth_(d.truth),
      user_rng_(make_stream(cfg.seed, "train/users")),
      rec_rng_(make_stream(cfg.seed, "train/recommend")),
      sel_rng_(make_stream(cfg.seed, "train/select")) {
  validate(cfg_);
  if (wm.data_hash() != data_hash_) throw Error("world model does not match the dataset (hash mismatch)");
  const int users = d.num_users();
  if (cfg_.pool_size == 0) cfg_.pool_size = std::min(users - 1, 100);
  if (cfg_.variant != Variant::RStatic && cfg_.pool_size < cfg_.k_sel) {
    throw Error("engine: candidate pool of " + std::to_string(cfg_.pool_size) +
                " users cannot supply k_sel = " + std::to_string(cfg_.k_sel));
  }
  prediction_ = wm_.predict();
  entropy_ = EntropyTable(behavior_stats(d, cfg_.entropy_order, cfg_.entropy_alpha));
  // Logged entries keep their observed feedback; the world model fills the rest.
  Eigen::MatrixXd initial = prediction_.mean;
  for (const auto& rec : d.train_log) initial(rec.user, rec.item) = rec.feedback;
  matrix_ = ShapedRewardMatrix(initial, d.r_min, d.r_max);
  rec_ = RecommenderAgent({.num_users = users,
                           .num_items = d.num_items(),
                           .state_width = cfg_.rec_width,
                           .user_width = cfg_.embed_width,
                           .item_width = cfg_.embed_width,
                           .hidden = cfg_.hidden,
                           .window = cfg_.w_rec,
                           .q_critic = cfg_.a2c.q_critic},
                          stream_seed(cfg_.seed, "init/recommender"));
  sel_ = SelectorAgent({.num_items = d.num_items(),
                        .rec_width = cfg_.rec_width,
                        .pref_width = cfg_.pref_width,
                        .pool_size = std::max(cfg_.pool_size, 1),
                        .hidden = cfg_.hidden,
                        .window = cfg_.w_sel,
                        .q_critic = cfg_.a2c.q_critic},
                       stream_seed(cfg_.seed, "init/selector"));
}

TrajectoryResult Trainer::rollout() {
  const int items = rec_.config().num_items;
  const bool shaping = cfg_.variant != Variant::RStatic;
  const bool static_pu = cfg_.variant == Variant::RStatic || cfg_.variant == Variant::PuStatic;
  const SelectionParams sel_params{cfg_.k_sel, selection_coeffs(cfg_), cfg_.a2c};

  TrajectoryResult traj;
  const int u = static_cast<int>(uniform_index(user_rng_, rec_.config().num_users));
  traj.user = u;
  RecState state = rec_.init_episode(u);
  HeadOutput head = rec_.heads(state.encoding);
  nn::ActionMask mask(items, 1);
  std::vector<int> cats;

  for (int t = 0;; ++t) {
    const nn::PolicySample pick =
        nn::softmax_policy(head.logits, mask, cfg_.a2c.temperature, rec_rng_);
    const int item = pick.action;
    Transition tr;
    tr.user = u;
    tr.item = item;
    tr.step = t;

    if (shaping) {
      SelectionEpisode ep = run_selection(u, item, state.encoding, matrix_, sel_, sel_params, sel_rng_);
      std::vector<double> refs;
      for (int v : ep.selected) refs.push_back(matrix_(v, item));
      tr.references = ep.selected;
      tr.gains = ep.gains;
      tr.shaped = reward::shape_reward(refs);
      matrix_.write(u, item, tr.shaped, cfg_.alpha_shape);
      for (const auto& g : ep.gains) {
        tr.mean_sim += g.sim;
        tr.mean_div += g.div;
      }
      tr.mean_sim /= static_cast<double>(ep.gains.size());
      tr.mean_div /= static_cast<double>(ep.gains.size());
      tr.previous = matrix_.previous()(u, item);
      traj.selections.push_back(std::move(ep));
    }
    tr.r_hat = matrix_(u, item);
    tr.uncertainty = static_pu ? prediction_.static_uncertainty(u, item)
                               : reward::dynamic_uncertainty(tr.r_hat, tr.previous, tr.mean_sim,
                                                             tr.mean_div, cfg_.uncertainty_eps);
    tr.entropy = entropy_.penalty(cats, item);
    tr.reward = reward::recommender_reward(tr.r_hat, tr.uncertainty, tr.entropy, cfg_.coeffs);

    tr.reason = termination(cats, item_category_[item], t + 1, cfg_.repeat_window, cfg_.max_length);
    cats.push_back(item_category_[item]);
    StepRecord step;
    step.mask = mask;
    step.action = item;
    step.logprob = pick.logprob;
    step.reward = tr.reward;
    record_critic(step, head, cfg_.a2c);
    mask[item] = 0;
    if (tr.reason == DoneReason::None && std::find(mask.begin(), mask.end(), 1) == mask.end()) {
      tr.reason = DoneReason::MaxLength;
    }
    tr.done = tr.reason != DoneReason::None;
    step.done = tr.done;
    traj.rec_inputs.push_back(state.input);

    ++steps_;
    visited_.emplace_back(u, item);
    if (observer_) observer_(tr, matrix_);
    traj.transitions.push_back(tr);
    if (tr.done) {
      traj.rec_steps.push_back(std::move(step));
      break;
    }
    state = rec_.track(state, item, tr.r_hat);
    head = rec_.heads(state.encoding);
    step.bootstrap = bootstrap_value(head, mask, cfg_.a2c);
    traj.rec_steps.push_back(std::move(step));
  }
  return traj;
}

void Trainer::update(TrajectoryResult& traj) {
  compute_advantages(traj.rec_steps, cfg_.a2c.gamma);
  const A2CLosses rec_loss = a2c_losses<RecommenderAgent, RecInput>(
      rec_, traj.rec_inputs, traj.rec_steps, cfg_.a2c, true);
  check_finite(rec_loss, "recommender", epoch_);
  nn::adam_step(rec_.params(), cfg_.adam);

  if (traj.selections.empty()) return;
  std::vector<SelInput> inputs;
  std::vector<StepRecord> steps;
  for (SelectionEpisode& ep : traj.selections) {
    compute_advantages(ep.steps, cfg_.a2c.gamma);
    inputs.insert(inputs.end(), ep.inputs.begin(), ep.inputs.end());
    steps.insert(steps.end(), ep.steps.begin(), ep.steps.end());
  }
  const A2CLosses sel_loss =
      a2c_losses<SelectorAgent, SelInput>(sel_, inputs, steps, cfg_.a2c, true);
  check_finite(sel_loss, "selector", epoch_);
  nn::adam_step(sel_.params(), cfg_.adam);
}

bool Trainer::finished() const {
  return epoch_ >= cfg_.epochs || (cfg_.max_steps > 0 && steps_ >= cfg_.max_steps);
}

double Trainer::reward_error() const {
  if (!truth_ || visited_.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::set<std::pair<int, int>> pairs(visited_.begin(), visited_.end());
  std::vector<double> err;
  err.reserve(pairs.size());
  for (const auto& [u, i] : pairs) err.push_back(std::abs(matrix_(u, i) - (*truth_)(u, i)));
  return kernels::pairwise_sum(err) / static_cast<double>(err.size());
}

std::optional<MetricsRow> Trainer::train_epoch() {
  if (finished()) return std::nullopt;
  visited_.clear();
  for (int n = 0; n < cfg_.trajectories; ++n) {
    if (cfg_.max_steps > 0 && steps_ >= cfg_.max_steps) break;
    TrajectoryResult traj = rollout();
    update(traj);
  }
  ++epoch_;
  if (epoch_ % cfg_.eval_every != 0 && !finished()) return std::nullopt;
  MetricsRow row;
  row.epoch = epoch_;
  row.steps = steps_;
  row.report = evaluate(cfg_.eval_episodes, stream_seed(cfg_.seed, "eval"));
  row.report.reward_error = reward_error();
  history_.push_back(row);
  return row;
}

void Trainer::train(std::ostream* csv) {
  if (csv && history_.empty()) *csv << metrics_header() << '\n';
  while (!finished()) {
    const auto row = train_epoch();
    if (row && csv) *csv << format_metrics_row(*row) << '\n';
  }
}

EvalReport Trainer::evaluate(int episodes, std::uint64_t seed) const {
  if (!truth_) throw Error("evaluation needs the ground-truth matrix");
  return darlr::evaluate(rec_, item_category_, *truth_, cfg_, episodes, seed);
}

void Trainer::save_bundle(const fs::path& dir) const {
  fs::create_directories(dir);
  nlohmann::json manifest = {
      {"format", kBundleVersion},
      {"config", to_json(cfg_)},
      {"dataset_hash", data_hash_},
      {"epoch", epoch_},
      {"steps", steps_},
  };
  manifest["config_hash"] = fnv1a(manifest["config"].dump());
  open_out(dir / "config.json") << manifest.dump(2) << '\n';
  save_world_model(wm_, dir / "world_model.txt");
  {
    std::ofstream os = open_out(dir / "recommender.txt");
    write_agent(os, const_cast<RecommenderAgent&>(rec_).params());
  }
  {
    std::ofstream os = open_out(dir / "selector.txt");
    write_agent(os, const_cast<SelectorAgent&>(sel_).params());
  }
  {
    std::ofstream os = open_out(dir / "matrix.txt");
    matrix_.save(os);
  }
  open_out(dir / "rng.txt") << user_rng_ << '\n' << rec_rng_ << '\n' << sel_rng_ << '\n';
  std::ofstream csv = open_out(dir / "metrics.csv");
  csv << metrics_header() << '\n';
  for (const auto& row : history_) csv << format_metrics_row(row) << '\n';
}

Trainer Trainer::load_bundle(const fs::path& dir, const Dataset& d) {
  nlohmann::json manifest;
  try {
    std::ifstream is = open_in(dir / "config.json");
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error("bundle config unreadable: " + std::string(e.what()));
  }
  if (manifest.value("format", 0) != kBundleVersion) throw Error("bundle: unknown format");
  if (manifest.at("dataset_hash").get<std::uint64_t>() != dataset_hash(d)) {
    throw Error("bundle was trained on a different dataset (hash mismatch)");
  }
  if (manifest.at("config_hash").get<std::uint64_t>() != fnv1a(manifest.at("config").dump())) {
    throw Error("bundle: config hash mismatch");
  }
  const EngineConfig cfg = engine_config_from_json(manifest.at("config"));
  const WorldModel wm = load_world_model(dir / "world_model.txt", d);
  Trainer t(d, wm, cfg);
  {
    std::ifstream is = open_in(dir / "recommender.txt");
    read_agent(is, t.rec_.params());
  }
  {
    std::ifstream is = open_in(dir / "selector.txt");
    read_agent(is, t.sel_.params());
  }
  {
    std::ifstream is = open_in(dir / "matrix.txt");
    t.matrix_ = ShapedRewardMatrix::load(is);
  }
  {
    std::ifstream is = open_in(dir / "rng.txt");
    if (!(is >> t.user_rng_ >> t.rec_rng_ >> t.sel_rng_)) throw Error("bundle: malformed rng.txt");
  }
  t.epoch_ = manifest.at("epoch").get<int>();
  t.steps_ = manifest.at("steps").get<std::int64_t>();
  std::ifstream csv = open_in(dir / "metrics.csv");
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) throw Error("bundle: malformed metrics row");
    MetricsRow row;
    row.epoch = std::stoi(f[0]);
    row.steps = std::stoll(f[1]);
    row.report.r_tra = nn::parse_double(f[2]);
    row.report.r_tra_std = nn::parse_double(f[3]);
    row.report.r_each = nn::parse_double(f[4]);
    row.report.length = nn::parse_double(f[5]);
    row.report.mcd = nn::parse_double(f[6]);
    row.report.reward_error = nn::parse_double(f[7]);
    t.history_.push_back(row);
  }
  return t;
}

}  // namespace darlr
