#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "darlr/a2c.hpp"
#include "darlr/dataset.hpp"
#include "darlr/nn/adam.hpp"
#include "darlr/recommender.hpp"
#include "darlr/reward_math.hpp"
#include "darlr/selector.hpp"
#include "darlr/shaped_matrix.hpp"
#include "darlr/world_model.hpp"

namespace darlr {

enum class Variant { Full, RStatic, PuStatic, Rhat, RhatRs, RhatRd };

// Names in ablation-table order.
const std::vector<std::string>& variant_names();
std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

struct EngineConfig {
  Variant variant = Variant::Full;
  reward::PenaltyCoeffs coeffs;
  A2CConfig a2c;
  nn::AdamConfig adam;
  int k_sel = 10;
  int pool_size = 0;  // 0 = min(|U| - 1, 100)
  int w_sel = 5;
  int w_rec = 5;
  double alpha_shape = 1.0;
  int rec_width = 32;
  int pref_width = 32;
  int embed_width = 16;
  int hidden = 64;
  int epochs = 20;
  int trajectories = 50;
  int eval_episodes = 100;
  int eval_every = 1;
  std::int64_t max_steps = 0;  // environment step budget, 0 = unlimited
  bool greedy_eval = false;
  int entropy_order = 2;
  double entropy_alpha = 1.0;
  double uncertainty_eps = 1e-6;
  int max_length = 30;
  int repeat_window = 4;
  std::uint64_t seed = 1;
};

void validate(const EngineConfig& cfg);

// Coefficients the selector's intrinsic reward uses under a variant.
reward::PenaltyCoeffs selection_coeffs(const EngineConfig& cfg);

enum class DoneReason { None, CategoryRepeat, MaxLength };
std::string_view done_reason_name(DoneReason r);

// category_repeat when `category` occurs among the last `window` entries of
// `prior_categories`; otherwise max_length once `length` (counting the new
// item) reaches `max_length`.
DoneReason termination(std::span<const int> prior_categories, int category, int length,
                       int window = 4, int max_length = 30);

struct Transition {
  int user = 0;
  int item = 0;
  int step = 0;          // 0-based position within the episode
  double reward = 0.0;   // training: composite; evaluation: ground truth
  double r_hat = 0.0;    // estimate after shaping
  double uncertainty = 0.0;
  double entropy = 0.0;
  bool done = false;
  DoneReason reason = DoneReason::None;
  // Shaping bookkeeping, filled when the variant shapes rewards.
  std::vector<int> references;
  std::vector<reward::GainPair> gains;
  double shaped = 0.0;   // mean reference estimate that was written
  double previous = 0.0; // estimate before the write
  double mean_sim = 0.0;
  double mean_div = 0.0;
};

struct TrajectoryResult {
  int user = 0;
  std::vector<Transition> transitions;
  std::vector<RecInput> rec_inputs;
  std::vector<StepRecord> rec_steps;
  std::vector<SelectionEpisode> selections;
};

struct EvalReport {
  int episodes = 0;
  double r_tra = 0.0;
  double r_tra_std = 0.0;
  double r_each = 0.0;
  double r_each_std = 0.0;
  double length = 0.0;
  double length_std = 0.0;
  double mcd = 0.0;
  double mcd_std = 0.0;
  double reward_error = 0.0;  // NaN when not measured
};

struct EpisodeOutcome {
  double r_tra = 0.0;
  int length = 0;
  double mcd = 0.0;
  std::vector<int> items;
};

// Majority-category share: count of the most frequent category / length.
double majority_category_share(std::span<const int> categories);

// Runs one evaluation episode on the ground-truth environment.
EpisodeOutcome evaluate_episode(const RecommenderAgent& agent, int user,
                                const std::vector<int>& item_category,
                                const Eigen::MatrixXd& truth, const EngineConfig& cfg, Rng& rng);

// Episodes over users drawn uniformly; episode k uses its own stream derived
// from (seed, k), so the report does not depend on the worker count.
EvalReport evaluate(const RecommenderAgent& agent, const std::vector<int>& item_category,
                    const Eigen::MatrixXd& truth, const EngineConfig& cfg, int episodes,
                    std::uint64_t seed);

struct MetricsRow {
  int epoch = 0;
  std::int64_t steps = 0;
  EvalReport report;
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

class Trainer {
 public:
  using StepObserver = std::function<void(const Transition&, const ShapedRewardMatrix&)>;

  Trainer(const Dataset& d, const WorldModel& wm, const EngineConfig& cfg);

  const EngineConfig& config() const { return cfg_; }
  const ShapedRewardMatrix& matrix() const { return matrix_; }
  const PredictionMatrix& prediction() const { return prediction_; }
  const EntropyTable& entropy() const { return entropy_; }
  RecommenderAgent& recommender() { return rec_; }
  const RecommenderAgent& recommender() const { return rec_; }
  SelectorAgent& selector() { return sel_; }
  int epoch() const { return epoch_; }
  std::int64_t steps() const { return steps_; }
  const std::vector<MetricsRow>& history() const { return history_; }

  void set_step_observer(StepObserver obs) { observer_ = std::move(obs); }

  // One training trajectory with the current (frozen) agents.
  TrajectoryResult rollout();
  // Advantages, losses and one Adam step per agent.
  void update(TrajectoryResult& traj);

  // Runs one epoch of trajectories followed by evaluation when due (every
  // eval_every epochs and always at the last one). Stops early once the
  // step budget is spent.
  std::optional<MetricsRow> train_epoch();
  bool finished() const;
  // Remaining epochs; each row is also written to `csv` when given.
  void train(std::ostream* csv);

  EvalReport evaluate(int episodes, std::uint64_t seed) const;

  // Directory bundle holding everything needed to resume or evaluate.
  void save_bundle(const std::filesystem::path& dir) const;
  static Trainer load_bundle(const std::filesystem::path& dir, const Dataset& d);

 private:
  double reward_error() const;

  EngineConfig cfg_;
  WorldModel wm_;
  std::uint64_t data_hash_ = 0;
  std::vector<int> item_category_;
  std::optional<Eigen::MatrixXd> truth_;
  PredictionMatrix prediction_;
  EntropyTable entropy_;
  ShapedRewardMatrix matrix_;
  RecommenderAgent rec_;
  SelectorAgent sel_;
  Rng user_rng_, rec_rng_, sel_rng_;
  int epoch_ = 0;
  std::int64_t steps_ = 0;
  std::vector<MetricsRow> history_;
  std::vector<std::pair<int, int>> visited_;
  StepObserver observer_;
};

}  // namespace darlr
