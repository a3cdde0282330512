#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "darlr/dataset.hpp"
#include "darlr/nn/adam.hpp"
#include "darlr/nn/layers.hpp"

namespace darlr {

struct WorldModelConfig {
  int members = 2;
  int embed_dim = 8;
  int hidden = 32;
  int epochs = 200;
  int batch = 32;
  nn::AdamConfig adam{.lr = 5e-3};
  double logvar_min = -9.0;
  double logvar_max = 3.0;
  std::uint64_t seed = 1;
};

void validate(const WorldModelConfig& cfg);

struct GaussianOutput {
  nn::Vec mean;    // unclipped
  nn::Vec logvar;  // in (logvar_min, logvar_max)
};

// One ensemble member: per-field embedding tables, a factorization-machine
// pairwise term and an MLP over the concatenated embeddings. The MLP's two
// outputs are a mean offset and a squashed log-variance.
class GaussianPredictor {
 public:
  struct Tape {
    std::vector<int> users, items;
    std::vector<nn::Mat> fields;  // d_E x B per field
    nn::Mat sum;
    nn::Mlp::Tape mlp;
    nn::Mat out;
  };

  GaussianPredictor() = default;
  GaussianPredictor(const Dataset& d, const WorldModelConfig& cfg, const std::string& name,
                    std::uint64_t seed);

  GaussianOutput forward(std::span<const int> users, std::span<const int> items, Tape* tape) const;
  // d_mean, d_logvar: one entry per record of the tape.
  void backward(const Tape& tape, const nn::Vec& d_mean, const nn::Vec& d_logvar);
  void collect(nn::ParamRefs& out);

  // Mean Gaussian NLL over the records; accumulates gradients when asked.
  double nll(std::span<const InteractionRecord> records, bool accumulate);

  int num_fields() const { return static_cast<int>(tables_.size()); }

 private:
  int field_id(int field, int user, int item) const;

  int user_fields_ = 0;
  std::vector<std::vector<int>> user_features_;
  std::vector<int> item_category_;
  std::vector<std::vector<int>> item_features_;
  double logvar_min_ = -9.0;
  double logvar_max_ = 3.0;
  std::vector<nn::ParamBlock> tables_;  // d_E x vocabulary
  nn::ParamBlock global_;               // 1 x 1
  nn::Mlp mlp_;
};

struct PredictionMatrix {
  Eigen::MatrixXd mean;                // ensemble mean of clipped member means
  Eigen::MatrixXd static_uncertainty;  // max member variance
};

// Ensemble combination for one (u, i): mean of the member means and max of
// the member variances.
void combine_members(std::span<const double> means, std::span<const double> variances,
                     double& mean, double& uncertainty);

class WorldModel {
 public:
  WorldModel() = default;
  WorldModel(const Dataset& d, const WorldModelConfig& cfg);

  const WorldModelConfig& config() const { return cfg_; }
  std::uint64_t data_hash() const { return data_hash_; }
  int num_users() const { return users_; }
  int num_items() const { return items_; }
  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }

  std::vector<GaussianPredictor>& members() { return members_; }
  const std::vector<GaussianPredictor>& members() const { return members_; }

  // loss_log()[k][e] = full-log NLL of member k after epoch e.
  std::vector<std::vector<double>>& loss_log() { return loss_log_; }
  const std::vector<std::vector<double>>& loss_log() const { return loss_log_; }

  // Full |U| x |I| prediction, OpenMP over users.
  PredictionMatrix predict() const;
  // Serial reference: every entry through its own single-record forwards.
  PredictionMatrix predict_reference() const;

  nn::ParamRefs params();

 private:
  WorldModelConfig cfg_;
  std::uint64_t data_hash_ = 0;
  int users_ = 0;
  int items_ = 0;
  double r_min_ = 0.0;
  double r_max_ = 1.0;
  std::vector<GaussianPredictor> members_;
  std::vector<std::vector<double>> loss_log_;
};

// Trains every member on the full log with its own initialization and
// shuffling streams. Throws with the epoch index if a loss turns non-finite.
WorldModel train_world_model(const Dataset& d, const WorldModelConfig& cfg);

// First line: JSON manifest (configuration and dataset hash); then the
// parameter fragment.
void save_world_model(const WorldModel& wm, const std::filesystem::path& file);
WorldModel load_world_model(const std::filesystem::path& file, const Dataset& d);

// Per-action entropy penalty derived from the behavior policy:
// -log(|I| * p_beta(item | recent categories)). Its expectation under p_beta
// is -KL(p_beta || uniform).
class EntropyTable {
 public:
  EntropyTable() = default;
  explicit EntropyTable(BehaviorStats stats) : stats_(std::move(stats)) {}

  double penalty(std::span<const int> recent_categories, int item) const;
  // -KL(p_beta(. | recent) || uniform) <= 0
  double state_penalty(std::span<const int> recent_categories) const;
  const BehaviorStats& stats() const { return stats_; }

 private:
  BehaviorStats stats_;
};

}  // namespace darlr
