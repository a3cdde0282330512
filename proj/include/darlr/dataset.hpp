#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace darlr {

struct InteractionRecord {
  int user = 0;
  int item = 0;
  double feedback = 0.0;
  int step = 0;  // position within the user's log

  bool operator==(const InteractionRecord&) const = default;
};

struct ItemCatalog {
  int count = 0;
  int num_categories = 0;
  std::vector<int> category;                // primary category per item, dense in [0, C)
  std::vector<std::vector<int>> features;   // per item, one dense id per field
  std::vector<int> feature_cardinality;     // per field

  bool operator==(const ItemCatalog&) const = default;
};

struct UserCatalog {
  int count = 0;
  std::vector<std::vector<int>> features;
  std::vector<int> feature_cardinality;

  bool operator==(const UserCatalog&) const = default;
};

struct Dataset {
  std::string name;
  std::uint64_t seed = 0;
  double r_min = 0.0;
  double r_max = 1.0;
  std::vector<InteractionRecord> train_log;
  UserCatalog users;
  ItemCatalog items;
  std::optional<Eigen::MatrixXd> truth;  // users x items, evaluation only

  int num_users() const { return users.count; }
  int num_items() const { return items.count; }
  // Items of each user's log ordered by step.
  std::vector<std::vector<int>> user_sequences() const;
};

bool operator==(const Dataset& a, const Dataset& b);

// Validates ranges, duplicates and catalog shapes; throws darlr::Error.
void validate(const Dataset& d);

// Directory layout: interactions.csv, users.csv, items.csv, optional
// truth.csv, manifest.json. Category and feature values are re-indexed
// densely per field in ascending order of their raw values.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& d, const std::filesystem::path& dir);

// Content hash over every field, used to pair checkpoints with data.
std::uint64_t dataset_hash(const Dataset& d);

struct SyntheticSpec {
  int users = 50;
  int items = 40;
  int categories = 5;
  int latent_dim = 4;
  double noise_sd = 0.05;
  double log_density = 0.05;
  double popularity_skew = 1.0;
  std::uint64_t seed = 1;
};

void validate(const SyntheticSpec& spec);

// truth[u,i] = clip(sigmoid(x_u . y_i) + eps, 0, 1). Item factors cluster by
// category and user factors by taste group, so neighbouring users share
// preferences. The log holds round(density * U * I) distinct pairs drawn
// without replacement with item weights (rank + 1)^-skew, each observing the
// truth entry.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Empirical next-item counts of the behavior policy keyed by the primary
// categories of the preceding j items, for every j in [0, order].
class BehaviorStats {
 public:
  BehaviorStats() = default;
  BehaviorStats(int order, double alpha, int num_items);

  int order() const { return order_; }
  double alpha() const { return alpha_; }
  int num_items() const { return num_items_; }

  void add(std::span<const int> preceding_categories, int item);

  // Longest level j <= min(order, recent.size()) whose pattern (the last j
  // categories) was observed; 0 is the unconditional level.
  int resolve_level(std::span<const int> recent_categories) const;
  const std::vector<double>& counts(std::span<const int> recent_categories) const;

  // Laplace-smoothed (count + alpha) / (total + alpha * |I|) after backoff.
  double probability(std::span<const int> recent_categories, int item) const;
  Eigen::VectorXd distribution(std::span<const int> recent_categories) const;

  using PatternTable = std::map<std::vector<int>, std::vector<double>>;
  const std::vector<PatternTable>& levels() const { return levels_; }

 private:
  int order_ = 0;
  double alpha_ = 1.0;
  int num_items_ = 0;
  std::vector<PatternTable> levels_;
};

BehaviorStats behavior_stats(const Dataset& d, int order, double alpha);

}  // namespace darlr
