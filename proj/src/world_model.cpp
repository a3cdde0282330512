#include "darlr/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "darlr/error.hpp"
#include "darlr/kernels.hpp"
#include "darlr/nn/checkpoint.hpp"
#include "darlr/rng.hpp"

namespace darlr {

using nn::Index;
using nn::Mat;
using nn::Vec;

namespace {

constexpr int kFormatVersion = 1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string member_name(int k) { return "wm/member" + std::to_string(k); }

}  // namespace

void validate(const WorldModelConfig& cfg) {
  if (cfg.members < 1) throw Error("world model: members must be >= 1");
  if (cfg.embed_dim < 1 || cfg.hidden < 1) throw Error("world model: widths must be >= 1");
  if (cfg.epochs < 0 || cfg.batch < 1) throw Error("world model: bad epochs/batch");
  if (!(cfg.logvar_min < cfg.logvar_max)) throw Error("world model: logvar_min >= logvar_max");
  if (!(cfg.adam.lr > 0.0)) throw Error("world model: learning rate must be positive");
}

GaussianPredictor::GaussianPredictor(const Dataset& d, const WorldModelConfig& cfg,
                                     const std::string& name, std::uint64_t seed)
    : user_fields_(static_cast<int>(d.users.feature_cardinality.size())),
      user_features_(d.users.features),
      item_category_(d.items.category),
      item_features_(d.items.features),
      logvar_min_(cfg.logvar_min),
      logvar_max_(cfg.logvar_max),
      global_(name + ".global", 1, 1) {
  std::vector<std::pair<std::string, int>> vocab;
  vocab.emplace_back("user_id", d.num_users());
  for (std::size_t f = 0; f < d.users.feature_cardinality.size(); ++f) {
    vocab.emplace_back("user_feat" + std::to_string(f), d.users.feature_cardinality[f]);
  }
  vocab.emplace_back("item_id", d.num_items());
  vocab.emplace_back("item_category", d.items.num_categories);
  for (std::size_t f = 0; f < d.items.feature_cardinality.size(); ++f) {
    vocab.emplace_back("item_feat" + std::to_string(f), d.items.feature_cardinality[f]);
  }
  for (const auto& [field, size] : vocab) {
    tables_.emplace_back(name + ".embed." + field, cfg.embed_dim, std::max(size, 1));
    nn::uniform_init(tables_.back(), seed, 0.1);
  }
  const Index width = static_cast<Index>(tables_.size()) * cfg.embed_dim;
  mlp_ = nn::Mlp(name + ".mlp", {width, cfg.hidden, 2}, seed);

  if (!d.train_log.empty()) {
    double total = 0.0;
    for (const auto& rec : d.train_log) total += rec.feedback;
    global_.value(0, 0) = total / static_cast<double>(d.train_log.size());
  }
}

int GaussianPredictor::field_id(int field, int user, int item) const {
  if (field == 0) return user;
  if (field <= user_fields_) return user_features_[user][field - 1];
  const int f = field - user_fields_ - 1;
  if (f == 0) return item;
  if (f == 1) return item_category_[item];
  return item_features_[item][f - 2];
}

GaussianOutput GaussianPredictor::forward(std::span<const int> users, std::span<const int> items,
                                          Tape* tape) const {
  const Index batch = static_cast<Index>(users.size());
  const Index dim = tables_.front().rows();
  const int nf = num_fields();
  std::vector<Mat> fields(nf, Mat(dim, batch));
  Mat sum = Mat::Zero(dim, batch);
  Mat x(dim * nf, batch);
  Vec self_sq = Vec::Zero(batch);
  for (int f = 0; f < nf; ++f) {
    for (Index b = 0; b < batch; ++b) {
      fields[f].col(b) = tables_[f].value.col(field_id(f, users[b], items[b]));
    }
    sum += fields[f];
    self_sq += fields[f].colwise().squaredNorm().transpose();
    x.middleRows(f * dim, dim) = fields[f];
  }
  nn::Mlp::Tape mlp_tape;
  Mat out = mlp_.forward(x, tape ? &mlp_tape : nullptr);

  GaussianOutput res{Vec(batch), Vec(batch)};
  const double span = logvar_max_ - logvar_min_;
  for (Index b = 0; b < batch; ++b) {
    const double fm = 0.5 * (sum.col(b).squaredNorm() - self_sq(b));
    res.mean(b) = global_.value(0, 0) + fm + out(0, b);
    res.logvar(b) = logvar_min_ + span * sigmoid(out(1, b));
  }
  if (tape) {
    tape->users.assign(users.begin(), users.end());
    tape->items.assign(items.begin(), items.end());
    tape->fields = std::move(fields);
    tape->sum = std::move(sum);
    tape->mlp = std::move(mlp_tape);
    tape->out = std::move(out);
  }
  return res;
}

void GaussianPredictor::backward(const Tape& tape, const Vec& d_mean, const Vec& d_logvar) {
  const Index batch = static_cast<Index>(tape.users.size());
  const Index dim = tables_.front().rows();
  const double span = logvar_max_ - logvar_min_;
  Mat d_out(2, batch);
  for (Index b = 0; b < batch; ++b) {
    const double s = sigmoid(tape.out(1, b));
    d_out(0, b) = d_mean(b);
    d_out(1, b) = d_logvar(b) * span * s * (1.0 - s);
  }
  global_.grad(0, 0) += d_mean.sum();
  const Mat dx = mlp_.backward(tape.mlp, d_out);
  for (int f = 0; f < num_fields(); ++f) {
    for (Index b = 0; b < batch; ++b) {
      const int id = field_id(f, tape.users[b], tape.items[b]);
      tables_[f].grad.col(id) += dx.block(f * dim, b, dim, 1) +
                                 d_mean(b) * (tape.sum.col(b) - tape.fields[f].col(b));
    }
  }
}

void GaussianPredictor::collect(nn::ParamRefs& out) {
  for (auto& t : tables_) out.push_back(&t);
  out.push_back(&global_);
  mlp_.collect(out);
}

double GaussianPredictor::nll(std::span<const InteractionRecord> records, bool accumulate) {
  const Index n = static_cast<Index>(records.size());
  std::vector<int> users(records.size()), items(records.size());
  for (std::size_t k = 0; k < records.size(); ++k) {
    users[k] = records[k].user;
    items[k] = records[k].item;
  }
  Tape tape;
  const GaussianOutput out = forward(users, items, accumulate ? &tape : nullptr);
  double total = 0.0;
  Vec d_mean(n), d_logvar(n);
  for (Index b = 0; b < n; ++b) {
    const double resid = records[b].feedback - out.mean(b);
    const double precision = std::exp(-out.logvar(b));
    total += 0.5 * (out.logvar(b) + resid * resid * precision);
    d_mean(b) = -resid * precision / static_cast<double>(n);
    d_logvar(b) = 0.5 * (1.0 - resid * resid * precision) / static_cast<double>(n);
  }
  if (accumulate) backward(tape, d_mean, d_logvar);
  return total / static_cast<double>(n);
}

void combine_members(std::span<const double> means, std::span<const double> variances,
                     double& mean, double& uncertainty) {
  if (means.empty() || means.size() != variances.size()) {
    throw Error("combine_members: need matching, non-empty member outputs");
  }
  mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
  uncertainty = *std::max_element(variances.begin(), variances.end());
}

WorldModel::WorldModel(const Dataset& d, const WorldModelConfig& cfg)
    : cfg_(cfg),
      data_hash_(dataset_hash(d)),
      users_(d.num_users()),
      items_(d.num_items()),
      r_min_(d.r_min),
      r_max_(d.r_max) {
  validate(cfg);
  for (int k = 0; k < cfg.members; ++k) {
    members_.emplace_back(d, cfg, member_name(k), stream_seed(cfg.seed, member_name(k)));
  }
  loss_log_.resize(cfg.members);
}

nn::ParamRefs WorldModel::params() {
  nn::ParamRefs refs;
  for (auto& m : members_) m.collect(refs);
  return refs;
}

PredictionMatrix WorldModel::predict() const {
  PredictionMatrix pm{Eigen::MatrixXd(users_, items_), Eigen::MatrixXd(users_, items_)};
  const int k_members = static_cast<int>(members_.size());
  std::vector<int> items(items_);
  std::iota(items.begin(), items.end(), 0);
#pragma omp parallel for schedule(static) num_threads(kernels::worker_count())
  for (int u = 0; u < users_; ++u) {
    const std::vector<int> users(items_, u);
    std::vector<GaussianOutput> outs;
    outs.reserve(k_members);
    for (const auto& m : members_) outs.push_back(m.forward(users, items, nullptr));
    std::vector<double> means(k_members), vars(k_members);
    for (int i = 0; i < items_; ++i) {
      for (int k = 0; k < k_members; ++k) {
        means[k] = std::clamp(outs[k].mean(i), r_min_, r_max_);
        vars[k] = std::exp(outs[k].logvar(i));
      }
      combine_members(means, vars, pm.mean(u, i), pm.static_uncertainty(u, i));
    }
  }
  return pm;
}

PredictionMatrix WorldModel::predict_reference() const {
  PredictionMatrix pm{Eigen::MatrixXd(users_, items_), Eigen::MatrixXd(users_, items_)};
  for (int u = 0; u < users_; ++u) {
    for (int i = 0; i < items_; ++i) {
      double mean = 0.0;
      double var = 0.0;
      for (const auto& m : members_) {
        const int uu[1] = {u};
        const int ii[1] = {i};
        const GaussianOutput out = m.forward(uu, ii, nullptr);
        mean += std::clamp(out.mean(0), r_min_, r_max_);
        var = std::max(var, std::exp(out.logvar(0)));
      }
      pm.mean(u, i) = mean / static_cast<double>(members_.size());
      pm.static_uncertainty(u, i) = var;
    }
  }
  return pm;
}

WorldModel train_world_model(const Dataset& d, const WorldModelConfig& cfg) {
  if (d.train_log.empty()) throw Error("world model: empty training log");
  WorldModel wm(d, cfg);
  const std::vector<InteractionRecord>& log = d.train_log;
  for (int k = 0; k < cfg.members; ++k) {
    GaussianPredictor& member = wm.members()[k];
    nn::ParamRefs refs;
    member.collect(refs);
    Rng shuffle = make_stream(cfg.seed, member_name(k) + "/shuffle");
    std::vector<InteractionRecord> order = log;
    std::vector<double>& losses = wm.loss_log()[k];
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t n = order.size(); n > 1; --n) {
        std::swap(order[n - 1], order[uniform_index(shuffle, n)]);
      }
      for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
        const std::size_t len = std::min<std::size_t>(cfg.batch, order.size() - start);
        const double loss = member.nll(std::span(order).subspan(start, len), true);
        if (!std::isfinite(loss)) {
          throw Error("world model diverged at epoch " + std::to_string(epoch) + " (member " +
                      std::to_string(k) + ")");
        }
        nn::adam_step(refs, cfg.adam);
      }
      const double full = member.nll(log, false);
      if (!std::isfinite(full)) {
        throw Error("world model diverged at epoch " + std::to_string(epoch) + " (member " +
                    std::to_string(k) + ")");
      }
      losses.push_back(full);
    }
  }
  return wm;
}

void save_world_model(const WorldModel& wm, const std::filesystem::path& file) {
  const WorldModelConfig& c = wm.config();
  nlohmann::json manifest = {
      {"format", kFormatVersion},
      {"members", c.members},
      {"embed_dim", c.embed_dim},
      {"hidden", c.hidden},
      {"epochs", c.epochs},
      {"batch", c.batch},
      {"lr", c.adam.lr},
      {"logvar_min", c.logvar_min},
      {"logvar_max", c.logvar_max},
      {"seed", c.seed},
      {"dataset_hash", wm.data_hash()},
  };
  std::ofstream os(file);
  if (!os) throw Error("cannot write " + file.string());
  os << manifest.dump() << '\n';
  nn::ParamRefs refs = const_cast<WorldModel&>(wm).params();
  nn::write_fragment(os, nn::const_refs(refs));
  if (!os) throw Error("write failed: " + file.string());
}

WorldModel load_world_model(const std::filesystem::path& file, const Dataset& d) {
  std::ifstream is(file);
  if (!is) throw Error("cannot open world model " + file.string());
  std::string line;
  std::getline(is, line);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error("world model manifest unreadable: " + std::string(e.what()));
  }
  if (manifest.value("format", 0) != kFormatVersion) throw Error("world model: unknown format");
  if (manifest.at("dataset_hash").get<std::uint64_t>() != dataset_hash(d)) {
    throw Error("world model was trained on a different dataset (hash mismatch)");
  }
  WorldModelConfig cfg;
  cfg.members = manifest.at("members").get<int>();
  cfg.embed_dim = manifest.at("embed_dim").get<int>();
  cfg.hidden = manifest.at("hidden").get<int>();
  cfg.epochs = manifest.at("epochs").get<int>();
  cfg.batch = manifest.at("batch").get<int>();
  cfg.adam.lr = manifest.at("lr").get<double>();
  cfg.logvar_min = manifest.at("logvar_min").get<double>();
  cfg.logvar_max = manifest.at("logvar_max").get<double>();
  cfg.seed = manifest.at("seed").get<std::uint64_t>();
  WorldModel wm(d, cfg);
  nn::read_fragment(is, wm.params());
  return wm;
}

double EntropyTable::penalty(std::span<const int> recent_categories, int item) const {
  const double p = stats_.probability(recent_categories, item);
  return -std::log(static_cast<double>(stats_.num_items()) * p);
}

double EntropyTable::state_penalty(std::span<const int> recent_categories) const {
  const Vec p = stats_.distribution(recent_categories);
  const double n = static_cast<double>(stats_.num_items());
  double kl = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) kl += p(i) * std::log(p(i) * n);
  }
  return -std::max(kl, 0.0);
}

}  // namespace darlr
