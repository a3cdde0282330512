#include "darlr/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "darlr/error.hpp"
#include "darlr/nn/checkpoint.hpp"
#include "darlr/rng.hpp"

namespace darlr {

namespace fs = std::filesystem;
using nn::format_double;

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing file " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error("missing header row in " + path.string());
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw Error("malformed row in " + path.filename().string() + ": expected " +
                  std::to_string(t.header.size()) + " fields");
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

long long parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("malformed integer '" + s + "' in " + what);
  }
}

double parse_real(const std::string& s, const std::string& what) {
  try {
    return nn::parse_double(s);
  } catch (const Error&) {
    throw Error("malformed number '" + s + "' in " + what);
  }
}

void expect_columns(const CsvTable& t, const std::vector<std::string>& leading, const std::string& file) {
  if (t.header.size() < leading.size() ||
      !std::equal(leading.begin(), leading.end(), t.header.begin())) {
    std::string want;
    for (const auto& c : leading) want += (want.empty() ? "" : ",") + c;
    throw Error("bad header in " + file + ": expected leading columns " + want);
  }
}

// Maps raw categorical values of one column to dense ids in ascending order.
std::vector<int> densify(const std::vector<long long>& raw, int& cardinality) {
  std::vector<long long> uniq(raw);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  cardinality = static_cast<int>(uniq.size());
  std::vector<int> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    out[k] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), raw[k]) - uniq.begin());
  }
  return out;
}

// Reads an id-keyed catalog: returns per-id rows of the remaining columns.
std::vector<std::vector<long long>> read_catalog(const CsvTable& t, const std::string& file,
                                                 const std::string& id_col) {
  const std::size_t n = t.rows.size();
  std::vector<std::vector<long long>> rows(n);
  std::vector<bool> seen(n, false);
  for (const auto& row : t.rows) {
    const long long id = parse_int(row[0], file);
    if (id < 0 || id >= static_cast<long long>(n)) {
      throw Error("id out of range in " + file + ": " + id_col + "=" + std::to_string(id));
    }
    if (seen[id]) throw Error("duplicate " + id_col + " " + std::to_string(id) + " in " + file);
    seen[id] = true;
    for (std::size_t c = 1; c < row.size(); ++c) rows[id].push_back(parse_int(row[c], file));
  }
  return rows;
}

void densify_features(const std::vector<std::vector<long long>>& rows, std::size_t first_col,
                      std::vector<std::vector<int>>& features, std::vector<int>& cardinality) {
  const std::size_t n = rows.size();
  const std::size_t fields = n ? rows[0].size() - first_col : 0;
  features.assign(n, std::vector<int>(fields));
  cardinality.assign(fields, 0);
  for (std::size_t f = 0; f < fields; ++f) {
    std::vector<long long> raw(n);
    for (std::size_t k = 0; k < n; ++k) raw[k] = rows[k][first_col + f];
    const auto dense = densify(raw, cardinality[f]);
    for (std::size_t k = 0; k < n; ++k) features[k][f] = dense[k];
  }
}

}  // namespace

std::vector<std::vector<int>> Dataset::user_sequences() const {
  std::vector<std::vector<const InteractionRecord*>> per_user(users.count);
  for (const auto& r : train_log) per_user[r.user].push_back(&r);
  std::vector<std::vector<int>> out(users.count);
  for (int u = 0; u < users.count; ++u) {
    auto& recs = per_user[u];
    std::stable_sort(recs.begin(), recs.end(),
                     [](const auto* a, const auto* b) { return a->step < b->step; });
    for (const auto* r : recs) out[u].push_back(r->item);
  }
  return out;
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.name != b.name || a.seed != b.seed || a.r_min != b.r_min || a.r_max != b.r_max ||
      a.train_log != b.train_log || !(a.users == b.users) || !(a.items == b.items) ||
      a.truth.has_value() != b.truth.has_value()) {
    return false;
  }
  return !a.truth || *a.truth == *b.truth;
}

void validate(const Dataset& d) {
  if (!(d.r_min < d.r_max)) throw Error("manifest: r_min must be below r_max");
  if (d.users.count < 1 || d.items.count < 1) throw Error("empty catalog");
  if (d.train_log.empty()) throw Error("empty log");
  if (static_cast<int>(d.items.category.size()) != d.items.count) {
    throw Error("item catalog: every item needs a primary category");
  }
  for (int c : d.items.category) {
    if (c < 0 || c >= d.items.num_categories) throw Error("item catalog: category id out of range");
  }
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& r : d.train_log) {
    if (r.user < 0 || r.user >= d.users.count || r.item < 0 || r.item >= d.items.count) {
      throw Error("id out of range: user " + std::to_string(r.user) + " item " +
                  std::to_string(r.item));
    }
    if (!(r.feedback >= d.r_min && r.feedback <= d.r_max)) {
      throw Error("feedback out of range: " + format_double(r.feedback));
    }
    if (!seen.insert({r.user, r.item, r.step}).second) {
      throw Error("duplicate record (user " + std::to_string(r.user) + ", item " +
                  std::to_string(r.item) + ", step " + std::to_string(r.step) + ")");
    }
  }
  if (d.truth) {
    if (d.truth->rows() != d.users.count || d.truth->cols() != d.items.count) {
      throw Error("truth matrix shape does not match the catalogs");
    }
    if (!d.truth->allFinite()) throw Error("truth matrix has missing entries");
  }
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  {
    const fs::path path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw Error("missing file " + path.string());
    nlohmann::json m;
    try {
      in >> m;
      d.r_min = m.at("r_min").get<double>();
      d.r_max = m.at("r_max").get<double>();
      d.name = m.value("name", std::string());
      d.seed = m.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("manifest.json: ") + e.what());
    }
  }

  const CsvTable users = read_csv(dir / "users.csv");
  expect_columns(users, {"user_id"}, "users.csv");
  const auto user_rows = read_catalog(users, "users.csv", "user_id");
  d.users.count = static_cast<int>(user_rows.size());
  densify_features(user_rows, 0, d.users.features, d.users.feature_cardinality);

  const CsvTable items = read_csv(dir / "items.csv");
  expect_columns(items, {"item_id", "category"}, "items.csv");
  const auto item_rows = read_catalog(items, "items.csv", "item_id");
  d.items.count = static_cast<int>(item_rows.size());
  {
    std::vector<long long> raw;
    for (const auto& row : item_rows) raw.push_back(row[0]);
    d.items.category = densify(raw, d.items.num_categories);
  }
  densify_features(item_rows, 1, d.items.features, d.items.feature_cardinality);

  const CsvTable log = read_csv(dir / "interactions.csv");
  expect_columns(log, {"user_id", "item_id", "feedback", "step"}, "interactions.csv");
  if (log.rows.empty()) throw Error("empty log");
  for (const auto& row : log.rows) {
    InteractionRecord r;
    const long long u = parse_int(row[0], "interactions.csv");
    const long long i = parse_int(row[1], "interactions.csv");
    if (u < 0 || u >= d.users.count || i < 0 || i >= d.items.count) {
      throw Error("id out of range in interactions.csv: user_id=" + row[0] + " item_id=" + row[1]);
    }
    r.user = static_cast<int>(u);
    r.item = static_cast<int>(i);
    r.feedback = parse_real(row[2], "interactions.csv");
    r.step = static_cast<int>(parse_int(row[3], "interactions.csv"));
    d.train_log.push_back(r);
  }

  const fs::path truth_path = dir / "truth.csv";
  if (fs::exists(truth_path)) {
    const CsvTable t = read_csv(truth_path);
    expect_columns(t, {"user_id", "item_id", "feedback"}, "truth.csv");
    Eigen::MatrixXd m =
        Eigen::MatrixXd::Constant(d.users.count, d.items.count, std::numeric_limits<double>::quiet_NaN());
    for (const auto& row : t.rows) {
      const long long u = parse_int(row[0], "truth.csv");
      const long long i = parse_int(row[1], "truth.csv");
      if (u < 0 || u >= d.users.count || i < 0 || i >= d.items.count) {
        throw Error("id out of range in truth.csv: user_id=" + row[0] + " item_id=" + row[1]);
      }
      m(u, i) = parse_real(row[2], "truth.csv");
    }
    d.truth = std::move(m);
  }
  validate(d);
  return d;
}

void save_dataset(const Dataset& d, const fs::path& dir) {
  validate(d);
  fs::create_directories(dir);
  {
    nlohmann::ordered_json m;
    m["name"] = d.name;
    m["seed"] = d.seed;
    m["r_min"] = d.r_min;
    m["r_max"] = d.r_max;
    std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "users.csv");
    out << "user_id";
    for (std::size_t f = 0; f < d.users.feature_cardinality.size(); ++f) out << ",feat_" << f;
    out << '\n';
    for (int u = 0; u < d.users.count; ++u) {
      out << u;
      for (int v : d.users.features[u]) out << ',' << v;
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "items.csv");
    out << "item_id,category";
    for (std::size_t f = 0; f < d.items.feature_cardinality.size(); ++f) out << ",feat_" << f;
    out << '\n';
    for (int i = 0; i < d.items.count; ++i) {
      out << i << ',' << d.items.category[i];
      for (int v : d.items.features[i]) out << ',' << v;
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "interactions.csv");
    out << "user_id,item_id,feedback,step\n";
    for (const auto& r : d.train_log) {
      out << r.user << ',' << r.item << ',' << format_double(r.feedback) << ',' << r.step << '\n';
    }
  }
  if (d.truth) {
    std::ofstream out(dir / "truth.csv");
    out << "user_id,item_id,feedback\n";
    for (int u = 0; u < d.users.count; ++u) {
      for (int i = 0; i < d.items.count; ++i) {
        out << u << ',' << i << ',' << format_double((*d.truth)(u, i)) << '\n';
      }
    }
  } else {
    fs::remove(dir / "truth.csv");
  }
}

std::uint64_t dataset_hash(const Dataset& d) {
  std::uint64_t h = fnv1a(d.name);
  auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
  auto mix_double = [&mix](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    mix(bits);
  };
  mix(d.seed);
  mix_double(d.r_min);
  mix_double(d.r_max);
  mix(static_cast<std::uint64_t>(d.users.count));
  for (const auto& f : d.users.features) for (int v : f) mix(static_cast<std::uint64_t>(v));
  mix(static_cast<std::uint64_t>(d.items.count));
  for (int c : d.items.category) mix(static_cast<std::uint64_t>(c));
  for (const auto& f : d.items.features) for (int v : f) mix(static_cast<std::uint64_t>(v));
  for (const auto& r : d.train_log) {
    mix(static_cast<std::uint64_t>(r.user));
    mix(static_cast<std::uint64_t>(r.item));
    mix_double(r.feedback);
    mix(static_cast<std::uint64_t>(r.step));
  }
  if (d.truth) {
    for (Eigen::Index k = 0; k < d.truth->size(); ++k) mix_double(d.truth->data()[k]);
  }
  return h;
}

void validate(const SyntheticSpec& s) {
  if (s.users < 2) throw Error("need >=2 users");
  if (s.items < 2) throw Error("need >=2 items");
  if (s.categories < 1 || s.categories > s.items) throw Error("categories must lie in [1, items]");
  if (s.latent_dim < 1) throw Error("latent_dim must be >= 1");
  if (!(s.log_density > 0.0 && s.log_density <= 1.0)) throw Error("log_density must lie in (0, 1]");
  if (!(s.noise_sd >= 0.0)) throw Error("noise_sd must be >= 0");
  if (!(s.popularity_skew >= 0.0)) throw Error("popularity_skew must be >= 0");
}

Dataset generate_synthetic(const SyntheticSpec& s) {
  validate(s);
  Dataset d;
  d.name = "synthetic";
  d.seed = s.seed;
  d.r_min = 0.0;
  d.r_max = 1.0;

  Rng catalog_rng = make_stream(s.seed, "synthetic/catalog");
  Rng latent_rng = make_stream(s.seed, "synthetic/latent");
  Rng noise_rng = make_stream(s.seed, "synthetic/noise");
  Rng log_rng = make_stream(s.seed, "synthetic/log");

  const int U = s.users, I = s.items, C = s.categories, L = s.latent_dim;
  const int groups = C;

  // Every category is used: round-robin assignment, then shuffled.
  std::vector<int> category(I);
  for (int i = 0; i < I; ++i) category[i] = i % C;
  for (int i = I - 1; i > 0; --i) std::swap(category[i], category[uniform_index(catalog_rng, i + 1)]);
  std::vector<int> rank(I);  // popularity rank of each item
  std::iota(rank.begin(), rank.end(), 0);
  for (int i = I - 1; i > 0; --i) std::swap(rank[i], rank[uniform_index(catalog_rng, i + 1)]);
  std::vector<int> group(U);
  for (int u = 0; u < U; ++u) group[u] = static_cast<int>(uniform_index(catalog_rng, groups));

  const double scale = 1.2 / std::sqrt(static_cast<double>(L));
  Eigen::MatrixXd cat_center(L, C), group_center(L, groups), x(L, U), y(L, I);
  for (Eigen::Index k = 0; k < cat_center.size(); ++k) cat_center.data()[k] = standard_normal(latent_rng);
  for (Eigen::Index k = 0; k < group_center.size(); ++k) group_center.data()[k] = standard_normal(latent_rng);
  for (int u = 0; u < U; ++u) {
    for (int l = 0; l < L; ++l) x(l, u) = scale * (group_center(l, group[u]) + 0.5 * standard_normal(latent_rng));
  }
  for (int i = 0; i < I; ++i) {
    for (int l = 0; l < L; ++l) y(l, i) = scale * (cat_center(l, category[i]) + 0.5 * standard_normal(latent_rng));
  }

  Eigen::MatrixXd truth(U, I);
  for (int u = 0; u < U; ++u) {
    for (int i = 0; i < I; ++i) {
      const double logit = x.col(u).dot(y.col(i));
      const double eps = s.noise_sd * standard_normal(noise_rng);
      truth(u, i) = std::clamp(1.0 / (1.0 + std::exp(-logit)) + eps, 0.0, 1.0);
    }
  }

  d.users.count = U;
  d.users.feature_cardinality = {2};
  d.users.features.resize(U);
  for (int u = 0; u < U; ++u) d.users.features[u] = {x(0, u) >= 0.0 ? 1 : 0};

  d.items.count = I;
  d.items.num_categories = C;
  d.items.category = category;
  d.items.feature_cardinality = {3};
  d.items.features.resize(I);
  for (int i = 0; i < I; ++i) d.items.features[i] = {std::min(2, 3 * rank[i] / I)};

  // Weighted sampling without replacement (exponential keys), ties by pair index.
  const long long pairs = static_cast<long long>(U) * I;
  const long long n = std::max<long long>(1, std::llround(s.log_density * static_cast<double>(pairs)));
  std::vector<std::pair<double, long long>> keys(pairs);
  for (long long p = 0; p < pairs; ++p) {
    const int i = static_cast<int>(p % I);
    const double w = std::pow(static_cast<double>(rank[i] + 1), -s.popularity_skew);
    double r = uniform01(log_rng);
    while (r <= 0.0) r = uniform01(log_rng);
    keys[p] = {std::log(r) / w, p};
  }
  std::partial_sort(keys.begin(), keys.begin() + n, keys.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<long long> chosen(n);
  for (long long k = 0; k < n; ++k) chosen[k] = keys[k].second;
  std::sort(chosen.begin(), chosen.end());

  std::vector<std::vector<int>> per_user(U);
  for (long long p : chosen) per_user[p / I].push_back(static_cast<int>(p % I));
  for (int u = 0; u < U; ++u) {
    auto& items = per_user[u];
    for (int k = static_cast<int>(items.size()) - 1; k > 0; --k) {
      std::swap(items[k], items[uniform_index(log_rng, k + 1)]);
    }
    for (int k = 0; k < static_cast<int>(items.size()); ++k) {
      d.train_log.push_back({u, items[k], truth(u, items[k]), k});
    }
  }
  d.truth = std::move(truth);
  validate(d);
  return d;
}

BehaviorStats::BehaviorStats(int order, double alpha, int num_items)
    : order_(order), alpha_(alpha), num_items_(num_items), levels_(order + 1) {
  if (order < 0) throw Error("behavior stats: order must be >= 0");
  if (!(alpha > 0.0)) throw Error("behavior stats: alpha must be > 0");
}

void BehaviorStats::add(std::span<const int> preceding, int item) {
  const int avail = static_cast<int>(preceding.size());
  for (int j = 0; j <= std::min(order_, avail); ++j) {
    std::vector<int> key(preceding.end() - j, preceding.end());
    auto& row = levels_[j][key];
    if (row.empty()) row.assign(num_items_, 0.0);
    row[item] += 1.0;
  }
}

int BehaviorStats::resolve_level(std::span<const int> recent) const {
  const int avail = static_cast<int>(recent.size());
  for (int j = std::min(order_, avail); j > 0; --j) {
    std::vector<int> key(recent.end() - j, recent.end());
    if (levels_[j].count(key)) return j;
  }
  return 0;
}

const std::vector<double>& BehaviorStats::counts(std::span<const int> recent) const {
  static const std::vector<double> kEmpty;
  const int j = resolve_level(recent);
  std::vector<int> key(recent.end() - j, recent.end());
  auto it = levels_[j].find(key);
  return it == levels_[j].end() ? kEmpty : it->second;
}

double BehaviorStats::probability(std::span<const int> recent, int item) const {
  const auto& c = counts(recent);
  const double total = std::accumulate(c.begin(), c.end(), 0.0);
  const double count = c.empty() ? 0.0 : c[item];
  return (count + alpha_) / (total + alpha_ * num_items_);
}

Eigen::VectorXd BehaviorStats::distribution(std::span<const int> recent) const {
  const auto& c = counts(recent);
  const double total = std::accumulate(c.begin(), c.end(), 0.0);
  Eigen::VectorXd p(num_items_);
  for (int i = 0; i < num_items_; ++i) {
    p(i) = ((c.empty() ? 0.0 : c[i]) + alpha_) / (total + alpha_ * num_items_);
  }
  return p;
}

BehaviorStats behavior_stats(const Dataset& d, int order, double alpha) {
  BehaviorStats stats(order, alpha, d.items.count);
  for (const auto& seq : d.user_sequences()) {
    std::vector<int> cats;
    for (int item : seq) {
      stats.add(cats, item);
      cats.push_back(d.items.category[item]);
    }
  }
  return stats;
}

}  // namespace darlr
