// darlr: batch entry point for data generation, world-model training,
// policy training, evaluation and the ablation sweep.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "darlr/config.hpp"
#include "darlr/dataset.hpp"
#include "darlr/engine.hpp"
#include "darlr/error.hpp"
#include "darlr/nn/checkpoint.hpp"
#include "darlr/world_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace darlr;
using nn::format_double;

namespace {

constexpr int kUsageError = 2;

struct UsageError : Error {
  using Error::Error;
};

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(file.string() + ": " + e.what());
  }
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  return out;
}

Variant variant_or_usage(const std::string& name) {
  if (auto v = parse_variant(name)) return *v;
  std::string valid;
  for (const auto& n : variant_names()) valid += (valid.empty() ? "" : ",") + n;
  throw UsageError("unknown variant '" + name + "' (valid: " + valid + ")");
}

// A run config is an engine config plus an optional "seeds" list.
struct RunConfig {
  EngineConfig engine;
  std::vector<std::uint64_t> seeds;
};

RunConfig read_run_config(const fs::path& file) {
  json j = read_json(file);
  RunConfig rc;
  if (j.is_object() && j.contains("seeds")) {
    try {
      rc.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    } catch (const json::exception&) {
      throw Error("run config: key 'seeds' must be a list of integers");
    }
    j.erase("seeds");
  }
  if (j.is_object() && j.contains("variant") && j["variant"].is_string()) {
    variant_or_usage(j["variant"].get<std::string>());
  }
  rc.engine = engine_config_from_json(j);
  if (rc.seeds.empty()) rc.seeds.push_back(rc.engine.seed);
  return rc;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoull(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("bad seed '" + tok + "' in --seed");
    }
  }
  if (out.empty()) throw UsageError("--seed needs at least one value");
  return out;
}

Trainer run_one(const Dataset& d, const WorldModel& wm, EngineConfig cfg, std::uint64_t seed,
                const fs::path& dir) {
  cfg.seed = seed;
  fs::create_directories(dir);
  Trainer t(d, wm, cfg);
  t.train(nullptr);
  t.save_bundle(dir);
  return t;
}

std::string report_header() {
  return "episodes,R_tra,R_tra_std,R_each,R_each_std,Length,Length_std,MCD,MCD_std";
}

std::string report_row(const EvalReport& r) {
  std::string s = std::to_string(r.episodes);
  for (double v : {r.r_tra, r.r_tra_std, r.r_each, r.r_each_std, r.length, r.length_std, r.mcd, r.mcd_std}) {
    s += ',' + format_double(v);
  }
  return s;
}

void cmd_gen_data(const fs::path& spec_file, const fs::path& out) {
  const SyntheticSpec spec = synthetic_spec_from_json(read_json(spec_file));
  const Dataset d = generate_synthetic(spec);
  fs::create_directories(out);
  save_dataset(d, out);
  open_out(out / "spec.json") << to_json(spec).dump(2) << '\n';
}

void cmd_train_wm(const fs::path& config, const fs::path& data, const fs::path& out) {
  const WorldModelConfig cfg = world_model_config_from_json(read_json(config));
  const Dataset d = load_dataset(data);
  const WorldModel wm = train_world_model(d, cfg);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_world_model(wm, out);
  std::ofstream csv = open_out(fs::path(out.string() + ".loss.csv"));
  csv << "member,epoch,nll\n";
  for (std::size_t k = 0; k < wm.loss_log().size(); ++k) {
    const auto& log = wm.loss_log()[k];
    for (std::size_t e = 0; e < log.size(); ++e) csv << k << ',' << e << ',' << format_double(log[e]) << '\n';
  }
}

void cmd_train_policy(const fs::path& config, const fs::path& data, const fs::path& wm_file,
                      const fs::path& out, const std::string& variant, const std::string& seeds) {
  RunConfig rc = read_run_config(config);
  if (!variant.empty()) rc.engine.variant = variant_or_usage(variant);
  if (!seeds.empty()) rc.seeds = parse_seed_list(seeds);
  const Dataset d = load_dataset(data);
  const WorldModel wm = load_world_model(wm_file, d);
  for (std::uint64_t s : rc.seeds) {
    const Trainer t = run_one(d, wm, rc.engine, s, out / ("seed_" + std::to_string(s)));
    if (!t.history().empty()) {
      std::cout << "seed " << s << ": " << format_metrics_row(t.history().back()) << '\n';
    }
  }
}

void cmd_eval(const fs::path& bundle, const fs::path& data, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw UsageError("--episodes must be positive");
  const Dataset d = load_dataset(data);
  const Trainer t = Trainer::load_bundle(bundle, d);
  std::cout << report_header() << '\n' << report_row(t.evaluate(episodes, seed)) << '\n';
}

// Reporting order: the five variants first, the complete model last.
const std::vector<Variant> kAblationOrder{Variant::RStatic, Variant::PuStatic, Variant::Rhat,
                                          Variant::RhatRs,  Variant::RhatRd,   Variant::Full};

void cmd_ablate(const fs::path& config, const fs::path& data, const fs::path& wm_file,
                const fs::path& out, const std::string& seeds) {
  RunConfig rc = read_run_config(config);
  if (!seeds.empty()) rc.seeds = parse_seed_list(seeds);
  const Dataset d = load_dataset(data);
  const WorldModel wm = load_world_model(wm_file, d);
  fs::create_directories(out);
  std::ofstream csv = open_out(out / "comparison.csv");
  csv << "variant,seed," << metrics_header() << '\n';
  std::ofstream summary = open_out(out / "summary.csv");
  summary << "variant,seeds,R_tra,R_each,Length,MCD,reward_error\n";
  for (Variant v : kAblationOrder) {
    EngineConfig cfg = rc.engine;
    cfg.variant = v;
    const std::string name(variant_name(v));
    double sums[5] = {0, 0, 0, 0, 0};
    int n = 0;
    for (std::uint64_t s : rc.seeds) {
      const Trainer t = run_one(d, wm, cfg, s, out / name / ("seed_" + std::to_string(s)));
      if (t.history().empty()) throw Error("run produced no evaluation: " + name);
      const MetricsRow& last = t.history().back();
      csv << name << ',' << s << ',' << format_metrics_row(last) << '\n';
      const EvalReport& r = last.report;
      const double vals[5] = {r.r_tra, r.r_each, r.length, r.mcd, r.reward_error};
      for (int k = 0; k < 5; ++k) sums[k] += vals[k];
      ++n;
    }
    summary << name << ',' << n;
    for (double s : sums) summary << ',' << format_double(s / n);
    summary << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DARLR offline recommendation laboratory"};
  app.require_subcommand(1);

  fs::path spec, out, config, data, wm, bundle;
  std::string variant, seeds;
  int episodes = 100;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--spec", spec, "synthetic spec JSON")->required();
  gen->add_option("--out", out, "output directory")->required();

  auto* twm = app.add_subcommand("train-wm", "train the world-model ensemble");
  twm->add_option("--config", config, "world-model config JSON")->required();
  twm->add_option("--data", data, "dataset directory")->required();
  twm->add_option("--out", out, "checkpoint file")->required();

  auto* tp = app.add_subcommand("train-policy", "train recommender and selector");
  tp->add_option("--config", config, "run config JSON")->required();
  tp->add_option("--data", data, "dataset directory")->required();
  tp->add_option("--wm", wm, "world-model checkpoint")->required();
  tp->add_option("--out", out, "run directory")->required();
  tp->add_option("--variant", variant, "variant name");
  tp->add_option("--seed", seeds, "comma-separated seeds");

  auto* ev = app.add_subcommand("eval", "evaluate a trained bundle");
  ev->add_option("--bundle", bundle, "bundle directory")->required();
  ev->add_option("--data", data, "dataset directory")->required();
  ev->add_option("--episodes", episodes, "evaluation episodes");
  ev->add_option("--seed", seed, "evaluation seed");

  auto* ab = app.add_subcommand("ablate", "run every variant over the seed list");
  ab->add_option("--config", config, "run config JSON")->required();
  ab->add_option("--data", data, "dataset directory")->required();
  ab->add_option("--wm", wm, "world-model checkpoint")->required();
  ab->add_option("--out", out, "output directory")->required();
  ab->add_option("--seed", seeds, "comma-separated seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen) cmd_gen_data(spec, out);
    else if (*twm) cmd_train_wm(config, data, out);
    else if (*tp) cmd_train_policy(config, data, wm, out, variant, seeds);
    else if (*ev) cmd_eval(bundle, data, episodes, seed);
    else if (*ab) cmd_ablate(config, data, wm, out, seeds);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}
