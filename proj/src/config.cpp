#include "darlr/config.hpp"

#include <set>
#include <string>

#include "darlr/error.hpp"

namespace darlr {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j.is_object()) throw Error(what_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw Error(what_ + ": key '" + key + "' has the wrong type");
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!known_.count(it.key())) throw Error(what_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> known_;
};

}  // namespace

json to_json(const EngineConfig& c) {
  return {
      {"variant", std::string(variant_name(c.variant))},
      {"lambda_s", c.coeffs.similarity},
      {"lambda_d", c.coeffs.diversity},
      {"lambda_u", c.coeffs.uncertainty},
      {"lambda_e", c.coeffs.entropy},
      {"gamma", c.a2c.gamma},
      {"value_coef", c.a2c.value_coef},
      {"temperature", c.a2c.temperature},
      {"q_critic", c.a2c.q_critic},
      {"lr", c.adam.lr},
      {"k_sel", c.k_sel},
      {"pool_size", c.pool_size},
      {"w_sel", c.w_sel},
      {"w_rec", c.w_rec},
      {"alpha_shape", c.alpha_shape},
      {"rec_width", c.rec_width},
      {"pref_width", c.pref_width},
      {"embed_width", c.embed_width},
      {"hidden", c.hidden},
      {"epochs", c.epochs},
      {"trajectories", c.trajectories},
      {"eval_episodes", c.eval_episodes},
      {"eval_every", c.eval_every},
      {"max_steps", c.max_steps},
      {"greedy_eval", c.greedy_eval},
      {"entropy_order", c.entropy_order},
      {"entropy_alpha", c.entropy_alpha},
      {"uncertainty_eps", c.uncertainty_eps},
      {"max_length", c.max_length},
      {"repeat_window", c.repeat_window},
      {"seed", c.seed},
  };
}

EngineConfig engine_config_from_json(const json& j) {
  EngineConfig c;
  Reader r(j, "engine config");
  std::string variant(variant_name(c.variant));
  r.get("variant", variant);
  r.get("lambda_s", c.coeffs.similarity);
  r.get("lambda_d", c.coeffs.diversity);
  r.get("lambda_u", c.coeffs.uncertainty);
  r.get("lambda_e", c.coeffs.entropy);
  r.get("gamma", c.a2c.gamma);
  r.get("value_coef", c.a2c.value_coef);
  r.get("temperature", c.a2c.temperature);
  r.get("q_critic", c.a2c.q_critic);
  r.get("lr", c.adam.lr);
  r.get("k_sel", c.k_sel);
  r.get("pool_size", c.pool_size);
  r.get("w_sel", c.w_sel);
  r.get("w_rec", c.w_rec);
  r.get("alpha_shape", c.alpha_shape);
  r.get("rec_width", c.rec_width);
  r.get("pref_width", c.pref_width);
  r.get("embed_width", c.embed_width);
  r.get("hidden", c.hidden);
  r.get("epochs", c.epochs);
  r.get("trajectories", c.trajectories);
  r.get("eval_episodes", c.eval_episodes);
  r.get("eval_every", c.eval_every);
  r.get("max_steps", c.max_steps);
  r.get("greedy_eval", c.greedy_eval);
  r.get("entropy_order", c.entropy_order);
  r.get("entropy_alpha", c.entropy_alpha);
  r.get("uncertainty_eps", c.uncertainty_eps);
  r.get("max_length", c.max_length);
  r.get("repeat_window", c.repeat_window);
  r.get("seed", c.seed);
  r.finish();
  const auto v = parse_variant(variant);
  if (!v) throw Error("engine config: unknown variant '" + variant + "'");
  c.variant = *v;
  validate(c);
  return c;
}

json to_json(const WorldModelConfig& c) {
  return {
      {"members", c.members},       {"embed_dim", c.embed_dim},   {"hidden", c.hidden},
      {"epochs", c.epochs},         {"batch", c.batch},           {"lr", c.adam.lr},
      {"logvar_min", c.logvar_min}, {"logvar_max", c.logvar_max}, {"seed", c.seed},
  };
}

WorldModelConfig world_model_config_from_json(const json& j) {
  WorldModelConfig c;
  Reader r(j, "world model config");
  r.get("members", c.members);
  r.get("embed_dim", c.embed_dim);
  r.get("hidden", c.hidden);
  r.get("epochs", c.epochs);
  r.get("batch", c.batch);
  r.get("lr", c.adam.lr);
  r.get("logvar_min", c.logvar_min);
  r.get("logvar_max", c.logvar_max);
  r.get("seed", c.seed);
  r.finish();
  validate(c);
  return c;
}

json to_json(const SyntheticSpec& s) {
  return {
      {"users", s.users},
      {"items", s.items},
      {"categories", s.categories},
      {"latent_dim", s.latent_dim},
      {"noise_sd", s.noise_sd},
      {"log_density", s.log_density},
      {"popularity_skew", s.popularity_skew},
      {"seed", s.seed},
  };
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  SyntheticSpec s;
  Reader r(j, "synthetic spec");
  r.get("users", s.users);
  r.get("items", s.items);
  r.get("categories", s.categories);
  r.get("latent_dim", s.latent_dim);
  r.get("noise_sd", s.noise_sd);
  r.get("log_density", s.log_density);
  r.get("popularity_skew", s.popularity_skew);
  r.get("seed", s.seed);
  r.finish();
  validate(s);
  return s;
}

}  // namespace darlr
