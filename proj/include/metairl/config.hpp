#pragma once

#include "json.hpp"

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "metairl/airl.hpp"
#include "metairl/error.hpp"
#include "metairl/expert.hpp"
#include "metairl/simulator.hpp"
#include "metairl/task.hpp"

namespace metairl {

using nlohmann::json;

/// Directory used when neither the config nor a flag names one.
inline std::string default_output_dir() {
  if (const char* env = std::getenv("METAIRL_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

struct MetaConfig {
  int meta_iterations = 2500;  // M
  int tasks_per_iteration = 2;  // N
  int inner_iterations = 1;     // K
  double beta_disc = 0.5;       // beta_omega
  double beta_policy = 0.25;    // beta_phi
  int adapt_iterations = 10;
  int online_test_every = 25;   // 0 disables the online test
  int checkpoint_every = 50;    // 0 keeps only the final checkpoint
  std::uint64_t seed = 1;
  AirlConfig airl{};
  NetworkConfig network{};

  void validate() const {
    require(meta_iterations >= 1, "meta: meta_iterations must be >= 1");
    require(tasks_per_iteration >= 1, "meta: tasks_per_iteration must be >= 1");
    require(inner_iterations >= 1, "meta: inner_iterations must be >= 1");
    require(beta_disc > 0.0 && beta_disc <= 1.0, "meta: beta_disc must lie in (0,1]");
    require(beta_policy > 0.0 && beta_policy <= 1.0, "meta: beta_policy must lie in (0,1]");
    require(adapt_iterations >= 0, "meta: adapt_iterations must be >= 0");
    require(online_test_every >= 0 && checkpoint_every >= 0, "meta: intervals must be >= 0");
    require(!network.hidden.empty(), "meta: at least one hidden layer is required");
    airl.validate();
  }

  bool operator==(const MetaConfig&) const = default;
};

struct EvalConfig {
  int episodes = 300;
  bool greedy = false;
  std::vector<int> demo_budgets = {5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
  int online_demos = 10;  // held-out demonstrations used by the online test

  bool operator==(const EvalConfig&) const = default;
};

/// Everything a command needs. Loaded from a JSON file, then overridden by flags.
struct RunConfig {
  EnvConfig env{};
  std::vector<TaskSpec> styles = builtin_styles();
  std::vector<std::string> train_styles = {"conservative", "neutral"};
  std::string test_style = "aggressive";
  int demos_per_task = 3000;
  MetaConfig meta{};
  EvalConfig eval{};
  std::string output_dir = default_output_dir();
  std::uint64_t seed = 1;

  void validate() const {
    env.validate();
    require(!styles.empty(), "config: no styles defined");
    for (const auto& s : styles) s.validate();
    for (std::size_t i = 0; i < styles.size(); ++i) {
      for (std::size_t j = i + 1; j < styles.size(); ++j) {
        if (styles[i].style == styles[j].style) throw UsageError("config: style '" + styles[i].style + "' defined twice");
      }
    }
    require(!train_styles.empty(), "config: train_styles must not be empty");
    for (const auto& s : train_styles) find_style(styles, s);
    find_style(styles, test_style);
    require(demos_per_task >= 1, "config: demos_per_task must be >= 1");
    meta.validate();
    require(eval.episodes >= 1, "config: eval.episodes must be >= 1");
    for (int b : eval.demo_budgets) require(b >= 1, "config: demo budgets must be >= 1");
    require(eval.online_demos >= 1, "config: eval.online_demos must be >= 1");
  }

  bool operator==(const RunConfig&) const = default;
};

// ---------------------------------------------------------------------------
// JSON conversion. Readers start from the defaults and override the keys that
// are present; unknown keys are rejected so typos do not pass silently.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw UsageError("config: unknown key '" + key + "' in '" + where + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline json env_to_json(const EnvConfig& c) {
  return {{"dt", c.dt},
          {"max_steps", c.max_steps},
          {"lateral_rate", c.lateral_rate},
          {"safety_margin", c.safety_margin},
          {"min_speed_floor", c.min_speed_floor},
          {"min_vehicles", c.min_vehicles},
          {"max_vehicles", c.max_vehicles},
          {"ego_speed_min", c.ego_speed_min},
          {"ego_speed_max", c.ego_speed_max},
          {"traffic_speed_min", c.traffic_speed_min},
          {"traffic_speed_max", c.traffic_speed_max},
          {"vehicle_length", c.vehicle_length},
          {"spacing_min", c.spacing_min},
          {"spacing_max", c.spacing_max},
          {"wide_gap_min", c.wide_gap_min},
          {"wide_gap_max", c.wide_gap_max},
          {"wide_gap_offset", c.wide_gap_offset},
          {"lead_probability", c.lead_probability},
          {"follower_probability", c.follower_probability},
          {"idm_time_headway", c.idm_time_headway},
          {"idm_min_gap", c.idm_min_gap},
          {"idm_accel", c.idm_accel},
          {"idm_decel", c.idm_decel},
          {"traffic_accel_max", c.traffic_accel_max},
          {"traffic_accel_min", c.traffic_accel_min},
          {"gap_gain_position", c.gap_gain_position},
          {"gap_gain_speed", c.gap_gain_speed},
          {"open_gap_standoff", c.open_gap_standoff},
          {"ego_idm_decel", c.ego_idm_decel}};
}

inline EnvConfig env_from_json(const json& j, EnvConfig c = {}) {
  using detail::read;
  detail::check_keys(j,
                     {"dt", "max_steps", "lateral_rate", "safety_margin", "min_speed_floor", "min_vehicles",
                      "max_vehicles", "ego_speed_min", "ego_speed_max", "traffic_speed_min", "traffic_speed_max",
                      "vehicle_length", "spacing_min", "spacing_max", "wide_gap_min", "wide_gap_max",
                      "wide_gap_offset", "lead_probability", "follower_probability", "idm_time_headway",
                      "idm_min_gap", "idm_accel", "idm_decel", "traffic_accel_max", "traffic_accel_min",
                      "gap_gain_position", "gap_gain_speed", "open_gap_standoff", "ego_idm_decel"},
                     "env");
  read(j, "dt", c.dt);
  read(j, "max_steps", c.max_steps);
  read(j, "lateral_rate", c.lateral_rate);
  read(j, "safety_margin", c.safety_margin);
  read(j, "min_speed_floor", c.min_speed_floor);
  read(j, "min_vehicles", c.min_vehicles);
  read(j, "max_vehicles", c.max_vehicles);
  read(j, "ego_speed_min", c.ego_speed_min);
  read(j, "ego_speed_max", c.ego_speed_max);
  read(j, "traffic_speed_min", c.traffic_speed_min);
  read(j, "traffic_speed_max", c.traffic_speed_max);
  read(j, "vehicle_length", c.vehicle_length);
  read(j, "spacing_min", c.spacing_min);
  read(j, "spacing_max", c.spacing_max);
  read(j, "wide_gap_min", c.wide_gap_min);
  read(j, "wide_gap_max", c.wide_gap_max);
  read(j, "wide_gap_offset", c.wide_gap_offset);
  read(j, "lead_probability", c.lead_probability);
  read(j, "follower_probability", c.follower_probability);
  read(j, "idm_time_headway", c.idm_time_headway);
  read(j, "idm_min_gap", c.idm_min_gap);
  read(j, "idm_accel", c.idm_accel);
  read(j, "idm_decel", c.idm_decel);
  read(j, "traffic_accel_max", c.traffic_accel_max);
  read(j, "traffic_accel_min", c.traffic_accel_min);
  read(j, "gap_gain_position", c.gap_gain_position);
  read(j, "gap_gain_speed", c.gap_gain_speed);
  read(j, "open_gap_standoff", c.open_gap_standoff);
  read(j, "ego_idm_decel", c.ego_idm_decel);
  return c;
}

inline json airl_to_json(const AirlConfig& c) {
  const auto& t = c.trust_region;
  return {{"k_d", c.k_d},
          {"k_g", c.k_g},
          {"episodes_per_iteration", c.episodes_per_iteration},
          {"disc_batch", c.disc_batch},
          {"disc_step_size", c.disc_adam.step_size},
          {"disc_beta1", c.disc_adam.beta1},
          {"disc_beta2", c.disc_adam.beta2},
          {"disc_epsilon", c.disc_adam.epsilon},
          {"gamma", c.gamma},
          {"metric_pairs", c.metric_pairs},
          {"trust_region",
           {{"max_kl", t.max_kl},
            {"cg_iterations", t.cg_iterations},
            {"cg_tolerance", t.cg_tolerance},
            {"damping", t.damping},
            {"backtrack_shrink", t.backtrack_shrink},
            {"max_backtracks", t.max_backtracks},
            {"kl_slack", t.kl_slack}}}};
}

inline AirlConfig airl_from_json(const json& j, AirlConfig c = {}) {
  using detail::read;
  detail::check_keys(j,
                     {"k_d", "k_g", "episodes_per_iteration", "disc_batch", "disc_step_size", "disc_beta1",
                      "disc_beta2", "disc_epsilon", "gamma", "metric_pairs", "trust_region"},
                     "airl");
  read(j, "k_d", c.k_d);
  read(j, "k_g", c.k_g);
  read(j, "episodes_per_iteration", c.episodes_per_iteration);
  read(j, "disc_batch", c.disc_batch);
  read(j, "disc_step_size", c.disc_adam.step_size);
  read(j, "disc_beta1", c.disc_adam.beta1);
  read(j, "disc_beta2", c.disc_adam.beta2);
  read(j, "disc_epsilon", c.disc_adam.epsilon);
  read(j, "gamma", c.gamma);
  read(j, "metric_pairs", c.metric_pairs);
  if (j.contains("trust_region")) {
    const auto& t = j.at("trust_region");
    detail::check_keys(t, {"max_kl", "cg_iterations", "cg_tolerance", "damping", "backtrack_shrink", "max_backtracks",
                           "kl_slack"},
                       "airl.trust_region");
    read(t, "max_kl", c.trust_region.max_kl);
    read(t, "cg_iterations", c.trust_region.cg_iterations);
    read(t, "cg_tolerance", c.trust_region.cg_tolerance);
    read(t, "damping", c.trust_region.damping);
    read(t, "backtrack_shrink", c.trust_region.backtrack_shrink);
    read(t, "max_backtracks", c.trust_region.max_backtracks);
    read(t, "kl_slack", c.trust_region.kl_slack);
  }
  return c;
}

inline json network_to_json(const NetworkConfig& c) {
  return {{"hidden", c.hidden},
          {"activation", activation_name(c.activation)},
          {"policy_output_scale", c.policy_output_scale}};
}

inline NetworkConfig network_from_json(const json& j, NetworkConfig c = {}) {
  detail::check_keys(j, {"hidden", "activation", "policy_output_scale"}, "network");
  detail::read(j, "hidden", c.hidden);
  if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
  detail::read(j, "policy_output_scale", c.policy_output_scale);
  return c;
}

inline json meta_to_json(const MetaConfig& c) {
  return {{"meta_iterations", c.meta_iterations},
          {"tasks_per_iteration", c.tasks_per_iteration},
          {"inner_iterations", c.inner_iterations},
          {"beta_disc", c.beta_disc},
          {"beta_policy", c.beta_policy},
          {"adapt_iterations", c.adapt_iterations},
          {"online_test_every", c.online_test_every},
          {"checkpoint_every", c.checkpoint_every},
          {"seed", c.seed},
          {"airl", airl_to_json(c.airl)},
          {"network", network_to_json(c.network)}};
}

inline MetaConfig meta_from_json(const json& j, MetaConfig c = {}) {
  using detail::read;
  detail::check_keys(j,
                     {"meta_iterations", "tasks_per_iteration", "inner_iterations", "beta_disc", "beta_policy",
                      "adapt_iterations", "online_test_every", "checkpoint_every", "seed", "airl", "network"},
                     "meta");
  read(j, "meta_iterations", c.meta_iterations);
  read(j, "tasks_per_iteration", c.tasks_per_iteration);
  read(j, "inner_iterations", c.inner_iterations);
  read(j, "beta_disc", c.beta_disc);
  read(j, "beta_policy", c.beta_policy);
  read(j, "adapt_iterations", c.adapt_iterations);
  read(j, "online_test_every", c.online_test_every);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "seed", c.seed);
  if (j.contains("airl")) c.airl = airl_from_json(j.at("airl"), c.airl);
  if (j.contains("network")) c.network = network_from_json(j.at("network"), c.network);
  return c;
}

inline json eval_to_json(const EvalConfig& c) {
  return {{"episodes", c.episodes},
          {"greedy", c.greedy},
          {"demo_budgets", c.demo_budgets},
          {"online_demos", c.online_demos}};
}

inline EvalConfig eval_from_json(const json& j, EvalConfig c = {}) {
  detail::check_keys(j, {"episodes", "greedy", "demo_budgets", "online_demos"}, "eval");
  detail::read(j, "episodes", c.episodes);
  detail::read(j, "greedy", c.greedy);
  detail::read(j, "demo_budgets", c.demo_budgets);
  detail::read(j, "online_demos", c.online_demos);
  return c;
}

inline json run_to_json(const RunConfig& c) {
  json styles = json::array();
  for (const auto& s : c.styles) styles.push_back(task_to_json(s));
  return {{"env", env_to_json(c.env)},
          {"styles", styles},
          {"train_styles", c.train_styles},
          {"test_style", c.test_style},
          {"demos_per_task", c.demos_per_task},
          {"meta", meta_to_json(c.meta)},
          {"eval", eval_to_json(c.eval)},
          {"output_dir", c.output_dir},
          {"seed", c.seed}};
}

inline RunConfig run_from_json(const json& j, RunConfig c = {}) {
  using detail::read;
  try {
    detail::check_keys(j,
                       {"env", "styles", "train_styles", "test_style", "demos_per_task", "meta", "eval", "output_dir",
                        "seed"},
                       "config");
    if (j.contains("env")) c.env = env_from_json(j.at("env"), c.env);
    if (j.contains("styles")) {
      c.styles.clear();
      for (const auto& s : j.at("styles")) c.styles.push_back(task_from_json(s));
    }
    read(j, "train_styles", c.train_styles);
    read(j, "test_style", c.test_style);
    read(j, "demos_per_task", c.demos_per_task);
    if (j.contains("meta")) c.meta = meta_from_json(j.at("meta"), c.meta);
    if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"), c.eval);
    read(j, "output_dir", c.output_dir);
    read(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const ContractViolation& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

inline std::string render_config(const RunConfig& c) { return run_to_json(c).dump(2) + "\n"; }

inline RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = run_from_json(j);
  try {
    c.validate();
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace metairl
