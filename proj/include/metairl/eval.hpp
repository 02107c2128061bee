#pragma once

#include "json.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "metairl/airl.hpp"
#include "metairl/error.hpp"
#include "metairl/expert.hpp"
#include "metairl/metrics.hpp"
#include "metairl/parallel.hpp"

namespace metairl {

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

struct Histogram {
  std::string metric;
  std::vector<double> edges;    // bins + 1 uniform edges
  std::vector<double> density;  // count / (total * width)
  std::size_t total = 0;

  int bins() const { return static_cast<int>(density.size()); }
  double width() const { return edges.size() >= 2 ? edges[1] - edges[0] : 0.0; }
  double mass() const {
    double m = 0.0;
    for (double d : density) m += d * width();
    return m;
  }
};

/// Uniform bins over [lo, hi]; values outside the range land in the edge bins.
inline Histogram build_histogram(const std::vector<double>& values, int bins, double lo, double hi,
                                 const std::string& metric = "") {
  require(!values.empty(), "build_histogram: no values");
  require(bins >= 1, "build_histogram: bin count must be >= 1");
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "build_histogram: invalid range");
  Histogram h;
  h.metric = metric;
  h.total = values.size();
  const double w = (hi - lo) / bins;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = lo + w * i;
  h.edges.back() = hi;
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    require(!std::isnan(v), "build_histogram: NaN value");
    int b = static_cast<int>(std::floor((v - lo) / w));
    b = std::clamp(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  h.density.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    h.density[i] = static_cast<double>(counts[i]) / (static_cast<double>(h.total) * w);
  }
  return h;
}

/// Sum of absolute density differences over shared bins.
inline double l1_distance(const Histogram& a, const Histogram& b) {
  require(a.edges == b.edges, "l1_distance: histograms have different bin edges");
  double d = 0.0;
  for (std::size_t i = 0; i < a.density.size(); ++i) d += std::abs(a.density[i] - b.density[i]);
  return d;
}

// ---------------------------------------------------------------------------
// Kinematics
// ---------------------------------------------------------------------------

enum class Kinematic { MaxAccel = 0, MaxSpeed = 1, MinAccel = 2, MinSpeed = 3 };
inline constexpr int kKinematicCount = 4;

struct KinematicBins {
  const char* name;
  double lo;
  double hi;
  int bins;
};

inline constexpr std::array<KinematicBins, kKinematicCount> kKinematicBins = {{
    {"max_accel", -6.0, 6.0, 6},
    {"max_speed", 0.0, 45.0, 30},
    {"min_accel", -6.0, 6.0, 6},
    {"min_speed", 0.0, 45.0, 30},
}};

inline double kinematic_value(const KinematicExtremes& k, Kinematic which) {
  switch (which) {
    case Kinematic::MaxAccel: return k.max_accel;
    case Kinematic::MaxSpeed: return k.max_speed;
    case Kinematic::MinAccel: return k.min_accel;
    case Kinematic::MinSpeed: return k.min_speed;
  }
  return 0.0;
}

using KinematicHistograms = std::array<Histogram, kKinematicCount>;

inline KinematicHistograms kinematic_histograms(const std::vector<KinematicExtremes>& extremes) {
  KinematicHistograms out;
  for (int k = 0; k < kKinematicCount; ++k) {
    std::vector<double> v;
    v.reserve(extremes.size());
    for (const auto& e : extremes) v.push_back(kinematic_value(e, static_cast<Kinematic>(k)));
    const auto& spec = kKinematicBins[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(k)] = build_histogram(v, spec.bins, spec.lo, spec.hi, spec.name);
  }
  return out;
}

inline std::vector<KinematicExtremes> trajectory_extremes(const std::vector<Trajectory>& trajs) {
  std::vector<KinematicExtremes> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(t.extremes());
  return out;
}

/// Reference l1 deviations from the test expert, in the
/// order max_accel, max_speed, min_accel, min_speed. Kept for trend checks only.
struct ReferenceDeviation {
  const char* model;
  std::array<double, kKinematicCount> l1;
};

inline constexpr std::array<ReferenceDeviation, 3> kReferenceDeviations = {{
    {"meta_airl", {0.32, 0.08, 0.30, 0.15}},
    {"pretrain", {0.48, 0.18, 0.41, 0.28}},
    {"scratch", {0.83, 0.27, 0.42, 0.33}},
}};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  MetricsRecord record;
  std::vector<KinematicExtremes> extremes;
};

inline EvalResult summarize_evaluation(const std::vector<Trajectory>& episodes, const TaskSpec& task,
                                       const DenseNet* disc) {
  EvalResult res;
  res.record.phase = "eval";
  res.record.task = task.style;
  summarize_episodes(episodes, res.record);
  res.extremes = trajectory_extremes(episodes);
  if (disc != nullptr) {
    const auto rewards = rollout_rewards(*disc, episodes);
    double total = 0.0;
    for (const auto& r : rewards) total += r.sum();
    res.record.total_reward = total / static_cast<double>(rewards.size());
  }
  return res;
}

/// Seeded roll-outs of a policy on a task. With `disc`, the record's total
/// reward is the mean per-episode sum of log D - log(1 - D) under that
/// discriminator. Episode i is identical to rollout(...)[i] for any worker count.
inline EvalResult evaluate(const Simulator& sim, const DenseNet& policy, const TaskSpec& task, int episodes,
                           std::uint64_t seed, bool greedy = false, const DenseNet* disc = nullptr,
                           int workers = 1) {
  require(episodes >= 1, "evaluate: episodes must be >= 1");
  std::vector<Trajectory> trajs(static_cast<std::size_t>(episodes));
  parallel_for(episodes, workers, [&](int i) {
    trajs[static_cast<std::size_t>(i)] = policy_episode(sim, task, policy, seed, i, greedy);
  });
  return summarize_evaluation(trajs, task, disc);
}

/// Oracle expert roll-outs; episode i uses scene seed derive_seed(seed, i).
inline EvalResult evaluate_oracle(const Simulator& sim, const TaskSpec& task, int episodes, std::uint64_t seed,
                                  int workers = 1) {
  require(episodes >= 1, "evaluate_oracle: episodes must be >= 1");
  std::vector<Trajectory> trajs(static_cast<std::size_t>(episodes));
  parallel_for(episodes, workers, [&](int i) {
    trajs[static_cast<std::size_t>(i)] = run_oracle_episode(sim, task, derive_seed(seed, static_cast<std::uint64_t>(i)));
  });
  return summarize_evaluation(trajs, task, nullptr);
}

// ---------------------------------------------------------------------------
// Model comparison
// ---------------------------------------------------------------------------

struct NamedModel {
  std::string name;
  ModelParams params;
};

struct ModelReport {
  std::string name;
  MetricsRecord record;
  KinematicHistograms histograms;
  std::array<double, kKinematicCount> l1{};
};

struct Comparison {
  std::string task;
  int episodes = 0;
  std::uint64_t seed = 0;
  std::size_t expert_count = 0;
  KinematicHistograms expert;
  std::vector<ModelReport> models;
};

/// Evaluates every model on the same seeds and measures the l1 deviation of its
/// kinematic histograms from the expert demonstrations. Total reward uses each
/// model's own discriminator.
inline Comparison compare_models(const Simulator& sim, const std::vector<NamedModel>& models,
                                 const std::vector<Trajectory>& expert, const TaskSpec& task, int episodes,
                                 std::uint64_t seed, bool greedy = false, int workers = 1) {
  require(!models.empty(), "compare_models: at least one model is required");
  require(!expert.empty(), "compare_models: expert dataset is empty");
  Comparison c;
  c.task = task.style;
  c.episodes = episodes;
  c.seed = seed;
  c.expert_count = expert.size();
  c.expert = kinematic_histograms(trajectory_extremes(expert));
  for (const auto& m : models) {
    const EvalResult r = evaluate(sim, m.params.policy, task, episodes, seed, greedy, &m.params.disc, workers);
    ModelReport rep;
    rep.name = m.name;
    rep.record = r.record;
    rep.histograms = kinematic_histograms(r.extremes);
    for (std::size_t k = 0; k < kKinematicCount; ++k) rep.l1[k] = l1_distance(rep.histograms[k], c.expert[k]);
    c.models.push_back(std::move(rep));
  }
  return c;
}

inline nlohmann::json metrics_to_json(const MetricsRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"phase", r.phase},
          {"meta_iteration", r.meta_iteration},
          {"iteration", r.iteration},
          {"task", r.task},
          {"disc_expert", num(r.disc_expert)},
          {"disc_generated", num(r.disc_generated)},
          {"disc_loss", num(r.disc_loss)},
          {"total_reward", num(r.total_reward)},
          {"rollout_steps", r.rollout_steps},
          {"decision_steps", r.decision_steps},
          {"success_ratio", r.success_ratio},
          {"crash_ratio", r.crash_ratio},
          {"timeout_ratio", r.timeout_ratio},
          {"max_accel", r.max_accel},
          {"min_accel", r.min_accel},
          {"max_speed", r.max_speed},
          {"min_speed", r.min_speed},
          {"episodes", r.episodes},
          {"disc_steps", r.disc_steps},
          {"policy_steps", r.policy_steps},
          {"policy_accepted", r.policy_accepted},
          {"policy_kl", r.policy_kl}};
}

inline nlohmann::json histogram_to_json(const Histogram& h) {
  return {{"metric", h.metric}, {"edges", h.edges}, {"density", h.density}, {"total", h.total}};
}

inline nlohmann::json comparison_to_json(const Comparison& c) {
  nlohmann::json j;
  j["task"] = c.task;
  j["episodes"] = c.episodes;
  j["seed"] = c.seed;
  std::vector<std::string> names;
  for (const auto& b : kKinematicBins) names.emplace_back(b.name);
  j["kinematics"] = names;
  nlohmann::json expert = {{"count", c.expert_count}, {"histograms", nlohmann::json::object()}};
  for (std::size_t k = 0; k < kKinematicCount; ++k) expert["histograms"][names[k]] = histogram_to_json(c.expert[k]);
  j["expert"] = expert;
  j["models"] = nlohmann::json::array();
  for (const auto& m : c.models) {
    nlohmann::json mj = {{"name", m.name}, {"metrics", metrics_to_json(m.record)}};
    mj["histograms"] = nlohmann::json::object();
    mj["l1"] = nlohmann::json::object();
    for (std::size_t k = 0; k < kKinematicCount; ++k) {
      mj["histograms"][names[k]] = histogram_to_json(m.histograms[k]);
      mj["l1"][names[k]] = m.l1[k];
    }
    j["models"].push_back(mj);
  }
  nlohmann::json ref = nlohmann::json::object();
  for (const auto& r : kReferenceDeviations) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t k = 0; k < kKinematicCount; ++k) row[names[k]] = r.l1[k];
    ref[r.model] = row;
  }
  j["reference_l1"] = ref;
  return j;
}

inline std::string comparison_csv_header() {
  std::string s = "model";
  for (const auto& b : kKinematicBins) s += std::string(",l1_") + b.name;
  for (const auto& c : metrics_columns()) s += "," + c;
  return s + "\n";
}

/// One row per model: l1 deviations followed by the evaluation record.
inline std::string comparison_csv(const Comparison& c) {
  std::string s = comparison_csv_header();
  for (const auto& m : c.models) {
    s += m.name;
    for (double v : m.l1) s += "," + detail::fmt_double(v);
    s += "," + metrics_csv_row(m.record);
  }
  return s;
}

}  // namespace metairl
