#pragma once

#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "metairl/trajectory.hpp"

namespace metairl {

/// Per-iteration evaluation bundle. `phase` tells which loop produced it:
/// "train" (inner loop during meta-training), "online" (held-out adaptation
/// during meta-training), "adapt", "pretrain", "scratch" or "eval".
struct MetricsRecord {
  std::string phase;
  int meta_iteration = 0;
  int iteration = 0;
  std::string task;
  double disc_expert = std::numeric_limits<double>::quiet_NaN();
  double disc_generated = std::numeric_limits<double>::quiet_NaN();
  double disc_loss = std::numeric_limits<double>::quiet_NaN();
  double total_reward = std::numeric_limits<double>::quiet_NaN();
  double rollout_steps = 0.0;
  double decision_steps = 0.0;
  double success_ratio = 0.0;
  double crash_ratio = 0.0;
  double timeout_ratio = 0.0;
  double max_accel = 0.0;
  double min_accel = 0.0;
  double max_speed = 0.0;
  double min_speed = 0.0;
  int episodes = 0;
  int disc_steps = 0;
  int policy_steps = 0;
  int policy_accepted = 0;
  double policy_kl = 0.0;  // largest batch KL among accepted policy steps
};

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "phase",          "meta_iteration", "iteration",     "task",         "disc_expert",   "disc_generated",
      "disc_loss",      "total_reward",   "rollout_steps", "decision_steps", "success_ratio", "crash_ratio",
      "timeout_ratio",  "max_accel",      "min_accel",     "max_speed",    "min_speed",     "episodes",
      "disc_steps",     "policy_steps",   "policy_accepted", "policy_kl"};
  return cols;
}

inline std::string metrics_csv_header() {
  std::string s;
  for (const auto& c : metrics_columns()) {
    if (!s.empty()) s += ',';
    s += c;
  }
  return s + '\n';
}

namespace detail {
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline std::string metrics_csv_row(const MetricsRecord& r) {
  using detail::fmt_double;
  std::ostringstream o;
  o << r.phase << ',' << r.meta_iteration << ',' << r.iteration << ',' << r.task << ',' << fmt_double(r.disc_expert)
    << ',' << fmt_double(r.disc_generated) << ',' << fmt_double(r.disc_loss) << ',' << fmt_double(r.total_reward)
    << ',' << fmt_double(r.rollout_steps) << ',' << fmt_double(r.decision_steps) << ','
    << fmt_double(r.success_ratio) << ',' << fmt_double(r.crash_ratio) << ',' << fmt_double(r.timeout_ratio) << ','
    << fmt_double(r.max_accel) << ',' << fmt_double(r.min_accel) << ',' << fmt_double(r.max_speed) << ','
    << fmt_double(r.min_speed) << ',' << r.episodes << ',' << r.disc_steps << ',' << r.policy_steps << ','
    << r.policy_accepted << ',' << fmt_double(r.policy_kl) << '\n';
  return o.str();
}

/// Fills the episode-level fields (ratios, step counts, mean kinematic extremes).
inline void summarize_episodes(const std::vector<Trajectory>& episodes, MetricsRecord& r) {
  r.episodes = static_cast<int>(episodes.size());
  if (episodes.empty()) return;
  int success = 0, crash = 0, timeout = 0;
  double steps = 0, decision = 0, max_a = 0, min_a = 0, max_v = 0, min_v = 0;
  for (const auto& t : episodes) {
    success += t.termination == Termination::Success;
    crash += t.termination == Termination::Crash;
    timeout += t.termination == Termination::Timeout;
    steps += t.rollout_steps();
    decision += t.decision_steps;
    const auto k = t.extremes();
    max_a += k.max_accel;
    min_a += k.min_accel;
    max_v += k.max_speed;
    min_v += k.min_speed;
  }
  const double n = static_cast<double>(episodes.size());
  r.success_ratio = success / n;
  r.crash_ratio = crash / n;
  r.timeout_ratio = timeout / n;
  r.rollout_steps = steps / n;
  r.decision_steps = decision / n;
  r.max_accel = max_a / n;
  r.min_accel = min_a / n;
  r.max_speed = max_v / n;
  r.min_speed = min_v / n;
}

}  // namespace metairl
