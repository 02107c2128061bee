#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "metairl/dense_net.hpp"
#include "metairl/simulator.hpp"

namespace metairl {

struct TrajectoryStep {
  Vector state;           // encoding of the scene the action was taken in
  ActionId action;
  double speed = 0.0;     // ego speed after the step
  double accel = 0.0;     // ego acceleration applied during the step

  bool operator==(const TrajectoryStep& o) const {
    return state == o.state && action == o.action && speed == o.speed && accel == o.accel;
  }
};

struct KinematicExtremes {
  double max_accel = 0.0;
  double min_accel = 0.0;
  double max_speed = 0.0;
  double min_speed = 0.0;
};

/// One episode. `behavior_prob` is filled for generated roll-outs (probability of
/// each chosen action under the acting policy) and left empty for expert data.
struct Trajectory {
  std::string task_id;
  std::vector<TrajectoryStep> steps;
  std::vector<double> behavior_prob;
  Termination termination = Termination::None;
  int decision_steps = 0;

  int rollout_steps() const { return static_cast<int>(steps.size()); }

  KinematicExtremes extremes() const {
    KinematicExtremes k;
    k.max_accel = k.max_speed = -std::numeric_limits<double>::infinity();
    k.min_accel = k.min_speed = std::numeric_limits<double>::infinity();
    for (const auto& s : steps) {
      k.max_accel = std::max(k.max_accel, s.accel);
      k.min_accel = std::min(k.min_accel, s.accel);
      k.max_speed = std::max(k.max_speed, s.speed);
      k.min_speed = std::min(k.min_speed, s.speed);
    }
    return k;
  }

  bool operator==(const Trajectory& o) const {
    return task_id == o.task_id && steps == o.steps && behavior_prob == o.behavior_prob &&
           termination == o.termination && decision_steps == o.decision_steps;
  }
};

/// Rolls out one episode. `driver(scene, state)` returns the action together with
/// the probability the acting policy assigned to it.
template <typename Driver>
Trajectory run_episode(const Simulator& sim, const TaskSpec& task, std::uint64_t seed, Driver&& driver) {
  Trajectory traj;
  traj.task_id = task.style;
  Scene scene = sim.reset(task, seed);
  traj.steps.reserve(static_cast<std::size_t>(sim.config().max_steps));
  for (;;) {
    Vector state = sim.encode_state(scene);
    const std::pair<ActionId, double> choice = driver(scene, state);
    StepOutcome out = sim.step(scene, choice.first);
    traj.steps.push_back({std::move(state), choice.first, out.scene.ego.speed, out.scene.ego.accel});
    traj.behavior_prob.push_back(choice.second);
    scene = std::move(out.scene);
    if (out.terminal) {
      traj.termination = out.kind;
      traj.decision_steps = out.decision_steps;
      break;
    }
  }
  return traj;
}

}  // namespace metairl
