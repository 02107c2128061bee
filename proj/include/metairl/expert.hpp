#pragma once

#include "json.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "metairl/error.hpp"
#include "metairl/io.hpp"
#include "metairl/random.hpp"
#include "metairl/simulator.hpp"
#include "metairl/task.hpp"
#include "metairl/trajectory.hpp"

namespace metairl {

inline nlohmann::json task_to_json(const TaskSpec& t) {
  return {{"style", t.style},         {"min_gap", t.min_gap},           {"max_accel", t.max_accel},
          {"min_accel", t.min_accel}, {"target_speed", t.target_speed}, {"commit_patience", t.commit_patience}};
}

inline TaskSpec task_from_json(const nlohmann::json& j) {
  TaskSpec t;
  t.style = j.at("style").get<std::string>();
  t.min_gap = j.at("min_gap").get<double>();
  t.max_accel = j.at("max_accel").get<double>();
  t.min_accel = j.at("min_accel").get<double>();
  t.target_speed = j.at("target_speed").get<double>();
  t.commit_patience = j.at("commit_patience").get<int>();
  t.validate();
  return t;
}

// ---------------------------------------------------------------------------
// Oracle expert
// ---------------------------------------------------------------------------

struct GapAssessment {
  bool valid = false;     // an actual gap (not the sentinel beyond an empty side)
  bool size_ok = false;   // long enough for the style's time gap on both sides
  bool blocked = false;   // the target spot lies beyond the current-lane leader
  double required_accel = 0.0;
  double preference = std::numeric_limits<double>::infinity();  // lower is better

  bool feasible(const TaskSpec& task) const {
    return valid && size_ok && !blocked && required_accel >= task.min_accel && required_accel <= task.max_accel;
  }
};

/// Horizon over which the oracle expects to reach a gap (s).
inline constexpr double kGapReachHorizon = 10.0;
/// Horizon used to place the gap a style would naturally drift to at its target speed (s).
inline constexpr double kPreferenceHorizon = 4.0;
/// Fraction of the style's min gap below which an executing oracle aborts.
inline constexpr double kAbortFraction = 0.75;

/// Constant acceleration that moves the ego by the gap's target offset, relative
/// to the gap, over kGapReachHorizon.
inline GapAssessment assess_gap(const Simulator& sim, const Scene& scene, const Gap& gap, bool adjacent) {
  GapAssessment a;
  const auto& ego = scene.ego;
  const auto& task = scene.task;
  a.valid = adjacent || !gap.open();
  if (!a.valid) return a;
  const double gap_speed = std::isnan(gap.speed) ? ego.speed : gap.speed;
  const double needed = ego.length + 2.0 * task.min_gap * std::max(gap_speed, 1.0);
  a.size_ok = gap.length >= needed;
  const double t = kGapReachHorizon;
  a.required_accel = 2.0 * (gap.target_offset - (ego.speed - gap_speed) * t) / (t * t);
  a.preference = std::abs(gap.target_offset - (task.target_speed - gap_speed) * kPreferenceHorizon);
  if (auto lead = sim.lane_leader(scene, 0, ego.position)) {
    const auto& l = scene.others[*lead];
    a.blocked = ego.position + gap.target_offset > l.rear() - task.min_gap * std::max(ego.speed, 1.0);
  }
  return a;
}

/// Rule-based expert for a driving style. Commits into the adjacent gap as soon
/// as both time gaps reach the style's minimum; otherwise holds and steers toward
/// the best feasible gap, re-scoring gaps every `commit_patience` steps. While a
/// maneuver is underway it aborts when the margin falls below kAbortFraction of
/// the minimum.
inline ActionId oracle_action(const Simulator& sim, const Scene& scene) {
  require(!scene.terminal(), "oracle_action: scene is terminal");
  const auto& task = scene.task;
  const GapSet gaps = sim.candidate_gaps(scene);
  const Margins m = sim.margins_for(scene, gaps);

  if (scene.phase == Phase::Executing) {
    const bool keep = m.min() >= kAbortFraction * task.min_gap;
    return ActionId::encode(GapChoice::Adjacent, keep ? Lateral::Commit : Lateral::Hold);
  }
  if (scene.phase == Phase::Aborted) {
    return ActionId::encode(GapChoice::Adjacent, Lateral::Hold);
  }
  if (m.min() >= task.min_gap) {
    return ActionId::encode(GapChoice::Adjacent, Lateral::Commit);
  }

  if (scene.clock % task.commit_patience != 0) {
    return ActionId::encode(scene.last_action.gap(), Lateral::Hold);
  }

  std::array<GapAssessment, 3> assess;
  for (int g = 0; g < 3; ++g) {
    assess[g] = assess_gap(sim, scene, gaps[g], g == static_cast<int>(GapChoice::Adjacent));
  }
  // Ties resolve in the order adjacent, front, rear.
  constexpr std::array<GapChoice, 3> order{GapChoice::Adjacent, GapChoice::Front, GapChoice::Rear};
  int best = -1;
  for (auto g : order) {
    const auto& a = assess[static_cast<int>(g)];
    if (a.feasible(task) && (best < 0 || a.preference < assess[best].preference)) best = static_cast<int>(g);
  }
  if (best < 0) {
    // Nothing fully acceptable: among gaps that are long enough, take the one
    // whose required acceleration overshoots the style's limits the least.
    auto excess = [&](const GapAssessment& a) {
      return std::max({0.0, a.required_accel - task.max_accel, task.min_accel - a.required_accel});
    };
    for (auto g : order) {
      const int i = static_cast<int>(g);
      const auto& a = assess[i];
      if (a.valid && a.size_ok && !a.blocked && (best < 0 || excess(a) < excess(assess[best]))) best = i;
    }
  }
  if (best < 0) {
    for (auto g : order) {
      const int i = static_cast<int>(g);
      if (assess[i].valid && (best < 0 || gaps[i].length > gaps[best].length)) best = i;
    }
  }
  return ActionId::encode(static_cast<GapChoice>(best), Lateral::Hold);
}

inline Trajectory run_oracle_episode(const Simulator& sim, const TaskSpec& task, std::uint64_t seed) {
  return run_episode(sim, task, seed, [&](const Scene& scene, const Vector&) {
    return std::make_pair(oracle_action(sim, scene), 1.0);
  });
}

// ---------------------------------------------------------------------------
// Demonstration datasets
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline const std::string kDatasetMagic = "MAIRLDS\x01";

struct DemoDataset {
  TaskSpec task;
  std::vector<Trajectory> trajectories;
  std::uint64_t seed = 0;
  std::uint32_t format_version = kDatasetFormatVersion;

  bool operator==(const DemoDataset& o) const {
    return task == o.task && trajectories == o.trajectories && seed == o.seed && format_version == o.format_version;
  }

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.steps.size();
    return n;
  }
};

/// Rolls out the oracle until `count` successful episodes are collected. Episode
/// i uses seed derive_seed(seed, i); failed episodes are dropped and replaced.
inline DemoDataset generate_demos(const Simulator& sim, const TaskSpec& task, int count, std::uint64_t seed) {
  require(count >= 1, "generate_demos: count must be >= 1");
  task.validate();
  DemoDataset ds;
  ds.task = task;
  ds.seed = seed;
  ds.trajectories.reserve(static_cast<std::size_t>(count));
  std::uint64_t attempts = 0;
  while (static_cast<int>(ds.trajectories.size()) < count) {
    Trajectory t = run_oracle_episode(sim, task, derive_seed(seed, attempts));
    ++attempts;
    t.behavior_prob.clear();
    if (t.termination == Termination::Success) ds.trajectories.push_back(std::move(t));
    if (attempts >= 20 && 2 * ds.trajectories.size() < attempts) {
      throw GenerationError("oracle for style '" + task.style + "' succeeded in only " +
                            std::to_string(ds.trajectories.size()) + " of " + std::to_string(attempts) +
                            " episodes; check the task parameters");
    }
  }
  return ds;
}

inline io::Bytes serialize_dataset(const DemoDataset& ds) {
  nlohmann::json header = {{"format", "metairl-demos"},
                           {"format_version", ds.format_version},
                           {"task", task_to_json(ds.task)},
                           {"seed", ds.seed},
                           {"count", ds.trajectories.size()},
                           {"state_dim", kStateDim}};
  io::Writer payload;
  payload.put<std::uint32_t>(static_cast<std::uint32_t>(ds.trajectories.size()));
  for (const auto& t : ds.trajectories) {
    io::Writer rec;
    rec.put_string(t.task_id);
    rec.put<std::uint8_t>(static_cast<std::uint8_t>(t.termination));
    rec.put<std::int32_t>(t.decision_steps);
    rec.put<std::uint32_t>(static_cast<std::uint32_t>(t.steps.size()));
    for (const auto& s : t.steps) {
      require(s.state.size() == kStateDim, "serialize_dataset: state has wrong dimension");
      rec.put_bytes({reinterpret_cast<const std::uint8_t*>(s.state.data()), kStateDim * sizeof(double)});
      rec.put<std::uint8_t>(static_cast<std::uint8_t>(s.action.value));
      rec.put<double>(s.speed);
      rec.put<double>(s.accel);
    }
    payload.put<std::uint64_t>(rec.bytes().size());
    payload.put_bytes(rec.bytes());
  }
  return io::seal(kDatasetMagic, header.dump(), payload.bytes());
}

inline DemoDataset deserialize_dataset(std::span<const std::uint8_t> file) {
  const auto sealed = io::unseal(kDatasetMagic, file);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(sealed.header_json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::Malformed, std::string("dataset header is not valid JSON: ") + e.what());
  }
  DemoDataset ds;
  try {
    ds.format_version = header.at("format_version").get<std::uint32_t>();
    if (ds.format_version != kDatasetFormatVersion) {
      throw FormatError(FormatError::Kind::VersionMismatch,
                        "dataset format version " + std::to_string(ds.format_version) + " is not supported (expected " +
                            std::to_string(kDatasetFormatVersion) + ")");
    }
    ds.task = task_from_json(header.at("task"));
    ds.seed = header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::Malformed, std::string("dataset header: ") + e.what());
  }

  io::Reader r(sealed.payload);
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint64_t>();
    io::Reader rec(r.get_bytes(len));
    Trajectory t;
    t.task_id = rec.get_string();
    t.termination = static_cast<Termination>(rec.get<std::uint8_t>());
    t.decision_steps = rec.get<std::int32_t>();
    const auto steps = rec.get<std::uint32_t>();
    t.steps.reserve(steps);
    for (std::uint32_t k = 0; k < steps; ++k) {
      TrajectoryStep s;
      s.state.resize(kStateDim);
      auto raw = rec.get_bytes(kStateDim * sizeof(double));
      std::memcpy(s.state.data(), raw.data(), raw.size());
      s.action.value = rec.get<std::uint8_t>();
      s.speed = rec.get<double>();
      s.accel = rec.get<double>();
      if (!s.action.valid()) throw FormatError(FormatError::Kind::Malformed, "dataset: invalid action id");
      t.steps.push_back(std::move(s));
    }
    if (rec.remaining() != 0) throw FormatError(FormatError::Kind::Malformed, "dataset: trajectory record length mismatch");
    if (t.task_id != ds.task.style) throw FormatError(FormatError::Kind::Malformed, "dataset: trajectory task id mismatch");
    ds.trajectories.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::Malformed, "dataset: trailing payload bytes");
  return ds;
}

inline void save_dataset(const DemoDataset& ds, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_dataset(ds));
}

inline DemoDataset load_dataset(const std::filesystem::path& path) { return deserialize_dataset(io::read_file(path)); }

inline std::string dataset_hash(const DemoDataset& ds) { return io::sha256_hex(serialize_dataset(ds)); }

}  // namespace metairl
