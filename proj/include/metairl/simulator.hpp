#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "metairl/dense_net.hpp"
#include "metairl/error.hpp"
#include "metairl/random.hpp"
#include "metairl/task.hpp"

namespace metairl {

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

enum class GapChoice : std::uint8_t { Front = 0, Adjacent = 1, Rear = 2 };
enum class Lateral : std::uint8_t { Commit = 0, Hold = 1 };

inline constexpr int kActionCount = 6;

/// Joint longitudinal x lateral decision, packed as gap * 2 + lateral.
struct ActionId {
  int value = 0;

  static ActionId encode(GapChoice gap, Lateral lateral) {
    return {static_cast<int>(gap) * 2 + static_cast<int>(lateral)};
  }
  GapChoice gap() const { return static_cast<GapChoice>(value / 2); }
  Lateral lateral() const { return static_cast<Lateral>(value % 2); }
  bool valid() const { return value >= 0 && value < kActionCount; }

  bool operator==(const ActionId&) const = default;
};

// ---------------------------------------------------------------------------
// Scene
// ---------------------------------------------------------------------------

/// Positions are front-bumper coordinates along the road; a vehicle occupies
/// [position - length, position].
struct VehicleState {
  double position = 0.0;
  int lane = 0;  // 0 = current lane, 1 = target lane
  double lateral = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  double length = 4.8;
  double desired_speed = 0.0;  // IDM free-road speed; unused for the ego

  double rear() const { return position - length; }
  double center() const { return position - 0.5 * length; }

  bool operator==(const VehicleState&) const = default;
};

enum class Phase : std::uint8_t { Deciding = 0, Executing = 1, Done = 2, Aborted = 3 };
enum class Termination : std::uint8_t { None = 0, Crash = 1, Success = 2, Timeout = 3 };

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::None:
      return "none";
    case Termination::Crash:
      return "crash";
    case Termination::Success:
      return "success";
    case Termination::Timeout:
      return "timeout";
  }
  return "?";
}

struct Scene {
  TaskSpec task;
  VehicleState ego;
  std::vector<VehicleState> others;
  int clock = 0;
  Phase phase = Phase::Deciding;
  Termination termination = Termination::None;
  int decision_steps = 0;  // clock value when the latest lane-change attempt began
  ActionId last_action = ActionId::encode(GapChoice::Adjacent, Lateral::Hold);
  std::uint64_t seed = 0;

  bool terminal() const { return termination != Termination::None; }
  bool operator==(const Scene&) const = default;
};

struct StepOutcome {
  Scene scene;
  bool terminal = false;
  Termination kind = Termination::None;
  int decision_steps = 0;
  int rollout_steps = 0;
};

inline constexpr int kStateDim = 44;
inline constexpr int kSlotCount = 10;
inline constexpr double kSentinelPosition = 1000.0;

/// Environment and traffic-generation settings.
struct EnvConfig {
  double dt = 0.1;
  int max_steps = 300;
  double lateral_rate = 0.05;  // fraction of the lane change completed per step
  double safety_margin = 0.5;  // s, time headway below which a maneuver aborts
  double min_speed_floor = 1.0;

  int min_vehicles = 3;
  int max_vehicles = 10;
  double ego_speed_min = 15.0;
  double ego_speed_max = 25.0;
  double traffic_speed_min = 18.0;
  double traffic_speed_max = 23.0;
  double vehicle_length = 4.8;
  double spacing_min = 30.0;  // bumper gaps between target-lane vehicles
  double spacing_max = 60.0;
  double wide_gap_min = 120.0;  // every scene contains one wide target-lane gap
  double wide_gap_max = 160.0;
  double wide_gap_offset = 50.0;  // |center of the wide gap - ego| upper bound
  double lead_probability = 0.8;
  double follower_probability = 0.5;

  // IDM for surrounding traffic.
  double idm_time_headway = 1.0;
  double idm_min_gap = 2.0;
  double idm_accel = 1.5;
  double idm_decel = 2.0;
  double traffic_accel_max = 3.0;
  double traffic_accel_min = -8.0;

  // Ego longitudinal controller toward the chosen gap.
  double gap_gain_position = 0.3;
  double gap_gain_speed = 0.9;
  double open_gap_standoff = 2.5;  // s of headway used to place the ego next to an open-ended gap
  double ego_idm_decel = 1.5;

  void validate() const {
    require(dt > 0.0, "env: dt must be > 0");
    require(max_steps >= 1, "env: max_steps must be >= 1");
    require(lateral_rate > 0.0 && lateral_rate <= 1.0, "env: lateral_rate must lie in (0,1]");
    require(safety_margin >= 0.0, "env: safety_margin must be >= 0");
    require(0 <= min_vehicles && min_vehicles <= max_vehicles && max_vehicles <= kSlotCount,
            "env: vehicle count bounds must satisfy 0 <= min <= max <= 10");
    require(ego_speed_min > 0.0 && ego_speed_min <= ego_speed_max, "env: bad ego speed range");
    require(traffic_speed_min > 0.0 && traffic_speed_min <= traffic_speed_max, "env: bad traffic speed range");
    require(spacing_min > idm_min_gap && spacing_min <= spacing_max, "env: bad spacing range");
    require(wide_gap_min <= wide_gap_max, "env: bad wide-gap range");
  }

  bool operator==(const EnvConfig&) const = default;
};

/// One candidate merging gap on the target lane. Indices refer to Scene::others;
/// -1 means open road on that side.
struct Gap {
  int lead = -1;
  int rear = -1;
  double length = std::numeric_limits<double>::infinity();  // bumper-to-bumper
  double target_offset = 0.0;  // where the ego's front bumper should go, relative to the ego
  double speed = std::numeric_limits<double>::quiet_NaN();  // mean speed of the bounding vehicles

  bool open() const { return lead < 0 && rear < 0; }
};

using GapSet = std::array<Gap, 3>;  // indexed by GapChoice

struct Margins {
  double front = std::numeric_limits<double>::infinity();  // s
  double rear = std::numeric_limits<double>::infinity();   // s
  double min() const { return std::min(front, rear); }
};

/// Highway lane-change environment. The ego starts on lane 0 with a pending
/// lane-change command and must merge into lane 1; surrounding vehicles follow
/// IDM and never change lanes.
class Simulator {
 public:
  Simulator() = default;
  explicit Simulator(EnvConfig config) : config_(config) { config_.validate(); }

  const EnvConfig& config() const { return config_; }

  Scene reset(const TaskSpec& task, std::uint64_t seed) const {
    task.validate();
    Rng rng(seed);
    for (;;) {
      Scene scene = sample_scene(task, rng);
      scene.seed = seed;
      if (layout_valid(scene)) return scene;
    }
  }

  /// Target-lane vehicle indices sorted by center position (ties by index).
  std::vector<int> target_lane_order(const Scene& scene) const {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(scene.others.size()); ++i) {
      if (scene.others[i].lane == 1) idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      const double ca = scene.others[a].center();
      const double cb = scene.others[b].center();
      return ca != cb ? ca < cb : a < b;
    });
    return idx;
  }

  /// Front, adjacent and rear gaps around the ego's projection on the target lane.
  /// The adjacent gap's lead is the first target-lane vehicle whose center is not
  /// behind the ego's center; the front gap starts at that vehicle and the rear
  /// gap ends at the adjacent gap's rear vehicle.
  GapSet candidate_gaps(const Scene& scene) const {
    const auto order = target_lane_order(scene);
    const int n = static_cast<int>(order.size());
    const double ego_center = scene.ego.center();
    int k = 0;
    while (k < n && scene.others[order[k]].center() < ego_center) ++k;
    auto at = [&](int pos) { return (pos >= 0 && pos < n) ? order[pos] : -1; };

    GapSet gaps;
    gaps[static_cast<int>(GapChoice::Adjacent)] = make_gap(scene, at(k), at(k - 1));
    gaps[static_cast<int>(GapChoice::Front)] = at(k) >= 0 ? make_gap(scene, at(k + 1), at(k)) : Gap{};
    gaps[static_cast<int>(GapChoice::Rear)] = at(k - 1) >= 0 ? make_gap(scene, at(k - 1), at(k - 2)) : Gap{};
    return gaps;
  }

  /// Time headways between the ego and the vehicles bounding its adjacent gap.
  Margins adjacent_margins(const Scene& scene) const { return margins_for(scene, candidate_gaps(scene)); }

  Margins margins_for(const Scene& scene, const GapSet& gaps) const {
    const Gap& adj = gaps[static_cast<int>(GapChoice::Adjacent)];
    Margins m;
    if (adj.lead >= 0) {
      const auto& lead = scene.others[adj.lead];
      m.front = (lead.rear() - scene.ego.position) / std::max(scene.ego.speed, config_.min_speed_floor);
    }
    if (adj.rear >= 0) {
      const auto& rear = scene.others[adj.rear];
      m.rear = (scene.ego.rear() - rear.position) / std::max(rear.speed, config_.min_speed_floor);
    }
    return m;
  }

  StepOutcome step(const Scene& scene, ActionId action) const {
    require(!scene.terminal(), "step: scene is already terminal");
    require(action.valid(), "step: action id out of range");
    const double dt = config_.dt;

    const GapSet gaps = candidate_gaps(scene);
    const Gap& chosen = gaps[static_cast<int>(action.gap())];

    // Longitudinal accelerations from the current state.
    std::vector<double> accel(scene.others.size());
    for (std::size_t i = 0; i < scene.others.size(); ++i) {
      accel[i] = traffic_accel(scene, static_cast<int>(i));
    }
    double ego_accel = ego_acceleration(scene, chosen, gaps);

    Scene next = scene;
    integrate(next.ego, ego_accel, dt);
    for (std::size_t i = 0; i < next.others.size(); ++i) {
      integrate(next.others[i], accel[i], dt);
    }
    next.clock += 1;
    next.last_action = action;

    // Lateral motion is gated on the margins at the new step boundary.
    const Margins m = adjacent_margins(next);
    const bool safe = m.min() >= config_.safety_margin;
    double& lateral = next.ego.lateral;
    switch (scene.phase) {
      case Phase::Deciding:
        if (action.lateral() == Lateral::Commit && safe) {
          next.phase = Phase::Executing;
          next.decision_steps = next.clock;
          lateral = std::min(1.0, lateral + config_.lateral_rate);
        }
        break;
      case Phase::Executing:
        if (action.lateral() == Lateral::Commit && safe) {
          lateral = std::min(1.0, lateral + config_.lateral_rate);
        } else {
          next.phase = Phase::Aborted;
          lateral = std::max(0.0, lateral - config_.lateral_rate);
        }
        break;
      case Phase::Aborted:
        lateral = std::max(0.0, lateral - config_.lateral_rate);
        break;
      case Phase::Done:
        break;
    }
    if (next.phase == Phase::Aborted && lateral <= 0.0) {
      lateral = 0.0;
      next.phase = Phase::Deciding;
    }
    const bool merged = lateral >= 1.0 - 1e-9;
    if (merged) {
      lateral = 1.0;
      next.phase = Phase::Done;
    }
    next.ego.lane = lateral >= 0.5 ? 1 : 0;

    if (any_collision(next)) {
      next.termination = Termination::Crash;
    } else if (merged) {
      next.termination = Termination::Success;
    } else if (next.clock >= config_.max_steps) {
      next.termination = Termination::Timeout;
    }
    // Decision steps run up to and including the step that starts the final attempt.
    if (next.phase == Phase::Deciding || next.phase == Phase::Aborted) {
      next.decision_steps = next.clock;
    }

    StepOutcome out;
    out.kind = next.termination;
    out.terminal = next.terminal();
    out.decision_steps = next.decision_steps;
    out.rollout_steps = next.clock;
    out.scene = std::move(next);
    return out;
  }

  /// Fixed 44-feature encoding: ego block followed by 10 vehicle slots sorted by
  /// absolute relative position. Scales: positions / 100 m, speeds / 5 m/s,
  /// accelerations / 3 m/s^2; ego speed is centered at 22 m/s. Empty slots hold
  /// relative position 1000 m (feature 10.0) and zeros elsewhere.
  Vector encode_state(const Scene& scene) const {
    Vector s(kStateDim);
    const auto& ego = scene.ego;
    s[0] = (ego.speed - 22.0) / 5.0;
    s[1] = ego.accel / 3.0;
    s[2] = static_cast<double>(ego.lane);
    s[3] = ego.lateral;

    using Slot = std::tuple<double, double, double, double, double>;  // |dx|, dx, dv, a, lane
    std::vector<Slot> slots;
    slots.reserve(scene.others.size());
    for (const auto& v : scene.others) {
      const double dx = v.position - ego.position;
      slots.emplace_back(std::abs(dx), dx, v.speed - ego.speed, v.accel, static_cast<double>(v.lane));
    }
    std::sort(slots.begin(), slots.end());
    for (int k = 0; k < kSlotCount; ++k) {
      const int base = 4 + 4 * k;
      if (k < static_cast<int>(slots.size())) {
        const auto& [adx, dx, dv, a, lane] = slots[k];
        s[base + 0] = dx / 100.0;
        s[base + 1] = dv / 5.0;
        s[base + 2] = a / 3.0;
        s[base + 3] = lane;
      } else {
        s[base + 0] = kSentinelPosition / 100.0;
        s[base + 1] = 0.0;
        s[base + 2] = 0.0;
        s[base + 3] = 0.0;
      }
    }
    return s;
  }

  /// Same-lane bumper overlap anywhere in the scene. The ego occupies lane 0
  /// until the merge completes and lane 1 as soon as it has moved laterally.
  bool any_collision(const Scene& scene) const {
    for (int lane = 0; lane <= 1; ++lane) {
      std::vector<std::pair<double, double>> spans;  // rear, front
      for (const auto& v : scene.others) {
        if (v.lane == lane) spans.emplace_back(v.rear(), v.position);
      }
      if (ego_occupies(scene.ego, lane)) spans.emplace_back(scene.ego.rear(), scene.ego.position);
      std::sort(spans.begin(), spans.end());
      for (std::size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].first - spans[i - 1].second <= 0.0) return true;
      }
    }
    return false;
  }

  static bool ego_occupies(const VehicleState& ego, int lane) {
    return lane == 0 ? ego.lateral < 1.0 : ego.lateral > 0.0;
  }

  /// Ego acceleration for a chosen gap: proportional tracking of the gap's target
  /// spot, capped by IDM toward same-lane leaders, clamped to the style's limits.
  double ego_acceleration(const Scene& scene, const Gap& chosen, const GapSet& gaps) const {
    const auto& task = scene.task;
    const auto& ego = scene.ego;
    double a;
    if (chosen.open()) {
      a = config_.gap_gain_speed * (task.target_speed - ego.speed);
    } else {
      a = config_.gap_gain_position * chosen.target_offset + config_.gap_gain_speed * (chosen.speed - ego.speed);
    }
    // Never track above the style's target speed; leaders cap the rest.
    a = std::min(a, config_.gap_gain_speed * (task.target_speed - ego.speed));
    if (ego_occupies(ego, 0)) {
      if (auto lead = lane_leader(scene, 0, ego.position)) a = std::min(a, ego_idm(scene, *lead));
    }
    if (ego_occupies(ego, 1)) {
      const Gap& adj = gaps[static_cast<int>(GapChoice::Adjacent)];
      if (adj.lead >= 0) a = std::min(a, ego_idm(scene, adj.lead));
    }
    return std::clamp(a, task.min_accel, task.max_accel);
  }

  // Nearest vehicle on `lane` whose front bumper is ahead of `position`.
  std::optional<int> lane_leader(const Scene& scene, int lane, double position) const {
    std::optional<int> best;
    for (int i = 0; i < static_cast<int>(scene.others.size()); ++i) {
      const auto& v = scene.others[i];
      if (v.lane != lane || v.position <= position) continue;
      if (!best || v.position < scene.others[*best].position) best = i;
    }
    return best;
  }

 private:
  Gap make_gap(const Scene& scene, int lead, int rear) const {
    Gap g;
    g.lead = lead;
    g.rear = rear;
    const auto& ego = scene.ego;
    if (lead >= 0 && rear >= 0) {
      const auto& l = scene.others[lead];
      const auto& r = scene.others[rear];
      g.length = l.rear() - r.position;
      g.speed = 0.5 * (l.speed + r.speed);
      g.target_offset = 0.5 * (r.position + l.rear() + ego.length) - ego.position;
    } else if (lead >= 0) {
      const auto& l = scene.others[lead];
      g.speed = l.speed;
      g.target_offset = l.rear() - config_.open_gap_standoff * l.speed - ego.position;
    } else if (rear >= 0) {
      const auto& r = scene.others[rear];
      g.speed = r.speed;
      g.target_offset = r.position + ego.length + config_.open_gap_standoff * r.speed - ego.position;
    }
    return g;
  }

  static double idm(double speed, double desired_speed, double a_max, double b, double headway, double min_gap,
                    std::optional<std::pair<double, double>> leader /* bumper gap, leader speed */) {
    const double free = 1.0 - std::pow(speed / std::max(desired_speed, 1e-3), 4.0);
    double interaction = 0.0;
    if (leader) {
      const double gap = std::max(leader->first, 1e-3);
      const double dv = speed - leader->second;
      const double s_star = min_gap + std::max(0.0, speed * headway + speed * dv / (2.0 * std::sqrt(a_max * b)));
      interaction = (s_star / gap) * (s_star / gap);
    }
    return a_max * (free - interaction);
  }

  double ego_idm(const Scene& scene, std::optional<int> leader) const {
    const auto& ego = scene.ego;
    const auto& task = scene.task;
    std::optional<std::pair<double, double>> lead;
    if (leader) {
      const auto& l = scene.others[*leader];
      lead = std::make_pair(l.rear() - ego.position, l.speed);
    }
    // Only the interaction term matters here; the speed cap is applied separately.
    return idm(ego.speed, std::numeric_limits<double>::infinity(), task.max_accel, config_.ego_idm_decel, task.min_gap,
               config_.idm_min_gap, lead);
  }

  double traffic_accel(const Scene& scene, int i) const {
    const auto& v = scene.others[i];
    std::optional<std::pair<double, double>> lead;
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < static_cast<int>(scene.others.size()); ++j) {
      const auto& u = scene.others[j];
      if (j == i || u.lane != v.lane || u.position <= v.position) continue;
      if (u.position < best) {
        best = u.position;
        lead = std::make_pair(u.rear() - v.position, u.speed);
      }
    }
    const auto& ego = scene.ego;
    if (ego_occupies(ego, v.lane) && ego.position > v.position && ego.position < best) {
      lead = std::make_pair(ego.rear() - v.position, ego.speed);
    }
    const double a = idm(v.speed, v.desired_speed, config_.idm_accel, config_.idm_decel, config_.idm_time_headway,
                         config_.idm_min_gap, lead);
    return std::clamp(a, config_.traffic_accel_min, config_.traffic_accel_max);
  }

  // Constant-acceleration update over one step; a vehicle that would reverse
  // stops exactly and its recorded acceleration becomes the one that stops it.
  static void integrate(VehicleState& v, double a, double dt) {
    if (v.speed + a * dt < 0.0) a = -v.speed / dt;
    v.position += v.speed * dt + 0.5 * a * dt * dt;
    v.speed = std::max(0.0, v.speed + a * dt);
    v.accel = a;
  }

  Scene sample_scene(const TaskSpec& task, Rng& rng) const {
    const auto& c = config_;
    Scene scene;
    scene.task = task;
    scene.ego.length = c.vehicle_length;
    scene.ego.speed = uniform(rng, c.ego_speed_min, c.ego_speed_max);
    scene.ego.desired_speed = task.target_speed;
    const int n = uniform_int(rng, c.min_vehicles, c.max_vehicles);
    int remaining = n;

    auto add = [&](double position, int lane, double speed) {
      VehicleState v;
      v.position = position;
      v.lane = lane;
      v.speed = speed;
      v.desired_speed = speed;
      v.length = c.vehicle_length;
      scene.others.push_back(v);
      --remaining;
    };

    const double ego_v = scene.ego.speed;
    const double lane_speed = uniform(rng, c.traffic_speed_min, c.traffic_speed_max);
    if (remaining >= 2 && uniform(rng, 0.0, 1.0) < c.lead_probability) {
      add(uniform(rng, 100.0, 150.0), 0, lane_speed + uniform(rng, -1.0, 2.0));
    }
    if (remaining >= 2 && uniform(rng, 0.0, 1.0) < c.follower_probability) {
      add(-uniform(rng, 30.0, 60.0), 0, ego_v + uniform(rng, -2.0, 1.0));
    }
    if (remaining > 0) {
      const double wide = uniform(rng, c.wide_gap_min, c.wide_gap_max);
      const double center = scene.ego.center() + uniform(rng, -c.wide_gap_offset, c.wide_gap_offset);
      const int ahead = uniform_int(rng, 0, remaining);
      const int behind = remaining - ahead;
      double front = center + 0.5 * wide;  // rear bumper of the first vehicle ahead of the wide gap
      for (int i = 0; i < ahead; ++i) {
        add(front + c.vehicle_length, 1, lane_speed + uniform(rng, -0.5, 0.5));
        front += c.vehicle_length + uniform(rng, c.spacing_min, c.spacing_max);
      }
      double back = center - 0.5 * wide;  // front bumper of the first vehicle behind it
      for (int i = 0; i < behind; ++i) {
        add(back, 1, lane_speed + uniform(rng, -0.5, 0.5));
        back -= c.vehicle_length + uniform(rng, c.spacing_min, c.spacing_max);
      }
    }
    return scene;
  }

  bool layout_valid(const Scene& scene) const {
    for (int lane = 0; lane <= 1; ++lane) {
      std::vector<std::pair<double, double>> spans;
      for (const auto& v : scene.others) {
        if (v.lane == lane) spans.emplace_back(v.rear(), v.position);
      }
      if (lane == 0) spans.emplace_back(scene.ego.rear(), scene.ego.position);
      std::sort(spans.begin(), spans.end());
      for (std::size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].first - spans[i - 1].second <= config_.idm_min_gap) return false;
      }
    }
    return true;
  }

  EnvConfig config_;
};

}  // namespace metairl
