#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "metairl/error.hpp"

namespace metairl {

/// A driving style. Each style is one task of the meta-learning problem.
struct TaskSpec {
  std::string style;
  double min_gap = 1.2;        // accepted time gap to the target-lane neighbors (s)
  double max_accel = 3.0;      // m/s^2
  double min_accel = -3.0;     // m/s^2, negative
  double target_speed = 30.0;  // m/s
  int commit_patience = 5;     // steps between re-evaluations of the gap choice

  void validate() const {
    require(!style.empty(), "task: style name must not be empty");
    require(min_gap > 0.0 && std::isfinite(min_gap), "task '" + style + "': min_gap must be > 0");
    require(max_accel > 0.0 && min_accel < 0.0, "task '" + style + "': need max_accel > 0 > min_accel");
    require(target_speed > 0.0, "task '" + style + "': target_speed must be > 0");
    require(commit_patience >= 1, "task '" + style + "': commit_patience must be >= 1");
  }

  bool operator==(const TaskSpec&) const = default;
};

inline TaskSpec conservative_style() { return {"conservative", 2.0, 2.0, -2.0, 26.0, 8}; }
inline TaskSpec neutral_style() { return {"neutral", 1.2, 3.0, -3.0, 30.0, 5}; }
inline TaskSpec aggressive_style() { return {"aggressive", 0.6, 4.5, -4.5, 34.0, 3}; }

inline std::vector<TaskSpec> builtin_styles() { return {conservative_style(), neutral_style(), aggressive_style()}; }

/// Looks a style up by name in `styles`; throws UsageError when it is not defined.
inline const TaskSpec& find_style(const std::vector<TaskSpec>& styles, const std::string& name) {
  for (const auto& s : styles) {
    if (s.style == name) return s;
  }
  throw UsageError("unknown style '" + name + "'");
}

}  // namespace metairl
