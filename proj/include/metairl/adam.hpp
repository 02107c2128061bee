#pragma once

#include <cmath>
#include <cstdint>

#include "metairl/dense_net.hpp"
#include "metairl/error.hpp"

namespace metairl {

struct AdamConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  AdamConfig config;
  Vector first_moment;
  Vector second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(Eigen::Index parameter_count, AdamConfig cfg)
      : config(cfg),
        first_moment(Vector::Zero(parameter_count)),
        second_moment(Vector::Zero(parameter_count)) {}
};

/// One bias-corrected ADAM update. `params` is only touched once the gradient
/// has been checked, so a rejected update leaves both params and state intact.
inline void adam_step(Vector& params, const Vector& grads, AdamState& state) {
  require(params.size() == grads.size(), "adam_step: gradient size does not match parameters");
  require(state.first_moment.size() == params.size() && state.second_moment.size() == params.size(),
          "adam_step: optimizer state size does not match parameters");
  if (!grads.allFinite()) {
    throw NumericalError("adam_step: non-finite gradient rejected at step " + std::to_string(state.step + 1));
  }
  const auto& c = state.config;
  state.step += 1;
  state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grads;
  state.second_moment = c.beta2 * state.second_moment + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  const Vector m_hat = state.first_moment / correction1;
  const Vector v_hat = state.second_moment / correction2;
  params.array() -= c.step_size * m_hat.array() / (v_hat.array().sqrt() + c.epsilon);
}

/// Convenience overload for a network: the updated weights pass the network's
/// finiteness check before they are installed.
inline void adam_step(DenseNet& net, const Vector& grads, AdamState& state) {
  Vector params = net.parameters();
  AdamState next = state;
  adam_step(params, grads, next);
  net.set_parameters(params);
  state = std::move(next);
}

}  // namespace metairl
