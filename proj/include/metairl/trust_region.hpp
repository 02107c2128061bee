#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "metairl/dense_net.hpp"
#include "metairl/error.hpp"

namespace metairl {

struct TrustRegionConfig {
  double max_kl = 0.01;  // delta: bound on mean KL(old || new) per update
  int cg_iterations = 10;
  double cg_tolerance = 1e-10;
  double damping = 0.1;
  double backtrack_shrink = 0.5;
  int max_backtracks = 10;
  // Line search accepts a candidate whose batch KL is at most this multiple of max_kl.
  double kl_slack = 1.5;

  void validate() const {
    require(max_kl > 0.0 && std::isfinite(max_kl), "trust region: max_kl must be positive");
    require(cg_iterations >= 1, "trust region: cg_iterations must be >= 1");
    require(max_backtracks >= 1, "trust region: max_backtracks must be >= 1");
    require(cg_tolerance >= 0.0, "trust region: cg_tolerance must be non-negative");
    require(damping >= 0.0, "trust region: damping must be non-negative");
    require(backtrack_shrink > 0.0 && backtrack_shrink < 1.0, "trust region: shrink factor must lie in (0,1)");
    require(kl_slack >= 1.0, "trust region: kl_slack must be >= 1");
  }

  bool operator==(const TrustRegionConfig&) const = default;
};

/// On-policy samples for one policy update. Column j of `states` pairs with
/// actions[j], the behavior-policy probability of that action, and its advantage.
struct PolicyBatch {
  Matrix states;
  std::vector<int> actions;
  Vector behavior_prob;
  Vector advantages;

  Eigen::Index size() const { return states.cols(); }

  void validate(int state_dim, int action_count) const {
    const auto n = states.cols();
    require(n > 0, "policy batch is empty");
    require(states.rows() == state_dim, "policy batch state dimension mismatch");
    require(static_cast<Eigen::Index>(actions.size()) == n && behavior_prob.size() == n && advantages.size() == n,
            "policy batch columns are inconsistent");
    for (Eigen::Index j = 0; j < n; ++j) {
      require(actions[j] >= 0 && actions[j] < action_count, "policy batch action out of range");
      require(behavior_prob[j] > 0.0 && behavior_prob[j] <= 1.0, "behavior probability outside (0,1]");
    }
  }
};

struct TrustRegionReport {
  bool accepted = false;
  bool zero_gradient = false;
  double kl = 0.0;
  double surrogate_improvement = 0.0;
  int backtracks = 0;
  std::string error;
};

/// Conjugate gradient for A x = b with A symmetric positive definite, given only
/// as a matrix-vector product.
inline Vector conjugate_gradient(const std::function<Vector(const Vector&)>& apply, const Vector& b, int max_iterations,
                                 double tolerance) {
  Vector x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = b;
  double rr = r.squaredNorm();
  for (int i = 0; i < max_iterations && rr > tolerance; ++i) {
    const Vector ap = apply(p);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap) || pap <= 0.0) {
      throw NumericalError("conjugate gradient: operator is not positive definite along search direction");
    }
    const double alpha = rr / pap;
    x += alpha * p;
    r -= alpha * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return x;
}

/// Mean over columns of KL(old || new) between categorical distributions.
inline double mean_kl(const Matrix& old_probs, const Matrix& new_probs) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < old_probs.cols(); ++j) {
    for (Eigen::Index a = 0; a < old_probs.rows(); ++a) {
      const double p = old_probs(a, j);
      if (p > 0.0) total += p * (std::log(p) - std::log(new_probs(a, j)));
    }
  }
  return total / static_cast<double>(old_probs.cols());
}

namespace detail {

inline double surrogate(const Matrix& probs, const PolicyBatch& batch) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    s += probs(batch.actions[j], j) / batch.behavior_prob[j] * batch.advantages[j];
  }
  return s / static_cast<double>(batch.size());
}

}  // namespace detail

/// Natural-gradient policy update constrained by mean KL. The surrogate is the
/// importance-weighted advantage; the step direction solves F x = g by conjugate
/// gradient (F is the damped Fisher matrix of the softmax policy) and a
/// backtracking line search enforces KL <= kl_slack * max_kl together with a
/// positive surrogate improvement. On any failure the policy is left untouched.
inline TrustRegionReport trust_region_step(DenseNet& policy, const PolicyBatch& batch, const TrustRegionConfig& config) {
  config.validate();
  batch.validate(policy.input_dim(), policy.output_dim());
  TrustRegionReport report;
  const auto n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  ForwardTape tape;
  const Matrix old_probs = softmax_columns(policy.forward_batch(batch.states, &tape));
  const double old_surrogate = detail::surrogate(old_probs, batch);

  Matrix dlogits = Matrix::Zero(policy.output_dim(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double weight = old_probs(batch.actions[j], j) / batch.behavior_prob[j] * batch.advantages[j] * inv_n;
    dlogits.col(j) = -weight * old_probs.col(j);
    dlogits(batch.actions[j], j) += weight;
  }
  const Vector gradient = policy.backward_batch(tape, dlogits);
  if (!gradient.allFinite()) {
    report.error = "non-finite surrogate gradient";
    return report;
  }
  if (!(gradient.norm() > 0.0)) {
    report.zero_gradient = true;
    return report;
  }

  auto fisher_product = [&](const Vector& v) -> Vector {
    const Matrix jv = policy.jvp_batch(tape, v);
    Matrix weighted(jv.rows(), jv.cols());
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto p = old_probs.col(j);
      weighted.col(j) = (p.cwiseProduct(jv.col(j)) - p * p.dot(jv.col(j))) * inv_n;
    }
    Vector out = policy.backward_batch(tape, weighted) + config.damping * v;
    if (!out.allFinite()) {
      throw NumericalError("non-finite Fisher-vector product");
    }
    return out;
  };

  Vector full_step;
  try {
    const Vector direction = conjugate_gradient(fisher_product, gradient, config.cg_iterations, config.cg_tolerance);
    const double shs = 0.5 * direction.dot(fisher_product(direction));
    if (!(shs > 0.0) || !std::isfinite(shs)) {
      report.error = "degenerate natural-gradient direction";
      return report;
    }
    full_step = direction / std::sqrt(shs / config.max_kl);
  } catch (const NumericalError& e) {
    report.error = e.what();
    return report;
  }

  const Vector start = policy.parameters();
  DenseNet candidate = policy;
  double fraction = 1.0;
  for (int k = 0; k < config.max_backtracks; ++k, fraction *= config.backtrack_shrink) {
    const Vector trial = start + fraction * full_step;
    if (!trial.allFinite()) break;
    candidate.set_parameters(trial);
    const Matrix new_probs = softmax_columns(candidate.forward_batch(batch.states));
    const double kl = mean_kl(old_probs, new_probs);
    const double improvement = detail::surrogate(new_probs, batch) - old_surrogate;
    if (std::isfinite(kl) && kl <= config.kl_slack * config.max_kl && improvement > 0.0) {
      policy.set_parameters(trial);
      report.accepted = true;
      report.kl = kl;
      report.surrogate_improvement = improvement;
      report.backtracks = k;
      return report;
    }
  }
  report.backtracks = config.max_backtracks;
  report.error = "line search failed";
  return report;
}

}  // namespace metairl
