#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metairl/adam.hpp"
#include "metairl/dense_net.hpp"
#include "metairl/error.hpp"
#include "metairl/expert.hpp"
#include "metairl/metrics.hpp"
#include "metairl/random.hpp"
#include "metairl/simulator.hpp"
#include "metairl/trajectory.hpp"
#include "metairl/trust_region.hpp"

namespace metairl {

inline constexpr int kDiscInputDim = kStateDim + kActionCount;

// ---------------------------------------------------------------------------
// Log-space helpers for D = exp(f) / (exp(f) + pi) = sigmoid(f - log pi)
// ---------------------------------------------------------------------------

/// log(sigmoid(z)) without overflow.
inline double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double disc_prob_from_logit(double f, double pi) {
  require(pi > 0.0, "disc_prob: policy probability must be > 0");
  return sigmoid(f - std::log(pi));
}

/// log D - log(1 - D), evaluated through log-sigmoids.
inline double reward_from_logit(double f, double pi) {
  require(pi > 0.0, "reward: policy probability must be > 0");
  const double z = f - std::log(pi);
  return log_sigmoid(z) - log_sigmoid(-z);
}

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

struct NetworkConfig {
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::Tanh;
  double policy_output_scale = 0.01;  // near-uniform initial policy

  bool operator==(const NetworkConfig&) const = default;
};

/// Joint parameter record: discriminator logit network f and policy network.
struct ModelParams {
  DenseNet disc;
  DenseNet policy;

  bool operator==(const ModelParams&) const = default;

  bool same_shape(const ModelParams& o) const { return disc.same_shape(o.disc) && policy.same_shape(o.policy); }

  static ModelParams initialized(const NetworkConfig& cfg, std::uint64_t seed) {
    std::vector<int> d{kDiscInputDim};
    d.insert(d.end(), cfg.hidden.begin(), cfg.hidden.end());
    d.push_back(1);
    std::vector<int> p{kStateDim};
    p.insert(p.end(), cfg.hidden.begin(), cfg.hidden.end());
    p.push_back(kActionCount);
    return {DenseNet::initialized(d, cfg.activation, derive_seed(seed, 1)),
            DenseNet::initialized(p, cfg.activation, derive_seed(seed, 2), cfg.policy_output_scale)};
  }
};

inline Vector disc_input(const Vector& state, ActionId action) {
  Vector x = Vector::Zero(kDiscInputDim);
  x.head(kStateDim) = state;
  x[kStateDim + action.value] = 1.0;
  return x;
}

inline Vector policy_probs(const DenseNet& policy, const Vector& state) { return softmax(policy.forward(state)); }

inline double disc_prob(const DenseNet& disc, const DenseNet& policy, const Vector& state, ActionId action) {
  const double f = disc.forward(disc_input(state, action))[0];
  return disc_prob_from_logit(f, policy_probs(policy, state)[action.value]);
}

inline double reward(const DenseNet& disc, const DenseNet& policy, const Vector& state, ActionId action) {
  const double f = disc.forward(disc_input(state, action))[0];
  return reward_from_logit(f, policy_probs(policy, state)[action.value]);
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

/// State-action pairs with the policy probability used inside D.
struct PairBatch {
  Matrix inputs;  // kDiscInputDim x n
  Vector log_pi;

  Eigen::Index size() const { return inputs.cols(); }
};

/// Expert pairs use the current policy's probability of the demonstrated action.
inline PairBatch expert_pairs(const std::vector<Trajectory>& demos, const DenseNet& policy) {
  std::size_t n = 0;
  for (const auto& t : demos) n += t.steps.size();
  PairBatch b;
  b.inputs.resize(kDiscInputDim, static_cast<Eigen::Index>(n));
  b.log_pi.resize(static_cast<Eigen::Index>(n));
  Matrix states(kStateDim, static_cast<Eigen::Index>(n));
  Eigen::Index j = 0;
  for (const auto& t : demos) {
    for (const auto& s : t.steps) {
      b.inputs.col(j) = disc_input(s.state, s.action);
      states.col(j) = s.state;
      ++j;
    }
  }
  const Matrix probs = softmax_columns(policy.forward_batch(states));
  j = 0;
  for (const auto& t : demos) {
    for (const auto& s : t.steps) {
      b.log_pi[j] = std::log(probs(s.action.value, j));
      ++j;
    }
  }
  return b;
}

/// Generated pairs use the behavior probabilities stored at roll-out time.
inline PairBatch generated_pairs(const std::vector<Trajectory>& rollouts) {
  std::size_t n = 0;
  for (const auto& t : rollouts) n += t.steps.size();
  PairBatch b;
  b.inputs.resize(kDiscInputDim, static_cast<Eigen::Index>(n));
  b.log_pi.resize(static_cast<Eigen::Index>(n));
  Eigen::Index j = 0;
  for (const auto& t : rollouts) {
    require(t.behavior_prob.size() == t.steps.size(), "generated trajectory lacks behavior probabilities");
    for (std::size_t k = 0; k < t.steps.size(); ++k) {
      b.inputs.col(j) = disc_input(t.steps[k].state, t.steps[k].action);
      b.log_pi[j] = std::log(t.behavior_prob[k]);
      ++j;
    }
  }
  return b;
}

inline PairBatch select_columns(const PairBatch& b, const std::vector<Eigen::Index>& idx) {
  PairBatch out;
  out.inputs.resize(b.inputs.rows(), static_cast<Eigen::Index>(idx.size()));
  out.log_pi.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.inputs.col(static_cast<Eigen::Index>(k)) = b.inputs.col(idx[k]);
    out.log_pi[static_cast<Eigen::Index>(k)] = b.log_pi[idx[k]];
  }
  return out;
}

/// D for every pair of a batch.
inline Vector disc_probs(const DenseNet& disc, const PairBatch& b) {
  const Matrix f = disc.forward_batch(b.inputs);
  Vector d(b.size());
  for (Eigen::Index j = 0; j < b.size(); ++j) d[j] = sigmoid(f(0, j) - b.log_pi[j]);
  return d;
}

struct DiscLoss {
  double value = 0.0;
  Vector gradient;  // with respect to the discriminator parameters
};

/// Cross-entropy with expert pairs labeled 1 and generated pairs labeled 0:
/// mean(-log D) over expert + mean(-log(1 - D)) over generated.
inline DiscLoss disc_loss(const DenseNet& disc, const PairBatch& expert, const PairBatch& generated,
                          bool with_gradient = true) {
  require(expert.size() > 0 && generated.size() > 0, "disc_loss: both batches must be nonempty");
  DiscLoss out;
  auto accumulate = [&](const PairBatch& b, bool expert_label) {
    ForwardTape tape;
    const Matrix f = disc.forward_batch(b.inputs, with_gradient ? &tape : nullptr);
    const double inv = 1.0 / static_cast<double>(b.size());
    Matrix df(1, b.size());
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double z = f(0, j) - b.log_pi[j];
      if (expert_label) {
        out.value -= log_sigmoid(z) * inv;
        df(0, j) = -(1.0 - sigmoid(z)) * inv;
      } else {
        out.value -= log_sigmoid(-z) * inv;
        df(0, j) = sigmoid(z) * inv;
      }
    }
    if (with_gradient) {
      const Vector g = disc.backward_batch(tape, df);
      out.gradient = out.gradient.size() ? Vector(out.gradient + g) : g;
    }
  };
  accumulate(expert, true);
  accumulate(generated, false);
  if (!std::isfinite(out.value)) throw NumericalError("discriminator loss is not finite");
  return out;
}

struct DiscUpdateStats {
  int steps = 0;
  double last_loss = std::numeric_limits<double>::quiet_NaN();
};

/// k_D ADAM steps, each on a balanced minibatch drawn with replacement
/// (half expert pairs, half generated pairs).
inline DiscUpdateStats update_discriminator(DenseNet& disc, AdamState& adam, const PairBatch& expert,
                                            const PairBatch& generated, int k_d, int batch_size, Rng& rng) {
  require(k_d >= 1, "update_discriminator: k_D must be >= 1");
  require(batch_size >= 2, "update_discriminator: batch size must be >= 2");
  require(expert.size() > 0 && generated.size() > 0, "update_discriminator: empty pair pool");
  DiscUpdateStats stats;
  const int half = batch_size / 2;
  std::vector<Eigen::Index> ie(half), ig(half);
  for (int step = 0; step < k_d; ++step) {
    for (int k = 0; k < half; ++k) {
      ie[k] = std::uniform_int_distribution<Eigen::Index>(0, expert.size() - 1)(rng);
      ig[k] = std::uniform_int_distribution<Eigen::Index>(0, generated.size() - 1)(rng);
    }
    const DiscLoss loss = disc_loss(disc, select_columns(expert, ie), select_columns(generated, ig));
    adam_step(disc, loss.gradient, adam);
    stats.steps += 1;
    stats.last_loss = loss.value;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

inline ActionId sample_action(const Vector& probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (int a = 0; a < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return {a};
  }
  return {static_cast<int>(probs.size()) - 1};
}

/// Episode i of a seeded roll-out: scene seed derive_seed(seed, 2i), action seed
/// derive_seed(seed, 2i + 1).
inline Trajectory policy_episode(const Simulator& sim, const TaskSpec& task, const DenseNet& policy,
                                 std::uint64_t seed, int i, bool greedy = false) {
  Rng rng(derive_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1));
  return run_episode(sim, task, derive_seed(seed, 2 * static_cast<std::uint64_t>(i)),
                     [&](const Scene&, const Vector& state) {
                       const Vector p = policy_probs(policy, state);
                       ActionId a;
                       if (greedy) {
                         Eigen::Index best;
                         p.maxCoeff(&best);
                         a.value = static_cast<int>(best);
                       } else {
                         a = sample_action(p, rng);
                       }
                       return std::make_pair(a, p[a.value]);
                     });
}

/// Rolls out `episodes` episodes under the policy (see policy_episode for seeding).
inline std::vector<Trajectory> rollout(const Simulator& sim, const TaskSpec& task, const DenseNet& policy,
                                       int episodes, std::uint64_t seed, bool greedy = false) {
  require(episodes >= 1, "rollout: episodes must be >= 1");
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(episodes));
  for (int i = 0; i < episodes; ++i) out.push_back(policy_episode(sim, task, policy, seed, i, greedy));
  return out;
}

/// Per-step rewards r = log D - log(1 - D) for a set of roll-outs, one vector per episode.
inline std::vector<Vector> rollout_rewards(const DenseNet& disc, const std::vector<Trajectory>& rollouts) {
  std::vector<Vector> out;
  out.reserve(rollouts.size());
  for (const auto& t : rollouts) {
    Matrix x(kDiscInputDim, static_cast<Eigen::Index>(t.steps.size()));
    for (std::size_t k = 0; k < t.steps.size(); ++k) {
      x.col(static_cast<Eigen::Index>(k)) = disc_input(t.steps[k].state, t.steps[k].action);
    }
    const Matrix f = disc.forward_batch(x);
    Vector r(x.cols());
    for (Eigen::Index k = 0; k < x.cols(); ++k) r[k] = reward_from_logit(f(0, k), t.behavior_prob[k]);
    if (!r.allFinite()) throw NumericalError("non-finite reward in generated batch");
    out.push_back(std::move(r));
  }
  return out;
}

/// Discounted return-to-go per step minus the batch mean.
inline PolicyBatch make_policy_batch(const std::vector<Trajectory>& rollouts, const std::vector<Vector>& rewards,
                                     double gamma) {
  require(rollouts.size() == rewards.size(), "make_policy_batch: reward/trajectory count mismatch");
  std::size_t n = 0;
  for (const auto& t : rollouts) n += t.steps.size();
  PolicyBatch b;
  b.states.resize(kStateDim, static_cast<Eigen::Index>(n));
  b.actions.resize(n);
  b.behavior_prob.resize(static_cast<Eigen::Index>(n));
  b.advantages.resize(static_cast<Eigen::Index>(n));
  Eigen::Index j = 0;
  for (std::size_t e = 0; e < rollouts.size(); ++e) {
    const auto& t = rollouts[e];
    const Eigen::Index start = j;
    for (std::size_t k = 0; k < t.steps.size(); ++k, ++j) {
      b.states.col(j) = t.steps[k].state;
      b.actions[j] = t.steps[k].action.value;
      b.behavior_prob[j] = t.behavior_prob[k];
    }
    double g = 0.0;
    for (Eigen::Index k = static_cast<Eigen::Index>(t.steps.size()) - 1; k >= 0; --k) {
      g = rewards[e][k] + gamma * g;
      b.advantages[start + k] = g;
    }
  }
  b.advantages.array() -= b.advantages.mean();
  return b;
}

struct PolicyUpdateStats {
  int steps = 0;
  int accepted = 0;
  double max_kl = 0.0;
  std::vector<TrustRegionReport> reports;
};

/// k_G trust-region steps on one batch of advantages.
inline PolicyUpdateStats update_policy(DenseNet& policy, const PolicyBatch& batch, int k_g,
                                       const TrustRegionConfig& config) {
  require(k_g >= 1, "update_policy: k_G must be >= 1");
  PolicyUpdateStats stats;
  for (int i = 0; i < k_g; ++i) {
    TrustRegionReport rep = trust_region_step(policy, batch, config);
    stats.steps += 1;
    if (rep.accepted) {
      stats.accepted += 1;
      stats.max_kl = std::max(stats.max_kl, rep.kl);
    }
    stats.reports.push_back(std::move(rep));
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Inner loop
// ---------------------------------------------------------------------------

struct AirlConfig {
  int k_d = 50;
  int k_g = 1;
  int episodes_per_iteration = 20;
  int disc_batch = 128;
  AdamConfig disc_adam{};
  TrustRegionConfig trust_region{};
  double gamma = 0.99;
  int metric_pairs = 2000;  // expert pairs sampled for the disc_expert metric (0 = all)

  void validate() const {
    require(k_d >= 1 && k_g >= 1, "airl: k_D and k_G must be >= 1");
    require(episodes_per_iteration >= 1, "airl: episodes per iteration must be >= 1");
    require(disc_batch >= 2, "airl: discriminator batch must be >= 2");
    require(disc_adam.step_size > 0.0, "airl: discriminator step size must be > 0");
    require(gamma >= 0.0 && gamma <= 1.0, "airl: gamma must lie in [0,1]");
    require(metric_pairs >= 0, "airl: metric_pairs must be >= 0");
    trust_region.validate();
  }

  bool operator==(const AirlConfig&) const = default;
};

/// Mutable state of one AIRL run: parameters plus the discriminator optimizer
/// and the minibatch sampler.
struct AirlSession {
  ModelParams params;
  AdamState adam;
  Rng rng;
  std::vector<double> accepted_kls;
  int disc_steps = 0;
  int policy_steps = 0;

  AirlSession(ModelParams start, const AirlConfig& config, std::uint64_t seed)
      : params(std::move(start)), adam(params.disc.parameter_count(), config.disc_adam), rng(seed) {}
};

/// One AIRL iteration: roll out, k_D discriminator steps, rewards from the
/// updated discriminator, k_G policy steps. Metrics describe the roll-outs and
/// the discriminator after its update.
inline MetricsRecord airl_iteration(const Simulator& sim, const TaskSpec& task, AirlSession& session,
                                    const std::vector<Trajectory>& demos, const AirlConfig& config,
                                    std::uint64_t seed) {
  auto& params = session.params;
  const auto rollouts = rollout(sim, task, params.policy, config.episodes_per_iteration, seed);
  const PairBatch gen = generated_pairs(rollouts);
  const PairBatch exp = expert_pairs(demos, params.policy);

  const auto dstats =
      update_discriminator(params.disc, session.adam, exp, gen, config.k_d, config.disc_batch, session.rng);
  const auto rewards = rollout_rewards(params.disc, rollouts);
  const PolicyBatch batch = make_policy_batch(rollouts, rewards, config.gamma);

  MetricsRecord rec;
  rec.task = task.style;
  PairBatch metric_exp = exp;
  if (config.metric_pairs > 0 && exp.size() > config.metric_pairs) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(config.metric_pairs));
    for (auto& k : idx) k = std::uniform_int_distribution<Eigen::Index>(0, exp.size() - 1)(session.rng);
    metric_exp = select_columns(exp, idx);
  }
  rec.disc_expert = disc_probs(params.disc, metric_exp).mean();
  rec.disc_generated = disc_probs(params.disc, gen).mean();
  rec.disc_loss = dstats.last_loss;
  double total = 0.0;
  for (const auto& r : rewards) total += r.sum();
  rec.total_reward = total / static_cast<double>(rewards.size());
  summarize_episodes(rollouts, rec);

  const auto pstats = update_policy(params.policy, batch, config.k_g, config.trust_region);
  for (const auto& rep : pstats.reports) {
    if (rep.accepted) session.accepted_kls.push_back(rep.kl);
  }
  rec.disc_steps = dstats.steps;
  rec.policy_steps = pstats.steps;
  rec.policy_accepted = pstats.accepted;
  rec.policy_kl = pstats.max_kl;
  session.disc_steps += dstats.steps;
  session.policy_steps += pstats.steps;
  return rec;
}

struct InnerResult {
  ModelParams params;
  std::vector<MetricsRecord> records;
  int disc_steps = 0;
  int policy_steps = 0;
  std::vector<double> accepted_kls;
};

/// Per-task AIRL for `iterations` iterations starting from `start`. Numerical
/// failures are rethrown with the task and iteration attached.
inline InnerResult inner_train(const Simulator& sim, const TaskSpec& task, const ModelParams& start,
                               const std::vector<Trajectory>& demos, int iterations, const AirlConfig& config,
                               std::uint64_t seed, const std::string& phase = "train") {
  require(!demos.empty(), "inner_train: expert data must be nonempty");
  require(iterations >= 0, "inner_train: iteration count must be >= 0");
  config.validate();
  InnerResult res;
  if (iterations == 0) {
    res.params = start;
    return res;
  }
  AirlSession session(start, config, derive_seed(seed, 0));
  for (int it = 0; it < iterations; ++it) {
    try {
      MetricsRecord rec =
          airl_iteration(sim, task, session, demos, config, derive_seed(seed, 1 + static_cast<std::uint64_t>(it)));
      rec.phase = phase;
      rec.iteration = it;
      res.records.push_back(std::move(rec));
    } catch (const NumericalError& e) {
      throw NumericalError("task '" + task.style + "', inner iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  res.params = std::move(session.params);
  res.disc_steps = session.disc_steps;
  res.policy_steps = session.policy_steps;
  res.accepted_kls = std::move(session.accepted_kls);
  return res;
}

}  // namespace metairl
