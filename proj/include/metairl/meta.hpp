#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "metairl/airl.hpp"
#include "metairl/config.hpp"
#include "metairl/error.hpp"
#include "metairl/io.hpp"
#include "metairl/parallel.hpp"
#include "metairl/random.hpp"

namespace metairl {

// ---------------------------------------------------------------------------
// REPTILE update
// ---------------------------------------------------------------------------

/// theta + beta * mean(result_i - theta).
inline Vector reptile_vector(const Vector& theta, const std::vector<Vector>& results, double beta) {
  require(!results.empty(), "reptile_update: no task results");
  Vector delta = Vector::Zero(theta.size());
  for (const auto& r : results) {
    require(r.size() == theta.size(), "reptile_update: task result shape mismatch");
    delta += r - theta;
  }
  return theta + beta * (delta / static_cast<double>(results.size()));
}

/// Separate interpolation for the discriminator (beta_disc) and the policy (beta_policy).
inline ModelParams reptile_update(const ModelParams& theta, const std::vector<ModelParams>& results, double beta_disc,
                                  double beta_policy) {
  require(!results.empty(), "reptile_update: no task results");
  std::vector<Vector> disc, policy;
  for (const auto& r : results) {
    require(r.same_shape(theta), "reptile_update: task result shape mismatch");
    disc.push_back(r.disc.parameters());
    policy.push_back(r.policy.parameters());
  }
  ModelParams out = theta;
  out.disc.set_parameters(reptile_vector(theta.disc.parameters(), disc, beta_disc));
  out.policy.set_parameters(reptile_vector(theta.policy.parameters(), policy, beta_policy));
  return out;
}

/// Task indices for one meta iteration. When n is a multiple of the task count
/// every task appears equally often (in index order); otherwise tasks are drawn
/// uniformly with replacement.
inline std::vector<int> sample_tasks(int task_count, int n, Rng& rng) {
  require(task_count >= 1 && n >= 1, "sample_tasks: need at least one task and one slot");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  if (n % task_count == 0) {
    for (int r = 0; r < n / task_count; ++r) {
      for (int t = 0; t < task_count; ++t) out.push_back(t);
    }
  } else {
    for (int i = 0; i < n; ++i) out.push_back(uniform_int(rng, 0, task_count - 1));
  }
  return out;
}

/// Generic REPTILE outer loop over iterations [first, last).
///   inner(theta, task_indices, iteration) -> task-adapted parameters (failed tasks omitted)
///   aggregate(theta, results) -> next theta
///   after(iteration, theta) is called once the iteration is complete.
template <typename Params, typename Inner, typename Aggregate, typename After>
Params reptile_loop(Params theta, int first, int last, int task_count, int tasks_per_iteration, Rng& rng,
                    Inner&& inner, Aggregate&& aggregate, After&& after) {
  for (int it = first; it < last; ++it) {
    const std::vector<int> picks = sample_tasks(task_count, tasks_per_iteration, rng);
    std::vector<Params> results = inner(static_cast<const Params&>(theta), picks, it);
    if (results.empty()) {
      throw NumericalError("meta iteration " + std::to_string(it) + ": every task failed");
    }
    theta = aggregate(static_cast<const Params&>(theta), results);
    after(it, static_cast<const Params&>(theta));
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline const std::string kCheckpointMagic = "MAIRLCK\x01";

struct Checkpoint {
  std::string kind = "meta";  // meta | adapted | pretrain | scratch
  ModelParams params;
  MetaConfig config;
  int iteration = 0;  // completed meta iterations
  std::string rng_state;
  std::vector<std::string> tasks;  // task names the parameters were trained on
  int demo_count = 0;              // demonstrations used (adapted models)
  std::uint32_t format_version = kCheckpointFormatVersion;

  bool operator==(const Checkpoint&) const = default;
};

namespace detail {

inline void put_net(io::Writer& w, const DenseNet& net) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(net.sizes().size()));
  for (int s : net.sizes()) w.put<std::int32_t>(s);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(net.hidden_activation()));
  const Vector& p = net.parameters();
  w.put_doubles({p.data(), static_cast<std::size_t>(p.size())});
}

inline DenseNet get_net(io::Reader& r) {
  const auto layers = r.get<std::uint32_t>();
  if (layers < 2 || layers > 64) throw FormatError(FormatError::Kind::Malformed, "checkpoint: bad layer count");
  std::vector<int> sizes(layers);
  for (auto& s : sizes) {
    s = r.get<std::int32_t>();
    if (s <= 0) throw FormatError(FormatError::Kind::Malformed, "checkpoint: bad layer size");
  }
  const auto act = r.get<std::uint8_t>();
  if (act > static_cast<std::uint8_t>(Activation::Identity)) {
    throw FormatError(FormatError::Kind::Malformed, "checkpoint: bad activation");
  }
  DenseNet net(sizes, static_cast<Activation>(act));
  const auto values = r.get_doubles();
  if (static_cast<Eigen::Index>(values.size()) != net.parameter_count()) {
    throw FormatError(FormatError::Kind::Malformed, "checkpoint: parameter count does not match layer sizes");
  }
  try {
    net.set_parameters(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
  } catch (const NumericalError& e) {
    throw FormatError(FormatError::Kind::Malformed, std::string("checkpoint: ") + e.what());
  }
  return net;
}

}  // namespace detail

inline io::Bytes serialize_checkpoint(const Checkpoint& c) {
  const nlohmann::json header = {{"format", "metairl-checkpoint"},
                                 {"format_version", c.format_version},
                                 {"kind", c.kind},
                                 {"iteration", c.iteration},
                                 {"tasks", c.tasks},
                                 {"demo_count", c.demo_count},
                                 {"config", meta_to_json(c.config)},
                                 {"rng_state", c.rng_state}};
  io::Writer w;
  detail::put_net(w, c.params.disc);
  detail::put_net(w, c.params.policy);
  return io::seal(kCheckpointMagic, header.dump(), w.bytes());
}

inline Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> file) {
  const auto sealed = io::unseal(kCheckpointMagic, file);
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(sealed.header_json);
    c.format_version = header.at("format_version").get<std::uint32_t>();
    if (c.format_version != kCheckpointFormatVersion) {
      throw FormatError(FormatError::Kind::VersionMismatch,
                        "checkpoint format version " + std::to_string(c.format_version) +
                            " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    }
    c.kind = header.at("kind").get<std::string>();
    c.iteration = header.at("iteration").get<int>();
    c.tasks = header.at("tasks").get<std::vector<std::string>>();
    c.demo_count = header.at("demo_count").get<int>();
    c.config = meta_from_json(header.at("config"));
    c.rng_state = header.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::Malformed, std::string("checkpoint header: ") + e.what());
  } catch (const UsageError& e) {
    throw FormatError(FormatError::Kind::Malformed, std::string("checkpoint header: ") + e.what());
  }
  io::Reader r(sealed.payload);
  c.params.disc = detail::get_net(r);
  c.params.policy = detail::get_net(r);
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::Malformed, "checkpoint: trailing payload bytes");
  if (c.params.disc.input_dim() != kDiscInputDim || c.params.disc.output_dim() != 1 ||
      c.params.policy.input_dim() != kStateDim || c.params.policy.output_dim() != kActionCount) {
    throw FormatError(FormatError::Kind::Malformed, "checkpoint: network shapes do not match the environment");
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(io::read_file(path));
}

inline std::string checkpoint_hash(const Checkpoint& c) { return io::sha256_hex(serialize_checkpoint(c)); }

// ---------------------------------------------------------------------------
// Meta-training
// ---------------------------------------------------------------------------

struct MetaTask {
  TaskSpec task;
  std::vector<Trajectory> demos;
};

struct MetaHooks {
  std::function<void(const MetricsRecord&)> on_record;
  std::function<void(const Checkpoint&, bool final)> on_checkpoint;
  std::function<void(const std::string&)> on_log;
};

/// Fresh meta state: initialized networks, iteration 0, seeded task sampler.
inline Checkpoint initial_checkpoint(const MetaConfig& config, const std::vector<std::string>& tasks) {
  config.validate();
  Checkpoint c;
  c.kind = "meta";
  c.config = config;
  c.params = ModelParams::initialized(config.network, derive_seed(config.seed, 1));
  c.tasks = tasks;
  Rng rng(derive_seed(config.seed, 2));
  c.rng_state = rng_state(rng);
  return c;
}

inline std::uint64_t inner_seed(const MetaConfig& config, int iteration, int slot) {
  return derive_seed(derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(iteration)),
                     static_cast<std::uint64_t>(slot));
}

/// Meta-testing adaptation: AIRL on the target task starting from theta.
inline InnerResult adapt(const Simulator& sim, const ModelParams& theta, const TaskSpec& task,
                         const std::vector<Trajectory>& demos, int iterations, const AirlConfig& config,
                         std::uint64_t seed, const std::string& phase = "adapt") {
  require(!demos.empty(), "adapt: at least one demonstration is required");
  return inner_train(sim, task, theta, demos, iterations, config, seed, phase);
}

/// Runs meta iterations from `state.iteration` up to `config.meta_iterations`
/// (or `stop_after` total iterations when >= 0). Task runs within an iteration
/// may execute on `workers` threads; results are merged in slot order, so the
/// outcome does not depend on the worker count.
inline Checkpoint meta_train(const Simulator& sim, const std::vector<MetaTask>& tasks, Checkpoint state,
                             const MetaTask* held_out = nullptr, int workers = 1, const MetaHooks& hooks = {},
                             int stop_after = -1) {
  const MetaConfig& config = state.config;
  config.validate();
  require(!tasks.empty(), "meta_train: at least one training task is required");
  for (const auto& t : tasks) require(!t.demos.empty(), "meta_train: task '" + t.task.style + "' has no demos");
  const int last = stop_after >= 0 ? std::min(stop_after, config.meta_iterations) : config.meta_iterations;
  require(state.iteration >= 0 && state.iteration <= config.meta_iterations, "meta_train: bad start iteration");

  Rng rng;
  set_rng_state(rng, state.rng_state);
  auto emit = [&](const MetricsRecord& r) {
    if (hooks.on_record) hooks.on_record(r);
  };
  auto log = [&](const std::string& s) {
    if (hooks.on_log) hooks.on_log(s);
  };

  auto inner = [&](const ModelParams& theta, const std::vector<int>& picks, int it) {
    const int n = static_cast<int>(picks.size());
    std::vector<std::optional<InnerResult>> slots(static_cast<std::size_t>(n));
    std::vector<std::string> errors(static_cast<std::size_t>(n));
    parallel_for(n, workers, [&](int k) {
      const MetaTask& t = tasks[static_cast<std::size_t>(picks[static_cast<std::size_t>(k)])];
      try {
        slots[static_cast<std::size_t>(k)] = inner_train(sim, t.task, theta, t.demos, config.inner_iterations,
                                                         config.airl, inner_seed(config, it, k), "train");
      } catch (const NumericalError& e) {
        errors[static_cast<std::size_t>(k)] = e.what();
      }
    });
    std::vector<ModelParams> results;
    for (int k = 0; k < n; ++k) {
      auto& slot = slots[static_cast<std::size_t>(k)];
      if (!slot) {
        log("meta iteration " + std::to_string(it) + ": skipping failed task: " + errors[static_cast<std::size_t>(k)]);
        continue;
      }
      for (auto& rec : slot->records) {
        rec.meta_iteration = it;
        emit(rec);
      }
      results.push_back(std::move(slot->params));
    }
    return results;
  };
  auto aggregate = [&](const ModelParams& theta, const std::vector<ModelParams>& results) {
    return reptile_update(theta, results, config.beta_disc, config.beta_policy);
  };
  auto after = [&](int it, const ModelParams& theta) {
    state.params = theta;
    state.iteration = it + 1;
    state.rng_state = rng_state(rng);
    if (held_out != nullptr && config.online_test_every > 0 && (it + 1) % config.online_test_every == 0 &&
        config.adapt_iterations > 0) {
      const auto res = adapt(sim, theta, held_out->task, held_out->demos, config.adapt_iterations, config.airl,
                             derive_seed(derive_seed(config.seed, 3), static_cast<std::uint64_t>(it)), "online");
      for (auto rec : res.records) {
        rec.meta_iteration = it;
        emit(rec);
      }
    }
    const bool periodic = config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0;
    if (hooks.on_checkpoint && (periodic || it + 1 == last)) hooks.on_checkpoint(state, it + 1 == last);
  };

  state.params = reptile_loop(state.params, state.iteration, last, static_cast<int>(tasks.size()),
                              config.tasks_per_iteration, rng, inner, aggregate, after);
  return state;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// "Pretrained" baseline: one AIRL run on the pooled demonstrations of all
/// training tasks. Roll-outs cycle through the training environments; the run
/// gets `iterations` AIRL iterations in total.
inline InnerResult pooled_train(const Simulator& sim, const std::vector<MetaTask>& tasks, const ModelParams& start,
                                int iterations, const AirlConfig& config, std::uint64_t seed,
                                const std::function<void(const MetricsRecord&)>& on_record = {}) {
  require(!tasks.empty(), "pooled_train: at least one task is required");
  config.validate();
  std::vector<Trajectory> pooled;
  for (const auto& t : tasks) pooled.insert(pooled.end(), t.demos.begin(), t.demos.end());
  require(!pooled.empty(), "pooled_train: no demonstrations");
  AirlSession session(start, config, derive_seed(seed, 0));
  InnerResult res;
  for (int it = 0; it < iterations; ++it) {
    const auto& task = tasks[static_cast<std::size_t>(it) % tasks.size()].task;
    MetricsRecord rec =
        airl_iteration(sim, task, session, pooled, config, derive_seed(seed, 1 + static_cast<std::uint64_t>(it)));
    rec.phase = "pretrain";
    rec.iteration = it;
    if (on_record) on_record(rec);
    res.records.push_back(std::move(rec));
  }
  res.params = std::move(session.params);
  res.disc_steps = session.disc_steps;
  res.policy_steps = session.policy_steps;
  res.accepted_kls = std::move(session.accepted_kls);
  return res;
}

/// Scratch baseline: AIRL from freshly initialized networks with the same
/// demonstrations and iteration budget as adaptation.
inline InnerResult scratch_train(const Simulator& sim, const TaskSpec& task, const std::vector<Trajectory>& demos,
                                 int iterations, const MetaConfig& config, std::uint64_t seed) {
  const ModelParams fresh = ModelParams::initialized(config.network, derive_seed(seed, 99));
  return inner_train(sim, task, fresh, demos, iterations, config.airl, derive_seed(seed, 100), "scratch");
}

}  // namespace metairl
