#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>

#include "metairl/error.hpp"
#include "metairl/expert.hpp"
#include "metairl/meta.hpp"

using namespace metairl;
namespace fs = std::filesystem;

namespace {

MetaConfig tiny_meta(int iterations) {
  MetaConfig c;
  c.meta_iterations = iterations;
  c.tasks_per_iteration = 2;
  c.inner_iterations = 1;
  c.adapt_iterations = 1;
  c.online_test_every = 0;
  c.checkpoint_every = 0;
  c.seed = 21;
  c.network.hidden = {8};
  c.airl.k_d = 2;
  c.airl.episodes_per_iteration = 2;
  c.airl.disc_batch = 16;
  c.airl.metric_pairs = 50;
  return c;
}

const std::vector<MetaTask>& tiny_tasks() {
  static const std::vector<MetaTask> tasks = [] {
    Simulator sim;
    std::vector<MetaTask> out;
    for (const auto& style : {conservative_style(), neutral_style()}) {
      out.push_back({style, generate_demos(sim, style, 3, 5).trajectories});
    }
    return out;
  }();
  return tasks;
}

std::vector<std::string> names() { return {"conservative", "neutral"}; }

Vector random_vector(int n, Rng& rng) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = uniform(rng, -2.0, 2.0);
  return v;
}

FormatError::Kind load_error(const io::Bytes& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "deserialize_checkpoint accepted a damaged file";
  return FormatError::Kind::Io;
}

}  // namespace

TEST(Reptile, ZeroStepKeepsTheta) {
  Rng rng(1);
  const Vector theta = random_vector(10, rng);
  EXPECT_EQ(reptile_vector(theta, {random_vector(10, rng), random_vector(10, rng)}, 0.0), theta);
}

TEST(Reptile, FullStepWithOneTaskReturnsTaskResult) {
  const auto theta = ModelParams::initialized(tiny_meta(1).network, 1);
  const auto task = ModelParams::initialized(tiny_meta(1).network, 2);
  const auto out = reptile_update(theta, {task}, 1.0, 1.0);
  EXPECT_LT((out.disc.parameters() - task.disc.parameters()).lpNorm<Eigen::Infinity>(), 1e-15);
  EXPECT_LT((out.policy.parameters() - task.policy.parameters()).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(Reptile, SymmetricResultsCancel) {
  const Vector theta = Vector::Zero(5);
  const Vector out = reptile_vector(theta, {Vector::Ones(5), -Vector::Ones(5)}, 0.5);
  EXPECT_EQ(out, Vector::Zero(5));
}

TEST(Reptile, SeparateRatesPerNetwork) {
  const auto net = tiny_meta(1).network;
  const auto theta = ModelParams::initialized(net, 1);
  const auto task = ModelParams::initialized(net, 2);
  const auto out = reptile_update(theta, {task}, 0.5, 0.25);
  EXPECT_TRUE(out.disc.parameters().isApprox(
      theta.disc.parameters() + 0.5 * (task.disc.parameters() - theta.disc.parameters()), 1e-14));
  EXPECT_TRUE(out.policy.parameters().isApprox(
      theta.policy.parameters() + 0.25 * (task.policy.parameters() - theta.policy.parameters()), 1e-14));
}

TEST(Reptile, LinearAndWithinConvexHull) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = uniform_int(rng, 1, 12);
    const int k = uniform_int(rng, 1, 4);
    const double beta = uniform(rng, 1e-3, 1.0);
    const Vector theta = random_vector(n, rng);
    std::vector<Vector> a, b, sum;
    for (int i = 0; i < k; ++i) {
      a.push_back(random_vector(n, rng));
      b.push_back(random_vector(n, rng));
      sum.push_back(a.back() + b.back() - theta);  // (a - theta) + (b - theta) + theta
    }
    const Vector da = reptile_vector(theta, a, beta) - theta;
    const Vector db = reptile_vector(theta, b, beta) - theta;
    const Vector dsum = reptile_vector(theta, sum, beta) - theta;
    ASSERT_TRUE(dsum.isApprox(da + db, 1e-12) || (dsum - da - db).norm() < 1e-12);

    const Vector out = reptile_vector(theta, a, beta);
    for (int j = 0; j < n; ++j) {
      double lo = theta[j], hi = theta[j];
      for (const auto& r : a) {
        lo = std::min(lo, r[j]);
        hi = std::max(hi, r[j]);
      }
      ASSERT_GE(out[j], lo - 1e-12);
      ASSERT_LE(out[j], hi + 1e-12);
    }
  }
}

TEST(Reptile, RejectsBadResults) {
  EXPECT_THROW(reptile_vector(Vector::Zero(3), {}, 0.5), ContractViolation);
  EXPECT_THROW(reptile_vector(Vector::Zero(3), {Vector::Zero(4)}, 0.5), ContractViolation);
  const auto theta = ModelParams::initialized(tiny_meta(1).network, 1);
  NetworkConfig wide;
  wide.hidden = {9};
  EXPECT_THROW(reptile_update(theta, {ModelParams::initialized(wide, 1)}, 0.5, 0.5), ContractViolation);
}

TEST(TaskSampling, StratifiedWhenDivisible) {
  Rng rng(4);
  EXPECT_EQ(sample_tasks(2, 2, rng), (std::vector<int>{0, 1}));
  EXPECT_EQ(sample_tasks(2, 4, rng), (std::vector<int>{0, 1, 0, 1}));
  EXPECT_EQ(sample_tasks(1, 3, rng), (std::vector<int>{0, 0, 0}));
}

TEST(TaskSampling, UniformWithReplacementOtherwise) {
  Rng rng(5);
  std::vector<int> counts(3, 0);
  const int rounds = 6000;
  for (int r = 0; r < rounds; ++r) {
    for (int t : sample_tasks(3, 2, rng)) counts[t] += 1;
  }
  for (int c : counts) EXPECT_NEAR(c / (2.0 * rounds), 1.0 / 3.0, 0.02);
  EXPECT_THROW(sample_tasks(0, 1, rng), ContractViolation);
}

TEST(ReptileLoop, QuadraticToyConvergesToSharedMinimizer) {
  // Tasks: 0.5 (x - c)^T A_i (x - c) with diagonal A_i; inner loop is a few
  // gradient-descent steps, so each task result moves toward c.
  const int dim = 6;
  Vector c(dim);
  c << 1.0, -2.0, 0.5, 3.0, -0.25, 0.0;
  const std::vector<Vector> curvature = {Vector::LinSpaced(dim, 0.5, 2.0), Vector::LinSpaced(dim, 2.0, 0.3),
                                         Vector::Constant(dim, 1.0)};
  Rng rng(6);
  auto inner = [&](const Vector& theta, const std::vector<int>& picks, int) {
    std::vector<Vector> out;
    for (int t : picks) {
      Vector x = theta;
      for (int s = 0; s < 5; ++s) x -= 0.1 * curvature[t].cwiseProduct(x - c);
      out.push_back(x);
    }
    return out;
  };
  auto aggregate = [](const Vector& theta, const std::vector<Vector>& r) { return reptile_vector(theta, r, 0.5); };
  int needed = -1;
  const Vector start = Vector::Zero(dim);
  const Vector out = reptile_loop(start, 0, 200, 3, 2, rng, inner, aggregate, [&](int it, const Vector& theta) {
    if (needed < 0 && (theta - c).lpNorm<Eigen::Infinity>() < 1e-3) needed = it + 1;
  });
  EXPECT_LT((out - c).lpNorm<Eigen::Infinity>(), 1e-3);
  EXPECT_GT(needed, 0);
  EXPECT_LE(needed, 200);

  const Vector same = reptile_loop(start, 5, 5, 3, 2, rng, inner, aggregate, [](int, const Vector&) {});
  EXPECT_EQ(same, start);
  EXPECT_THROW(reptile_loop(
                   start, 0, 1, 3, 2, rng, [](const Vector&, const std::vector<int>&, int) { return std::vector<Vector>{}; },
                   aggregate, [](int, const Vector&) {}),
               NumericalError);
}

TEST(Checkpoint, RoundTripAndDamage) {
  Checkpoint c = initial_checkpoint(tiny_meta(3), names());
  c.iteration = 2;
  c.demo_count = 7;
  c.kind = "adapted";
  const io::Bytes bytes = serialize_checkpoint(c);
  EXPECT_EQ(deserialize_checkpoint(bytes), c);

  Rng a, b;
  set_rng_state(a, deserialize_checkpoint(bytes).rng_state);
  set_rng_state(b, c.rng_state);
  EXPECT_EQ(a(), b());

  io::Bytes flipped = bytes;
  flipped[flipped.size() - 40] ^= 0x10;
  EXPECT_EQ(load_error(flipped), FormatError::Kind::Checksum);
  EXPECT_EQ(load_error(io::Bytes(bytes.begin(), bytes.end() - 50)), FormatError::Kind::Truncated);
  EXPECT_EQ(load_error(serialize_dataset(generate_demos(Simulator(), neutral_style(), 1, 1))),
            FormatError::Kind::BadMagic);
  Checkpoint future = c;
  future.format_version = kCheckpointFormatVersion + 1;
  EXPECT_EQ(load_error(serialize_checkpoint(future)), FormatError::Kind::VersionMismatch);

  const fs::path dir = fs::temp_directory_path() / ("metairl_meta_" + std::to_string(::getpid()));
  save_checkpoint(c, dir / "c.ckpt");
  EXPECT_EQ(load_checkpoint(dir / "c.ckpt"), c);
  EXPECT_EQ(checkpoint_hash(load_checkpoint(dir / "c.ckpt")), checkpoint_hash(c));
  fs::remove_all(dir);
}

TEST(MetaTrain, ZeroIterationsKeepsParameters) {
  Simulator sim;
  const Checkpoint start = initial_checkpoint(tiny_meta(3), names());
  const Checkpoint out = meta_train(sim, tiny_tasks(), start, nullptr, 1, {}, 0);
  EXPECT_EQ(out.params, start.params);
  EXPECT_EQ(out.iteration, 0);
}

TEST(MetaTrain, SingleTaskFullStepEqualsInnerTrain) {
  Simulator sim;
  MetaConfig cfg = tiny_meta(1);
  cfg.tasks_per_iteration = 1;
  cfg.beta_disc = 1.0;
  cfg.beta_policy = 1.0;
  const std::vector<MetaTask> one{tiny_tasks()[1]};
  const Checkpoint start = initial_checkpoint(cfg, {"neutral"});
  const Checkpoint out = meta_train(sim, one, start);
  const auto inner = inner_train(sim, one[0].task, start.params, one[0].demos, cfg.inner_iterations, cfg.airl,
                                 inner_seed(cfg, 0, 0));
  EXPECT_TRUE(out.params.disc.parameters().isApprox(inner.params.disc.parameters(), 1e-14));
  EXPECT_TRUE(out.params.policy.parameters().isApprox(inner.params.policy.parameters(), 1e-14));
  EXPECT_EQ(out.iteration, 1);
}

TEST(MetaTrain, DeterministicResumableAndWorkerIndependent) {
  Simulator sim;
  const Checkpoint start = initial_checkpoint(tiny_meta(4), names());
  const std::string full = checkpoint_hash(meta_train(sim, tiny_tasks(), start));
  EXPECT_EQ(checkpoint_hash(meta_train(sim, tiny_tasks(), start)), full);
  EXPECT_EQ(checkpoint_hash(meta_train(sim, tiny_tasks(), start, nullptr, 2)), full);

  const Checkpoint half = meta_train(sim, tiny_tasks(), start, nullptr, 1, {}, 2);
  EXPECT_EQ(half.iteration, 2);
  const Checkpoint reloaded = deserialize_checkpoint(serialize_checkpoint(half));
  EXPECT_EQ(checkpoint_hash(meta_train(sim, tiny_tasks(), reloaded)), full);

  MetaConfig other = tiny_meta(4);
  other.seed = 22;
  EXPECT_NE(checkpoint_hash(meta_train(sim, tiny_tasks(), initial_checkpoint(other, names()))), full);
}

TEST(MetaTrain, HooksRecordsAndOnlineTest) {
  Simulator sim;
  MetaConfig cfg = tiny_meta(4);
  cfg.online_test_every = 2;
  cfg.checkpoint_every = 3;
  const MetaTask held{aggressive_style(), generate_demos(sim, aggressive_style(), 2, 9).trajectories};
  std::vector<MetricsRecord> records;
  std::vector<std::pair<int, bool>> checkpoints;
  MetaHooks hooks;
  hooks.on_record = [&](const MetricsRecord& r) { records.push_back(r); };
  hooks.on_checkpoint = [&](const Checkpoint& c, bool final) { checkpoints.emplace_back(c.iteration, final); };
  meta_train(sim, tiny_tasks(), initial_checkpoint(cfg, names()), &held, 1, hooks);

  EXPECT_EQ(checkpoints, (std::vector<std::pair<int, bool>>{{3, false}, {4, true}}));
  int train = 0, online = 0;
  for (const auto& r : records) {
    if (r.phase == "train") {
      ++train;
      EXPECT_TRUE(r.task == "conservative" || r.task == "neutral");
    } else {
      ASSERT_EQ(r.phase, "online");
      EXPECT_EQ(r.task, "aggressive");
      EXPECT_TRUE(r.meta_iteration == 1 || r.meta_iteration == 3);
      ++online;
    }
  }
  EXPECT_EQ(train, 4 * 2 * cfg.inner_iterations);
  EXPECT_EQ(online, 2 * cfg.adapt_iterations);
  for (std::size_t i = 1; i < records.size(); ++i) {
    EXPECT_LE(records[i - 1].meta_iteration, records[i].meta_iteration);
  }
}

TEST(Baselines, PooledRoundRobinAndScratchSeeding) {
  Simulator sim;
  const MetaConfig cfg = tiny_meta(2);
  const auto start = ModelParams::initialized(cfg.network, 3);
  int seen = 0;
  const auto pooled = pooled_train(sim, tiny_tasks(), start, 4, cfg.airl, 5, [&](const MetricsRecord&) { ++seen; });
  ASSERT_EQ(pooled.records.size(), 4u);
  EXPECT_EQ(seen, 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(pooled.records[i].task, i % 2 == 0 ? "conservative" : "neutral");
    EXPECT_EQ(pooled.records[i].phase, "pretrain");
    EXPECT_EQ(pooled.records[i].iteration, i);
  }

  const auto& demos = tiny_tasks()[0].demos;
  const auto a = scratch_train(sim, aggressive_style(), demos, 2, cfg, 8);
  const auto b = scratch_train(sim, aggressive_style(), demos, 2, cfg, 8);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.records.front().phase, "scratch");
  EXPECT_EQ(scratch_train(sim, aggressive_style(), demos, 0, cfg, 8).params,
            ModelParams::initialized(cfg.network, derive_seed(8, 99)));
}
