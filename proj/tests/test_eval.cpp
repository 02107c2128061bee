#include <gtest/gtest.h>

#include <sstream>

#include "metairl/error.hpp"
#include "metairl/eval.hpp"

using namespace metairl;

namespace {

ModelParams uniform_model() {
  NetworkConfig n;
  n.hidden = {8};
  ModelParams p = ModelParams::initialized(n, 1);
  p.policy.set_parameters(Vector::Zero(p.policy.parameter_count()));  // softmax of zeros
  return p;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST(Histogram, SingleValueSingleBin) {
  const Histogram h = build_histogram({2.0, 2.0, 2.0}, 1, 1.0, 3.5);
  ASSERT_EQ(h.bins(), 1);
  EXPECT_DOUBLE_EQ(h.density[0], 1.0 / 2.5);
  EXPECT_DOUBLE_EQ(h.mass(), 1.0);
}

TEST(Histogram, UniformSamplesAreFlat) {
  Rng rng(1);
  std::vector<double> v(1000);
  for (auto& x : v) x = uniform(rng, 0.0, 1.0);
  const Histogram h = build_histogram(v, 10, 0.0, 1.0);
  for (double d : h.density) {
    EXPECT_GE(d, 0.7);
    EXPECT_LE(d, 1.3);
  }
  EXPECT_NEAR(h.mass(), 1.0, 1e-12);
}

TEST(Histogram, DistanceExtremes) {
  const Histogram a = build_histogram({0.1, 0.2}, 4, 0.0, 2.0);
  const Histogram b = build_histogram({1.9}, 4, 0.0, 2.0);
  EXPECT_EQ(l1_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(l1_distance(a, b), 2.0 / a.width());
  EXPECT_DOUBLE_EQ(l1_distance(a, b), l1_distance(b, a));
  EXPECT_THROW(l1_distance(a, build_histogram({0.1}, 5, 0.0, 2.0)), ContractViolation);
}

TEST(Histogram, OutOfRangeValuesLandInEdgeBins) {
  const Histogram h = build_histogram({-5.0, 0.25, 99.0, 1.0}, 2, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(h.density[0], 2.0 / (4 * 0.5));
  EXPECT_DOUBLE_EQ(h.density[1], 2.0 / (4 * 0.5));
}

TEST(Histogram, RejectsBadInput) {
  EXPECT_THROW(build_histogram({}, 3, 0.0, 1.0), ContractViolation);
  EXPECT_THROW(build_histogram({0.5}, 0, 0.0, 1.0), ContractViolation);
  EXPECT_THROW(build_histogram({0.5}, 3, 1.0, 1.0), ContractViolation);
  EXPECT_THROW(build_histogram({std::nan("")}, 3, 0.0, 1.0), ContractViolation);
}

TEST(Evaluate, OracleSucceedsOnItsOwnStyle) {
  Simulator sim;
  for (const auto& task : builtin_styles()) {
    const auto r = evaluate_oracle(sim, task, 300, 5);
    EXPECT_EQ(r.record.success_ratio, 1.0) << task.style;
    EXPECT_EQ(r.record.episodes, 300);
    EXPECT_EQ(r.extremes.size(), 300u);
    EXPECT_EQ(r.record.phase, "eval");
  }
}

TEST(Evaluate, RandomPolicyIsWorseThanOracle) {
  Simulator sim;
  const ModelParams m = uniform_model();
  const auto random = evaluate(sim, m.policy, neutral_style(), 300, 6);
  const auto oracle = evaluate_oracle(sim, neutral_style(), 300, 6);
  EXPECT_LT(random.record.success_ratio, oracle.record.success_ratio);
  EXPECT_NEAR(random.record.success_ratio + random.record.crash_ratio + random.record.timeout_ratio, 1.0, 1e-12);
}

TEST(Evaluate, SeededAndWorkerIndependent) {
  Simulator sim;
  const ModelParams m = ModelParams::initialized(NetworkConfig{{8}}, 3);
  const auto a = evaluate(sim, m.policy, aggressive_style(), 40, 7, false, &m.disc);
  const auto b = evaluate(sim, m.policy, aggressive_style(), 40, 7, false, &m.disc, 3);
  EXPECT_EQ(metrics_csv_row(a.record), metrics_csv_row(b.record));
  EXPECT_TRUE(std::isfinite(a.record.total_reward));
  for (std::size_t k = 0; k < kKinematicCount; ++k) {
    EXPECT_EQ(l1_distance(kinematic_histograms(a.extremes)[k], kinematic_histograms(b.extremes)[k]), 0.0);
  }
  const auto c = evaluate(sim, m.policy, aggressive_style(), 40, 8);
  EXPECT_NE(metrics_csv_row(a.record), metrics_csv_row(c.record));
  EXPECT_TRUE(std::isnan(c.record.total_reward));
}

TEST(Evaluate, OracleNoiseFloorBelowThreshold) {
  Simulator sim;
  for (const auto& task : builtin_styles()) {
    const auto a = kinematic_histograms(evaluate_oracle(sim, task, 500, 100).extremes);
    const auto b = kinematic_histograms(evaluate_oracle(sim, task, 500, 200).extremes);
    for (std::size_t k = 0; k < kKinematicCount; ++k) {
      EXPECT_LT(l1_distance(a[k], b[k]), 0.15) << task.style << " " << kKinematicBins[k].name;
    }
  }
}

TEST(Compare, SingleModelReportIsValid) {
  Simulator sim;
  const auto demos = generate_demos(sim, aggressive_style(), 20, 3).trajectories;
  const auto cmp = compare_models(sim, {{"only", uniform_model()}}, demos, aggressive_style(), 30, 4);
  ASSERT_EQ(cmp.models.size(), 1u);
  EXPECT_EQ(cmp.expert_count, 20u);
  for (std::size_t k = 0; k < kKinematicCount; ++k) {
    EXPECT_GE(cmp.models[0].l1[k], 0.0);
    EXPECT_NEAR(cmp.expert[k].mass(), 1.0, 1e-12);
  }

  const auto j = comparison_to_json(cmp);
  EXPECT_EQ(j.at("task"), "aggressive");
  EXPECT_EQ(j.at("kinematics").size(), 4u);
  EXPECT_EQ(j.at("models")[0].at("name"), "only");
  EXPECT_TRUE(j.at("models")[0].at("l1").contains("max_speed"));
  EXPECT_TRUE(j.at("expert").at("histograms").contains("min_accel"));
  EXPECT_TRUE(j.at("reference_l1").contains("meta_airl"));

  const std::string csv = comparison_csv(cmp);
  EXPECT_EQ(count_lines(csv), 2);
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_EQ(header + "\n", comparison_csv_header());
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_EQ(row.rfind("only,", 0), 0u);

  EXPECT_THROW(compare_models(sim, {}, demos, aggressive_style(), 3, 4), ContractViolation);
  EXPECT_THROW(compare_models(sim, {{"x", uniform_model()}}, {}, aggressive_style(), 3, 4), ContractViolation);
}

TEST(Compare, MetricsJsonWritesNullForMissingValues) {
  MetricsRecord r;
  r.phase = "eval";
  const auto j = metrics_to_json(r);
  EXPECT_TRUE(j.at("disc_expert").is_null());
  EXPECT_TRUE(j.at("total_reward").is_null());
  EXPECT_EQ(j.at("success_ratio"), 0.0);
  EXPECT_EQ(j.size(), metrics_columns().size());
}
