#include <gtest/gtest.h>

#include <random>

#include "otfsra/experiment_harness.hpp"

using namespace otfsra;

namespace {

std::vector<ColumnTag> tags(const std::vector<int>& ues, int rows_each) {
  std::vector<ColumnTag> t;
  for (int u : ues)
    for (int r = 0; r < rows_each; ++r) t.push_back({u, 0, r});
  return t;
}

PipelineOptions oracle_options() {
  ExperimentConfig c;
  PipelineOptions o = pipeline_options(c);
  o.rough_solver = o.accurate_solver = make_oracle_solver();
  o.inject_truth = true;
  return o;
}

}  // namespace

TEST(Detection, AllZeroEstimateFindsNothing) {
  const CMatrix h = CMatrix::Zero(6, 2);
  EXPECT_TRUE(detect_active(h, tags({0, 1, 2}, 2), DetectionRule{}).empty());
  EXPECT_TRUE(detect_active(h, tags({0, 1, 2}, 2), DetectionRule{ThresholdMode::absolute, 0.1, 1.0}, 1.0).empty());
}

TEST(Detection, RelativeThresholdBoundary) {
  CMatrix h = CMatrix::Zero(3, 1);
  h(0, 0) = 1.0;
  h(1, 0) = std::sqrt(0.05);
  h(2, 0) = std::sqrt(0.1);
  const auto found = detect_active(h, tags({3, 5, 8}, 1), DetectionRule{ThresholdMode::relative, 0.1, 0.0});
  EXPECT_EQ(found, (std::vector<int>{3, 8}));
}

TEST(Detection, AbsoluteThresholdUsesRowsAndWeights) {
  CMatrix h = CMatrix::Zero(4, 1);
  h(0, 0) = 1.0;  // ue 0 energy 1 over 2 rows
  h(2, 0) = 3.0;  // ue 1 energy 9 over 2 rows
  const DetectionRule rule{ThresholdMode::absolute, 0.0, 2.0};
  EXPECT_EQ(detect_active(h, tags({0, 1}, 2), rule, 1.0), (std::vector<int>{1}));  // bar = 2 * 1 * 2
  RVector w = RVector::Ones(4);
  w(0) = 4.0;
  EXPECT_EQ(detect_active(h, tags({0, 1}, 2), rule, 1.0, &w), (std::vector<int>{0, 1}));
  EXPECT_THROW(ue_energies(h, tags({0}, 2)), DimensionError);
}

TEST(Metrics, DerDenExample) {
  MetricsRecord m;
  der_den({1, 2}, {2, 3}, 10, m);
  EXPECT_EQ(m.den, 2);
  EXPECT_DOUBLE_EQ(m.der, 0.2);
  EXPECT_EQ(m.missed, 1);
  EXPECT_EQ(m.false_alarms, 1);
}

TEST(Metrics, DenInvariantUnderRelabelling) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> truth, found;
    std::bernoulli_distribution coin(0.3);
    for (int u = 0; u < 30; ++u) {
      if (coin(rng)) truth.push_back(u);
      if (coin(rng)) found.push_back(u);
    }
    auto relabel = [&](std::vector<int> v) {
      for (auto& u : v) u = perm[u];
      std::sort(v.begin(), v.end());
      return v;
    };
    MetricsRecord a, b;
    der_den(truth, found, 30, a);
    der_den(relabel(truth), relabel(found), 30, b);
    EXPECT_EQ(a.den, b.den);
  }
}

TEST(Metrics, AggregateNmseExamples) {
  std::vector<ChannelMap> truth(2), zero(2);
  truth[0][1] = CMatrix::Ones(4, 2);
  truth[1][1] = 2.0 * CMatrix::Ones(4, 2);
  zero[0][1] = CMatrix::Zero(4, 2);
  EXPECT_EQ(aggregate_nmse_db(truth, truth), -100.0);
  EXPECT_NEAR(aggregate_nmse_db(zero, truth), 0.0, 1e-12);
  EXPECT_NEAR(aggregate_nmse_db(std::vector<ChannelMap>(2), truth), 0.0, 1e-12);
  // a false alarm adds its whole estimate to the error
  std::vector<ChannelMap> extra = truth;
  extra[0][7] = CMatrix::Ones(4, 2);
  EXPECT_NEAR(aggregate_nmse_db(extra, truth), db10(8.0 / 40.0), 1e-12);
  EXPECT_TRUE(std::isnan(aggregate_nmse_db(truth, std::vector<ChannelMap>(2))));
}

TEST(Sets, UnionIsMonotone) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> pick(0, 40);
  std::vector<std::vector<int>> parts;
  std::vector<int> prev;
  for (int b = 0; b < 6; ++b) {
    std::vector<int> p;
    for (int i = 0; i < 5; ++i) p.push_back(pick(rng));
    std::sort(p.begin(), p.end());
    parts.push_back(p);
    const auto u = set_union(parts);
    EXPECT_TRUE(std::includes(u.begin(), u.end(), prev.begin(), prev.end()));
    EXPECT_TRUE(std::is_sorted(u.begin(), u.end()));
    prev = u;
  }
}

TEST(Sic, ZeroEstimateLeavesFieldUntouched) {
  ScenarioConfig c;
  c.n_ues = 4;
  c.n_active = 2;
  c.n_aps = 1;
  const Scenario s = draw_scenario(c, 1, 0);
  ChannelMap h;
  for (int u : s.active) h[u] = CMatrix::Zero(s.geo.acc_cols(), s.beams());
  std::uint64_t macs = 0;
  EXPECT_EQ(sic_preamble1(s.received[0], h, s.x1_frames, s.geo, &macs), s.received[0]);
  EXPECT_EQ(macs, 0u);
}

TEST(Scenario, DeterministicAndSorted) {
  ScenarioConfig c;
  c.n_ues = 20;
  c.n_active = 4;
  const Scenario a = draw_scenario(c, 9, 3), b = draw_scenario(c, 9, 3);
  EXPECT_EQ(a.active, b.active);
  EXPECT_TRUE(std::is_sorted(a.active.begin(), a.active.end()));
  EXPECT_EQ(a.received[1], b.received[1]);
  EXPECT_NE(draw_scenario(c, 9, 4).active, a.active);
}

TEST(Scenario, NoiseVariance) {
  ScenarioConfig c;
  EXPECT_NEAR(db10(c.noise_variance_mw()), -174.0 + db10(64 * 15e3), 1e-9);
}

TEST(Pipeline, AccurateShapeForSingleCandidate) {
  ScenarioConfig c;
  c.n_ues = 5;
  c.n_active = 1;
  c.n_aps = 1;
  const Scenario s = draw_scenario(c, 2, 0);
  PipelineOptions o = oracle_options();
  const TrialResult r = run_access(s, o);
  ASSERT_EQ(r.sets.rough_union, s.active);
  ASSERT_EQ(r.h_hat[0].size(), 1u);
  EXPECT_EQ(r.h_hat[0].begin()->second.rows(), 28);
  EXPECT_EQ(r.h_hat[0].begin()->second.cols(), 16);
}

TEST(Pipeline, OracleSolverIsLossless) {
  for (Scheme scheme : {Scheme::hybrid, Scheme::embedded}) {
    ScenarioConfig c;
    c.n_ues = 30;
    c.n_active = 6;
    c.scheme = scheme;
    const Scenario s = draw_scenario(c, 5, 1);
    const TrialResult r = run_access(s, oracle_options());
    EXPECT_EQ(r.metrics.den, 0) << scheme_name(scheme);
    EXPECT_EQ(r.metrics.nmse_db, -100.0) << scheme_name(scheme);
  }
}

// With zero Doppler the lattice model is exact, so SIC with the true channel
// removes preamble1 completely.
TEST(Pipeline, OracleSicCancelsPreamble1WithoutDoppler) {
  ScenarioConfig c;
  c.n_ues = 30;
  c.n_active = 6;
  c.speed_kmh = 0.0;
  const Scenario s = draw_scenario(c, 5, 1);
  const TrialResult r = run_access(s, oracle_options());
  ASSERT_GT(r.metrics.p1_energy_before, 0.0);
  EXPECT_LT(r.metrics.p1_energy_after, 1e-20 * r.metrics.p1_energy_before);
}

TEST(Pipeline, RoughStageFindsTwoOfTwenty) {
  ScenarioConfig c;
  c.n_ues = 20;
  c.n_active = 2;
  c.n_aps = 1;
  ExperimentConfig e;
  e.scenario = c;
  for (std::uint64_t t = 0; t < 3; ++t) {
    const Scenario s = draw_scenario(c, 3, t);
    const TrialResult r = run_access(s, pipeline_options(e));
    EXPECT_TRUE(std::includes(r.sets.rough_union.begin(), r.sets.rough_union.end(), s.active.begin(), s.active.end()));
    EXPECT_EQ(r.sets.final_active, s.active);
    EXPECT_LT(r.metrics.nmse_db, -5.0);
  }
}

TEST(Pipeline, RoughUnionCoversEveryAp) {
  ScenarioConfig c;
  c.n_ues = 40;
  c.n_active = 4;
  c.n_aps = 3;
  ExperimentConfig e;
  const Scenario s = draw_scenario(c, 8, 0);
  const TrialResult r = run_access(s, pipeline_options(e));
  ASSERT_EQ(r.sets.rough_per_ap.size(), 3u);
  for (const auto& p : r.sets.rough_per_ap)
    EXPECT_TRUE(std::includes(r.sets.rough_union.begin(), r.sets.rough_union.end(), p.begin(), p.end()));
  EXPECT_TRUE(std::includes(r.sets.rough_union.begin(), r.sets.rough_union.end(), r.sets.final_active.begin(),
                            r.sets.final_active.end()));
}

TEST(Pipeline, ResourceWarning) {
  ScenarioConfig c;
  c.n_ues = 10;
  c.n_active = 2;
  c.n_aps = 1;
  c.scheme = Scheme::embedded;
  PipelineOptions o = oracle_options();
  o.resource_warn_ues = 5;
  const TrialResult r = run_access(draw_scenario(c, 1, 0), o);
  ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(Pipeline, MissingSolverRejected) {
  ScenarioConfig c;
  c.n_ues = 4;
  c.n_active = 1;
  c.n_aps = 1;
  EXPECT_THROW(run_access(draw_scenario(c, 1, 0), PipelineOptions{}), ConfigError);
}

TEST(ScenarioConfig, Validation) {
  ScenarioConfig c;
  c.n_active = 200;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ScenarioConfig{};
  c.n_aps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ScenarioConfig{};
  c.layout.n_rough = 5;
  EXPECT_THROW(c.validate(), LayoutError);
}
