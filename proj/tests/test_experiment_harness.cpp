#include <gtest/gtest.h>

#include <sstream>

#include "otfsra/experiment_harness.hpp"

using namespace otfsra;

namespace {

std::string csv_of(const std::vector<CsvRow>& rows) {
  std::ostringstream o;
  write_csv(o, rows);
  return o.str();
}

ExperimentConfig small_recovery() {
  ExperimentConfig c;
  c.preset = "recover-blocks";
  c.trials = 3;
  c.fixture = FixtureSpec{32, 64, 8, 2, 2, 4, 15.0};
  c.sweep_values = {1, 2};
  c.solver.max_iter = 10;
  c.record_timing = false;
  return c;
}

ExperimentConfig small_access() {
  ExperimentConfig c;
  c.preset = "access-vs-active";
  c.trials = 2;
  c.scenario.n_ues = 12;
  c.scenario.n_aps = 1;
  c.scenario.upa = {2, 2};
  c.sweep_values = {2};
  c.solver.max_iter = 8;
  c.record_timing = false;
  return c;
}

}  // namespace

TEST(Config, RoundTrip) {
  ExperimentConfig c;
  c.preset = "power-sweep";
  c.seed = 77;
  c.scenario.layout.power_split = 0.35;
  c.scenario.upa = {3, 2};
  c.final_rule.theta_abs = 4.25;
  c.solver.prior = PriorKind::gaussian;
  c.scenario.deployment.placement = Placement::square;
  c.schemes = {"hp", "ep"};
  c.sweep_values = {0.1, 0.7};
  const std::string text = serialize_config(c);
  const ExperimentConfig back = parse_config(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.schemes, c.schemes);
  EXPECT_EQ(run_id(back), run_id(c));
}

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig c;
  EXPECT_EQ(serialize_config(parse_config(serialize_config(c))), serialize_config(c));
}

TEST(Config, UnknownKeyCarriesLineNumber) {
  const std::string text = "# comment\n[run]\nseed = 4\n\n[grid]\nn_dopler = 16\n";
  try {
    parse_config(text);
    FAIL() << "expected a config error";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 6"), std::string::npos) << msg;
    EXPECT_NE(msg.find("n_dopler"), std::string::npos) << msg;
  }
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("[nope]\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\nseed = 3\nseed = 4\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\ntrials = many\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\npreset = fig99\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\nseed = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("[detection]\nfinal_mode = loud\n"), ConfigError);
  EXPECT_NO_THROW(parse_config("[run] ; trailing\nseed = 3 # note\n"));
}

TEST(Csv, HeaderOnlyForZeroTrials) {
  ExperimentConfig c = small_recovery();
  c.trials = 0;
  const RunSummary s = run_preset(c);
  EXPECT_EQ(csv_of(s.rows), std::string(csv_header()) + "\n");
}

TEST(Csv, NanFormatting) {
  CsvRow r;
  r.run_id = "x";
  const std::string line = csv_of({r});
  EXPECT_NE(line.find(",nan,nan,nan,nan,"), std::string::npos) << line;
}

TEST(Csv, BitIdenticalWithoutTiming) {
  const ExperimentConfig c = small_recovery();
  EXPECT_EQ(csv_of(run_preset(c).rows), csv_of(run_preset(c).rows));
}

TEST(Csv, ThreadCountDoesNotChangeOutput) {
  ExperimentConfig c = small_recovery();
  const std::string one = csv_of(run_preset(c).rows);
  c.threads = 3;
  EXPECT_EQ(csv_of(run_preset(c).rows), one);
  ExperimentConfig a = small_access();
  const std::string a1 = csv_of(run_preset(a).rows);
  a.threads = 2;
  EXPECT_EQ(csv_of(run_preset(a).rows), a1);
}

TEST(Csv, RowsSortedBySweepTrialAlgorithm) {
  const RunSummary s = run_preset(small_recovery());
  ASSERT_EQ(s.rows.size(), 3u * 2u * 4u);
  EXPECT_TRUE(std::is_sorted(s.rows.begin(), s.rows.end(), row_less));
}

TEST(Presets, ConvergenceTraceLength) {
  ExperimentConfig c = small_recovery();
  c.preset = "convergence";
  c.sweep_values.clear();
  c.trials = 1;
  const RunSummary s = run_preset(c);
  ASSERT_EQ(s.rows.size(), 3u * 10u);
  for (const auto& r : s.rows) EXPECT_EQ(r.iterations, static_cast<int>(r.sweep_value));
}

TEST(Presets, AccessRowsPerScheme) {
  const RunSummary s = run_preset(small_access());
  ASSERT_EQ(s.rows.size(), 2u * 3u);
  for (const auto& r : s.rows) {
    EXPECT_TRUE(r.algorithm == "hp" || r.algorithm == "sp" || r.algorithm == "ep");
    EXPECT_FALSE(std::isnan(r.der));
    EXPECT_GT(r.macs, 0u);
  }
}

TEST(Presets, SweepPointErrors) {
  ExperimentConfig c;
  EXPECT_THROW(at_sweep_point(c, "antennas", 10), ConfigError);
  EXPECT_THROW(at_sweep_point(c, "n_ues", 2.5), ConfigError);
  EXPECT_THROW(at_sweep_point(c, "wind", 1), ConfigError);
  EXPECT_EQ(at_sweep_point(c, "antennas", 9).scenario.upa.size(), 9);
  c.sweep_name = "columns";
  EXPECT_THROW(resolve_sweep(c), ConfigError);
  c.sweep_name.clear();
  c.schemes = {"hp"};
  EXPECT_THROW(resolve_sweep(c), ConfigError);
  for (const auto& p : preset_names()) EXPECT_NO_THROW(default_sweep(p, false));
}

TEST(Presets, FullScaleGeometryIsValid) {
  ExperimentConfig c;
  apply_full_scale(c);
  EXPECT_NO_THROW(c.scenario.validate());
  EXPECT_EQ(c.scenario.geometry().budget.l_max, 20);
  for (double u : default_sweep("access-vs-U", true).values)
    EXPECT_NO_THROW(at_sweep_point(c, "n_ues", u).scenario.validate());
}

TEST(Complexity, LinearInActiveCount) {
  const ScenarioConfig s;
  const ComplexityReport a = predict_complexity(s, 5, 4), b = predict_complexity(s, 10, 8);
  EXPECT_DOUBLE_EQ(b.chi_e, 2.0 * a.chi_e);
  EXPECT_DOUBLE_EQ(b.chi_sic, 2.0 * a.chi_sic);
  EXPECT_DOUBLE_EQ(b.chi_s, a.chi_s);
  // 16 beams * 28 columns * 132 rows per UE
  EXPECT_DOUBLE_EQ(a.chi_e, 5.0 * 16 * 28 * 132);
}

TEST(Complexity, MeasuredSicMatchesPrediction) {
  ScenarioConfig s;
  s.n_ues = 10;
  s.n_active = 3;
  s.n_aps = 1;
  ExperimentConfig c;
  PipelineOptions o = pipeline_options(c);
  o.candidates_from_truth = true;
  const TrialResult r = run_access(draw_scenario(s, 1, 0), o);
  const ComplexityReport p = predict_complexity(s, 3, static_cast<int>(r.sets.final_active.size()));
  EXPECT_DOUBLE_EQ(static_cast<double>(r.metrics.macs.sic), p.chi_sic);
}
