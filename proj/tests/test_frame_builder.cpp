#include <gtest/gtest.h>

#include <random>

#include "otfsra/frame_builder.hpp"

using namespace otfsra;

namespace {

AccessGeometry desk(int halo = 1) {
  const OtfsGrid g = OtfsGrid::make(32, 64, 15e3);
  PreambleLayout l;
  l.halo_acc = l.halo_rough = halo;
  return {g, l, ChannelBudget::make(g, 2.5e-6, max_doppler_hz(300, 4e9), true)};
}

struct Drawn {
  FramePlan plan;
  std::vector<DdTap> taps;
};

Drawn draw(const AccessGeometry& geo, Scheme scheme, std::uint64_t seed, bool integer_doppler) {
  auto rng = make_stream(seed, 0, 0, 0, Stream::fixture);
  const PreambleSymbols pre = gen_preambles(rng, geo);
  Drawn d{make_plan(geo, scheme, pre, rng), {}};
  PathDraw pd;
  pd.nu_max_hz = max_doppler_hz(300, 4e9);
  d.taps = to_dd_taps(geo.grid, {2, 2}, sample_paths(rng, pd, 1.0));
  if (integer_doppler)
    for (auto& t : d.taps) t.k_frac = 0.0;
  return d;
}

}  // namespace

TEST(PowerScale, FrameEnergySplit) {
  const AccessGeometry geo = desk();
  for (Scheme s : {Scheme::hybrid, Scheme::superimposed, Scheme::embedded}) {
    const Drawn d = draw(geo, s, 1, false);
    // preamble1 sits on top of data cells, so the split holds per layer
    const double p1 = d.plan.x1.squaredNorm(), rest = d.plan.x2.squaredNorm();
    EXPECT_NEAR(p1 + rest, 32.0 * 64.0, 1e-9) << scheme_name(s);  // QPSK is unit modulus
    EXPECT_NEAR(p1 / (p1 + rest), has_p1(s) ? 0.3 : 0.0, 1e-12) << scheme_name(s);
  }
}

TEST(FramePlan, GuardsAreEmpty) {
  const AccessGeometry geo = desk();
  const Drawn d = draw(geo, Scheme::hybrid, 2, false);
  for (int l = 0; l < geo.m(); ++l)
    for (int k = 0; k < geo.n(); ++k) {
      if (geo.in_pg(k, l) && !geo.in_p2(k, l)) {
        EXPECT_EQ(d.plan.x2(k, l), cplx(0.0, 0.0));
      }
      if (!geo.is_p1_column(l) || k >= geo.layout.n_rough) {
        EXPECT_EQ(d.plan.x1(k, l), cplx(0.0, 0.0));
      }
      if (geo.in_p2(k, l)) {
        EXPECT_NE(d.plan.x2(k, l), cplx(0.0, 0.0));
      }
    }
  const Drawn sp = draw(geo, Scheme::superimposed, 2, false);
  EXPECT_TRUE(sp.plan.data_mask.all());
  const Drawn ep = draw(geo, Scheme::embedded, 2, false);
  EXPECT_EQ(ep.plan.x1.norm(), 0.0);
}

TEST(ModelBlocks, Shapes) {
  const AccessGeometry geo = desk();
  const Drawn d = draw(geo, Scheme::hybrid, 3, false);
  EXPECT_EQ(build_a_p1(d.plan.p1, geo).rows(), 64);
  EXPECT_EQ(build_a_p1(d.plan.p1, geo).cols(), 7);
  const CMatrix a2 = build_a_p2(p2_region(d.plan.x2, geo), geo);
  EXPECT_EQ(a2.rows(), 132);
  EXPECT_EQ(a2.cols(), 28);
  EXPECT_THROW(build_a_p1(CMatrix::Zero(3, 3), geo), DimensionError);
}

TEST(ModelBlocks, RegionFromSymbolsMatchesFrame) {
  const AccessGeometry geo = desk();
  const Drawn d = draw(geo, Scheme::hybrid, 4, false);
  EXPECT_EQ(p2_region(d.plan.x2, geo), p2_region_from_symbols(d.plan.p2, geo));
}

// Integer Doppler: the accurate model reproduces the observation slice of a
// full frame (data included) exactly.
TEST(ModelConsistency, AccurateIntegerDopplerIsExact) {
  const AccessGeometry geo = desk();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Drawn d = draw(geo, Scheme::hybrid, seed, true);
    const BeamField y = dd_forward(assemble_frame(d.plan), d.taps, geo.n(), 4);
    const CMatrix yp2 = extract_y_p2(y, geo);
    const GroundTruthChannel h = build_ground_truth(geo, d.taps, 4);
    const CMatrix a2 = build_a_p2(p2_region(d.plan.x2, geo), geo);
    EXPECT_LT(db10((yp2 - a2 * h.h_dd2).squaredNorm() / yp2.squaredNorm()), -200.0);
  }
}

// Zero-delay integer taps: the rough model is exact for preamble1 alone.
TEST(ModelConsistency, RoughZeroDelayIsExact) {
  const AccessGeometry geo = desk();
  Drawn d = draw(geo, Scheme::hybrid, 7, true);
  for (auto& t : d.taps) t.l_int = 0;
  const BeamField y = dd_forward({geo.grid, d.plan.x1}, d.taps, geo.n(), 4);
  const CMatrix yp1 = extract_y_p1(y, geo);
  const GroundTruthChannel h = build_ground_truth(geo, d.taps, 4);
  EXPECT_LT(db10((yp1 - build_a_p1(d.plan.p1, geo) * h.h_dd1).squaredNorm() / yp1.squaredNorm()), -200.0);
}

TEST(ModelConsistency, FractionalDopplerErrorShrinksWithHalo) {
  double prev = 0.0;
  for (int halo : {1, 2, 4}) {
    const AccessGeometry geo = desk(halo);
    double worst = -400.0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const Drawn d = draw(geo, Scheme::hybrid, seed, false);
      const BeamField y = dd_forward(assemble_frame(d.plan), d.taps, geo.n(), 4);
      const CMatrix yp2 = extract_y_p2(y, geo);
      const CMatrix a2 = build_a_p2(p2_region(d.plan.x2, geo), geo);
      const GroundTruthChannel h = build_ground_truth(geo, d.taps, 4);
      worst = std::max(worst, db10((yp2 - a2 * h.h_dd2).squaredNorm() / yp2.squaredNorm()));
    }
    EXPECT_LT(worst, prev) << "halo " << halo;
    prev = worst;
  }
}

TEST(Extraction, RoughIsLinearAndCounted) {
  const AccessGeometry geo = desk();
  std::mt19937_64 rng(1);
  BeamField a(geo.grid.cells(), 2), b(geo.grid.cells(), 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = complex_normal(rng, 1.0);
    b.data()[i] = complex_normal(rng, 1.0);
  }
  std::uint64_t macs = 0;
  const CMatrix ya = extract_y_p1(a, geo, &macs);
  EXPECT_GT(macs, 0u);
  EXPECT_LT((extract_y_p1(a + 2.0 * b, geo) - ya - 2.0 * extract_y_p1(b, geo)).norm(), 1e-9 * ya.norm());
}

TEST(LatticeChannel, MatchesAccurateModelOnSlice) {
  const AccessGeometry geo = desk();
  const Drawn d = draw(geo, Scheme::hybrid, 5, true);
  const GroundTruthChannel h = build_ground_truth(geo, d.taps, 4);
  const BeamField y = apply_lattice_channel(d.plan.x2, h.h_dd2, geo);
  const CMatrix a2 = build_a_p2(p2_region(d.plan.x2, geo), geo);
  const CMatrix yp2 = extract_y_p2(y, geo);
  EXPECT_LT((yp2 - a2 * h.h_dd2).norm(), 1e-9 * yp2.norm());
  // integer Doppler: the lattice channel is the DD channel
  const BeamField ref = dd_forward({geo.grid, d.plan.x2}, d.taps, geo.n(), 4);
  EXPECT_LT(db10((y - ref).squaredNorm() / ref.squaredNorm()), -200.0);
}

TEST(StackBlocks, ColumnMap) {
  const AccessGeometry geo = desk();
  const CMatrix b0 = CMatrix::Ones(geo.obs_rows(), geo.acc_cols()), b1 = 2.0 * b0;
  const MeasurementSystem s = stack_blocks(MeasurementSystem::Stage::accurate, {&b0, &b1}, {4, 9}, geo);
  ASSERT_EQ(s.a.cols(), 56);
  EXPECT_EQ(s.column_map[0].ue, 4);
  EXPECT_EQ(s.column_map[28].ue, 9);
  EXPECT_EQ(s.column_map[7].delay, 1);
  EXPECT_EQ(s.column_map[0].bin, -geo.budget.k_neg);
  EXPECT_THROW(stack_blocks(MeasurementSystem::Stage::rough, {&b0}, {1}, geo), DimensionError);
}

TEST(Noise, Power) {
  EXPECT_NEAR(noise_power_dbm(-174.0, 64 * 15e3), -114.18, 0.01);
  std::mt19937_64 rng(2);
  BeamField f = BeamField::Zero(20000, 1);
  add_noise(f, 3.0, rng);
  EXPECT_NEAR(f.squaredNorm() / 20000.0, 3.0, 0.1);
}
