#include <gtest/gtest.h>

#include <random>

#include "otfsra/scalar_estimators.hpp"
#include "posterior_quadrature.hpp"

using namespace otfsra;

namespace {
double rel(double x, double ref) { return std::abs(x - ref) / std::max(std::abs(ref), 1e-300); }
}  // namespace

TEST(GOut, Arithmetic) {
  // p = 1, y = 3, u_p = 1, gamma = 3
  const OutputMoments o = g_out(1.0, 3.0, 1.0, 3.0);
  EXPECT_DOUBLE_EQ(o.s_hat, 0.5);
  EXPECT_DOUBLE_EQ(o.u_s, 0.25);
  EXPECT_DOUBLE_EQ(o.z_hat, 1.5);
  EXPECT_DOUBLE_EQ(o.u_z, 0.75);
  EXPECT_THROW(g_out(0.0, 0.0, 0.0, 1.0), std::domain_error);
  EXPECT_THROW(g_out(0.0, 0.0, 1.0, 0.0), std::domain_error);
}

TEST(GInLaplace, MatchesQuadratureOnSpotPoints) {
  for (double r : {-10.0, -0.3, 0.0, 1e-3, 2.0, 10.0})
    for (double u : {1e-4, 0.05, 1.0, 10.0})
      for (double tau : {1e-3, 0.7, 30.0, 1e3}) {
        const auto q = oracle::laplace_posterior_quadrature(r, u, tau);
        const auto m = g_in_laplace(r, u, tau);
        if (r == 0.0) {
          EXPECT_EQ(m.x_hat, 0.0);
        } else {
          EXPECT_LT(rel(m.x_hat, q.mean), 1e-6) << r << " " << u << " " << tau;
        }
        EXPECT_LT(rel(m.u_x, q.var), 1e-6) << r << " " << u << " " << tau;
        EXPECT_LT(rel(m.abs_mean, q.abs_mean), 1e-6) << r << " " << u << " " << tau;
      }
}

TEST(GInLaplace, ExponentIdentity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ur(-10, 10), lu(-4, 1), lt(-3, 3);
  for (int t = 0; t < 200; ++t) {
    const double r = ur(rng), u = std::pow(10.0, lu(rng)), tau = std::pow(10.0, lt(rng));
    const auto s = laplace_split(r, u, tau);
    const double ref = r * r / (2 * u);
    EXPECT_NEAR(s.xi_plus + s.phi_plus * s.phi_plus / (2 * u), ref, 1e-9 * std::max(1.0, ref));
    EXPECT_NEAR(s.xi_minus + s.phi_minus * s.phi_minus / (2 * u), ref, 1e-9 * std::max(1.0, ref));
  }
}

TEST(GInLaplace, Symmetry) {
  for (double r : {0.4, 3.0})
    for (double tau : {0.1, 5.0}) {
      const auto a = g_in_laplace(r, 0.3, tau), b = g_in_laplace(-r, 0.3, tau);
      EXPECT_NEAR(a.x_hat, -b.x_hat, 1e-14);
      EXPECT_NEAR(a.u_x, b.u_x, 1e-14);
      EXPECT_NEAR(a.abs_mean, b.abs_mean, 1e-14);
    }
  EXPECT_NEAR(g_in_laplace(0.0, 1.0, 2.0).x_hat, 0.0, 1e-15);
}

TEST(GInLaplace, FlatPriorLimit) {
  const auto m = g_in_laplace(1.7, 0.2, 0.0);
  EXPECT_NEAR(m.x_hat, 1.7, 1e-12);
  EXPECT_NEAR(m.u_x, 0.2, 1e-12);
}

TEST(GInLaplace, ShrinksTowardZero) {
  double prev = 10.0;
  for (double tau : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    const double x = g_in_laplace(2.0, 0.5, tau).x_hat;
    EXPECT_LT(x, prev);
    EXPECT_GT(x, 0.0);
    prev = x;
  }
}

TEST(GInLaplace, ExtremeArgumentsStayFinite) {
  for (double r : {-1e4, 1e4})
    for (double tau : {1e-6, 1e6}) {
      const auto m = g_in_laplace(r, 1e-6, tau);
      EXPECT_TRUE(std::isfinite(m.x_hat));
      EXPECT_TRUE(std::isfinite(m.u_x));
      EXPECT_GT(m.u_x, 0.0);
      EXPECT_GE(m.abs_mean + 1e-12, std::abs(m.x_hat));
    }
}

TEST(LowerTail, AsymptoticBranchIsContinuous) {
  const auto a = lower_tail(149.999L), b = lower_tail(150.001L);
  // log Q(a) + a^2/2 has slope close to -1/a
  EXPECT_NEAR(static_cast<double>(b.log_q_scaled - a.log_q_scaled), -0.002 / 150.0, 1e-8);
  EXPECT_NEAR(static_cast<double>(a.excess * 150), static_cast<double>(b.excess * 150), 1e-4);
}

TEST(GInGaussian, ClosedForms) {
  // r = 2, u = 1, prior variance 1 (tau = 1): mean 1, variance 1/2
  const auto m = g_in_gaussian(2.0, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(m.x_hat, 1.0);
  EXPECT_DOUBLE_EQ(m.u_x, 0.5);
  EXPECT_DOUBLE_EQ(m.second, 1.5);
  // folded normal at mean 0
  const auto z = g_in_gaussian(0.0, 2.0, 0.0);
  EXPECT_NEAR(z.abs_mean, std::sqrt(2.0) * std::sqrt(2.0 / kPi), 1e-12);
  EXPECT_THROW(g_in_gaussian(0.0, 0.0, 1.0), std::domain_error);
}
