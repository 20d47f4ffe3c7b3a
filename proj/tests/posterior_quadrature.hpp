#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

// Independent reference: moments of exp(-tau|x|) N(r; x, u) by adaptive
// Gauss-Kronrod over a breakpoint mesh refined around 0 and the two modes.
namespace oracle {

struct PosteriorMoments {
  double mean, var, abs_mean;
};

inline PosteriorMoments laplace_posterior_quadrature(double r, double u, double tau) {
  using boost::math::quadrature::gauss_kronrod;
  const double sd = std::sqrt(u);
  auto logf = [&](double x) { return -tau * std::abs(x) - (x - r) * (x - r) / (2.0 * u); };
  const double mode_p = std::max(r - u * tau, 0.0), mode_m = std::min(r + u * tau, 0.0);
  const double peak = std::max(logf(mode_p), logf(mode_m));
  const double lo = mode_m - 40.0 * sd, hi = mode_p + 40.0 * sd;

  std::vector<double> cuts{lo, hi, 0.0, mode_p, mode_m};
  const double fine = std::min(sd, tau > 0 ? 1.0 / tau : sd);
  for (double centre : {0.0, mode_p, mode_m})
    for (double k = 1.0 / 16; k <= 64.0; k *= 2.0)
      for (double s : {-1.0, 1.0}) cuts.push_back(centre + s * k * (centre == 0.0 ? fine : sd));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::remove_if(cuts.begin(), cuts.end(), [&](double c) { return c < lo || c > hi; }), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  auto integrate = [&](auto g) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
      total += gauss_kronrod<double, 21>::integrate(g, cuts[i], cuts[i + 1], 10, 1e-12);
    return total;
  };
  auto w = [&](double x) { return std::exp(logf(x) - peak); };
  const double z = integrate(w);
  const double mean = integrate([&](double x) { return x * w(x); }) / z;
  const double var = integrate([&](double x) { return (x - mean) * (x - mean) * w(x); }) / z;
  const double am = integrate([&](double x) { return std::abs(x) * w(x); }) / z;
  return {mean, var, am};
}

}  // namespace oracle
