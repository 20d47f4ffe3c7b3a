#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "otfsra/types.hpp"

namespace otfsra {

struct OutputMoments {
  double s_hat = 0, u_s = 0;  // score and its negative derivative
  double z_hat = 0, u_z = 0;  // posterior of the noiseless output
};

// AWGN output channel with noise variance gamma.
inline OutputMoments g_out(double p_hat, double y, double u_p, double gamma) {
  if (!(u_p > 0) || !(gamma > 0)) throw std::domain_error("g_out needs u_p > 0 and gamma > 0");
  const double den = u_p + gamma;
  return {(y - p_hat) / den, 1.0 / den, (u_p * y + gamma * p_hat) / den, u_p * gamma / den};
}

struct InputMoments {
  double x_hat = 0;
  double u_x = 0;
  double abs_mean = 0;  // <|x|>
  double second = 0;    // <x^2>
};

// Gaussian tail Q(a) and the moments of a standard normal truncated to z > a.
// log_q_scaled is log Q(a) + a^2/2, which stays O(log a) for large a.
struct LowerTail {
  long double log_q_scaled;
  long double excess;  // E[z | z > a] - a
  long double var;     // Var[z | z > a]
};

inline LowerTail lower_tail(long double a) {
  constexpr long double half_log_2pi = 0.918938533204672741780329736405617639861L;
  if (a > 150.0L) {
    const long double t = 1.0L / (a * a);
    const long double series = 1.0L - t + 3.0L * t * t - 15.0L * t * t * t + 105.0L * t * t * t * t;
    return {-std::log(a) - half_log_2pi + std::log(series), (1.0L - 2.0L * t + 10.0L * t * t - 74.0L * t * t * t) / a,
            t * (1.0L - 6.0L * t + 50.0L * t * t - 518.0L * t * t * t)};
  }
  const long double scaled = std::log(0.5L * std::erfc(a / std::sqrt(2.0L))) + 0.5L * a * a;
  const long double lambda = std::exp(-half_log_2pi - scaled);  // inverse Mills ratio
  const long double e = lambda - a;
  return {scaled, e, std::max(0.0L, 1.0L - lambda * e)};
}

// Split-posterior exponents: for x > 0 the posterior is exp(-xi_plus) N(x; phi_plus, u),
// for x < 0 exp(-xi_minus) N(x; phi_minus, u), up to a common constant.
struct LaplaceSplit {
  double xi_plus, xi_minus, phi_plus, phi_minus;
};

inline LaplaceSplit laplace_split(double r_hat, double u_r, double tau) {
  return {tau * r_hat - 0.5 * u_r * tau * tau, -tau * r_hat - 0.5 * u_r * tau * tau, r_hat - u_r * tau,
          r_hat + u_r * tau};
}

// Posterior of x under prior exp(-tau|x|) and likelihood N(r_hat; x, u_r).
// Branch masses are exp(-xi) Q(a) with a = -phi_plus/sqrt(u) or phi_minus/sqrt(u);
// since xi + phi^2/(2u) = r^2/(2u) on both branches, the log-masses reduce to
// log Q(a) + a^2/2 plus a shared constant, which avoids cancelling two
// numbers of size u*tau^2.
inline InputMoments g_in_laplace(double r_hat, double u_r, double tau) {
  if (!(u_r > 0) || !(tau >= 0)) throw std::domain_error("g_in_laplace needs u_r > 0 and tau >= 0");
  const long double r = r_hat, u = u_r, t = tau;
  const long double su = std::sqrt(u);
  const long double a_plus = (u * t - r) / su, a_minus = (r + u * t) / su;
  const LowerTail tp = lower_tail(a_plus), tm = lower_tail(a_minus);
  const long double wp = tp.log_q_scaled, wm = tm.log_q_scaled;
  const long double top = std::max(wp, wm);
  const long double ep = std::exp(wp - top), em = std::exp(wm - top);
  const long double pp = ep / (ep + em), pm = em / (ep + em);
  const long double mp = su * tp.excess, mm = -su * tm.excess;
  const long double vp = u * tp.var, vm = u * tm.var;
  InputMoments out;
  const long double mean = pp * mp + pm * mm;
  const long double var = pp * vp + pm * vm + pp * pm * (mp - mm) * (mp - mm);
  out.x_hat = static_cast<double>(mean);
  out.u_x = static_cast<double>(std::max(var, 1e-300L));
  out.abs_mean = static_cast<double>(pp * mp - pm * mm);
  out.second = static_cast<double>(pp * (vp + mp * mp) + pm * (vm + mm * mm));
  return out;
}

inline double abs_posterior_mean(double r_hat, double u_r, double tau) {
  return g_in_laplace(r_hat, u_r, tau).abs_mean;
}

// Prior N(0, 1/tau).
inline InputMoments g_in_gaussian(double r_hat, double u_r, double tau) {
  if (!(u_r > 0) || !(tau >= 0)) throw std::domain_error("g_in_gaussian needs u_r > 0 and tau >= 0");
  const double den = 1.0 + tau * u_r;
  InputMoments out;
  out.x_hat = r_hat / den;
  out.u_x = u_r / den;
  out.second = out.x_hat * out.x_hat + out.u_x;
  const double sd = std::sqrt(out.u_x);
  const double m = out.x_hat;
  // folded normal mean
  out.abs_mean = sd * std::sqrt(2.0 / kPi) * std::exp(-0.5 * m * m / out.u_x) + m * std::erf(m / (sd * std::sqrt(2.0)));
  return out;
}

}  // namespace otfsra
