#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace otfsra {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kJ{0.0, 1.0};

// e^{j*theta}
inline cplx cis(double theta) { return {std::cos(theta), std::sin(theta)}; }

struct InvalidFrame : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct InvalidTap : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct OverShift : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct LayoutError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Multiply-accumulate counter threaded through the heavy kernels.
struct MacCounter {
  std::uint64_t rough = 0;
  std::uint64_t accurate = 0;
  std::uint64_t sic = 0;
  std::uint64_t total() const { return rough + accurate + sic; }
};

inline double db10(double x) { return 10.0 * std::log10(x); }
inline double from_db10(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace otfsra
