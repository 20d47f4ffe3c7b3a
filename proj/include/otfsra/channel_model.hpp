#pragma once

#include <algorithm>
#include <array>
#include <random>
#include <vector>

#include "otfsra/geometry.hpp"
#include "otfsra/rng.hpp"

namespace otfsra {

struct UpaConfig {
  int n_y = 4;
  int n_z = 4;
  int size() const { return n_y * n_z; }
  void validate() const {
    if (n_y < 1 || n_z < 1) throw ConfigError("UPA needs n_y >= 1 and n_z >= 1");
  }
};

struct PhysicalPath {
  cplx gain{0.0, 0.0};
  double delay_s = 0.0;
  double doppler_hz = 0.0;
  double elevation = 0.0;  // [0, pi]
  double azimuth = 0.0;    // [-pi/2, pi/2]
};

struct PathSet {
  int ue_id = 0;
  int ap_id = 0;
  std::vector<PhysicalPath> paths;
  double large_scale = 1.0;  // linear
};

struct QuantizedTap {
  int l_int = 0;
  int k_int = 0;
  double k_frac = 0.0;  // [-0.5, 0.5)
};

inline QuantizedTap quantize_delay_doppler(const OtfsGrid& g, const PhysicalPath& p) {
  QuantizedTap q;
  q.l_int = static_cast<int>(std::floor(p.delay_s * g.m_delay * g.subcarrier_hz + 0.5));
  const double kappa = p.doppler_hz * g.n_doppler * g.symbol_s;
  q.k_int = static_cast<int>(std::floor(kappa + 0.5));
  q.k_frac = kappa - q.k_int;
  return q;
}

inline double max_doppler_hz(double speed_kmh, double carrier_hz) {
  return speed_kmh / 3.6 * carrier_hz / 299792458.0;
}

// Large-scale fading in dB at distance d (km).
inline double large_scale_db(double d_km, double intercept_db = -128.0, double slope = 37.6) {
  return intercept_db - slope * std::log10(d_km);
}

enum class PathMode { uniform, eva };

inline PathMode parse_path_mode(const std::string& s) {
  if (s == "uniform") return PathMode::uniform;
  if (s == "eva") return PathMode::eva;
  throw ConfigError("unknown path mode '" + s + "'");
}

struct PathDraw {
  int n_paths = 9;
  double tau_max_s = 2.5e-6;
  double nu_max_hz = 1111.1;
  PathMode mode = PathMode::uniform;
  bool two_sided = true;
  // false: per-path variance λ/P²; true: λ/P (unit total power)
  bool gain_over_p = false;
};

// 3GPP extended vehicular A: delays (ns) and relative powers (dB).
inline constexpr std::array<double, 9> kEvaDelayNs{0, 30, 150, 310, 370, 710, 1090, 1730, 2510};
inline constexpr std::array<double, 9> kEvaPowerDb{0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9};

template <class Rng>
PathSet sample_paths(Rng& rng, const PathDraw& draw, double large_scale, int ue_id = 0, int ap_id = 0) {
  if (draw.n_paths < 1) throw ConfigError("need at least one path");
  if (draw.mode == PathMode::eva && draw.n_paths > static_cast<int>(kEvaDelayNs.size()))
    throw ConfigError("EVA profile has 9 taps");
  PathSet s{ue_id, ap_id, {}, large_scale};
  const double p = draw.n_paths;
  const double base_var = large_scale / (draw.gain_over_p ? p : p * p);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  double eva_norm = 0.0;
  for (int i = 0; i < draw.n_paths; ++i) eva_norm += from_db10(kEvaPowerDb[i]);

  for (int i = 0; i < draw.n_paths; ++i) {
    PhysicalPath path;
    double var = base_var;
    if (draw.mode == PathMode::uniform) {
      path.delay_s = u01(rng) * draw.tau_max_s;
    } else {
      path.delay_s = std::min(kEvaDelayNs[i] * 1e-9, draw.tau_max_s);
      var = base_var * p * from_db10(kEvaPowerDb[i]) / eva_norm;
    }
    const double v = u01(rng);
    path.doppler_hz = draw.two_sided ? (2.0 * v - 1.0) * draw.nu_max_hz : v * draw.nu_max_hz;
    path.elevation = u01(rng) * kPi;
    path.azimuth = (u01(rng) - 0.5) * kPi;
    path.gain = complex_normal(rng, var);
    s.paths.push_back(path);
  }
  return s;
}

inline CVector ula_response(int n, double rho) {
  CVector a(n);
  for (int i = 0; i < n; ++i) a(i) = cis(kPi * i * rho) / std::sqrt(static_cast<double>(n));
  return a;
}

// Beam-domain response: W^H a_s with W the Kronecker product of unitary DFTs,
// so an on-grid direction (rho_y = 2p/N_y, rho_z = 2q/N_z) lands on beam p*N_z+q.
inline CVector upa_beam(const UpaConfig& cfg, double elevation, double azimuth) {
  cfg.validate();
  const double rho_y = std::cos(elevation) * std::cos(azimuth);
  const double rho_z = std::sin(elevation);
  const CVector ay = ula_response(cfg.n_y, rho_y), az = ula_response(cfg.n_z, rho_z);
  const CMatrix dy = dft_matrix(cfg.n_y, cfg.n_y, cfg.n_y, +1.0) / std::sqrt(static_cast<double>(cfg.n_y));
  const CMatrix dz = dft_matrix(cfg.n_z, cfg.n_z, cfg.n_z, +1.0) / std::sqrt(static_cast<double>(cfg.n_z));
  const CVector by = dy.adjoint() * ay, bz = dz.adjoint() * az;
  CVector a(cfg.size());
  for (int i = 0; i < cfg.n_y; ++i)
    for (int j = 0; j < cfg.n_z; ++j) a(i * cfg.n_z + j) = by(i) * bz(j);
  return a;
}

inline std::vector<DdTap> to_dd_taps(const OtfsGrid& g, const UpaConfig& upa, const PathSet& s) {
  std::vector<DdTap> taps;
  taps.reserve(s.paths.size());
  for (const auto& p : s.paths) {
    const auto q = quantize_delay_doppler(g, p);
    taps.push_back({p.gain, q.l_int, q.k_int, q.k_frac, upa_beam(upa, p.elevation, p.azimuth)});
  }
  return taps;
}

struct GroundTruthChannel {
  CMatrix h_dd1;               // rough_cols x beams
  CMatrix h_dd2;               // acc_cols x beams
  std::vector<int> rows_dd1;   // occupied rows, sorted
  std::vector<int> rows_dd2;
};

// Rough rows carry gain * psi_{M'}(-beta*l, 0) * psi_{N'}(kappa, d); accurate
// rows carry gain * e^{-j2π l kappa/(NM)} * psi_N(kappa, d), d in k_int ± halo.
inline GroundTruthChannel build_ground_truth(const AccessGeometry& geo, const std::vector<DdTap>& taps,
                                             int beams) {
  GroundTruthChannel h;
  h.h_dd1 = CMatrix::Zero(geo.rough_cols(), beams);
  h.h_dd2 = CMatrix::Zero(geo.acc_cols(), beams);
  const int n = geo.n(), m = geo.m();
  const int nr = geo.layout.n_rough, mr = geo.layout.m_rough;
  const int e1 = geo.layout.halo_rough, e2 = geo.layout.halo_acc;
  for (const auto& t : taps) {
    if (t.l_int > geo.budget.l_max || t.k_int > geo.budget.k_max || t.k_int < -geo.budget.k_neg)
      throw ConfigError("path outside the delay/Doppler budget");
    const CVector beam = t.beam.size() == 0 ? CVector::Ones(1) : t.beam;
    if (beam.size() != beams) throw DimensionError("beam dimension mismatch");
    const double kappa = t.k_int + t.k_frac;
    const cplx rough_gain = t.gain * psi(mr, -geo.beta() * t.l_int, 0.0);
    for (int s = -e1; s <= e1; ++s) {
      const int d = t.k_int + s;
      const int row = geo.rough_col(d);
      h.h_dd1.row(row) += (rough_gain * psi(nr, kappa, d)) * beam.transpose();
      h.rows_dd1.push_back(row);
    }
    const cplx acc_gain = t.gain * cis(-kTwoPi * t.l_int * kappa / (static_cast<double>(n) * m));
    for (int s = -e2; s <= e2; ++s) {
      const int d = t.k_int + s;
      const int row = geo.acc_col(t.l_int, d);
      h.h_dd2.row(row) += (acc_gain * psi(n, kappa, d)) * beam.transpose();
      h.rows_dd2.push_back(row);
    }
  }
  for (auto* v : {&h.rows_dd1, &h.rows_dd2}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  return h;
}

}  // namespace otfsra
