#pragma once

#include <cmath>
#include <vector>

#include "otfsra/types.hpp"

namespace otfsra {

struct OtfsGrid {
  int n_doppler = 0;        // N
  int m_delay = 0;          // M
  double subcarrier_hz = 0; // Δf
  double symbol_s = 0;      // T = 1/Δf

  static OtfsGrid make(int n, int m, double subcarrier_hz) {
    OtfsGrid g{n, m, subcarrier_hz, 1.0 / subcarrier_hz};
    g.validate();
    return g;
  }

  void validate() const {
    if (n_doppler < 1 || m_delay < 1)
      throw InvalidFrame("grid needs N >= 1 and M >= 1");
    if (!(subcarrier_hz > 0) || std::abs(symbol_s * subcarrier_hz - 1.0) > 1e-12)
      throw InvalidFrame("grid needs T * subcarrier spacing == 1");
  }

  double delay_resolution_s() const { return 1.0 / (m_delay * subcarrier_hz); }
  double doppler_resolution_hz() const { return 1.0 / (n_doppler * symbol_s); }
  int cells() const { return n_doppler * m_delay; }
};

// Doppler index k along rows, delay index l along columns.
struct DdFrame {
  OtfsGrid grid;
  CMatrix symbols;
};

// Same shape; rows are symbol index n, columns subcarrier m.
struct TfFrame {
  OtfsGrid grid;
  CMatrix symbols;
};

// Received DD field with a beam dimension: row k + N*l, one column per beam.
using BeamField = CMatrix;

inline int field_row(int n_doppler, int k, int l) { return k + n_doppler * l; }

inline int wrap(int i, int n) {
  int r = i % n;
  return r < 0 ? r + n : r;
}

// D[a,b] = e^{sign * j2π ab / n}
inline CMatrix dft_matrix(int rows, int cols, int n, double sign) {
  CMatrix d(rows, cols);
  for (int a = 0; a < rows; ++a)
    for (int b = 0; b < cols; ++b)
      d(a, b) = cis(sign * kTwoPi * static_cast<double>((static_cast<long long>(a) * b) % n) / n);
  return d;
}

namespace detail {
inline void check_frame(const OtfsGrid& g, const CMatrix& x) {
  g.validate();
  if (x.rows() != g.n_doppler || x.cols() != g.m_delay)
    throw InvalidFrame("frame shape does not match grid");
  if (!x.allFinite()) throw InvalidFrame("frame has non-finite entries");
}
}  // namespace detail

// X_tf = (1/sqrt(NM)) * F_N^{+} X_dd F_M^{-}
inline CMatrix isfft(const CMatrix& x_dd) {
  const int n = static_cast<int>(x_dd.rows()), m = static_cast<int>(x_dd.cols());
  const double s = 1.0 / std::sqrt(static_cast<double>(n) * m);
  return s * dft_matrix(n, n, n, +1.0) * x_dd * dft_matrix(m, m, m, -1.0);
}

inline CMatrix sfft(const CMatrix& x_tf) {
  const int n = static_cast<int>(x_tf.rows()), m = static_cast<int>(x_tf.cols());
  const double s = 1.0 / std::sqrt(static_cast<double>(n) * m);
  return s * dft_matrix(n, n, n, -1.0) * x_tf * dft_matrix(m, m, m, +1.0);
}

inline TfFrame isfft(const DdFrame& f) {
  detail::check_frame(f.grid, f.symbols);
  return {f.grid, isfft(f.symbols)};
}

inline DdFrame sfft(const TfFrame& f) {
  detail::check_frame(f.grid, f.symbols);
  return {f.grid, sfft(f.symbols)};
}

// (1/n) Σ_{m<n} e^{-j2π m (y-x)/n}. The sum is n-periodic in (y-x), so the
// argument is reduced first; the only removable singularity left is y-x = 0.
// For integer y this equals (1/n)(1 - e^{j2πx}) / (1 - e^{-j2π(y-x)/n}).
inline cplx psi(int n, double x, double y) {
  const double d0 = y - x;
  const double d = d0 - n * std::round(d0 / n);
  if (d == 0.0) return {1.0, 0.0};
  const double mag = std::sin(kPi * d) / (n * std::sin(kPi * d / n));
  return mag * cis(-kPi * d * (n - 1) / n);
}

struct CyclicShiftSpec {
  CVector base;
  int max_shift = 0;  // k
  int halo = 0;       // ε
};

// Columns circ(x,0..pos), circ(x,-neg..-1); circ(x,i)[n] = x[(n-i) mod len].
inline CMatrix cyclic_columns_span(const CVector& x, int pos, int neg) {
  const int len = static_cast<int>(x.size());
  if (pos < 0 || neg < 0) throw OverShift("shift extents must be non-negative");
  const int cols = pos + neg + 1;
  if (cols > len) throw OverShift("more cyclic shifts than base length");
  CMatrix c(len, cols);
  for (int j = 0; j < cols; ++j) {
    const int shift = j <= pos ? j : j - cols;
    for (int r = 0; r < len; ++r) c(r, j) = x(wrap(r - shift, len));
  }
  return c;
}

inline CMatrix cyclic_columns(const CyclicShiftSpec& s) {
  if (s.max_shift < 0 || s.halo < 0) throw OverShift("k and halo must be non-negative");
  return cyclic_columns_span(s.base, s.max_shift + s.halo, s.halo);
}

// Keeps the first len - ε rows.
inline CMatrix truncated_cyclic_columns(const CyclicShiftSpec& s) {
  CMatrix c = cyclic_columns(s);
  return c.topRows(c.rows() - s.halo);
}

struct DdTap {
  cplx gain{1.0, 0.0};
  int l_int = 0;
  int k_int = 0;
  double k_frac = 0.0;
  CVector beam;  // empty means scalar beam of value 1
};

namespace detail {
// Scalar response of one tap: the two-branch DD input-output relation with the
// Doppler sum restricted to [k_int - halo, k_int + halo] (all N bins once the
// halo covers the grid).
inline CMatrix tap_response(const CMatrix& x, const DdTap& tap, int halo) {
  const int n = static_cast<int>(x.rows()), m = static_cast<int>(x.cols());
  const double kappa = tap.k_int + tap.k_frac;
  int lo = tap.k_int - halo, count = 2 * halo + 1;
  if (count >= n) {
    lo = tap.k_int - n / 2;
    count = n;
  }
  std::vector<cplx> w(count);
  for (int i = 0; i < count; ++i) w[i] = psi(n, kappa, lo + i);

  CMatrix y = CMatrix::Zero(n, m);
  for (int l = 0; l < m; ++l) {
    const int lsrc = wrap(l - tap.l_int, m);
    const bool previous_symbol = l < tap.l_int;
    const cplx ramp = cis(kTwoPi * (l - tap.l_int) * kappa / (static_cast<double>(n) * m));
    for (int k = 0; k < n; ++k) {
      cplx acc{0.0, 0.0};
      for (int i = 0; i < count; ++i) {
        const int ksrc = wrap(k - (lo + i), n);
        cplx v = w[i] * x(ksrc, lsrc);
        if (previous_symbol) v *= cis(-kTwoPi * ksrc / n);
        acc += v;
      }
      y(k, l) = ramp * acc;
    }
  }
  return y;
}

inline int beam_dim(const std::vector<DdTap>& taps, int fallback) {
  int j = -1;
  for (const auto& t : taps) {
    const int d = t.beam.size() == 0 ? 1 : static_cast<int>(t.beam.size());
    if (j >= 0 && d != j) throw InvalidTap("taps disagree on beam dimension");
    j = d;
  }
  return j < 0 ? fallback : j;
}

inline void add_outer(BeamField& field, const CMatrix& scalar, cplx gain, const CVector& beam) {
  const Eigen::Map<const CVector> v(scalar.data(), scalar.size());
  if (beam.size() == 0)
    field.col(0) += gain * v;
  else
    field.noalias() += (gain * v) * beam.transpose();
}
}  // namespace detail

inline BeamField dd_forward(const DdFrame& frame, const std::vector<DdTap>& taps, int halo,
                            int beam_dim_hint = 1) {
  detail::check_frame(frame.grid, frame.symbols);
  if (halo < 0) throw InvalidTap("halo must be non-negative");
  const int n = frame.grid.n_doppler, m = frame.grid.m_delay;
  for (const auto& t : taps) {
    if (t.l_int < 0 || t.l_int >= m) throw InvalidTap("tap delay index out of range");
    if (std::abs(t.k_frac) > 0.5) throw InvalidTap("fractional Doppler must lie in [-0.5, 0.5]");
  }
  BeamField field = BeamField::Zero(static_cast<Eigen::Index>(n) * m, detail::beam_dim(taps, beam_dim_hint));
  for (const auto& t : taps) {
    if (t.gain == cplx{0.0, 0.0}) continue;
    detail::add_outer(field, detail::tap_response(frame.symbols, t, halo), t.gain, t.beam);
  }
  return field;
}

// Per-beam N x M view of a field column.
inline CMatrix field_beam(const BeamField& f, int n, int m, int beam) {
  return Eigen::Map<const CMatrix>(f.col(beam).data(), n, m);
}

}  // namespace otfsra
