#pragma once

#include <random>
#include <vector>

#include "otfsra/channel_model.hpp"

namespace otfsra {

enum class Scheme { hybrid, superimposed, embedded };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::hybrid: return "hybrid";
    case Scheme::superimposed: return "superimposed";
    case Scheme::embedded: return "embedded";
  }
  return "?";
}

inline bool has_p1(Scheme s) { return s != Scheme::embedded; }
inline bool has_p2(Scheme s) { return s != Scheme::superimposed; }

enum class Alphabet { qpsk, gaussian };

struct PreambleSymbols {
  CMatrix p1;  // N' x M', unit average power
  CMatrix p2;  // K_p x L_p, unit average power
};

template <class Rng>
cplx draw_symbol(Rng& rng, Alphabet a) {
  return a == Alphabet::qpsk ? qpsk(rng) : complex_normal(rng, 1.0);
}

template <class Rng>
PreambleSymbols gen_preambles(Rng& rng, const AccessGeometry& geo, Alphabet alphabet = Alphabet::qpsk) {
  PreambleSymbols s;
  s.p1.resize(geo.layout.n_rough, geo.layout.m_rough);
  s.p2.resize(geo.layout.k_size, geo.layout.l_size);
  for (Eigen::Index i = 0; i < s.p1.size(); ++i) s.p1.data()[i] = draw_symbol(rng, alphabet);
  for (Eigen::Index i = 0; i < s.p2.size(); ++i) s.p2.data()[i] = draw_symbol(rng, alphabet);
  return s;
}

// One UE's frame: X = X1 + X2 with X1 holding preamble1 and X2 holding
// preamble2, zero guards and data. Preamble matrices are stored after power
// scaling, exactly as transmitted.
struct FramePlan {
  AccessGeometry geo;
  Scheme scheme = Scheme::hybrid;
  CMatrix p1;
  CMatrix p2;
  CMatrix x1;
  CMatrix x2;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> data_mask;
};

struct PowerScale {
  double p1 = 0.0;  // amplitude applied to unit-power preamble1 symbols
  double x2 = 0.0;  // amplitude applied to preamble2 and data symbols
  int x2_cells = 0;
};

// Energy split: preamble1 carries power_split of the N*M frame energy, the
// cells of X2 (preamble2 + data) share the remainder equally.
inline PowerScale power_scale(const AccessGeometry& geo, Scheme scheme) {
  const int n = geo.n(), m = geo.m();
  const bool guard = has_p2(scheme);
  PowerScale ps;
  for (int l = 0; l < m; ++l)
    for (int k = 0; k < n; ++k)
      if (!guard || !geo.in_pg(k, l) || geo.in_p2(k, l)) ++ps.x2_cells;
  const double total = static_cast<double>(n) * m;
  const double split = has_p1(scheme) ? geo.layout.power_split : 0.0;
  ps.p1 = has_p1(scheme) ? std::sqrt(split * total / (geo.layout.n_rough * geo.layout.m_rough)) : 0.0;
  ps.x2 = ps.x2_cells > 0 ? std::sqrt((1.0 - split) * total / ps.x2_cells) : 0.0;
  return ps;
}

// Preamble2 observation region built from the symbols alone: the region only
// covers preamble2 and guard cells, so no data enters it.
inline CMatrix p2_region_from_symbols(const CMatrix& p2_scaled, const AccessGeometry& geo) {
  CMatrix r = CMatrix::Zero(geo.n_obs() + geo.layout.halo_acc, geo.m_obs());
  r.topLeftCorner(geo.layout.k_size, geo.layout.l_size) = p2_scaled;
  return r;
}

template <class Rng>
FramePlan make_plan(const AccessGeometry& geo, Scheme scheme, const PreambleSymbols& pre, Rng& data_rng,
                    Alphabet data_alphabet = Alphabet::qpsk) {
  geo.validate();
  const int n = geo.n(), m = geo.m();
  FramePlan f;
  f.geo = geo;
  f.scheme = scheme;
  f.x1 = CMatrix::Zero(n, m);
  f.x2 = CMatrix::Zero(n, m);
  f.data_mask.setConstant(n, m, false);
  const bool guard = has_p2(scheme);
  for (int l = 0; l < m; ++l)
    for (int k = 0; k < n; ++k) f.data_mask(k, l) = !(guard && geo.in_pg(k, l));
  const PowerScale ps = power_scale(geo, scheme);
  const double p1_amp = ps.p1, x2_amp = ps.x2;

  f.p1 = has_p1(scheme) ? CMatrix(p1_amp * pre.p1) : CMatrix::Zero(pre.p1.rows(), pre.p1.cols());
  f.p2 = guard ? CMatrix(x2_amp * pre.p2) : CMatrix::Zero(pre.p2.rows(), pre.p2.cols());

  for (int l = 0; l < m; ++l)
    for (int k = 0; k < n; ++k)
      if (f.data_mask(k, l)) f.x2(k, l) = x2_amp * draw_symbol(data_rng, data_alphabet);
  if (guard) f.x2.block(geo.layout.k_p, geo.layout.l_p, geo.layout.k_size, geo.layout.l_size) = f.p2;
  if (has_p1(scheme))
    for (int lr = 0; lr < geo.layout.m_rough; ++lr)
      f.x1.block(0, lr * geo.p1_stride(), geo.layout.n_rough, 1) = f.p1.col(lr);
  return f;
}

inline DdFrame assemble_frame(const FramePlan& f) { return {f.geo.grid, f.x1 + f.x2}; }

// Rough model block for one UE: rows l''*N' + k', columns over the Doppler
// lattice. Column d is the d-fold cyclic shift of each preamble1 column times
// the phase e^{j2π l'' d / (N M')}.
inline CMatrix build_a_p1(const CMatrix& p1, const AccessGeometry& geo) {
  const int nr = geo.layout.n_rough, mr = geo.layout.m_rough;
  if (p1.rows() != nr || p1.cols() != mr) throw DimensionError("preamble1 shape mismatch");
  const int cols = geo.rough_cols();
  CMatrix a(nr * mr, cols);
  const double denom = static_cast<double>(geo.n()) * mr;
  for (int lr = 0; lr < mr; ++lr) {
    const CMatrix c = cyclic_columns_span(p1.col(lr), geo.rough_pos(), geo.rough_neg());
    for (int j = 0; j < cols; ++j)
      a.block(lr * nr, j, nr, 1) = c.col(j) * cis(kTwoPi * lr * geo.rough_bin(j) / denom);
  }
  return a;
}

// X_{u,p}: rows [k_p, k_p+N_p+ε), columns [l_p, l_p+M_p) of X2.
inline CMatrix p2_region(const CMatrix& x2, const AccessGeometry& geo) {
  const int rows = geo.n_obs() + geo.layout.halo_acc;
  if (geo.layout.k_p + rows > x2.rows() || geo.layout.l_p + geo.m_obs() > x2.cols())
    throw DimensionError("preamble2 region outside the frame");
  return x2.block(geo.layout.k_p, geo.layout.l_p, rows, geo.m_obs());
}

// Accurate model block for one UE: rows (l - l_p)*N_p + (k - obs_row0),
// columns delay*W + Doppler column. Column block `delay` reads region column
// (j - delay) mod M_p, expanded by truncated cyclic shifts, with the phase
// e^{j2π l d/(NM)} for absolute delay index l and signed Doppler bin d.
inline CMatrix build_a_p2(const CMatrix& region, const AccessGeometry& geo) {
  const int np = geo.n_obs(), mp = geo.m_obs(), eps = geo.layout.halo_acc;
  if (region.rows() != np + eps || region.cols() != mp) throw DimensionError("preamble2 region shape mismatch");
  const int w = geo.acc_width(), taps = geo.budget.l_max + 1;
  CMatrix a(np * mp, w * taps);
  const double denom = static_cast<double>(geo.n()) * geo.m();
  std::vector<CMatrix> blocks(mp);
  for (int j = 0; j < mp; ++j)
    blocks[j] = truncated_cyclic_columns({region.col(j), geo.span(), eps});
  for (int j = 0; j < mp; ++j) {
    const int l = geo.layout.l_p + j;
    for (int delay = 0; delay < taps; ++delay) {
      const CMatrix& c = blocks[wrap(j - delay, mp)];
      for (int col = 0; col < w; ++col)
        a.block(j * np, delay * w + col, np, 1) = c.col(col) * cis(kTwoPi * l * geo.acc_bin(col) / denom);
    }
  }
  return a;
}

struct ColumnTag {
  int ue = 0;
  int delay = 0;  // accurate stage only
  int bin = 0;    // signed Doppler bin
};

struct MeasurementSystem {
  enum class Stage { rough, accurate } stage = Stage::rough;
  CMatrix a;
  CMatrix y;
  std::vector<ColumnTag> column_map;
  std::vector<int> ues;  // UE ids in block order
  int block = 0;         // columns per UE
};

// Concatenates per-UE model blocks (one per entry of ues) column-wise.
inline MeasurementSystem stack_blocks(MeasurementSystem::Stage stage, const std::vector<const CMatrix*>& blocks,
                                      const std::vector<int>& ues, const AccessGeometry& geo) {
  if (blocks.size() != ues.size()) throw DimensionError("one model block per UE required");
  MeasurementSystem s;
  s.stage = stage;
  const bool rough = stage == MeasurementSystem::Stage::rough;
  s.block = rough ? geo.rough_cols() : geo.acc_cols();
  s.ues = ues;
  s.a.resize(rough ? geo.rough_rows() : geo.obs_rows(), static_cast<Eigen::Index>(ues.size()) * s.block);
  s.column_map.reserve(static_cast<std::size_t>(s.a.cols()));
  for (std::size_t i = 0; i < ues.size(); ++i) {
    if (blocks[i]->rows() != s.a.rows() || blocks[i]->cols() != s.block) throw DimensionError("model block shape");
    s.a.middleCols(static_cast<Eigen::Index>(i) * s.block, s.block) = *blocks[i];
    for (int c = 0; c < s.block; ++c) {
      if (rough)
        s.column_map.push_back({ues[i], 0, geo.rough_bin(c)});
      else
        s.column_map.push_back({ues[i], c / geo.acc_width(), geo.acc_bin(c % geo.acc_width())});
    }
  }
  return s;
}

// Y' = y_TF[n' N/N', m'] / sqrt(alpha*beta), then an N' x M' SFFT per beam.
// Only the decimated TF samples are formed. Rows are k' + N' l''.
inline CMatrix extract_y_p1(const BeamField& field, const AccessGeometry& geo, std::uint64_t* macs = nullptr) {
  const int n = geo.n(), m = geo.m(), nr = geo.layout.n_rough, mr = geo.layout.m_rough;
  if (field.rows() != static_cast<Eigen::Index>(n) * m) throw DimensionError("field shape mismatch");
  const int stride = geo.doppler_stride();
  CMatrix rows_tf(nr, n);  // e^{j2π n k/N} at n = n' * stride
  for (int a = 0; a < nr; ++a)
    for (int k = 0; k < n; ++k) rows_tf(a, k) = cis(kTwoPi * static_cast<double>((a * stride * k) % n) / n);
  const CMatrix cols_tf = dft_matrix(m, mr, m, -1.0);  // e^{-j2π m l/M}, l rows, m' cols
  const double scale = 1.0 / std::sqrt(static_cast<double>(n) * m) / std::sqrt(geo.alpha() * geo.beta());
  const CMatrix fn = dft_matrix(nr, nr, nr, -1.0), fm = dft_matrix(mr, mr, mr, +1.0);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(nr) * mr);
  CMatrix out(nr * mr, field.cols());
  for (Eigen::Index b = 0; b < field.cols(); ++b) {
    const CMatrix y = field_beam(field, n, m, static_cast<int>(b));
    const CMatrix tf = scale * (rows_tf * y) * cols_tf;
    const CMatrix dd = s2 * fn * tf * fm;
    out.col(b) = Eigen::Map<const CVector>(dd.data(), dd.size());
  }
  if (macs)
    *macs += static_cast<std::uint64_t>(field.cols()) *
             (static_cast<std::uint64_t>(nr) * n * m + static_cast<std::uint64_t>(nr) * m * mr +
              static_cast<std::uint64_t>(nr) * nr * mr + static_cast<std::uint64_t>(nr) * mr * mr);
  return out;
}

inline CMatrix extract_y_p2(const BeamField& field, const AccessGeometry& geo) {
  const int n = geo.n(), np = geo.n_obs(), mp = geo.m_obs(), r0 = geo.obs_row0(), c0 = geo.layout.l_p;
  if (r0 < 0 || r0 + np > n || c0 + mp > geo.m()) throw DimensionError("observation slice out of bounds");
  CMatrix out(np * mp, field.cols());
  for (int j = 0; j < mp; ++j)
    for (int i = 0; i < np; ++i) out.row(j * np + i) = field.row(field_row(n, r0 + i, c0 + j));
  return out;
}

// Received field of frame x through an accurate-lattice channel estimate,
// using the same phase convention as build_a_p2 over the whole frame.
inline BeamField apply_lattice_channel(const CMatrix& x, const CMatrix& h2, const AccessGeometry& geo,
                                       std::uint64_t* macs = nullptr) {
  const int n = geo.n(), m = geo.m(), w = geo.acc_width();
  BeamField out = BeamField::Zero(static_cast<Eigen::Index>(n) * m, h2.cols());
  const double denom = static_cast<double>(n) * m;
  CVector shifted(static_cast<Eigen::Index>(n) * m);
  std::vector<std::pair<int, int>> support;  // nonzero cells of x
  for (int l = 0; l < m; ++l)
    for (int k = 0; k < n; ++k)
      if (x(k, l) != cplx{0.0, 0.0}) support.emplace_back(k, l);
  for (Eigen::Index r = 0; r < h2.rows(); ++r) {
    if (h2.row(r).squaredNorm() == 0.0) continue;
    const int delay = static_cast<int>(r) / w, d = geo.acc_bin(static_cast<int>(r) % w);
    shifted.setZero();
    for (auto [ks, ls] : support) {
      const int k = wrap(ks + d, n), l = wrap(ls + delay, m);
      cplx v = x(ks, ls) * cis(kTwoPi * l * d / denom);
      if (l < delay) v *= cis(-kTwoPi * ks / n);
      shifted(field_row(n, k, l)) += v;
    }
    out.noalias() += shifted * h2.row(r);
    if (macs) *macs += static_cast<std::uint64_t>(support.size()) * h2.cols();
  }
  return out;
}

template <class Rng>
void add_noise(BeamField& field, double variance, Rng& rng) {
  if (variance <= 0) return;
  for (Eigen::Index i = 0; i < field.size(); ++i) field.data()[i] += complex_normal(rng, variance);
}

// Noise-free superposition over UEs; each entry pairs a frame with its taps to
// this AP. The Doppler sum covers the whole grid.
inline BeamField synthesize_noiseless(const std::vector<std::pair<const FramePlan*, const std::vector<DdTap>*>>& ues,
                                      const OtfsGrid& g, int beams) {
  BeamField y = BeamField::Zero(static_cast<Eigen::Index>(g.cells()), beams);
  for (const auto& [plan, taps] : ues) y += dd_forward(assemble_frame(*plan), *taps, g.n_doppler, beams);
  return y;
}

template <class Rng>
BeamField synthesize_observation(const std::vector<std::pair<const FramePlan*, const std::vector<DdTap>*>>& ues,
                                 const OtfsGrid& g, int beams, double noise_variance, Rng& rng) {
  BeamField y = synthesize_noiseless(ues, g, beams);
  add_noise(y, noise_variance, rng);
  return y;
}

inline double noise_power_dbm(double n0_dbm_hz, double bandwidth_hz) { return n0_dbm_hz + db10(bandwidth_hz); }

}  // namespace otfsra
