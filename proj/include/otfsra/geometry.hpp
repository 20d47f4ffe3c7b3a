#pragma once

#include <string>

#include "otfsra/dd_core.hpp"

namespace otfsra {

// Integer Doppler/delay budgets. Doppler bins run over [-k_neg, k_max];
// k_neg is k_max for two-sided Doppler and 0 for the one-sided range.
struct ChannelBudget {
  int k_max = 0;
  int k_neg = 0;
  int l_max = 0;

  static ChannelBudget make(const OtfsGrid& g, double tau_max_s, double nu_max_hz, bool two_sided) {
    ChannelBudget b;
    b.l_max = static_cast<int>(std::ceil(tau_max_s * g.m_delay * g.subcarrier_hz - 1e-9));
    b.k_max = static_cast<int>(std::floor(nu_max_hz * g.n_doppler * g.symbol_s + 0.5));
    b.k_neg = two_sided ? b.k_max : 0;
    return b;
  }
  int span() const { return k_max + k_neg; }
};

struct PreambleLayout {
  int n_rough = 16;     // N' (Doppler rows of preamble1)
  int m_rough = 4;      // M' (delay columns of preamble1)
  int k_p = 8, l_p = 4; // preamble2 origin
  int k_size = 8;       // K_p
  int l_size = 8;       // L_p
  double power_split = 0.3;
  int halo_acc = 1;     // ε
  int halo_rough = 1;   // ε'
};

// Grid, layout and budgets together, with the index lattice both measurement
// models share.
struct AccessGeometry {
  OtfsGrid grid;
  PreambleLayout layout;
  ChannelBudget budget;

  int n() const { return grid.n_doppler; }
  int m() const { return grid.m_delay; }
  int p1_stride() const { return grid.m_delay / layout.m_rough; }
  int doppler_stride() const { return grid.n_doppler / layout.n_rough; }
  double alpha() const { return static_cast<double>(layout.n_rough) / grid.n_doppler; }
  double beta() const { return static_cast<double>(layout.m_rough) / grid.m_delay; }

  // rough lattice: one delay class, Doppler bins [-k_neg-ε', k_max+ε']
  int rough_pos() const { return budget.k_max + layout.halo_rough; }
  int rough_neg() const { return budget.k_neg + layout.halo_rough; }
  int rough_cols() const { return rough_pos() + rough_neg() + 1; }
  int rough_rows() const { return layout.n_rough * layout.m_rough; }
  int rough_bin(int c) const { return c <= rough_pos() ? c : c - rough_cols(); }
  int rough_col(int d) const {
    if (d > rough_pos() || d < -rough_neg()) return -1;
    return d >= 0 ? d : d + rough_cols();
  }

  // accurate lattice: (l_max+1) delay taps x (span+2ε+1) shifted Doppler bins
  int span() const { return budget.span(); }
  int acc_width() const { return span() + 2 * layout.halo_acc + 1; }
  int acc_cols() const { return acc_width() * (budget.l_max + 1); }
  int acc_shift(int c) const { return c <= span() + layout.halo_acc ? c : c - acc_width(); }
  int acc_bin(int c) const { return acc_shift(c) - budget.k_neg; }
  int acc_col(int delay, int d) const {
    const int s = d + budget.k_neg;
    if (delay < 0 || delay > budget.l_max) return -1;
    if (s > span() + layout.halo_acc || s < -layout.halo_acc) return -1;
    return delay * acc_width() + (s >= 0 ? s : s + acc_width());
  }

  // observation region of the embedded preamble
  int n_obs() const { return layout.k_size + span(); }        // N_p
  int m_obs() const { return layout.l_size + budget.l_max; }  // M_p
  int obs_row0() const { return layout.k_p - budget.k_neg; }
  int obs_rows() const { return n_obs() * m_obs(); }

  // preamble/guard area
  int pg_row_lo() const { return layout.k_p - span() - layout.halo_acc; }
  int pg_row_hi() const { return layout.k_p + layout.k_size + span() + layout.halo_acc; }
  int pg_col_lo() const { return layout.l_p - budget.l_max; }
  int pg_col_hi() const { return layout.l_p + m_obs(); }
  bool in_pg(int k, int l) const {
    return k >= pg_row_lo() && k < pg_row_hi() && l >= pg_col_lo() && l < pg_col_hi();
  }
  bool in_p2(int k, int l) const {
    return k >= layout.k_p && k < layout.k_p + layout.k_size && l >= layout.l_p && l < layout.l_p + layout.l_size;
  }
  bool is_p1_column(int l) const { return l % p1_stride() == 0 && l / p1_stride() < layout.m_rough; }

  void validate() const {
    grid.validate();
    const auto& L = layout;
    auto fail = [](const std::string& what) { throw LayoutError("layout: " + what); };
    if (budget.k_max < 0 || budget.l_max < 0 || budget.k_neg < 0) fail("negative channel budget");
    if (L.n_rough < 1 || L.m_rough < 1) fail("preamble1 needs N' >= 1 and M' >= 1");
    if (grid.n_doppler % L.n_rough != 0) fail("N must be a multiple of N' (Doppler decimation stride)");
    if (grid.m_delay % L.m_rough != 0) fail("M must be a multiple of M' (preamble1 delay stride)");
    if (2 * L.n_rough > grid.n_doppler && L.n_rough != grid.n_doppler) fail("N' <= N/2 violated");
    if (L.halo_acc < 0 || L.halo_rough < 0) fail("halo must be non-negative");
    if (rough_cols() > L.n_rough) fail("rough Doppler lattice wider than N'");
    if (!(L.power_split >= 0.0 && L.power_split <= 1.0)) fail("power split outside [0,1]");
    if (L.k_size < 1 || L.l_size < 1) fail("preamble2 needs K_p >= 1 and L_p >= 1");
    if (L.halo_acc + 1 > L.k_size) fail("halo must be smaller than K_p");
    if (pg_col_lo() < 0) fail("l_p - l_max >= 0 violated");
    if (pg_col_hi() > grid.m_delay) fail("l_p + L_p + l_max <= M violated");
    if (pg_row_lo() < 0) fail("k_p - (Doppler span) - halo >= 0 violated");
    if (pg_row_hi() > grid.n_doppler) fail("k_p + K_p + (Doppler span) + halo <= N violated");
    for (int l = pg_col_lo(); l < pg_col_hi(); ++l)
      if (is_p1_column(l)) fail("preamble1 delay column " + std::to_string(l) + " falls inside the PG area");
    for (int c = 0; c < L.m_rough; ++c)
      for (int d = 0; d <= budget.l_max; ++d) {
        const int l = (c * p1_stride() + d) % grid.m_delay;
        if (l >= L.l_p && l < L.l_p + m_obs())
          fail("preamble1 delay column " + std::to_string(c * p1_stride()) + " spreads into the preamble2 observation");
      }
  }
};

}  // namespace otfsra
