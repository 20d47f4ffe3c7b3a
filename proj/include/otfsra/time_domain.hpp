#pragma once

#include <vector>

#include "otfsra/dd_core.hpp"

namespace otfsra {

struct PhysicalTap {
  cplx gain{1.0, 0.0};
  double delay_s = 0.0;
  double doppler_hz = 0.0;
  CVector beam;
};

// Reference receiver built from the waveform up: Heisenberg transform with a
// rectangular pulse, channel delays discretized on an oversample*M grid per
// symbol, continuous Doppler phase, then the receiver ADC at M samples per
// symbol, Wigner transform and SFFT. The frame is periodically extended, so
// negative times read the last symbol.
//
// The Wigner integral is evaluated at the ADC rate. A continuous-time
// integral over the symbol leaks roughly -16 dB between adjacent symbols with
// rectangular pulses even for on-grid taps, and the DD relation only holds for
// the sampled receiver.
inline BeamField time_domain_oracle(const DdFrame& frame, const std::vector<PhysicalTap>& taps,
                                    int oversample = 8, int beam_dim_hint = 1) {
  detail::check_frame(frame.grid, frame.symbols);
  if (oversample < 2) throw InvalidFrame("oversample must be at least 2");
  const auto& g = frame.grid;
  const int n = g.n_doppler, m = g.m_delay;
  const double t_sym = g.symbol_s, df = g.subcarrier_hz;
  const double fine_step = t_sym / (static_cast<double>(oversample) * m);
  for (const auto& t : taps)
    if (t.delay_s < 0 || t.delay_s >= t_sym) throw InvalidTap("oracle needs 0 <= delay < T");

  const CMatrix x_tf = isfft(frame.symbols);
  auto tx = [&](double t) {
    const double sym = std::floor(t / t_sym);
    const int row = wrap(static_cast<int>(sym), n);
    const double within = (t - sym * t_sym) * df;
    cplx s{0.0, 0.0};
    for (int mm = 0; mm < m; ++mm) s += x_tf(row, mm) * cis(kTwoPi * mm * within);
    return s;
  };

  int j = -1;
  for (const auto& t : taps) {
    const int d = t.beam.size() == 0 ? 1 : static_cast<int>(t.beam.size());
    if (j >= 0 && d != j) throw InvalidTap("taps disagree on beam dimension");
    j = d;
  }
  BeamField out = BeamField::Zero(static_cast<Eigen::Index>(n) * m, j < 0 ? beam_dim_hint : j);

  const CMatrix wigner = dft_matrix(m, m, m, -1.0) / m;
  for (const auto& tap : taps) {
    const double tau = std::round(tap.delay_s / fine_step) * fine_step;
    CMatrix r(n, m);
    for (int sym = 0; sym < n; ++sym)
      for (int p = 0; p < m; ++p) {
        const double t = sym * t_sym + p * t_sym / m;
        r(sym, p) = cis(kTwoPi * tap.doppler_hz * (t - tau)) * tx(t - tau);
      }
    const CMatrix y_dd = sfft(CMatrix(r * wigner));
    detail::add_outer(out, y_dd, tap.gain, tap.beam);
  }
  return out;
}

}  // namespace otfsra
