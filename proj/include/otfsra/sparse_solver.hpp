#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "otfsra/rng.hpp"
#include "otfsra/scalar_estimators.hpp"

namespace otfsra {

// Real embedding: y = [Re; Im], a = [[Re, -Im], [Im, Re]]. Row i of the
// complex unknown maps to real rows i and i + I.
struct RealSystem {
  RMatrix y;  // 2L x J
  RMatrix a;  // 2L x 2I
  int complex_rows() const { return static_cast<int>(a.rows() / 2); }
  int complex_cols() const { return static_cast<int>(a.cols() / 2); }
};

inline RMatrix realify_matrix(const CMatrix& a) {
  const Eigen::Index l = a.rows(), i = a.cols();
  RMatrix r(2 * l, 2 * i);
  r.topLeftCorner(l, i) = a.real();
  r.topRightCorner(l, i) = -a.imag();
  r.bottomLeftCorner(l, i) = a.imag();
  r.bottomRightCorner(l, i) = a.real();
  return r;
}

inline RMatrix stack_real(const CMatrix& y) {
  RMatrix r(2 * y.rows(), y.cols());
  r.topRows(y.rows()) = y.real();
  r.bottomRows(y.rows()) = y.imag();
  return r;
}

inline RealSystem realify(const CMatrix& y, const CMatrix& a) {
  if (y.rows() != a.rows()) throw DimensionError("realify: y and a disagree on row count");
  return {stack_real(y), realify_matrix(a)};
}

inline CMatrix complexify(const RMatrix& x) {
  if (x.rows() % 2 != 0) throw DimensionError("complexify needs an even row count");
  const Eigen::Index i = x.rows() / 2;
  CMatrix c(i, x.cols());
  c.real() = x.topRows(i);
  c.imag() = x.bottomRows(i);
  return c;
}

enum class PriorKind { laplace, gaussian };

// Rate EM for the Laplace prior prunes by a factor of about a/2 per
// iteration on inactive entries, so it needs a > 2 where the Gaussian needs a > 1.
inline constexpr double kLaplaceShape = 2.75;
inline constexpr double kGaussianShape = 1.5;

struct SolverConfig {
  PriorKind prior = PriorKind::laplace;
  double eta = 0.3;
  double shape_a = 0.0;  // <= 0: kLaplaceShape or kGaussianShape by prior
  double scale_b = 1e-3;
  int max_iter = 50;
  double tol = 1e-6;
  double damping = 0.9;
  double alpha_init = 1.0;
  double gamma_init = -1.0;  // <= 0: |Y|^2 / (100 * count)
  double ux_init = 1.0;
  double gamma_min = 1e-12;
  bool learn_gamma = true;
  // called after every iteration with (t, x_hat); the real-stacked estimate
  std::function<void(int, const RMatrix&)> observer;
};

struct SolverReport {
  CMatrix x_hat;
  int iterations = 0;
  std::vector<double> residual;  // relative change per iteration
  std::vector<double> gamma_trace;
  bool converged = false;
  bool diverged = false;
  double gamma = 0.0;
  std::uint64_t macs = 0;
};

// tau = alpha + eta * (4-neighbourhood of alpha) on an I x J grid, zero outside.
inline RMatrix couple_neighbours(const RMatrix& v, double eta) {
  RMatrix out = v;
  if (eta == 0.0) return out;
  const Eigen::Index r = v.rows(), c = v.cols();
  if (r > 1) {
    out.topRows(r - 1) += eta * v.bottomRows(r - 1);
    out.bottomRows(r - 1) += eta * v.topRows(r - 1);
  }
  if (c > 1) {
    out.leftCols(c - 1) += eta * v.rightCols(c - 1);
    out.rightCols(c - 1) += eta * v.leftCols(c - 1);
  }
  return out;
}

// alpha = a / (b + omega_re + omega_im); omega couples <|x|> over the complex grid.
inline RMatrix em_update_alpha(const RMatrix& abs_mean, double eta, double a, double b) {
  if (abs_mean.rows() % 2 != 0) throw DimensionError("em_update_alpha needs the real-stacked field");
  const Eigen::Index i = abs_mean.rows() / 2;
  const RMatrix w = couple_neighbours(abs_mean.topRows(i), eta) + couple_neighbours(abs_mean.bottomRows(i), eta);
  return (a / (b + w.array())).matrix();
}

// Gaussian-prior counterpart on second moments: alpha = a / (b + (omega_re + omega_im) / 2).
inline RMatrix em_update_alpha_gaussian(const RMatrix& second, double eta, double a, double b) {
  const Eigen::Index i = second.rows() / 2;
  const RMatrix w = couple_neighbours(second.topRows(i), eta) + couple_neighbours(second.bottomRows(i), eta);
  return (a / (b + 0.5 * w.array())).matrix();
}

inline double em_update_gamma(const RMatrix& y, const RMatrix& z_hat, const RMatrix& u_z, double gamma_min = 1e-12) {
  const double g = ((y - z_hat).squaredNorm() + u_z.sum()) / static_cast<double>(y.size());
  return std::max(g, gamma_min);
}

inline SolverReport gamp_pcsbl(const RealSystem& sys, const SolverConfig& cfg) {
  const RMatrix& a = sys.a;
  const RMatrix& y = sys.y;
  if (a.rows() != y.rows()) throw DimensionError("gamp: a and y disagree on row count");
  if (a.cols() % 2 != 0) throw DimensionError("gamp: a must be a real embedding");
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0)) throw ConfigError("damping must lie in (0, 1]");
  const Eigen::Index rows = a.rows(), cols = a.cols(), j = y.cols(), ic = cols / 2;
  const RMatrix a2 = a.array().square().matrix();
  const RMatrix a_t = a.transpose(), a2_t = a2.transpose();
  const double shape = cfg.shape_a > 0 ? cfg.shape_a : (cfg.prior == PriorKind::laplace ? kLaplaceShape : kGaussianShape);
  const double y_energy = y.squaredNorm();

  SolverReport rep;
  RMatrix x = RMatrix::Zero(cols, j), ux = RMatrix::Constant(cols, j, cfg.ux_init);
  RMatrix s = RMatrix::Zero(rows, j);
  RMatrix alpha = RMatrix::Constant(ic, j, cfg.alpha_init);
  double gamma = cfg.gamma_init > 0 ? cfg.gamma_init : y.squaredNorm() / (100.0 * static_cast<double>(y.size()));
  gamma = std::max(gamma, cfg.gamma_min);
  RMatrix up(rows, j), p(rows, j), uz(rows, j), z(rows, j), us(rows, j), ur(cols, j), r(cols, j);
  RMatrix absm(cols, j), second(cols, j), x_new(cols, j), ux_new(cols, j);
  const std::uint64_t macs_per_iter = 4ULL * rows * cols * j;

  for (int t = 1; t <= cfg.max_iter; ++t) {
    up.noalias() = a2 * ux;
    p.noalias() = a * x;
    if (t > 1 && (p - y).squaredNorm() > 1e8 * std::max(y_energy, 1e-300)) {
      rep.diverged = true;
      rep.residual.back() = std::numeric_limits<double>::infinity();
      break;
    }
    p -= up.cwiseProduct(s);
    for (Eigen::Index e = 0; e < up.size(); ++e) {
      const auto o = g_out(p.data()[e], y.data()[e], std::max(up.data()[e], 1e-300), gamma);
      uz.data()[e] = o.u_z;
      z.data()[e] = o.z_hat;
      s.data()[e] = cfg.damping * o.s_hat + (1.0 - cfg.damping) * s.data()[e];
      us.data()[e] = o.u_s;
    }
    ur.noalias() = a2_t * us;
    ur = ur.cwiseInverse();
    r.noalias() = a_t * s;
    r = x + ur.cwiseProduct(r);
    rep.macs += macs_per_iter;

    RMatrix tau = couple_neighbours(alpha, cfg.eta);
    for (Eigen::Index c = 0; c < j; ++c)
      for (Eigen::Index i = 0; i < cols; ++i) {
        const double ti = tau(i % ic, c);
        const auto m = cfg.prior == PriorKind::laplace ? g_in_laplace(r(i, c), ur(i, c), ti)
                                                       : g_in_gaussian(r(i, c), ur(i, c), ti);
        x_new(i, c) = cfg.damping * m.x_hat + (1.0 - cfg.damping) * x(i, c);
        ux_new(i, c) = m.u_x;
        absm(i, c) = m.abs_mean;
        second(i, c) = m.second;
      }
    alpha = cfg.prior == PriorKind::laplace ? em_update_alpha(absm, cfg.eta, shape, cfg.scale_b)
                                            : em_update_alpha_gaussian(second, cfg.eta, shape, cfg.scale_b);
    if (cfg.learn_gamma) gamma = em_update_gamma(y, z, uz, cfg.gamma_min);

    const double change = (x_new - x).squaredNorm();
    const double norm = x_new.squaredNorm();
    x.swap(x_new);
    ux.swap(ux_new);
    rep.iterations = t;
    rep.gamma_trace.push_back(gamma);
    if (!x.allFinite() || !ux.allFinite() || !std::isfinite(gamma)) {
      rep.diverged = true;
      rep.residual.push_back(std::numeric_limits<double>::infinity());
      break;
    }
    const double rel = norm > 0 ? change / norm : (change > 0 ? 1.0 : 0.0);
    rep.residual.push_back(rel);
    if (cfg.observer) cfg.observer(t, x);
    if (rel < cfg.tol) {
      rep.converged = true;
      break;
    }
  }
  rep.gamma = gamma;
  rep.x_hat = rep.diverged ? CMatrix::Zero(ic, j) : complexify(x);
  return rep;
}

inline SolverReport gamp_pcsbl_la(const RealSystem& sys, SolverConfig cfg) {
  cfg.prior = PriorKind::laplace;
  return gamp_pcsbl(sys, cfg);
}

inline SolverReport gamp_pcsbl_gs(const RealSystem& sys, SolverConfig cfg) {
  cfg.prior = PriorKind::gaussian;
  return gamp_pcsbl(sys, cfg);
}

inline SolverReport gamp_sbl(const RealSystem& sys, SolverConfig cfg) {
  cfg.prior = PriorKind::gaussian;
  cfg.eta = 0.0;
  return gamp_pcsbl(sys, cfg);
}

// Simultaneous OMP on the complex system: each step adds the column whose
// correlation with the residual, summed over all J columns, is largest.
inline CMatrix omp(const CMatrix& y, const CMatrix& a, int budget, std::uint64_t* macs = nullptr) {
  if (y.rows() != a.rows()) throw DimensionError("omp: y and a disagree on row count");
  CMatrix x = CMatrix::Zero(a.cols(), y.cols());
  if (budget <= 0) return x;
  const RVector norms = a.colwise().norm().transpose();
  std::vector<Eigen::Index> support;
  CMatrix residual = y, coef;
  const int steps = std::min<int>(budget, static_cast<int>(std::min(a.rows(), a.cols())));
  for (int k = 0; k < steps; ++k) {
    const CMatrix corr = a.adjoint() * residual;
    if (macs) *macs += static_cast<std::uint64_t>(a.rows()) * a.cols() * y.cols();
    RVector score = corr.rowwise().squaredNorm();
    for (Eigen::Index i = 0; i < score.size(); ++i) score(i) = norms(i) > 0 ? score(i) / (norms(i) * norms(i)) : 0.0;
    for (auto i : support) score(i) = -1.0;
    Eigen::Index best = 0;
    if (score.maxCoeff(&best) <= 0.0) break;
    support.push_back(best);
    CMatrix sub(a.rows(), static_cast<Eigen::Index>(support.size()));
    for (std::size_t c = 0; c < support.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = a.col(support[c]);
    coef = sub.colPivHouseholderQr().solve(y);
    residual = y - sub * coef;
  }
  for (std::size_t c = 0; c < support.size(); ++c) x.row(support[c]) = coef.row(static_cast<Eigen::Index>(c));
  return x;
}

// Orthonormal DCT-II matrix, C[k,n] = s_k cos(pi (n + 1/2) k / n_pts).
inline RMatrix dct2_matrix(int n) {
  RMatrix c(n, n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      c(k, i) = std::sqrt((k == 0 ? 1.0 : 2.0) / n) * std::cos(kPi * (i + 0.5) * k / n);
  return c;
}

struct BlockSupport {
  int row0, col0, rows, cols;
};

struct BlockSparseSample {
  CMatrix x;
  std::vector<BlockSupport> blocks;
};

// Blocks at non-overlapping random positions. Each block starts as complex
// random-walk profiles down its rows and is transformed by an orthonormal
// DCT-II along the row (column-vector) direction; a DCT of smooth profiles
// is compressible, unlike a DCT of white noise.
template <class Rng>
BlockSparseSample gen_dct_block_sparse(Rng& rng, int rows, int cols, int n_blocks, int block_rows, int block_cols) {
  BlockSparseSample out{CMatrix::Zero(rows, cols), {}};
  if (n_blocks <= 0) return out;
  if (block_rows > rows || block_cols > cols) throw ConfigError("block larger than the matrix");
  std::uniform_int_distribution<int> pr(0, rows - block_rows), pc(0, cols - block_cols);
  const RMatrix d = dct2_matrix(block_rows);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> used;
  used.setConstant(rows, cols, false);
  int attempts = 0;
  while (static_cast<int>(out.blocks.size()) < n_blocks) {
    if (++attempts > 10000) throw ConfigError("cannot place non-overlapping blocks");
    const BlockSupport b{pr(rng), pc(rng), block_rows, block_cols};
    if (used.block(b.row0, b.col0, b.rows, b.cols).any()) continue;
    used.block(b.row0, b.col0, b.rows, b.cols) = true;
    CMatrix walk(block_rows, block_cols);
    for (int c = 0; c < block_cols; ++c) {
      cplx acc = complex_normal(rng, 1.0);
      for (int r = 0; r < block_rows; ++r) {
        walk(r, c) = acc;
        acc += complex_normal(rng, 1.0);
      }
    }
    out.x.block(b.row0, b.col0, b.rows, b.cols) = d.cast<cplx>() * walk;
    out.blocks.push_back(b);
  }
  return out;
}

struct RecoveryFixture {
  CMatrix a;
  CMatrix y;
  CMatrix x;
  double noise_var = 0.0;
  std::vector<BlockSupport> blocks;
};

struct FixtureSpec {
  int rows = 64;      // L
  int unknowns = 256; // I
  int columns = 64;   // J
  int n_blocks = 5;
  int block_rows = 4;
  int block_cols = 16;
  double snr_db = 12.5;
};

// A ~ CN(0, 1/L); noise set so ||AX||^2 / ||N||^2 equals the target SNR.
template <class Rng>
RecoveryFixture make_recovery_fixture(Rng& rng, const FixtureSpec& f) {
  RecoveryFixture out;
  auto sample = gen_dct_block_sparse(rng, f.unknowns, f.columns, f.n_blocks, f.block_rows, f.block_cols);
  out.x = std::move(sample.x);
  out.blocks = std::move(sample.blocks);
  out.a.resize(f.rows, f.unknowns);
  for (Eigen::Index i = 0; i < out.a.size(); ++i) out.a.data()[i] = complex_normal(rng, 1.0 / f.rows);
  const CMatrix z = out.a * out.x;
  out.noise_var = z.squaredNorm() / static_cast<double>(z.size()) / from_db10(f.snr_db);
  out.y = z;
  for (Eigen::Index i = 0; i < out.y.size(); ++i) out.y.data()[i] += complex_normal(rng, out.noise_var);
  return out;
}

inline double nmse_db(const CMatrix& est, const CMatrix& truth, double floor_db = -100.0) {
  const double den = truth.squaredNorm();
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double num = (est - truth).squaredNorm();
  if (num == 0.0) return floor_db;
  return std::max(floor_db, db10(num / den));
}

}  // namespace otfsra
