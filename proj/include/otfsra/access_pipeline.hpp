#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "otfsra/frame_builder.hpp"
#include "otfsra/sparse_solver.hpp"

namespace otfsra {

// ---------------------------------------------------------------- scenario

enum class Placement { ring, square };

// APs sit on a square grid with the given spacing. ring: each UE is dropped
// around a uniformly chosen home AP at a radius in [ring_inner, ring_outer];
// square: uniform over the AP grid's bounding box grown by half a spacing.
struct DeploymentConfig {
  Placement placement = Placement::ring;
  double ap_spacing_km = 0.5;
  double ring_inner_km = 0.08;
  double ring_outer_km = 0.12;
  double min_distance_km = 0.01;
};

struct ScenarioConfig {
  int n_doppler = 32;
  int m_delay = 64;
  double subcarrier_hz = 15e3;
  PreambleLayout layout;
  double tau_max_s = 2.5e-6;
  double speed_kmh = 300.0;
  double carrier_hz = 4e9;
  int n_paths = 9;
  PathMode path_mode = PathMode::uniform;
  bool two_sided_doppler = true;
  bool gain_over_p = false;
  UpaConfig upa;
  int n_aps = 2;
  int n_ues = 100;
  int n_active = 5;
  double tx_power_dbm = 10.0;
  double n0_dbm_hz = -174.0;
  double loss_intercept_db = -128.0;
  double loss_slope = 37.6;
  DeploymentConfig deployment;
  Alphabet preamble_alphabet = Alphabet::qpsk;
  Scheme scheme = Scheme::hybrid;

  OtfsGrid grid() const { return OtfsGrid::make(n_doppler, m_delay, subcarrier_hz); }
  double nu_max_hz() const { return max_doppler_hz(speed_kmh, carrier_hz); }
  AccessGeometry geometry() const {
    const OtfsGrid g = grid();
    return {g, layout, ChannelBudget::make(g, tau_max_s, nu_max_hz(), two_sided_doppler)};
  }
  PathDraw path_draw() const {
    PathDraw d;
    d.n_paths = n_paths;
    d.tau_max_s = tau_max_s;
    d.nu_max_hz = nu_max_hz();
    d.mode = path_mode;
    d.two_sided = two_sided_doppler;
    d.gain_over_p = gain_over_p;
    return d;
  }
  double noise_variance_mw() const { return from_db10(noise_power_dbm(n0_dbm_hz, m_delay * subcarrier_hz)); }
  void validate() const {
    geometry().validate();
    upa.validate();
    if (n_aps < 1) throw ConfigError("need at least one AP");
    if (n_ues < 1) throw ConfigError("need at least one UE");
    if (n_active < 0 || n_active > n_ues) throw ConfigError("active UE count outside [0, U]");
    if (n_paths < 1) throw ConfigError("need at least one path");
    if (!(deployment.ring_inner_km > 0 && deployment.ring_outer_km >= deployment.ring_inner_km))
      throw ConfigError("ring radii must satisfy 0 < inner <= outer");
    if (!(deployment.ap_spacing_km > 0)) throw ConfigError("AP spacing must be positive");
  }
};

struct Position {
  double x = 0, y = 0;
};

inline std::vector<Position> ap_positions(const ScenarioConfig& c) {
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(c.n_aps))));
  std::vector<Position> p;
  for (int b = 0; b < c.n_aps; ++b)
    p.push_back({c.deployment.ap_spacing_km * (b % cols), c.deployment.ap_spacing_km * (b / cols)});
  return p;
}

template <class Rng>
Position drop_ue(Rng& rng, const ScenarioConfig& c, const std::vector<Position>& aps) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto& d = c.deployment;
  if (d.placement == Placement::ring) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(aps.size()) - 1);
    const Position& home = aps[pick(rng)];
    const double r = d.ring_inner_km + (d.ring_outer_km - d.ring_inner_km) * u01(rng);
    const double phi = kTwoPi * u01(rng);
    return {home.x + r * std::cos(phi), home.y + r * std::sin(phi)};
  }
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  for (const auto& a : aps) {
    x1 = std::max(x1, a.x);
    y1 = std::max(y1, a.y);
  }
  const double h = 0.5 * d.ap_spacing_km;
  return {x0 - h + (x1 - x0 + 2 * h) * u01(rng), y0 - h + (y1 - y0 + 2 * h) * u01(rng)};
}

// One Monte Carlo draw: activity, geometry, channels, frames and the received
// fields at every AP, plus every UE's model blocks.
struct Scenario {
  ScenarioConfig cfg;
  AccessGeometry geo;
  std::vector<int> active;  // sorted UE ids
  std::vector<FramePlan> plans;                         // aligned with active
  std::vector<std::vector<std::vector<DdTap>>> taps;    // [ap][active index]
  std::vector<std::vector<GroundTruthChannel>> truth;   // [ap][active index]
  std::vector<BeamField> received;                      // [ap]
  std::vector<CMatrix> a_p1;                            // [ue], empty when the scheme has no preamble1
  std::vector<CMatrix> a_p2;                            // [ue], empty when the scheme has no preamble2
  std::vector<CMatrix> x1_frames;                       // [ue] preamble1 frame as transmitted
  double noise_var = 0.0;                               // per received cell and beam (mW)

  int beams() const { return cfg.upa.size(); }
  int active_index(int ue) const {
    auto it = std::lower_bound(active.begin(), active.end(), ue);
    return it != active.end() && *it == ue ? static_cast<int>(it - active.begin()) : -1;
  }
};

inline Scenario draw_scenario(const ScenarioConfig& cfg, std::uint64_t seed, std::uint64_t trial) {
  cfg.validate();
  Scenario s;
  s.cfg = cfg;
  s.geo = cfg.geometry();
  const int beams = cfg.upa.size();

  auto act_rng = make_stream(seed, trial, kNone, kNone, Stream::activity);
  std::vector<int> ids(cfg.n_ues);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), act_rng);
  s.active.assign(ids.begin(), ids.begin() + cfg.n_active);
  std::sort(s.active.begin(), s.active.end());

  // Preambles are per-UE signatures, fixed across trials.
  const PowerScale ps = power_scale(s.geo, cfg.scheme);
  s.a_p1.resize(cfg.n_ues);
  s.a_p2.resize(cfg.n_ues);
  s.x1_frames.resize(cfg.n_ues);
  std::vector<PreambleSymbols> pre(cfg.n_ues);
  for (int u = 0; u < cfg.n_ues; ++u) {
    auto r = make_stream(seed, kNone, static_cast<std::uint64_t>(u), kNone, Stream::preamble);
    pre[u] = gen_preambles(r, s.geo, cfg.preamble_alphabet);
    if (has_p1(cfg.scheme)) {
      const CMatrix p1 = ps.p1 * pre[u].p1;
      s.a_p1[u] = build_a_p1(p1, s.geo);
      s.x1_frames[u] = CMatrix::Zero(s.geo.n(), s.geo.m());
      for (int lr = 0; lr < s.geo.layout.m_rough; ++lr)
        s.x1_frames[u].block(0, lr * s.geo.p1_stride(), s.geo.layout.n_rough, 1) = p1.col(lr);
    }
    if (has_p2(cfg.scheme)) s.a_p2[u] = build_a_p2(p2_region_from_symbols(ps.x2 * pre[u].p2, s.geo), s.geo);
  }

  const auto aps = ap_positions(cfg);
  const double amp = std::sqrt(from_db10(cfg.tx_power_dbm));
  const PathDraw draw = cfg.path_draw();
  s.taps.assign(cfg.n_aps, {});
  s.truth.assign(cfg.n_aps, {});
  for (int u : s.active) {
    auto dr = make_stream(seed, trial, static_cast<std::uint64_t>(u), kNone, Stream::data);
    s.plans.push_back(make_plan(s.geo, cfg.scheme, pre[u], dr));
    auto pr = make_stream(seed, trial, static_cast<std::uint64_t>(u), kNone, Stream::position);
    const Position where = drop_ue(pr, cfg, aps);
    for (int b = 0; b < cfg.n_aps; ++b) {
      const double d = std::max(cfg.deployment.min_distance_km, std::hypot(where.x - aps[b].x, where.y - aps[b].y));
      const double lsf = from_db10(large_scale_db(d, cfg.loss_intercept_db, cfg.loss_slope));
      auto rng = make_stream(seed, trial, static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(b), Stream::paths);
      PathSet ps_ub = sample_paths(rng, draw, lsf, u, b);
      for (auto& p : ps_ub.paths) p.gain *= amp;
      auto taps = to_dd_taps(s.geo.grid, cfg.upa, ps_ub);
      s.truth[b].push_back(build_ground_truth(s.geo, taps, beams));
      s.taps[b].push_back(std::move(taps));
    }
  }

  s.noise_var = cfg.noise_variance_mw();
  for (int b = 0; b < cfg.n_aps; ++b) {
    std::vector<std::pair<const FramePlan*, const std::vector<DdTap>*>> ues;
    for (std::size_t i = 0; i < s.plans.size(); ++i) ues.emplace_back(&s.plans[i], &s.taps[b][i]);
    auto nr = make_stream(seed, trial, kNone, static_cast<std::uint64_t>(b), Stream::noise);
    s.received.push_back(synthesize_observation(ues, s.geo.grid, beams, s.noise_var, nr));
  }
  return s;
}

// Stacked ground truth aligned with a measurement system's columns.
inline CMatrix truth_matrix(const Scenario& s, const MeasurementSystem& sys, int ap) {
  CMatrix h = CMatrix::Zero(sys.a.cols(), s.beams());
  const bool rough = sys.stage == MeasurementSystem::Stage::rough;
  for (std::size_t i = 0; i < sys.ues.size(); ++i) {
    const int k = s.active_index(sys.ues[i]);
    if (k < 0) continue;
    const auto& g = s.truth[ap][k];
    h.middleRows(static_cast<Eigen::Index>(i) * sys.block, sys.block) = rough ? g.h_dd1 : g.h_dd2;
  }
  return h;
}

// ---------------------------------------------------------------- solving

struct SolveRequest {
  const MeasurementSystem* system = nullptr;
  const CMatrix* truth = nullptr;  // only filled for oracle runs
  double noise_var = 0.0;          // true per-element noise variance
};

struct SolveResult {
  CMatrix h;
  double noise_var = 0.0;  // estimated per-element noise variance of y
  bool diverged = false;
  int iterations = 0;
  std::uint64_t macs = 0;
  std::vector<double> residual;
};

using SolverFn = std::function<SolveResult(const SolveRequest&)>;

// GAMP on a rescaled copy: y to unit average power and A to unit-norm columns.
inline SolverFn make_gamp_solver(SolverConfig cfg) {
  return [cfg](const SolveRequest& rq) {
    const auto& s = *rq.system;
    SolveResult out;
    out.h = CMatrix::Zero(s.a.cols(), s.y.cols());
    const double ys = std::sqrt(s.y.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, s.y.size())));
    if (!(ys > 0) || s.a.cols() == 0) return out;
    RVector norms = s.a.colwise().norm().transpose();
    for (Eigen::Index i = 0; i < norms.size(); ++i)
      if (!(norms(i) > 0)) norms(i) = 1.0;
    const CMatrix an = s.a * norms.cwiseInverse().asDiagonal();
    const SolverReport rep = gamp_pcsbl(realify(s.y / ys, an), cfg);
    out.diverged = rep.diverged;
    out.iterations = rep.iterations;
    out.macs = rep.macs;
    out.residual = rep.residual;
    out.noise_var = 2.0 * rep.gamma * ys * ys;
    out.h = norms.cwiseInverse().asDiagonal() * rep.x_hat * ys;
    return out;
  };
}

inline SolverFn make_omp_solver(int budget) {
  return [budget](const SolveRequest& rq) {
    SolveResult out;
    out.h = omp(rq.system->y, rq.system->a, budget, &out.macs);
    out.iterations = budget;
    const CMatrix r = rq.system->y - rq.system->a * out.h;
    out.noise_var = r.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, r.size()));
    return out;
  };
}

// Returns the injected truth; used to show the pipeline adds no error.
inline SolverFn make_oracle_solver() {
  return [](const SolveRequest& rq) {
    if (!rq.truth) throw ConfigError("oracle solver needs the ground truth");
    SolveResult out;
    out.h = *rq.truth;
    out.noise_var = rq.noise_var;
    return out;
  };
}

// ---------------------------------------------------------------- detection

enum class ThresholdMode { relative, absolute };

// relative: E_u >= theta_rel * max E. absolute: E_u >= theta_abs * noise_var * rows_u,
// rows_u being the number of estimate rows owned by u. With column weights
// (squared column norms of A) E_u is the energy u contributes to Y, which puts
// it on the same scale as the noise variance of Y.
struct DetectionRule {
  ThresholdMode mode = ThresholdMode::relative;
  double theta_rel = 0.1;
  double theta_abs = 1.0;
};

inline std::map<int, double> ue_energies(const CMatrix& h, const std::vector<ColumnTag>& map,
                                         const RVector* weights = nullptr) {
  if (static_cast<Eigen::Index>(map.size()) != h.rows()) throw DimensionError("column map does not match estimate");
  if (weights && weights->size() != h.rows()) throw DimensionError("column weights do not match estimate");
  std::map<int, double> e;
  for (std::size_t r = 0; r < map.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    e[map[r].ue] += h.row(i).squaredNorm() * (weights ? (*weights)(i) : 1.0);
  }
  return e;
}

inline std::vector<int> detect_active(const CMatrix& h, const std::vector<ColumnTag>& map, const DetectionRule& rule,
                                      double noise_var = 0.0, const RVector* weights = nullptr) {
  std::vector<int> out;
  if (h.size() == 0) return out;
  const auto e = ue_energies(h, map, weights);
  std::map<int, int> rows;
  for (const auto& t : map) ++rows[t.ue];
  double top = 0.0;
  for (const auto& [u, v] : e) top = std::max(top, v);
  if (!(top > 0)) return out;
  for (const auto& [u, v] : e) {
    const double bar = rule.mode == ThresholdMode::relative ? rule.theta_rel * top
                                                            : rule.theta_abs * noise_var * rows[u];
    if (v > 0 && v >= bar) out.push_back(u);
  }
  return out;
}

inline RVector column_energy(const CMatrix& a) { return a.colwise().squaredNorm().transpose(); }

// ---------------------------------------------------------------- pipeline

struct AccessSets {
  std::vector<int> truth_active;
  std::vector<std::vector<int>> rough_per_ap;
  std::vector<int> rough_union;
  std::vector<std::vector<int>> final_per_ap;
  std::vector<int> final_active;
  std::vector<bool> ap_diverged;
};

struct StageTimings {
  double rough_ms = 0, accurate_ms = 0, sic_ms = 0;
};

struct MetricsRecord {
  double der = 0.0;
  int den = 0;
  int missed = 0;
  int false_alarms = 0;
  double nmse_db = 0.0;
  std::vector<double> nmse_ap_db;
  double sinr_db = 0.0;
  double p1_energy_before = 0.0;  // preamble1 part of the received energy
  double p1_energy_after = 0.0;   // left after SIC
  StageTimings timings;
  MacCounter macs;
  int iterations = 0;  // summed over solves
  int solves = 0;
  int diverged_solves = 0;
};

using ChannelMap = std::map<int, CMatrix>;  // UE -> estimate block

struct PipelineOptions {
  SolverFn rough_solver;
  SolverFn accurate_solver;
  DetectionRule rough_rule;
  DetectionRule final_rule;
  DetectionRule superimposed_rule;  // final decision when there is no preamble2
  bool inject_truth = false;  // hand the truth to the solver (oracle runs)
  bool candidates_from_truth = false;  // accurate stage over the true active set (operation counting)
  std::size_t resource_warn_ues = 0;  // 0: no warning
};

struct TrialResult {
  AccessSets sets;
  MetricsRecord metrics;
  std::vector<ChannelMap> h_hat;  // [ap], accurate lattice (rough lattice for superimposed-only)
  std::vector<BeamField> residual;
  std::vector<std::string> warnings;
};

inline std::vector<int> set_union(const std::vector<std::vector<int>>& parts) {
  std::set<int> u;
  for (const auto& p : parts) u.insert(p.begin(), p.end());
  return {u.begin(), u.end()};
}

inline void der_den(const std::vector<int>& truth, const std::vector<int>& found, int total_ues, MetricsRecord& m) {
  std::vector<int> miss, extra;
  std::set_difference(truth.begin(), truth.end(), found.begin(), found.end(), std::back_inserter(miss));
  std::set_difference(found.begin(), found.end(), truth.begin(), truth.end(), std::back_inserter(extra));
  m.missed = static_cast<int>(miss.size());
  m.false_alarms = static_cast<int>(extra.size());
  m.den = m.missed + m.false_alarms;
  m.der = total_ues > 0 ? static_cast<double>(m.den) / total_ues : 0.0;
}

// Sum over APs of squared error over all UEs in truth or estimate, divided by
// the summed truth energy; per-AP values alongside.
inline double aggregate_nmse_db(const std::vector<ChannelMap>& est, const std::vector<ChannelMap>& truth,
                                std::vector<double>* per_ap = nullptr) {
  double err = 0, ref = 0;
  for (std::size_t b = 0; b < truth.size(); ++b) {
    double e = 0, r = 0;
    std::set<int> ues;
    for (const auto& [u, _] : truth[b]) ues.insert(u);
    for (const auto& [u, _] : est[b]) ues.insert(u);
    for (int u : ues) {
      const auto it = truth[b].find(u), ie = est[b].find(u);
      if (it != truth[b].end() && ie != est[b].end())
        e += (ie->second - it->second).squaredNorm();
      else if (it != truth[b].end())
        e += it->second.squaredNorm();
      else
        e += ie->second.squaredNorm();
      if (it != truth[b].end()) r += it->second.squaredNorm();
    }
    if (per_ap) per_ap->push_back(r > 0 ? std::max(-100.0, e > 0 ? db10(e / r) : -100.0) : std::nan(""));
    err += e;
    ref += r;
  }
  if (!(ref > 0)) return std::nan("");
  return err > 0 ? std::max(-100.0, db10(err / ref)) : -100.0;
}

// Rough-lattice estimate placed on the accurate lattice at delay 0, for SIC in
// the superimposed-only scheme. Bins outside the accurate halo are dropped.
inline CMatrix rough_to_lattice(const CMatrix& h1, const AccessGeometry& geo) {
  CMatrix h2 = CMatrix::Zero(geo.acc_cols(), h1.cols());
  for (int c = 0; c < geo.rough_cols(); ++c) {
    const int col = geo.acc_col(0, geo.rough_bin(c));
    if (col >= 0) h2.row(col) += h1.row(c);
  }
  return h2;
}

// Y - S(X1, H_hat): removes every detected UE's preamble1 from the field.
inline BeamField sic_preamble1(const BeamField& y, const ChannelMap& h_lattice, const std::vector<CMatrix>& x1_frames,
                               const AccessGeometry& geo, std::uint64_t* macs = nullptr) {
  BeamField r = y;
  for (const auto& [u, h] : h_lattice) {
    if (u < 0 || u >= static_cast<int>(x1_frames.size()) || x1_frames[u].size() == 0) continue;
    r -= apply_lattice_channel(x1_frames[u], h, geo, macs);
  }
  return r;
}

inline TrialResult run_access(const Scenario& s, const PipelineOptions& opt) {
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  if (!opt.rough_solver || !opt.accurate_solver) throw ConfigError("no solver configured");
  TrialResult res;
  auto& m = res.metrics;
  const auto& geo = s.geo;
  const int aps = s.cfg.n_aps, beams = s.beams();
  const Scheme scheme = s.cfg.scheme;
  res.sets.truth_active = s.active;
  res.sets.ap_diverged.assign(aps, false);
  std::vector<int> all(s.cfg.n_ues);
  std::iota(all.begin(), all.end(), 0);

  auto solve = [&](const SolverFn& solver, const MeasurementSystem& sys, int b, std::uint64_t& counter) {
    CMatrix truth;
    SolveRequest rq{&sys, nullptr, s.noise_var};
    if (opt.inject_truth) {
      truth = truth_matrix(s, sys, b);
      rq.truth = &truth;
    }
    SolveResult r = solver(rq);
    counter += r.macs;
    m.iterations += r.iterations;
    ++m.solves;
    if (r.diverged) {
      ++m.diverged_solves;
      res.sets.ap_diverged[b] = true;
    }
    return r;
  };
  auto split = [](const SolveResult& r, const MeasurementSystem& sys) {
    ChannelMap out;
    for (std::size_t i = 0; i < sys.ues.size(); ++i)
      out[sys.ues[i]] = r.h.middleRows(static_cast<Eigen::Index>(i) * sys.block, sys.block);
    return out;
  };

  // rough stage over all U
  std::vector<ChannelMap> rough_est(aps);
  auto t0 = clock::now();
  if (has_p1(scheme)) {
    std::vector<const CMatrix*> blocks;
    for (int u : all) blocks.push_back(&s.a_p1[u]);
    MeasurementSystem base = stack_blocks(MeasurementSystem::Stage::rough, blocks, all, geo);
    const RVector w = column_energy(base.a);
    // without preamble2 the rough decision is final
    const DetectionRule& rule = has_p2(scheme) ? opt.rough_rule : opt.superimposed_rule;
    for (int b = 0; b < aps; ++b) {
      base.y = extract_y_p1(s.received[b], geo, &m.macs.rough);
      const SolveResult r = solve(opt.rough_solver, base, b, m.macs.rough);
      res.sets.rough_per_ap.push_back(
          r.diverged ? std::vector<int>{} : detect_active(r.h, base.column_map, rule, r.noise_var, &w));
      rough_est[b] = split(r, base);
    }
    res.sets.rough_union = set_union(res.sets.rough_per_ap);
  } else {
    res.sets.rough_per_ap.assign(aps, all);
    res.sets.rough_union = all;
  }
  auto t1 = clock::now();
  m.timings.rough_ms = ms(t0, t1);

  // accurate stage over the rough union
  res.h_hat.assign(aps, {});
  std::vector<ChannelMap> truth_maps(aps);
  if (has_p2(scheme)) {
    const auto& cand = opt.candidates_from_truth ? s.active : res.sets.rough_union;
    if (opt.resource_warn_ues > 0 && cand.size() >= opt.resource_warn_ues)
      res.warnings.push_back("accurate stage over " + std::to_string(cand.size()) +
                             " UEs; the sparse problem may be under-determined");
    if (!cand.empty()) {
      std::vector<const CMatrix*> blocks;
      for (int u : cand) blocks.push_back(&s.a_p2[u]);
      MeasurementSystem sys = stack_blocks(MeasurementSystem::Stage::accurate, blocks, cand, geo);
      const RVector w = column_energy(sys.a);
      std::vector<ChannelMap> est(aps);
      for (int b = 0; b < aps; ++b) {
        sys.y = extract_y_p2(s.received[b], geo);
        const SolveResult r = solve(opt.accurate_solver, sys, b, m.macs.accurate);
        res.sets.final_per_ap.push_back(
            r.diverged ? std::vector<int>{} : detect_active(r.h, sys.column_map, opt.final_rule, r.noise_var, &w));
        est[b] = split(r, sys);
      }
      res.sets.final_active = set_union(res.sets.final_per_ap);
      for (int b = 0; b < aps; ++b)
        for (int u : res.sets.final_active) res.h_hat[b][u] = est[b][u];
    } else {
      res.sets.final_per_ap.assign(aps, {});
    }
    for (int b = 0; b < aps; ++b)
      for (std::size_t i = 0; i < s.active.size(); ++i) truth_maps[b][s.active[i]] = s.truth[b][i].h_dd2;
  } else {
    res.sets.final_per_ap = res.sets.rough_per_ap;
    res.sets.final_active = res.sets.rough_union;
    for (int b = 0; b < aps; ++b) {
      for (int u : res.sets.final_active) res.h_hat[b][u] = rough_est[b][u];
      for (std::size_t i = 0; i < s.active.size(); ++i) truth_maps[b][s.active[i]] = s.truth[b][i].h_dd1;
    }
  }
  auto t2 = clock::now();
  m.timings.accurate_ms = ms(t1, t2);

  der_den(s.active, res.sets.final_active, s.cfg.n_ues, m);
  m.nmse_db = aggregate_nmse_db(res.h_hat, truth_maps, &m.nmse_ap_db);

  // SIC of preamble1 and SINR of the remaining block
  double sig = 0, interf = 0;
  for (int b = 0; b < aps; ++b) {
    ChannelMap lattice;
    for (const auto& [u, h] : res.h_hat[b]) lattice[u] = has_p2(scheme) ? h : rough_to_lattice(h, geo);
    BeamField r = sic_preamble1(s.received[b], lattice, s.x1_frames, geo, &m.macs.sic);
    BeamField x2_est = BeamField::Zero(r.rows(), beams), x1_true = BeamField::Zero(r.rows(), beams);
    for (const auto& [u, h] : lattice) {
      const int k = s.active_index(u);
      if (k >= 0) x2_est += apply_lattice_channel(s.plans[k].x2, h, geo);
    }
    for (std::size_t k = 0; k < s.plans.size(); ++k)
      if (has_p1(scheme))
        x1_true += dd_forward({geo.grid, s.plans[k].x1}, s.taps[b][k], geo.n(), beams);
    m.p1_energy_before += x1_true.squaredNorm();
    m.p1_energy_after += (x1_true - (s.received[b] - r)).squaredNorm();
    sig += x2_est.squaredNorm();
    interf += (r - x2_est).squaredNorm();
    res.residual.push_back(std::move(r));
  }
  m.sinr_db = interf > 0 ? db10(sig / interf) : 100.0;
  m.timings.sic_ms = ms(t2, clock::now());
  return res;
}

}  // namespace otfsra
