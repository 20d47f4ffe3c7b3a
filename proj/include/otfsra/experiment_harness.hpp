#pragma once

#include <atomic>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "otfsra/access_pipeline.hpp"

namespace otfsra {

// ---------------------------------------------------------------- config

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"recover-snr", "recover-cols",       "recover-blocks",
                                              "convergence", "power-sweep",        "access-vs-U",
                                              "access-vs-antennas", "access-vs-active"};
  return names;
}

inline bool is_recovery_preset(const std::string& p) {
  return p == "recover-snr" || p == "recover-cols" || p == "recover-blocks" || p == "convergence";
}

struct ExperimentConfig {
  std::string preset = "recover-snr";
  std::uint64_t seed = 1;
  int trials = 10;
  int threads = 1;
  bool record_timing = true;
  bool full_scale = false;

  ScenarioConfig scenario;
  FixtureSpec fixture;
  SolverConfig solver;          // fixture runs and the accurate stage
  double rough_shape_a = 2.0;   // shape used by the rough stage
  int omp_budget = 0;           // <= 0: n_blocks * block_rows
  DetectionRule rough_rule{ThresholdMode::relative, 0.01, 1.0};
  DetectionRule final_rule{ThresholdMode::absolute, 0.1, 5.0};
  DetectionRule superimposed_rule{ThresholdMode::relative, 0.1, 1.0};
  std::vector<std::string> schemes;     // empty: preset default
  std::string sweep_name;               // empty: preset default
  std::vector<double> sweep_values;     // empty: preset default
};

// Full-size dimensions. The AP count is our pick.
inline void apply_full_scale(ExperimentConfig& c) {
  auto& s = c.scenario;
  s.n_doppler = 128;
  s.m_delay = 512;
  s.layout.n_rough = 64;
  s.layout.m_rough = 4;
  s.layout.k_size = 20;
  s.layout.l_size = 20;
  s.layout.k_p = 32;
  s.layout.l_p = 24;
  s.upa = {8, 8};
  s.n_ues = 1000;
  s.n_active = 30;
  s.n_aps = 4;
  c.full_scale = true;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return x;
}

inline long long parse_int(const std::string& v) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true/false, got '" + v + "'");
}

inline std::string fmt_double(double x) {
  std::ostringstream o;
  o << std::setprecision(17) << x;
  return o.str();
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string mode_name(ThresholdMode m) { return m == ThresholdMode::relative ? "relative" : "absolute"; }
inline ThresholdMode parse_mode(const std::string& v) {
  if (v == "relative") return ThresholdMode::relative;
  if (v == "absolute") return ThresholdMode::absolute;
  throw ConfigError("threshold mode must be relative or absolute, got '" + v + "'");
}
inline std::string prior_name(PriorKind p) { return p == PriorKind::laplace ? "laplace" : "gaussian"; }
inline PriorKind parse_prior(const std::string& v) {
  if (v == "laplace") return PriorKind::laplace;
  if (v == "gaussian") return PriorKind::gaussian;
  throw ConfigError("prior must be laplace or gaussian, got '" + v + "'");
}
inline std::string placement_name(Placement p) { return p == Placement::ring ? "ring" : "square"; }
inline Placement parse_placement(const std::string& v) {
  if (v == "ring") return Placement::ring;
  if (v == "square") return Placement::square;
  throw ConfigError("placement must be ring or square, got '" + v + "'");
}
inline std::string alphabet_name(Alphabet a) { return a == Alphabet::qpsk ? "qpsk" : "gaussian"; }
inline Alphabet parse_alphabet(const std::string& v) {
  if (v == "qpsk") return Alphabet::qpsk;
  if (v == "gaussian") return Alphabet::gaussian;
  throw ConfigError("alphabet must be qpsk or gaussian, got '" + v + "'");
}

struct Key {
  std::string section, name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline std::vector<Key> make_keys() {
  std::vector<Key> k;
  auto num = [&](std::string sec, std::string name, auto getter) {
    k.push_back({sec, name, [getter](const ExperimentConfig& c) { return fmt_double(*getter(const_cast<ExperimentConfig&>(c))); },
                 [getter](ExperimentConfig& c, const std::string& v) { *getter(c) = parse_double(v); }});
  };
  auto integer = [&](std::string sec, std::string name, auto getter) {
    k.push_back({sec, name, [getter](const ExperimentConfig& c) { return std::to_string(*getter(const_cast<ExperimentConfig&>(c))); },
                 [getter](ExperimentConfig& c, const std::string& v) {
                   using T = std::remove_reference_t<decltype(*getter(c))>;
                   const long long x = parse_int(v);
                   if constexpr (std::is_unsigned_v<T>) {
                     if (x < 0) throw ConfigError("expected a non-negative integer, got '" + v + "'");
                   }
                   *getter(c) = static_cast<T>(x);
                 }});
  };
  auto boolean = [&](std::string sec, std::string name, auto getter) {
    k.push_back({sec, name, [getter](const ExperimentConfig& c) { return *getter(const_cast<ExperimentConfig&>(c)) ? std::string("true") : std::string("false"); },
                 [getter](ExperimentConfig& c, const std::string& v) { *getter(c) = parse_bool(v); }});
  };
  auto text = [&](std::string sec, std::string name, auto get, auto set) { k.push_back({sec, name, get, set}); };

  text("run", "preset", [](const ExperimentConfig& c) { return c.preset; },
       [](ExperimentConfig& c, const std::string& v) {
         const auto& n = preset_names();
         if (std::find(n.begin(), n.end(), v) == n.end()) throw ConfigError("unknown preset '" + v + "'");
         c.preset = v;
       });
  integer("run", "seed", [](ExperimentConfig& c) { return &c.seed; });
  integer("run", "trials", [](ExperimentConfig& c) { return &c.trials; });
  integer("run", "threads", [](ExperimentConfig& c) { return &c.threads; });
  boolean("run", "record_timing", [](ExperimentConfig& c) { return &c.record_timing; });
  text("run", "schemes",
       [](const ExperimentConfig& c) {
         std::string s;
         for (const auto& x : c.schemes) s += (s.empty() ? "" : ",") + x;
         return s;
       },
       [](ExperimentConfig& c, const std::string& v) {
         c.schemes = split_list(v);
         for (const auto& x : c.schemes)
           if (x != "hp" && x != "sp" && x != "ep") throw ConfigError("scheme must be hp, sp or ep, got '" + x + "'");
       });

  integer("grid", "n_doppler", [](ExperimentConfig& c) { return &c.scenario.n_doppler; });
  integer("grid", "m_delay", [](ExperimentConfig& c) { return &c.scenario.m_delay; });
  num("grid", "subcarrier_hz", [](ExperimentConfig& c) { return &c.scenario.subcarrier_hz; });

  integer("layout", "n_rough", [](ExperimentConfig& c) { return &c.scenario.layout.n_rough; });
  integer("layout", "m_rough", [](ExperimentConfig& c) { return &c.scenario.layout.m_rough; });
  integer("layout", "k_p", [](ExperimentConfig& c) { return &c.scenario.layout.k_p; });
  integer("layout", "l_p", [](ExperimentConfig& c) { return &c.scenario.layout.l_p; });
  integer("layout", "k_size", [](ExperimentConfig& c) { return &c.scenario.layout.k_size; });
  integer("layout", "l_size", [](ExperimentConfig& c) { return &c.scenario.layout.l_size; });
  num("layout", "power_split", [](ExperimentConfig& c) { return &c.scenario.layout.power_split; });
  integer("layout", "halo_acc", [](ExperimentConfig& c) { return &c.scenario.layout.halo_acc; });
  integer("layout", "halo_rough", [](ExperimentConfig& c) { return &c.scenario.layout.halo_rough; });

  num("channel", "tau_max_s", [](ExperimentConfig& c) { return &c.scenario.tau_max_s; });
  num("channel", "speed_kmh", [](ExperimentConfig& c) { return &c.scenario.speed_kmh; });
  num("channel", "carrier_hz", [](ExperimentConfig& c) { return &c.scenario.carrier_hz; });
  integer("channel", "n_paths", [](ExperimentConfig& c) { return &c.scenario.n_paths; });
  text("channel", "path_mode",
       [](const ExperimentConfig& c) { return std::string(c.scenario.path_mode == PathMode::uniform ? "uniform" : "eva"); },
       [](ExperimentConfig& c, const std::string& v) { c.scenario.path_mode = parse_path_mode(v); });
  boolean("channel", "two_sided_doppler", [](ExperimentConfig& c) { return &c.scenario.two_sided_doppler; });
  boolean("channel", "gain_over_p", [](ExperimentConfig& c) { return &c.scenario.gain_over_p; });
  num("channel", "tx_power_dbm", [](ExperimentConfig& c) { return &c.scenario.tx_power_dbm; });
  num("channel", "n0_dbm_hz", [](ExperimentConfig& c) { return &c.scenario.n0_dbm_hz; });
  num("channel", "loss_intercept_db", [](ExperimentConfig& c) { return &c.scenario.loss_intercept_db; });
  num("channel", "loss_slope", [](ExperimentConfig& c) { return &c.scenario.loss_slope; });

  integer("array", "n_y", [](ExperimentConfig& c) { return &c.scenario.upa.n_y; });
  integer("array", "n_z", [](ExperimentConfig& c) { return &c.scenario.upa.n_z; });

  integer("deployment", "n_aps", [](ExperimentConfig& c) { return &c.scenario.n_aps; });
  text("deployment", "placement", [](const ExperimentConfig& c) { return placement_name(c.scenario.deployment.placement); },
       [](ExperimentConfig& c, const std::string& v) { c.scenario.deployment.placement = parse_placement(v); });
  num("deployment", "ap_spacing_km", [](ExperimentConfig& c) { return &c.scenario.deployment.ap_spacing_km; });
  num("deployment", "ring_inner_km", [](ExperimentConfig& c) { return &c.scenario.deployment.ring_inner_km; });
  num("deployment", "ring_outer_km", [](ExperimentConfig& c) { return &c.scenario.deployment.ring_outer_km; });
  num("deployment", "min_distance_km", [](ExperimentConfig& c) { return &c.scenario.deployment.min_distance_km; });

  integer("access", "n_ues", [](ExperimentConfig& c) { return &c.scenario.n_ues; });
  integer("access", "n_active", [](ExperimentConfig& c) { return &c.scenario.n_active; });
  text("access", "preamble_alphabet", [](const ExperimentConfig& c) { return alphabet_name(c.scenario.preamble_alphabet); },
       [](ExperimentConfig& c, const std::string& v) { c.scenario.preamble_alphabet = parse_alphabet(v); });

  auto rule = [&](std::string name, auto getter) {
    text("detection", name + "_mode", [getter](const ExperimentConfig& c) { return mode_name(getter(const_cast<ExperimentConfig&>(c))->mode); },
         [getter](ExperimentConfig& c, const std::string& v) { getter(c)->mode = parse_mode(v); });
    num("detection", name + "_theta_rel", [getter](ExperimentConfig& c) { return &getter(c)->theta_rel; });
    num("detection", name + "_theta_abs", [getter](ExperimentConfig& c) { return &getter(c)->theta_abs; });
  };
  rule("rough", [](ExperimentConfig& c) { return &c.rough_rule; });
  rule("final", [](ExperimentConfig& c) { return &c.final_rule; });
  rule("superimposed", [](ExperimentConfig& c) { return &c.superimposed_rule; });

  text("solver", "prior", [](const ExperimentConfig& c) { return prior_name(c.solver.prior); },
       [](ExperimentConfig& c, const std::string& v) { c.solver.prior = parse_prior(v); });
  num("solver", "eta", [](ExperimentConfig& c) { return &c.solver.eta; });
  num("solver", "shape_a", [](ExperimentConfig& c) { return &c.solver.shape_a; });
  num("solver", "rough_shape_a", [](ExperimentConfig& c) { return &c.rough_shape_a; });
  num("solver", "scale_b", [](ExperimentConfig& c) { return &c.solver.scale_b; });
  integer("solver", "max_iter", [](ExperimentConfig& c) { return &c.solver.max_iter; });
  num("solver", "tol", [](ExperimentConfig& c) { return &c.solver.tol; });
  num("solver", "damping", [](ExperimentConfig& c) { return &c.solver.damping; });
  num("solver", "alpha_init", [](ExperimentConfig& c) { return &c.solver.alpha_init; });
  num("solver", "gamma_init", [](ExperimentConfig& c) { return &c.solver.gamma_init; });
  integer("solver", "omp_budget", [](ExperimentConfig& c) { return &c.omp_budget; });

  integer("fixture", "rows", [](ExperimentConfig& c) { return &c.fixture.rows; });
  integer("fixture", "unknowns", [](ExperimentConfig& c) { return &c.fixture.unknowns; });
  integer("fixture", "columns", [](ExperimentConfig& c) { return &c.fixture.columns; });
  integer("fixture", "n_blocks", [](ExperimentConfig& c) { return &c.fixture.n_blocks; });
  integer("fixture", "block_rows", [](ExperimentConfig& c) { return &c.fixture.block_rows; });
  integer("fixture", "block_cols", [](ExperimentConfig& c) { return &c.fixture.block_cols; });
  num("fixture", "snr_db", [](ExperimentConfig& c) { return &c.fixture.snr_db; });

  text("sweep", "name", [](const ExperimentConfig& c) { return c.sweep_name; },
       [](ExperimentConfig& c, const std::string& v) { c.sweep_name = v; });
  text("sweep", "values",
       [](const ExperimentConfig& c) {
         std::string s;
         for (double x : c.sweep_values) s += (s.empty() ? "" : ",") + fmt_double(x);
         return s;
       },
       [](ExperimentConfig& c, const std::string& v) {
         c.sweep_values.clear();
         for (const auto& x : split_list(v)) c.sweep_values.push_back(parse_double(x));
       });
  return k;
}

inline const std::vector<Key>& keys() {
  static const std::vector<Key> k = make_keys();
  return k;
}

}  // namespace detail

// Sections in brackets, "key = value" lines, '#' or ';' comments. Unknown
// sections or keys and duplicate keys are errors carrying the line number.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  int no = 0;
  auto fail = [&](const std::string& msg) { throw ConfigError("config line " + std::to_string(no) + ": " + msg); };
  std::set<std::string> sections;
  for (const auto& k : detail::keys()) sections.insert(k.section);
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    if (key.empty()) fail("missing key before '='");
    if (section.empty()) fail("key '" + key + "' outside any section");
    const auto& ks = detail::keys();
    auto it = std::find_if(ks.begin(), ks.end(), [&](const detail::Key& k) { return k.section == section && k.name == key; });
    if (it == ks.end()) fail("unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second) fail("duplicate key '" + key + "' in [" + section + "]");
    try {
      it->set(base, value);
    } catch (const ConfigError& e) {
      fail(key + ": " + e.what());
    }
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

inline std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  std::string section;
  for (const auto& k : detail::keys()) {
    if (k.section != section) {
      if (!section.empty()) o << "\n";
      section = k.section;
      o << "[" << section << "]\n";
    }
    o << k.name << " = " << k.get(c) << "\n";
  }
  return o.str();
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Hash of the result-defining config; thread count and timing are left out.
inline std::string run_id(ExperimentConfig c) {
  c.threads = 1;
  c.record_timing = true;
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << fnv1a(serialize_config(c));
  return o.str();
}

// ---------------------------------------------------------------- CSV

struct CsvRow {
  std::string run_id, preset;
  std::uint64_t seed = 0;
  int trial = 0;
  std::string sweep_name;
  double sweep_value = 0;
  std::string algorithm;
  double der = std::nan(""), den = std::nan(""), nmse_db = std::nan(""), sinr_db = std::nan("");
  int iterations = 0;
  double wall_ms = 0;
  std::uint64_t macs = 0;
  bool diverged = false;  // not written; drives the exit code
};

inline const char* csv_header() {
  return "run_id,preset,seed,trial,sweep_name,sweep_value,algorithm,der,den,nmse_db,sinr_db,iterations,wall_ms,macs";
}

inline bool row_less(const CsvRow& a, const CsvRow& b) {
  return std::tie(a.sweep_value, a.trial, a.algorithm) < std::tie(b.sweep_value, b.trial, b.algorithm);
}

inline std::string format_num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream o;
  o << std::setprecision(10) << x;
  return o.str();
}

inline void write_csv(std::ostream& out, std::vector<CsvRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), row_less);
  out << csv_header() << "\n";
  for (const auto& r : rows)
    out << r.run_id << ',' << r.preset << ',' << r.seed << ',' << r.trial << ',' << r.sweep_name << ','
        << format_num(r.sweep_value) << ',' << r.algorithm << ',' << format_num(r.der) << ',' << format_num(r.den)
        << ',' << format_num(r.nmse_db) << ',' << format_num(r.sinr_db) << ',' << r.iterations << ','
        << format_num(r.wall_ms) << ',' << r.macs << "\n";
}

inline void write_csv_file(const std::string& path, const std::vector<CsvRow>& rows) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  write_csv(f, rows);
}

// ---------------------------------------------------------------- complexity

struct ComplexityReport {
  double chi_s = 0, chi_e = 0, chi_sic = 0;
  double chi_h() const { return chi_s + chi_e + chi_sic; }
};

// Rough stage: N' log N' + M' log M' + J N' M' U |p_r1|. Accurate stage:
// J |K_A| |p_r2| (l_max+1) N_p M_p, counting every delay tap of the lattice.
// SIC: N' M' times the lattice rows of the detected UEs times J.
inline ComplexityReport predict_complexity(const ScenarioConfig& c, int accurate_ues, int sic_ues) {
  const AccessGeometry g = c.geometry();
  const double j = c.upa.size(), nr = g.layout.n_rough, mr = g.layout.m_rough;
  ComplexityReport r;
  r.chi_s = nr * std::log2(nr) + mr * std::log2(mr) + j * nr * mr * c.n_ues * g.rough_cols();
  r.chi_e = j * accurate_ues * g.acc_width() * (g.budget.l_max + 1.0) * g.n_obs() * g.m_obs();
  r.chi_sic = nr * mr * sic_ues * g.acc_cols() * j;
  return r;
}

// ---------------------------------------------------------------- running

inline SolverFn make_named_solver(const std::string& alg, const SolverConfig& base, int omp_budget) {
  SolverConfig c = base;
  if (alg == "gamp-pcsbl-la") {
    c.prior = PriorKind::laplace;
  } else if (alg == "gamp-pcsbl-gs") {
    c.prior = PriorKind::gaussian;
    if (base.prior == PriorKind::laplace) c.shape_a = 0.0;
  } else if (alg == "gamp-sbl") {
    c.prior = PriorKind::gaussian;
    c.eta = 0.0;
    if (base.prior == PriorKind::laplace) c.shape_a = 0.0;
  } else if (alg == "omp") {
    return make_omp_solver(omp_budget);
  } else {
    throw ConfigError("unknown algorithm '" + alg + "'");
  }
  return make_gamp_solver(c);
}

inline PipelineOptions pipeline_options(const ExperimentConfig& c) {
  PipelineOptions o;
  SolverConfig rough = c.solver;
  rough.shape_a = c.rough_shape_a;
  o.rough_solver = make_gamp_solver(rough);
  o.accurate_solver = make_gamp_solver(c.solver);
  o.rough_rule = c.rough_rule;
  o.final_rule = c.final_rule;
  o.superimposed_rule = c.superimposed_rule;
  return o;
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "hp") return Scheme::hybrid;
  if (s == "sp") return Scheme::superimposed;
  if (s == "ep") return Scheme::embedded;
  throw ConfigError("scheme must be hp, sp or ep, got '" + s + "'");
}

struct SweepPlan {
  std::string name;
  std::vector<double> values;
  std::vector<std::string> algorithms;
};

inline SweepPlan default_sweep(const std::string& preset, bool full_scale) {
  const std::vector<std::string> solvers{"gamp-pcsbl-la", "gamp-pcsbl-gs", "gamp-sbl", "omp"};
  if (preset == "recover-snr") return {"snr_db", {7.5, 10, 12.5, 15}, solvers};
  if (preset == "recover-cols") return {"columns", {16, 32, 64, 128}, solvers};
  if (preset == "recover-blocks") return {"n_blocks", {3, 5, 7, 9}, solvers};
  if (preset == "convergence") return {"iteration", {}, {"gamp-pcsbl-la", "gamp-pcsbl-gs", "gamp-sbl"}};
  if (preset == "power-sweep") return {"power_split", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}, {"hp"}};
  if (preset == "access-vs-U")
    return full_scale ? SweepPlan{"n_ues", {100, 500, 1000, 2000, 3000}, {"hp", "sp", "ep"}}
                      : SweepPlan{"n_ues", {50, 100, 150, 200}, {"hp", "sp", "ep"}};
  if (preset == "access-vs-antennas") return {"antennas", {4, 9, 16}, {"hp", "sp", "ep"}};
  if (preset == "access-vs-active") return {"n_active", {10, 20, 30, 40}, {"hp", "sp", "ep"}};
  throw ConfigError("unknown preset '" + preset + "'");
}

inline SweepPlan resolve_sweep(const ExperimentConfig& c) {
  SweepPlan p = default_sweep(c.preset, c.full_scale);
  if (!c.sweep_name.empty() && c.sweep_name != p.name)
    throw ConfigError("preset " + c.preset + " sweeps '" + p.name + "', not '" + c.sweep_name + "'");
  if (!c.sweep_values.empty()) p.values = c.sweep_values;
  if (!c.schemes.empty()) {
    if (is_recovery_preset(c.preset)) throw ConfigError("schemes apply to access presets only");
    p.algorithms = c.schemes;
  }
  return p;
}

// Applies one sweep value to a copy of the config.
inline ExperimentConfig at_sweep_point(ExperimentConfig c, const std::string& name, double v) {
  auto as_int = [&](double x) {
    if (x != std::floor(x) || x < 0) throw ConfigError(name + " needs a non-negative integer, got " + format_num(x));
    return static_cast<int>(x);
  };
  if (name == "snr_db") c.fixture.snr_db = v;
  else if (name == "columns") c.fixture.columns = as_int(v);
  else if (name == "n_blocks") c.fixture.n_blocks = as_int(v);
  else if (name == "power_split") c.scenario.layout.power_split = v;
  else if (name == "n_ues") c.scenario.n_ues = as_int(v);
  else if (name == "n_active") c.scenario.n_active = as_int(v);
  else if (name == "antennas") {
    const int n = static_cast<int>(std::lround(std::sqrt(v)));
    if (n * n != as_int(v)) throw ConfigError("antennas must be a square number, got " + format_num(v));
    c.scenario.upa = {n, n};
  } else if (name != "iteration") {
    throw ConfigError("unknown sweep variable '" + name + "'");
  }
  return c;
}

inline int omp_budget_for(const ExperimentConfig& c) {
  return c.omp_budget > 0 ? c.omp_budget : c.fixture.n_blocks * c.fixture.block_rows;
}

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline std::vector<CsvRow> run_recovery_trial(const ExperimentConfig& c, const SweepPlan& plan, int trial) {
  std::vector<CsvRow> rows;
  const std::string id = run_id(c);
  auto base_row = [&](const std::string& alg, double sv) {
    CsvRow r;
    r.run_id = id;
    r.preset = c.preset;
    r.seed = c.seed;
    r.trial = trial;
    r.sweep_name = plan.name;
    r.sweep_value = sv;
    r.algorithm = alg;
    return r;
  };
  if (c.preset == "convergence") {
    auto rng = make_stream(c.seed, static_cast<std::uint64_t>(trial), kNone, kNone, Stream::fixture);
    const RecoveryFixture fx = make_recovery_fixture(rng, c.fixture);
    const RealSystem sys = realify(fx.y, fx.a);
    for (const auto& alg : plan.algorithms) {
      SolverConfig sc = c.solver;
      sc.prior = alg == "gamp-pcsbl-la" ? PriorKind::laplace : PriorKind::gaussian;
      if (alg != "gamp-pcsbl-la" && c.solver.prior == PriorKind::laplace) sc.shape_a = 0.0;
      if (alg == "gamp-sbl") sc.eta = 0.0;
      sc.tol = 0.0;  // full-length traces
      std::vector<double> trace;
      sc.observer = [&](int, const RMatrix& x) { trace.push_back(nmse_db(complexify(x), fx.x)); };
      const auto t0 = Clock::now();
      const SolverReport rep = gamp_pcsbl(sys, sc);
      const double ms = c.record_timing ? elapsed_ms(t0) : 0.0;
      for (std::size_t t = 0; t < trace.size(); ++t) {
        CsvRow r = base_row(alg, static_cast<double>(t + 1));
        r.nmse_db = trace[t];
        r.iterations = static_cast<int>(t + 1);
        r.wall_ms = t + 1 == trace.size() ? ms : 0.0;
        r.macs = rep.macs / std::max<std::size_t>(1, trace.size()) * (t + 1);
        r.diverged = rep.diverged;
        rows.push_back(r);
      }
    }
    return rows;
  }
  for (double v : plan.values) {
    const ExperimentConfig pc = at_sweep_point(c, plan.name, v);
    auto rng = make_stream(c.seed, static_cast<std::uint64_t>(trial), kNone, kNone, Stream::fixture);
    const RecoveryFixture fx = make_recovery_fixture(rng, pc.fixture);
    MeasurementSystem ms_sys;
    ms_sys.a = fx.a;
    ms_sys.y = fx.y;
    for (const auto& alg : plan.algorithms) {
      const SolverFn solver = make_named_solver(alg, pc.solver, omp_budget_for(pc));
      const auto t0 = Clock::now();
      const SolveResult res = solver({&ms_sys, nullptr, fx.noise_var});
      CsvRow r = base_row(alg, v);
      r.wall_ms = c.record_timing ? elapsed_ms(t0) : 0.0;
      r.nmse_db = nmse_db(res.h, fx.x);
      r.iterations = res.iterations;
      r.macs = res.macs;
      r.diverged = res.diverged;
      rows.push_back(r);
    }
  }
  return rows;
}

inline std::vector<CsvRow> run_access_trial(const ExperimentConfig& c, const SweepPlan& plan, int trial) {
  std::vector<CsvRow> rows;
  const std::string id = run_id(c);
  for (double v : plan.values) {
    ExperimentConfig pc = at_sweep_point(c, plan.name, v);
    for (const auto& alg : plan.algorithms) {
      pc.scenario.scheme = parse_scheme(alg);
      const auto t0 = Clock::now();
      const Scenario s = draw_scenario(pc.scenario, c.seed, static_cast<std::uint64_t>(trial));
      const TrialResult res = run_access(s, pipeline_options(pc));
      CsvRow r;
      r.run_id = id;
      r.preset = c.preset;
      r.seed = c.seed;
      r.trial = trial;
      r.sweep_name = plan.name;
      r.sweep_value = v;
      r.algorithm = alg;
      r.der = res.metrics.der;
      r.den = res.metrics.den;
      r.nmse_db = res.metrics.nmse_db;
      r.sinr_db = res.metrics.sinr_db;
      r.iterations = res.metrics.iterations;
      r.wall_ms = c.record_timing ? elapsed_ms(t0) : 0.0;
      r.macs = res.metrics.macs.total();
      r.diverged = res.metrics.diverged_solves > 0;
      rows.push_back(r);
    }
  }
  return rows;
}

struct RunSummary {
  std::vector<CsvRow> rows;
  int trials = 0;
  int diverged_trials = 0;
};

// Trials run on a small worker pool; rows are sorted before writing, so the
// schedule never shows in the output.
inline RunSummary run_preset(const ExperimentConfig& c) {
  c.scenario.validate();
  if (c.trials < 0) throw ConfigError("trials must be non-negative");
  const SweepPlan plan = resolve_sweep(c);
  for (double v : plan.values) {
    const ExperimentConfig pc = at_sweep_point(c, plan.name, v);
    if (!is_recovery_preset(c.preset)) pc.scenario.validate();
  }
  RunSummary out;
  out.trials = c.trials;
  std::vector<std::vector<CsvRow>> per_trial(static_cast<std::size_t>(c.trials));
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    for (int t = next++; t < c.trials; t = next++) {
      try {
        per_trial[t] = is_recovery_preset(c.preset) ? run_recovery_trial(c, plan, t) : run_access_trial(c, plan, t);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min(c.threads, std::max(1, c.trials)));
  std::vector<std::thread> pool;
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
  for (auto& rows : per_trial) {
    bool div = false;
    for (auto& r : rows) {
      div = div || r.diverged;
      out.rows.push_back(std::move(r));
    }
    out.diverged_trials += div;
  }
  std::stable_sort(out.rows.begin(), out.rows.end(), row_less);
  return out;
}

}  // namespace otfsra
