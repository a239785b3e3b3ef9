#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdma/extensions.hpp"
#include "cdma/gaussian.hpp"
#include "cdma/interpolation.hpp"
#include "cdma/montecarlo.hpp"
#include "cdma/replica.hpp"

#ifndef CDMA_LAB_VERSION
#define CDMA_LAB_VERSION "0.1.0"
#endif

namespace cdma::cli {

using Json = nlohmann::ordered_json;

inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_validation = 2;
inline constexpr int exit_refused = 3;

// Pinned CSV headers.
namespace schema {
inline const std::vector<std::string> replica{"beta", "sigma2", "m_star", "lambda_star",
                                              "c_rs_nats", "c_rs_bits", "n_fixed_points"};
inline const std::vector<std::string> phase{"beta", "sigma2", "m_star", "lambda_star",
                                            "c_rs_nats", "c_rs_bits", "root_count"};
inline const std::vector<std::string> phase_boundary{"beta", "sigma2_before", "sigma2_after",
                                                     "roots_before", "roots_after"};
inline const std::vector<std::string> simulate{
    "K", "N", "beta_actual", "sigma2", "dist", "n_matrices", "n_noise", "mi_nats_mean",
    "mi_nats_se", "ber_mean", "ber_se", "bound_nats"};
inline const std::vector<std::string> concentrate{"K", "var_mi", "var_f", "tail_freq_mi",
                                                  "tail_freq_f", "epsilon"};
inline const std::vector<std::string> universality{"K", "dist", "mi_nats_mean", "mi_nats_se"};
inline const std::vector<std::string> trend{"K", "N", "beta_actual", "mi_nats_mean", "mi_nats_se"};
inline const std::vector<std::string> interpolate{"t", "u", "f_mean", "f_se", "dfdt_fd", "T1_raw",
                                                  "T2_raw", "T1_reduced", "T2_reduced", "R", "R_se"};
inline const std::vector<std::string> nishimori{"t", "u", "res_mq", "res_mq_se", "res_X11",
                                                "res_X11_se", "res_X12", "res_X12_se"};
inline const std::vector<std::string> sumrule{"m", "u", "lhs", "rhs", "residual", "budget"};
inline const std::vector<std::string> gaussian{"beta", "sigma2", "closed_form_nats", "replica_nats",
                                               "m_saddle", "abs_diff"};
inline const std::vector<std::string> colored{"beta", "rho", "noise_power", "c_upper_nats",
                                              "m_argmin", "white_c_upper_nats"};
inline const std::vector<std::string> powers{"beta", "sigma2", "profile", "c_upper_nats",
                                             "m_argmin", "equal_power_nats"};
}  // namespace schema

// A validation failure attributed to one flag.
class FlagError : public std::invalid_argument {
 public:
  FlagError(const std::string& flag, const std::string& what)
      : std::invalid_argument("--" + flag + ": " + what) {}
};

using Cell = std::variant<std::string, double, long long>;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// RFC 4180 style table; every numeric cell must be finite.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_columns(const std::vector<std::string>& extra) {
    header_.insert(header_.end(), extra.begin(), extra.end());
  }

  void add_row(std::vector<Cell> row) {
    if (row.size() != header_.size()) throw std::logic_error("CSV row width does not match header");
    for (std::size_t j = 0; j < row.size(); ++j)
      if (const double* d = std::get_if<double>(&row[j]); d && !std::isfinite(*d))
        throw std::runtime_error("non-finite value in column " + header_[j]);
    rows_.push_back(std::move(row));
  }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t j = 0; j < cells.size(); ++j) {
        if (j) out += ',';
        out += quote(cells[j]);
      }
      out += '\n';
    };
    line(header_);
    for (const auto& row : rows_) {
      std::vector<std::string> cells;
      for (const Cell& c : row) {
        if (const auto* s = std::get_if<std::string>(&c)) cells.push_back(*s);
        else if (const auto* d = std::get_if<double>(&c)) cells.push_back(format_double(*d));
        else cells.push_back(std::to_string(std::get<long long>(c)));
      }
      line(cells);
    }
    return out;
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << str();
    if (!f) throw std::runtime_error("failed writing " + path);
  }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + '"';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

inline std::string iso_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// CLI11 parses a reversed argument vector. Help goes to stdout and ends the
// run successfully.
inline void parse_args(CLI::App& app, const std::vector<std::string>& args) {
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    throw CLI::Success();
  }
}

// One subcommand: its parser, the recorded parameter set and common flags.
class Command {
 public:
  explicit Command(std::string name, std::string description)
      : app_(std::move(description), "cdma_lab " + name), name_(std::move(name)) {
    app_.set_config("--config", "", "key = value configuration file (flags take precedence)");
    app_.add_option("--out", out_, "output CSV path")->required();
    app_.add_option("--threads", threads_, "worker threads (default: CDMA_LAB_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
  }

  template <class T>
  CLI::Option* option(const std::string& name, T& var, const std::string& desc) {
    recorders_.push_back([name, &var](Json& j) { j[name] = var; });
    auto* opt = app_.add_option("--" + name, var, desc)->capture_default_str();
    if constexpr (is_vector<T>::value) opt->delimiter(',');
    return opt;
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    recorders_.push_back([name, &var](Json& j) { j[name] = var; });
    return app_.add_flag("--" + name, var, desc);
  }

  CLI::Option* seed_option(std::uint64_t& seed) {
    seed_ = &seed;
    return option("seed", seed, "64-bit base seed");
  }

  CLI::App& app() { return app_; }
  const std::string& name() const { return name_; }
  const std::string& out() const { return out_; }
  int threads() const { return resolve_threads(threads_); }

  void parse(const std::vector<std::string>& args) { parse_args(app_, args); }

  void add_output(const std::string& path) { outputs_.push_back(path); }

  void write_manifest() const {
    Json m;
    m["subcommand"] = name_;
    Json params = Json::object();
    for (const auto& r : recorders_) r(params);
    m["params"] = params;
    const CLI::Option* cfg = app_.get_option("--config");
    m["config_file"] = cfg->count() ? Json(cfg->as<std::string>()) : Json(nullptr);
    m["seed"] = seed_ ? Json(*seed_) : Json(nullptr);
    m["version"] = CDMA_LAB_VERSION;
    m["timestamp"] = iso_timestamp();
    m["threads"] = threads();
    m["outputs"] = outputs_;
    std::ofstream f(out_ + ".manifest.json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write manifest " + out_ + ".manifest.json");
    f << m.dump(2) << '\n';
  }

 private:
  template <class T>
  struct is_vector : std::false_type {};
  template <class T>
  struct is_vector<std::vector<T>> : std::true_type {};

  CLI::App app_;
  std::string name_;
  std::string out_;
  int threads_ = 0;
  std::uint64_t* seed_ = nullptr;
  std::vector<std::function<void(Json&)>> recorders_;
  std::vector<std::string> outputs_;
};

inline void require_nonempty(const std::string& flag, std::size_t size) {
  if (size == 0) throw FlagError(flag, "needs at least one value");
}

inline void require_positive(const std::string& flag, const std::vector<double>& values) {
  require_nonempty(flag, values.size());
  for (double v : values)
    if (!(v > 0.0)) throw FlagError(flag, "values must be > 0, got " + format_double(v));
}

inline void require_users(const std::string& flag, const std::vector<int>& values) {
  require_nonempty(flag, values.size());
  for (int v : values)
    if (v < 1) throw FlagError(flag, "user counts must be >= 1, got " + std::to_string(v));
}

inline void require_unit(const std::string& flag, const std::vector<double>& values) {
  require_nonempty(flag, values.size());
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0)) throw FlagError(flag, "values must lie in [0, 1], got " + format_double(v));
}

inline SpreadingDistribution parse_dist(const std::string& flag, const std::string& name) {
  try {
    return SpreadingDistribution::from_name(name);
  } catch (const std::invalid_argument&) {
    throw FlagError(flag, "unknown spreading distribution '" + name + "'");
  }
}

inline std::vector<double> linspace(double lo, double hi, int points) {
  if (points == 1) return {lo};
  std::vector<double> v(points);
  for (int i = 0; i < points; ++i) v[i] = lo + (hi - lo) * i / (points - 1);
  v.back() = hi;
  return v;
}

// "P:prob;P:prob;..."
inline PowerProfile parse_profile(const std::string& flag, const std::string& text) {
  std::vector<std::pair<double, double>> levels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw FlagError(flag, "expected power:probability pairs, got '" + item + "'");
    try {
      levels.emplace_back(std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw FlagError(flag, "malformed level '" + item + "'");
    }
  }
  try {
    return PowerProfile(std::move(levels));
  } catch (const std::invalid_argument& e) {
    throw FlagError(flag, e.what());
  }
}

struct Bits {
  bool on = false;
  void attach(Command& cmd) { cmd.flag("bits", on, "add bit-valued columns next to the nat columns"); }
};

// ---------------------------------------------------------------- replica

inline int cmd_replica(const std::vector<std::string>& args) {
  Command cmd("replica", "Replica-symmetric capacity bound and fixed points");
  std::vector<double> betas{1.0}, sigma2s{1.0};
  int grid = 512;
  bool as_printed = false;
  cmd.option("beta", betas, "load K/N (list)");
  cmd.option("sigma2", sigma2s, "noise variance (list)");
  cmd.option("grid-size", grid, "fixed-point search grid")->check(CLI::Range(64, 10000000));
  cmd.flag("as-printed", as_printed, "use the functional without the ln 2 correction");
  cmd.parse(args);
  require_positive("beta", betas);
  require_positive("sigma2", sigma2s);
  const auto variant = as_printed ? FunctionalVariant::as_printed : FunctionalVariant::corrected;
  CsvTable csv(schema::replica);
  for (double b : betas) {
    for (double s : sigma2s) {
      const CapacityBound cb = capacity_bound(SystemParams::large_system(b, s), default_rule(), grid, variant);
      csv.add_row({b, s, cb.argmin.m, cb.argmin.lambda, cb.c_upper, nats_to_bits(cb.c_upper),
                   static_cast<long long>(cb.root_count)});
    }
  }
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

// ---------------------------------------------------------------- phase

inline int cmd_phase(const std::vector<std::string>& args) {
  Command cmd("phase", "Number of fixed points over a (beta, sigma2) grid");
  double beta_min = 0.5, beta_max = 2.5, s_min = 0.05, s_max = 0.3;
  int beta_points = 9, s_points = 51, grid = 512;
  cmd.option("beta-min", beta_min, "smallest load");
  cmd.option("beta-max", beta_max, "largest load");
  cmd.option("beta-points", beta_points, "load grid points")->check(CLI::PositiveNumber);
  cmd.option("sigma2-min", s_min, "smallest noise variance");
  cmd.option("sigma2-max", s_max, "largest noise variance");
  cmd.option("sigma2-points", s_points, "noise grid points")->check(CLI::PositiveNumber);
  cmd.option("grid-size", grid, "fixed-point search grid")->check(CLI::Range(64, 10000000));
  cmd.parse(args);
  if (!(beta_min > 0.0)) throw FlagError("beta-min", "must be > 0");
  if (!(beta_max >= beta_min)) throw FlagError("beta-max", "must be >= --beta-min");
  if (!(s_min > 0.0)) throw FlagError("sigma2-min", "must be > 0");
  if (!(s_max >= s_min)) throw FlagError("sigma2-max", "must be >= --sigma2-min");
  const PhaseScan scan = phase_scan(linspace(beta_min, beta_max, beta_points), linspace(s_min, s_max, s_points),
                                    default_rule(), grid, cmd.threads());
  CsvTable csv(schema::phase);
  for (const PhaseCell& c : scan.cells)
    csv.add_row({c.beta, c.sigma2, c.bound.argmin.m, c.bound.argmin.lambda, c.bound.c_upper,
                 nats_to_bits(c.bound.c_upper), static_cast<long long>(c.root_count)});
  CsvTable boundary(schema::phase_boundary);
  for (const PhaseTransition& t : scan.boundary)
    boundary.add_row({t.beta, t.sigma2_before, t.sigma2_after, static_cast<long long>(t.roots_before),
                      static_cast<long long>(t.roots_after)});
  csv.write(cmd.out());
  const std::string bpath = cmd.out() + ".boundary.csv";
  boundary.write(bpath);
  cmd.add_output(cmd.out());
  cmd.add_output(bpath);
  cmd.write_manifest();
  return exit_ok;
}

// ---------------------------------------------------------------- Monte Carlo

struct McFlags {
  std::vector<int> K{8};
  double beta = 1.0;
  std::vector<double> sigma2{1.0};
  std::string dist = "gaussian";
  int matrices = 100;
  int noise = 10;
  std::uint64_t seed = 1;
  bool random_input = false;
  std::string estimator = "free-energy";
  int max_users = default_max_users;

  void attach(Command& cmd, bool many_sigma2) {
    cmd.option("K", K, "user counts (list)");
    cmd.option("beta", beta, "nominal load; N = round(K / beta)");
    if (many_sigma2) cmd.option("sigma2", sigma2, "noise variances (list)");
    else cmd.option("sigma2", sigma2.front(), "noise variance");
    cmd.option("dist", dist, "spreading distribution: gaussian | binary | uniform");
    cmd.option("matrices", matrices, "spreading matrices per point");
    cmd.option("noise", noise, "(input, noise) draws per matrix");
    cmd.seed_option(seed);
    cmd.flag("random-input", random_input, "draw x0 uniformly instead of all-ones");
    cmd.option("estimator", estimator, "per-instance MI estimator: free-energy | information-density");
    cmd.option("max-users", max_users, "largest K enumerated exactly");
  }

  void validate() const {
    require_users("K", K);
    if (!(beta > 0.0)) throw FlagError("beta", "must be > 0");
    require_positive("sigma2", sigma2);
    for (double s : sigma2)
      if (!std::isfinite(s)) throw FlagError("sigma2", "must be finite for finite systems");
    if (matrices < 1) throw FlagError("matrices", "must be >= 1");
    if (noise < 1) throw FlagError("noise", "must be >= 1");
    if (estimator != "free-energy" && estimator != "information-density")
      throw FlagError("estimator", "must be free-energy or information-density");
  }

  ExperimentConfig config(int K_users, double s2, int threads) const {
    ExperimentConfig cfg;
    cfg.params = SystemParams::from_load(K_users, beta, s2);
    cfg.dist = parse_dist("dist", dist);
    cfg.n_matrices = matrices;
    cfg.n_noise = noise;
    cfg.seed = seed;
    cfg.random_input = random_input;
    cfg.estimator = estimator == "free-energy" ? MiEstimator::free_energy : MiEstimator::information_density;
    cfg.threads = threads;
    cfg.max_users = max_users;
    return cfg;
  }
};

inline int cmd_simulate(const std::vector<std::string>& args) {
  Command cmd("simulate", "Finite-K capacity by exact enumeration and Monte Carlo");
  McFlags mc;
  Bits bits;
  mc.attach(cmd, true);
  bits.attach(cmd);
  cmd.parse(args);
  mc.validate();
  parse_dist("dist", mc.dist);
  CsvTable csv(schema::simulate);
  if (bits.on) csv.add_columns({"mi_bits_mean", "mi_bits_se", "bound_bits"});
  for (double s2 : mc.sigma2) {
    for (int K : mc.K) {
      const ExperimentConfig cfg = mc.config(K, s2, cmd.threads());
      const EstimateRecord rec = estimate_capacity(cfg);
      const double bound = capacity_bound(SystemParams::large_system(rec.beta_actual, s2)).c_upper;
      std::vector<Cell> row{static_cast<long long>(rec.K), static_cast<long long>(rec.N), rec.beta_actual, s2,
                            cfg.dist.name(), static_cast<long long>(cfg.n_matrices),
                            static_cast<long long>(cfg.n_noise), rec.capacity_mean, rec.capacity_se,
                            rec.ber_mean, rec.ber_se, bound};
      if (bits.on) {
        row.push_back(nats_to_bits(rec.capacity_mean));
        row.push_back(nats_to_bits(rec.capacity_se));
        row.push_back(nats_to_bits(bound));
      }
      csv.add_row(std::move(row));
    }
  }
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

inline int cmd_concentrate(const std::vector<std::string>& args) {
  Command cmd("concentrate", "Sample-to-sample fluctuations of MI and free energy versus K");
  McFlags mc;
  mc.K = {8, 16};
  std::vector<double> eps{0.05, 0.1};
  mc.attach(cmd, false);
  cmd.option("epsilon", eps, "deviation thresholds in nats (list)");
  cmd.parse(args);
  mc.validate();
  require_positive("epsilon", eps);
  ExperimentConfig cfg = mc.config(mc.K.front(), mc.sigma2.front(), cmd.threads());
  cfg.epsilons = eps;
  CsvTable csv(schema::concentrate);
  for (const ConcentrationRow& r : concentration_experiment(cfg, mc.K))
    csv.add_row({static_cast<long long>(r.K), r.var_mi, r.var_f, r.tail_freq_mi, r.tail_freq_f, r.epsilon});
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

inline int cmd_universality(const std::vector<std::string>& args) {
  Command cmd("universality", "Finite-K capacity for several chip distributions");
  McFlags mc;
  mc.K = {4, 8, 16};
  std::vector<std::string> dists{"gaussian", "binary", "uniform"};
  Bits bits;
  mc.attach(cmd, false);
  cmd.option("dists", dists, "spreading distributions (list)");
  bits.attach(cmd);
  cmd.parse(args);
  mc.validate();
  require_nonempty("dists", dists.size());
  std::vector<SpreadingDistribution> ds;
  for (const auto& d : dists) ds.push_back(parse_dist("dists", d));
  const ExperimentConfig cfg = mc.config(mc.K.front(), mc.sigma2.front(), cmd.threads());
  CsvTable csv(schema::universality);
  if (bits.on) csv.add_columns({"mi_bits_mean", "mi_bits_se"});
  for (const UniversalityRow& r : universality_experiment(cfg, mc.K, ds)) {
    std::vector<Cell> row{static_cast<long long>(r.K), r.dist, r.capacity_mean, r.capacity_se};
    if (bits.on) {
      row.push_back(nats_to_bits(r.capacity_mean));
      row.push_back(nats_to_bits(r.capacity_se));
    }
    csv.add_row(std::move(row));
  }
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

inline int cmd_trend(const std::vector<std::string>& args) {
  Command cmd("trend", "Finite-K capacity sequence C_K");
  McFlags mc;
  mc.K = {4, 8, 12, 16};
  Bits bits;
  mc.attach(cmd, false);
  bits.attach(cmd);
  cmd.parse(args);
  mc.validate();
  const ExperimentConfig cfg = mc.config(mc.K.front(), mc.sigma2.front(), cmd.threads());
  CsvTable csv(schema::trend);
  if (bits.on) csv.add_columns({"mi_bits_mean", "mi_bits_se"});
  for (const TrendRow& r : limit_trend(cfg, mc.K)) {
    std::vector<Cell> row{static_cast<long long>(r.K), static_cast<long long>(r.N), r.beta_actual,
                          r.capacity_mean, r.capacity_se};
    if (bits.on) {
      row.push_back(nats_to_bits(r.capacity_mean));
      row.push_back(nats_to_bits(r.capacity_se));
    }
    csv.add_row(std::move(row));
  }
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

// ---------------------------------------------------------------- interpolation

struct InterpFlags {
  int K = 8;
  double beta = 1.0;
  double sigma2 = 1.0;
  double m = -1.0;  // negative: minimizer of the replica functional
  int samples = 1000;
  std::uint64_t seed = 1;
  int max_users = default_max_users;

  void attach(Command& cmd, bool with_m) {
    cmd.option("K", K, "users");
    cmd.option("beta", beta, "nominal load; N = round(K / beta)");
    cmd.option("sigma2", sigma2, "noise variance");
    if (with_m) cmd.option("m", m, "path parameter in [0, 1]; negative selects the replica minimizer");
    cmd.option("samples", samples, "disorder samples");
    cmd.seed_option(seed);
    cmd.option("max-users", max_users, "largest K enumerated exactly");
  }

  void validate() const {
    if (K < 1) throw FlagError("K", "must be >= 1");
    if (!(beta > 0.0)) throw FlagError("beta", "must be > 0");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw FlagError("sigma2", "must be finite and > 0");
    if (m > 1.0) throw FlagError("m", "must be <= 1");
    if (samples < 2) throw FlagError("samples", "must be >= 2");
  }

  InterpolationConfig config(double u, double m_value, int threads) const {
    InterpolationConfig cfg;
    cfg.params = SystemParams::from_load(K, beta, sigma2);
    cfg.m = m_value;
    cfg.u = u;
    cfg.n_samples = samples;
    cfg.seed = seed;
    cfg.threads = threads;
    cfg.max_users = max_users;
    return cfg;
  }

  double resolve_m(double value) const {
    if (value >= 0.0) return value;
    const SystemParams p = SystemParams::from_load(K, beta, sigma2);
    return capacity_bound(SystemParams::large_system(p.beta(), sigma2)).argmin.m;
  }
};

inline int cmd_interpolate(const std::vector<std::string>& args) {
  Command cmd("interpolate", "Derivative terms of the interpolating free energy");
  InterpFlags f;
  std::vector<double> ts{0.0, 0.25, 0.5, 0.75, 1.0}, us{0.1, 0.05};
  double fd_step = 1e-3;
  f.attach(cmd, true);
  cmd.option("t", ts, "interpolation times (list)");
  cmd.option("u", us, "perturbation strengths (list)");
  cmd.option("fd-step", fd_step, "finite-difference step in t");
  cmd.parse(args);
  f.validate();
  require_unit("t", ts);
  require_positive("u", us);
  if (!(fd_step > 0.0 && fd_step < 0.5)) throw FlagError("fd-step", "must lie in (0, 0.5)");
  const double m = f.resolve_m(f.m);
  CsvTable csv(schema::interpolate);
  for (double u : us) {
    InterpolationConfig cfg = f.config(u, m, cmd.threads());
    cfg.fd_step = fd_step;
    for (double t : ts) {
      const TermBreakdown tb = free_energy_terms(t, cfg);
      csv.add_row({t, u, tb.f_mean.value, tb.f_mean.se, tb.dfdt_fd.value, tb.t1_raw.value, tb.t2_raw.value,
                   tb.t1_reduced.value, tb.t2_reduced.value, tb.remainder.value, tb.remainder.se});
    }
  }
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

inline int cmd_nishimori(const std::vector<std::string>& args) {
  Command cmd("nishimori", "Residuals of the Nishimori identities");
  InterpFlags f;
  std::vector<double> ts{0.7}, us{0.05};
  f.attach(cmd, true);
  cmd.option("t", ts, "interpolation times (list)");
  cmd.option("u", us, "perturbation strengths (list)");
  cmd.parse(args);
  f.validate();
  require_unit("t", ts);
  require_nonempty("u", us.size());
  for (double u : us)
    if (!(u >= 0.0)) throw FlagError("u", "must be >= 0");
  const double m = f.resolve_m(f.m);
  CsvTable csv(schema::nishimori);
  for (double u : us) {
    const InterpolationConfig cfg = f.config(u, m, cmd.threads());
    for (double t : ts) {
      const NishimoriReport r = nishimori_check(t, cfg);
      csv.add_row({t, u, r.mq.value, r.mq.se, r.x11.value, r.x11.se, r.x12.value, r.x12.se});
    }
  }
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

inline int cmd_sumrule(const std::vector<std::string>& args) {
  Command cmd("sumrule", "Sum rule for the capacity along the interpolation path");
  InterpFlags f;
  f.K = 10;
  std::vector<double> ms{-1.0}, us{0.05, 0.0125};
  int t_points = 21;
  bool refine = false;
  f.attach(cmd, false);
  cmd.option("m", ms, "path parameters (list); negative selects the replica minimizer");
  cmd.option("u", us, "perturbation strengths (list)");
  cmd.option("t-points", t_points, "trapezoid grid points in t");
  cmd.flag("refine", refine, "double the t grid");
  cmd.parse(args);
  f.validate();
  require_nonempty("m", ms.size());
  for (double m : ms)
    if (m > 1.0) throw FlagError("m", "must be <= 1");
  require_positive("u", us);
  if (t_points < 2) throw FlagError("t-points", "must be >= 2");
  const std::vector<double> grid = uniform_grid(refine ? 2 * t_points - 1 : t_points);
  CsvTable csv(schema::sumrule);
  for (double m_in : ms) {
    const double m = f.resolve_m(m_in);
    for (double u : us) {
      const SumRuleResult r = sum_rule_check(f.config(u, m, cmd.threads()), grid);
      csv.add_row({m, u, r.lhs.value, r.rhs.value, r.residual.value, r.budget});
    }
  }
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

// ---------------------------------------------------------------- extensions

inline int cmd_gaussian(const std::vector<std::string>& args) {
  Command cmd("gaussian", "Gaussian-input capacity: closed form against the replica saddle");
  std::vector<double> betas{0.5, 1.0, 2.0}, sigma2s{0.1, 1.0, 10.0};
  Bits bits;
  cmd.option("beta", betas, "loads (list)");
  cmd.option("sigma2", sigma2s, "noise variances (list)");
  bits.attach(cmd);
  cmd.parse(args);
  require_positive("beta", betas);
  require_positive("sigma2", sigma2s);
  CsvTable csv(schema::gaussian);
  if (bits.on) csv.add_columns({"closed_form_bits", "replica_bits"});
  for (double b : betas) {
    for (double s : sigma2s) {
      const double closed = gaussian_closed_form(b, s);
      const GaussianReplicaSolution rep = gaussian_replica(b, s);
      std::vector<Cell> row{b, s, closed, rep.c_rs, rep.m, std::abs(closed - rep.c_rs)};
      if (bits.on) {
        row.push_back(nats_to_bits(closed));
        row.push_back(nats_to_bits(rep.c_rs));
      }
      csv.add_row(std::move(row));
    }
  }
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

inline int cmd_colored(const std::vector<std::string>& args) {
  Command cmd("colored", "Replica bound with AR(1) colored noise");
  double beta = 1.0, power = 1.0;
  std::vector<double> rhos{0.0, 0.25, 0.5, 0.75};
  int omega_grid = 1024, grid = 256;
  Bits bits;
  cmd.option("beta", beta, "load");
  cmd.option("rho", rhos, "AR(1) lag-one correlations (list)");
  cmd.option("noise-power", power, "noise variance");
  cmd.option("omega-grid", omega_grid, "frequency grid points")->check(CLI::PositiveNumber);
  cmd.option("grid-size", grid, "m grid before golden-section refinement")->check(CLI::PositiveNumber);
  bits.attach(cmd);
  cmd.parse(args);
  if (!(beta > 0.0)) throw FlagError("beta", "must be > 0");
  if (!(power > 0.0) || !std::isfinite(power)) throw FlagError("noise-power", "must be finite and > 0");
  require_nonempty("rho", rhos.size());
  for (double r : rhos)
    if (!(std::abs(r) < 1.0)) throw FlagError("rho", "must satisfy |rho| < 1");
  const SystemParams params = SystemParams::large_system(beta, power);
  const double white = capacity_bound(params).c_upper;
  CsvTable csv(schema::colored);
  if (bits.on) csv.add_columns({"c_upper_bits", "white_c_upper_bits"});
  for (double r : rhos) {
    const Minimum mn = colored_noise_bound(params, NoiseSpectrum::ar1(r, power), default_rule(), omega_grid, grid);
    std::vector<Cell> row{beta, r, power, mn.value, mn.argmin, white};
    if (bits.on) {
      row.push_back(nats_to_bits(mn.value));
      row.push_back(nats_to_bits(white));
    }
    csv.add_row(std::move(row));
  }
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

inline int cmd_powers(const std::vector<std::string>& args) {
  Command cmd("powers", "Replica bound with unequal transmit powers");
  double beta = 1.0, sigma2 = 1.0;
  std::vector<std::string> profiles{"1:1", "0.5:0.5;1.5:0.5"};
  int grid = 256;
  Bits bits;
  cmd.option("beta", beta, "load");
  cmd.option("sigma2", sigma2, "noise variance");
  cmd.option("profile", profiles, "power profiles 'P:prob;P:prob' (list)");
  cmd.option("grid-size", grid, "m grid before golden-section refinement")->check(CLI::PositiveNumber);
  bits.attach(cmd);
  cmd.parse(args);
  if (!(beta > 0.0)) throw FlagError("beta", "must be > 0");
  if (!(sigma2 > 0.0)) throw FlagError("sigma2", "must be > 0");
  require_nonempty("profile", profiles.size());
  const SystemParams params = SystemParams::large_system(beta, sigma2);
  const double equal = capacity_bound(params).c_upper;
  CsvTable csv(schema::powers);
  if (bits.on) csv.add_columns({"c_upper_bits", "equal_power_bits"});
  for (const std::string& text : profiles) {
    const Minimum mn = unequal_power_bound(params, parse_profile("profile", text), default_rule(), grid);
    std::vector<Cell> row{beta, sigma2, text, mn.value, mn.argmin, equal};
    if (bits.on) {
      row.push_back(nats_to_bits(mn.value));
      row.push_back(nats_to_bits(equal));
    }
    csv.add_row(std::move(row));
  }
  csv.write(cmd.out());
  cmd.add_output(cmd.out());
  cmd.write_manifest();
  return exit_ok;
}

// ---------------------------------------------------------------- dispatch

using Handler = int (*)(const std::vector<std::string>&);

inline const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table{
      {"replica", cmd_replica},           {"phase", cmd_phase},       {"simulate", cmd_simulate},
      {"concentrate", cmd_concentrate},   {"universality", cmd_universality},
      {"trend", cmd_trend},               {"interpolate", cmd_interpolate},
      {"nishimori", cmd_nishimori},       {"sumrule", cmd_sumrule},   {"gaussian", cmd_gaussian},
      {"colored", cmd_colored},           {"powers", cmd_powers}};
  return table;
}

inline std::string json_arg(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

// argv for re-running a manifest: the recorded parameters, the given output
// path and thread count.
inline std::vector<std::string> manifest_args(const Json& manifest, const std::string& out, int threads) {
  std::vector<std::string> args;
  for (const auto& [key, value] : manifest.at("params").items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + key);
    } else if (value.is_array()) {
      if (value.empty()) continue;
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + json_arg(v);
      args.push_back("--" + key);
      args.push_back(joined);
    } else {
      args.push_back("--" + key);
      args.push_back(json_arg(value));
    }
  }
  args.push_back("--out");
  args.push_back(out);
  if (threads > 0) {
    args.push_back("--threads");
    args.push_back(std::to_string(threads));
  }
  return args;
}

int run(const std::vector<std::string>& argv);

inline int cmd_rerun(const std::vector<std::string>& args) {
  CLI::App app("Re-run a recorded manifest", "cdma_lab rerun");
  std::string manifest_path, out;
  int threads = 0;
  app.add_option("--manifest", manifest_path, "manifest JSON written by an earlier run")->required();
  app.add_option("--out", out, "output CSV path (default: the recorded one)");
  app.add_option("--threads", threads, "worker threads")->check(CLI::NonNegativeNumber);
  parse_args(app, args);
  std::ifstream f(manifest_path);
  if (!f) throw FlagError("manifest", "cannot read " + manifest_path);
  Json manifest;
  try {
    manifest = Json::parse(f);
  } catch (const Json::exception& e) {
    throw FlagError("manifest", std::string("not valid JSON: ") + e.what());
  }
  const std::string sub = manifest.value("subcommand", "");
  if (!handlers().count(sub)) throw FlagError("manifest", "unknown subcommand '" + sub + "'");
  if (out.empty()) out = manifest.at("outputs").at(0).get<std::string>();
  std::vector<std::string> argv{sub};
  for (auto& a : manifest_args(manifest, out, threads)) argv.push_back(a);
  return run(argv);
}

inline std::string usage() {
  std::string s = "usage: cdma_lab <subcommand> [flags]\nsubcommands:";
  for (const auto& [name, fn] : handlers()) s += " " + name;
  return s + " rerun\nrun 'cdma_lab <subcommand> --help' for flags\n";
}

// Entry point; argv excludes the program name. Never throws.
inline int run(const std::vector<std::string>& argv) {
  if (argv.empty() || argv[0] == "--help" || argv[0] == "-h") {
    (argv.empty() ? std::cerr : std::cout) << usage();
    return argv.empty() ? exit_validation : exit_ok;
  }
  const std::string& sub = argv[0];
  const std::vector<std::string> rest(argv.begin() + 1, argv.end());
  try {
    if (sub == "rerun") return cmd_rerun(rest);
    const auto it = handlers().find(sub);
    if (it == handlers().end()) {
      std::cerr << "error: unknown subcommand '" << sub << "'\n" << usage();
      return exit_validation;
    }
    return it->second(rest);
  } catch (const CLI::Success&) {
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_validation;
  } catch (const EnumerationRefused& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_refused;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_failure;
  }
}

}  // namespace cdma::cli
