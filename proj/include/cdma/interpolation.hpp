#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "cdma/enumerate.hpp"
#include "cdma/parallel.hpp"
#include "cdma/params.hpp"
#include "cdma/quadrature.hpp"
#include "cdma/replica.hpp"
#include "cdma/rng.hpp"
#include "cdma/stats.hpp"

namespace cdma {

// Linear path B(t) = t B with lambda(t) chosen so that
//   B(t) / (1 + beta B(t) (1 - m)) + lambda(t) = B / (1 + beta B (1 - m)).
struct PathPoint {
  double snr = 0.0;           // B(t)
  double lambda = 0.0;        // lambda(t)
  double snr_rate = 0.0;      // B'(t)
  double lambda_rate = 0.0;   // lambda'(t)
};

inline PathPoint path_eval(double t, double m, const SystemParams& params) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("t must lie in [0, 1]");
  if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("m must lie in [0, 1]");
  const double B = params.snr();
  const double c = params.beta() * (1.0 - m);
  PathPoint p;
  p.snr = t * B;
  p.snr_rate = B;
  const double total = B / (1.0 + c * B);
  const double cdma_part = p.snr / (1.0 + c * p.snr);
  p.lambda = t == 1.0 ? 0.0 : std::max(0.0, total - cdma_part);
  const double d = 1.0 + c * p.snr;
  p.lambda_rate = -B / (d * d);
  return p;
}

// Disorder of the interpolating system, with the transmitted word fixed to
// all-ones: chips S, CDMA noise n, decoupled-channel noise w and the field h.
struct PerturbedInstance {
  Eigen::MatrixXd S;
  Eigen::VectorXd n;
  Eigen::VectorXd w;
  Eigen::VectorXd h;
  double u = 0.0;

  int K() const { return static_cast<int>(S.cols()); }
  int N() const { return static_cast<int>(S.rows()); }
};

inline PerturbedInstance sample_perturbed(int K, int N, double u, Engine& eng) {
  if (!(u >= 0.0)) throw std::invalid_argument("perturbation strength u must be >= 0");
  PerturbedInstance pi;
  pi.S.resize(N, K);
  pi.n.resize(N);
  pi.w.resize(K);
  pi.h.resize(K);
  std::normal_distribution<double> normal;
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < N; ++i) pi.S(i, k) = normal(eng);
  for (auto& v : pi.n) v = normal(eng);
  for (auto& v : pi.w) v = normal(eng);
  for (auto& v : pi.h) v = normal(eng);
  pi.u = u;
  return pi;
}

// Exponent of the perturbed interpolating posterior, with z = 1 - x:
//   -1/2 ||n + sqrt(B(t)/N) S z||^2 - 1/2 ||w + sqrt(lambda(t)) z||^2
//   + sqrt(u) h.x + u sum_k x_k - sqrt(u) sum_k |h_k|
inline QuadraticModel perturbed_model(const PerturbedInstance& pi, const PathPoint& p) {
  const int K = pi.K();
  const int N = pi.N();
  const double a = std::sqrt(p.snr / N);
  const double sl = std::sqrt(p.lambda);
  const double su = std::sqrt(pi.u);
  QuadraticModel model;
  model.coupling = -a * pi.S;
  model.offset = pi.n + a * pi.S.rowwise().sum();
  model.scale = 1.0;
  model.field = sl * (pi.w.array() + sl).matrix() + su * pi.h + Eigen::VectorXd::Constant(K, pi.u);
  model.constant = -0.5 * (pi.w.array() + sl).matrix().squaredNorm() - 0.5 * K * p.lambda -
                   su * pi.h.cwiseAbs().sum();
  return model;
}

// Posterior averages of one perturbed instance. The residual r of the
// walk is the vector Zc = n + sqrt(B(t)/N) S z.
struct PerturbedStats {
  double log_z = 0.0;
  double f = 0.0;
  Eigen::VectorXd bit_means;
  double m1 = 0.0;
  double q12 = 0.0;
  double zc_norm2 = 0.0;      // <||Zc||^2>
  double n_dot_zc = 0.0;      // <n . Zc>
  double zc_dot_shift = 0.0;  // <Zc . (Zc - n)>
  Eigen::VectorXd n_dot_zc_x; // <(n . Zc) x_k>
  Eigen::VectorXd m1_law;     // posterior mass of m1 = (K - 2j)/K, j = 0..K
};

inline PerturbedStats perturbed_free_energy(const PerturbedInstance& pi, const PathPoint& p,
                                            int max_users = default_max_users) {
  const int K = pi.K();
  const QuadraticModel model = perturbed_model(pi, p);
  const Eigen::VectorXd& n = pi.n;
  // slots: x_k | ||r||^2 | n.r | r.(r-n) | (n.r) x_k | m1 law
  const int slot_norm = K, slot_nr = K + 1, slot_shift = K + 2, slot_nrx = K + 3,
            slot_law = 2 * K + 3;
  const int n_obs = 3 * K + 4;
  const WalkResult res = gray_walk(
      model, n_obs,
      [&](const WalkPoint& pt, double wgt, double* acc) {
        const double rr = pt.r.squaredNorm();
        const double nr = n.dot(pt.r);
        int minus = 0;
        for (int k = 0; k < K; ++k) {
          const double xk = pt.x(k);
          acc[k] += wgt * xk;
          acc[slot_nrx + k] += wgt * nr * xk;
          minus += xk < 0.0;
        }
        acc[slot_norm] += wgt * rr;
        acc[slot_nr] += wgt * nr;
        acc[slot_shift] += wgt * (rr - nr);
        acc[slot_law + minus] += wgt;
      },
      max_users);
  PerturbedStats st;
  st.log_z = res.log_z;
  st.f = res.log_z / K;
  st.bit_means = Eigen::Map<const Eigen::VectorXd>(res.averages.data(), K);
  st.m1 = st.bit_means.mean();
  st.q12 = st.bit_means.squaredNorm() / K;
  st.zc_norm2 = res.averages[slot_norm];
  st.n_dot_zc = res.averages[slot_nr];
  st.zc_dot_shift = res.averages[slot_shift];
  st.n_dot_zc_x = Eigen::Map<const Eigen::VectorXd>(res.averages.data() + slot_nrx, K);
  st.m1_law = Eigen::Map<const Eigen::VectorXd>(res.averages.data() + slot_law, K + 1);
  return st;
}

// Per-instance pieces of d/dt f_{t,u} = T1 + T2.
struct DerivativeSample {
  double t1 = 0.0;
  double t2 = 0.0;
};

inline DerivativeSample derivative_sample(const PerturbedInstance& pi, const PathPoint& p,
                                          const PerturbedStats& st) {
  const int K = pi.K();
  const int N = pi.N();
  DerivativeSample d;
  const Eigen::VectorXd z_mean = (1.0 - st.bit_means.array()).matrix();
  if (p.lambda > 0.0) {
    // -(lambda'/(2 sqrt(lambda) K)) <w.z> - (lambda'/(2K)) <z.z>, with z.z = 2 sum z_k
    const double wz = pi.w.dot(z_mean);
    const double zz = 2.0 * z_mean.sum();
    d.t1 = -p.lambda_rate / (2.0 * std::sqrt(p.lambda) * K) * wz - p.lambda_rate / (2.0 * K) * zz;
  } else {
    // integrated by parts in w: -(lambda'/2)(1 - 2 m1 + q12)
    d.t1 = -0.5 * p.lambda_rate * (1.0 - 2.0 * st.m1 + st.q12);
  }
  if (p.snr > 0.0) {
    // -(B'/(2 sqrt(B) K sqrt(N))) <Zc . S z>, and S z = (Zc - n) sqrt(N / B)
    d.t2 = -p.snr_rate / (2.0 * p.snr * K) * st.zc_dot_shift;
  } else {
    // integrated by parts in S at B(t) = 0, where Zc = n:
    // -(B'/(2KN)) ||n||^2 (<z.z> - <z>.<z>)
    const double zz = 2.0 * z_mean.sum();
    d.t2 = -p.snr_rate / (2.0 * K * N) * pi.n.squaredNorm() * (zz - z_mean.squaredNorm());
  }
  return d;
}

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

inline Estimate estimate_of(const RunningStats& s) { return {s.mean(), s.standard_error()}; }

struct TermBreakdown {
  double t = 0.0;
  double u = 0.0;
  Estimate f_mean;
  Estimate dfdt_fd;
  Estimate t1_raw;
  Estimate t2_raw;
  Estimate t1_reduced;
  Estimate t2_reduced;
  Estimate remainder;
  Estimate m1_mean;
  Estimate q12_mean;
  Estimate zc_norm;  // (1/N) E<||Zc||^2>
  // paired per-instance differences
  Estimate split_gap;    // dfdt_fd - (T1_raw + T2_raw)
  Estimate t1_gap;       // T1_raw - T1_reduced
  Estimate t2_gap;       // T2_raw - T2_reduced (finite-K only)
};

// Closed-form pieces that depend only on E<m1> at the current t.
struct ReducedTerms {
  double t1 = 0.0, t2 = 0.0, remainder = 0.0;
  double dt1 = 0.0, dt2 = 0.0, dremainder = 0.0;  // derivatives w.r.t. E<m1>
};

inline ReducedTerms reduced_terms(double m1_mean, double m, double beta, const PathPoint& p) {
  const double a = 1.0 - m1_mean;  // E<1 - m1>
  const double c = 1.0 - m;
  const double bt = p.snr;
  const double d = 1.0 + beta * c * bt;
  const double e = 1.0 + beta * bt * a;
  ReducedTerms r;
  r.t1 = p.snr_rate / (2.0 * d * d) * a;
  r.dt1 = -p.snr_rate / (2.0 * d * d);
  r.t2 = -p.snr_rate * a / (2.0 * e);
  r.dt2 = p.snr_rate / (2.0 * e * e);  // d/dm1 of -B' a/(2(1+beta B a))
  const double diff = c - a;           // E<m1> - m
  r.remainder = beta * p.snr_rate * bt * diff * diff / (2.0 * d * d * e);
  // d/da, then d/dm1 = -d/da
  const double dr_da = beta * p.snr_rate * bt / (2.0 * d * d) *
                       (-2.0 * diff / e - diff * diff * beta * bt / (e * e));
  r.dremainder = -dr_da;
  return r;
}

struct InterpolationConfig {
  SystemParams params = SystemParams::finite(1, 1, 1.0);  // K, N, sigma2
  double m = 0.0;
  double u = 0.1;
  int n_samples = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  double fd_step = 1e-3;
  int max_users = default_max_users;

  void validate() const {
    if (!params.has_size()) throw std::invalid_argument("interpolation needs a finite (K, N) system");
    if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("m must lie in [0, 1]");
    if (!(u >= 0.0)) throw std::invalid_argument("u must be >= 0");
    if (n_samples < 2) throw std::invalid_argument("n_samples must be >= 2");
  }
};

inline PerturbedInstance instance_for_sample(const InterpolationConfig& cfg, std::size_t i) {
  Engine eng = stream_engine(cfg.seed, i, Substream::perturbation);
  return sample_perturbed(cfg.params.K(), cfg.params.N(), cfg.u, eng);
}

// Monte Carlo estimate of every derivative term at one t. The finite
// difference uses the same instances at t - delta, t + delta (one-sided at
// the ends of [0, 1]).
inline TermBreakdown free_energy_terms(double t, const InterpolationConfig& cfg) {
  cfg.validate();
  const SystemParams& params = cfg.params;
  const PathPoint p = path_eval(t, cfg.m, params);
  const double lo = std::max(0.0, t - cfg.fd_step);
  const double hi = std::min(1.0, t + cfg.fd_step);
  const PathPoint p_lo = path_eval(lo, cfg.m, params);
  const PathPoint p_hi = path_eval(hi, cfg.m, params);
  const double beta = params.beta();

  struct Sample {
    double f, fd, t1, t2, m1, q12, zc;
  };
  const auto samples = parallel_map(static_cast<std::size_t>(cfg.n_samples), cfg.threads, [&](std::size_t i) {
    const PerturbedInstance pi = instance_for_sample(cfg, i);
    const PerturbedStats st = perturbed_free_energy(pi, p, cfg.max_users);
    const double f_lo = lo == t ? st.f : perturbed_free_energy(pi, p_lo, cfg.max_users).f;
    const double f_hi = hi == t ? st.f : perturbed_free_energy(pi, p_hi, cfg.max_users).f;
    const DerivativeSample d = derivative_sample(pi, p, st);
    return Sample{st.f, (f_hi - f_lo) / (hi - lo), d.t1, d.t2, st.m1, st.q12, st.zc_norm2 / pi.N()};
  });

  RunningStats f, fd, t1, t2, m1, q12, zc, split;
  for (const Sample& s : samples) {
    f.push(s.f);
    fd.push(s.fd);
    t1.push(s.t1);
    t2.push(s.t2);
    m1.push(s.m1);
    q12.push(s.q12);
    zc.push(s.zc);
    split.push(s.fd - (s.t1 + s.t2));
  }
  const ReducedTerms red = reduced_terms(m1.mean(), cfg.m, beta, p);
  // The reduced T1 is affine in m1, so its per-instance version pairs with T1_raw.
  RunningStats t1_gap, t2_gap;
  for (const Sample& s : samples) {
    const ReducedTerms r = reduced_terms(s.m1, cfg.m, beta, p);
    t1_gap.push(s.t1 - r.t1);
    t2_gap.push(s.t2 - red.t2);
  }

  TermBreakdown tb;
  tb.t = t;
  tb.u = cfg.u;
  tb.f_mean = estimate_of(f);
  tb.dfdt_fd = estimate_of(fd);
  tb.t1_raw = estimate_of(t1);
  tb.t2_raw = estimate_of(t2);
  tb.m1_mean = estimate_of(m1);
  tb.q12_mean = estimate_of(q12);
  tb.zc_norm = estimate_of(zc);
  tb.t1_reduced = {red.t1, std::abs(red.dt1) * m1.standard_error()};
  tb.t2_reduced = {red.t2, std::abs(red.dt2) * m1.standard_error()};
  tb.remainder = {red.remainder, std::abs(red.dremainder) * m1.standard_error()};
  tb.split_gap = estimate_of(split);
  tb.t1_gap = estimate_of(t1_gap);
  tb.t2_gap = {t2_gap.mean(), std::hypot(t2_gap.standard_error(), tb.t2_reduced.se)};
  return tb;
}

struct NishimoriReport {
  double t = 0.0;
  double u = 0.0;
  Estimate m1_mean;
  Estimate q12_mean;
  Estimate mq;   // E<m1> - E<q12>, paired
  Estimate x11;  // (1/N) E<||Zc||^2> - 1
  Estimate x12;  // (1/(KN)) (E<(n.Zc2)(z1.z2)> - sum_k E<(n.Zc) z_k>), paired
};

// The replica pair in E<(n.Zc2)(z1.z2)> factorizes given the disorder:
// sum_k <z_k> <(n.Zc) z_k>.
inline NishimoriReport nishimori_check(double t, const InterpolationConfig& cfg) {
  cfg.validate();
  const PathPoint p = path_eval(t, cfg.m, cfg.params);
  struct Sample {
    double m1, q12, x11, x12;
  };
  const auto samples = parallel_map(static_cast<std::size_t>(cfg.n_samples), cfg.threads, [&](std::size_t i) {
    const PerturbedInstance pi = instance_for_sample(cfg, i);
    const PerturbedStats st = perturbed_free_energy(pi, p, cfg.max_users);
    const int K = pi.K();
    const int N = pi.N();
    double lhs = 0.0, rhs = 0.0;
    for (int k = 0; k < K; ++k) {
      const double z = 1.0 - st.bit_means(k);
      const double nz = st.n_dot_zc - st.n_dot_zc_x(k);  // <(n.Zc) z_k>
      lhs += z * nz;
      rhs += nz;
    }
    return Sample{st.m1, st.q12, st.zc_norm2 / N - 1.0, (lhs - rhs) / (static_cast<double>(K) * N)};
  });
  RunningStats m1, q12, mq, x11, x12;
  for (const Sample& s : samples) {
    m1.push(s.m1);
    q12.push(s.q12);
    mq.push(s.m1 - s.q12);
    x11.push(s.x11);
    x12.push(s.x12);
  }
  return {t, cfg.u, estimate_of(m1), estimate_of(q12), estimate_of(mq), estimate_of(x11), estimate_of(x12)};
}

// Uniform grid of `points` values on [0, 1].
inline std::vector<double> uniform_grid(int points) {
  if (points < 2) throw std::invalid_argument("t grid needs >= 2 points");
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = static_cast<double>(i) / (points - 1);
  g.back() = 1.0;
  return g;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) s += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
  return s;
}

// Closed-form decoupled free energy at t = 0 and u -> 0:
//   1/2 + E f_{0,0} = -1/(2 beta) - lambda + E ln 2cosh(sqrt(lambda) z + lambda)
inline double decoupled_free_energy(double lambda, double beta, const QuadratureRule& rule = default_rule()) {
  return -0.5 / beta - lambda + gaussian_log_cosh(lambda, rule) + ln2;
}

struct SumRulePoint {
  double t = 0.0;
  Estimate f_mean;
  Estimate m1_mean;
  Estimate t1_raw;
  Estimate t2_raw;
  Estimate t2_reduced;
  Estimate remainder;
};

struct SumRuleResult {
  double m = 0.0;
  double u = 0.0;
  Estimate lhs;            // 1/2 + E f_{1,u}
  Estimate rhs;            // closed terms + integral of R
  Estimate residual;       // lhs - rhs
  double budget = 0.0;     // 3 SE + 2 sqrt(u) E|h| + u + 1/K
  Estimate r_integral;
  Estimate decoupled_shift;  // 1/2 + E f_{0,u} minus its u -> 0 closed form
  Estimate t2_gap_integral;  // integral of T2_raw - T2_reduced
  Estimate path_identity;    // E f_{1,u} - E f_{0,u} - integral of (T1_raw + T2_raw)
  std::vector<SumRulePoint> points;
};

// Sum rule
//   1/2 + E f_{1,u} = E ln 2cosh(sqrt(l) z + l) - 1/(2 beta) - ln(1 + beta B (1 - m))/(2 beta)
//                     - (l/2)(1 + m) + int_0^1 R(t) dt + O(sqrt u) + o_K(1)
// checked at finite K with common instances across the t grid.
inline SumRuleResult sum_rule_check(const InterpolationConfig& cfg, const std::vector<double>& t_grid,
                                    const QuadratureRule& rule = default_rule()) {
  cfg.validate();
  if (t_grid.size() < 2 || t_grid.front() != 0.0 || t_grid.back() != 1.0)
    throw std::invalid_argument("t grid must run from 0 to 1");
  const SystemParams& params = cfg.params;
  const double beta = params.beta();
  const std::size_t nt = t_grid.size();
  std::vector<PathPoint> path;
  for (double t : t_grid) path.push_back(path_eval(t, cfg.m, params));

  struct Sample {
    std::vector<double> f, m1, t1, t2;
  };
  const auto samples = parallel_map(static_cast<std::size_t>(cfg.n_samples), cfg.threads, [&](std::size_t i) {
    const PerturbedInstance pi = instance_for_sample(cfg, i);
    Sample s;
    for (std::size_t j = 0; j < nt; ++j) {
      const PerturbedStats st = perturbed_free_energy(pi, path[j], cfg.max_users);
      const DerivativeSample d = derivative_sample(pi, path[j], st);
      s.f.push_back(st.f);
      s.m1.push_back(st.m1);
      s.t1.push_back(d.t1);
      s.t2.push_back(d.t2);
    }
    return s;
  });

  SumRuleResult out;
  out.m = cfg.m;
  out.u = cfg.u;
  std::vector<double> r_vals(nt), r_se(nt), gap_vals(nt), gap_se(nt), raw_vals(nt), raw_se(nt);
  for (std::size_t j = 0; j < nt; ++j) {
    RunningStats f, m1, t1, t2, raw;
    for (const Sample& s : samples) {
      f.push(s.f[j]);
      m1.push(s.m1[j]);
      t1.push(s.t1[j]);
      t2.push(s.t2[j]);
      raw.push(s.t1[j] + s.t2[j]);
    }
    const ReducedTerms red = reduced_terms(m1.mean(), cfg.m, beta, path[j]);
    SumRulePoint pt;
    pt.t = t_grid[j];
    pt.f_mean = estimate_of(f);
    pt.m1_mean = estimate_of(m1);
    pt.t1_raw = estimate_of(t1);
    pt.t2_raw = estimate_of(t2);
    pt.t2_reduced = {red.t2, std::abs(red.dt2) * m1.standard_error()};
    pt.remainder = {red.remainder, std::abs(red.dremainder) * m1.standard_error()};
    out.points.push_back(pt);
    r_vals[j] = red.remainder;
    r_se[j] = pt.remainder.se;
    gap_vals[j] = t2.mean() - red.t2;
    gap_se[j] = std::hypot(t2.standard_error(), pt.t2_reduced.se);
    raw_vals[j] = raw.mean();
    raw_se[j] = raw.standard_error();
  }
  // Common instances make the grid points correlated; the trapezoid of the
  // standard errors bounds the error of the integral.
  out.r_integral = {trapezoid(t_grid, r_vals), trapezoid(t_grid, r_se)};
  out.t2_gap_integral = {trapezoid(t_grid, gap_vals), trapezoid(t_grid, gap_se)};

  const double B = params.snr();
  const double lambda = lambda_of_m(cfg.m, params);
  const double closed = gaussian_log_cosh(lambda, rule) + ln2 - 0.5 / beta -
                        std::log1p(beta * B * (1.0 - cfg.m)) / (2.0 * beta) - 0.5 * lambda * (1.0 + cfg.m);
  const SumRulePoint& first = out.points.front();
  const SumRulePoint& last = out.points.back();
  out.lhs = {0.5 + last.f_mean.value, last.f_mean.se};
  out.rhs = {closed + out.r_integral.value, out.r_integral.se};
  out.residual = {out.lhs.value - out.rhs.value, std::hypot(out.lhs.se, out.rhs.se)};
  out.decoupled_shift = {0.5 + first.f_mean.value - decoupled_free_energy(lambda, beta, rule), first.f_mean.se};

  RunningStats ident;
  for (const Sample& s : samples) {
    std::vector<double> raw(nt);
    for (std::size_t j = 0; j < nt; ++j) raw[j] = s.t1[j] + s.t2[j];
    ident.push(s.f.back() - s.f.front() - trapezoid(t_grid, raw));
  }
  out.path_identity = estimate_of(ident);

  const double mean_abs_h = std::sqrt(2.0 / std::numbers::pi);
  out.budget = 3.0 * out.residual.se + 2.0 * std::sqrt(cfg.u) * mean_abs_h + cfg.u + 1.0 / params.K();
  return out;
}

// Two-point fit residual(u) = a + b sqrt(u).
struct SqrtFit {
  Estimate intercept;
  double slope = 0.0;
};

inline SqrtFit fit_sqrt_u(double u1, const Estimate& r1, double u2, const Estimate& r2) {
  const double s1 = std::sqrt(u1), s2 = std::sqrt(u2);
  if (s1 == s2) throw std::invalid_argument("need two distinct u values");
  const double w1 = s2 / (s2 - s1), w2 = -s1 / (s2 - s1);
  SqrtFit fit;
  fit.slope = (r2.value - r1.value) / (s2 - s1);
  fit.intercept = {w1 * r1.value + w2 * r2.value, std::hypot(w1 * r1.se, w2 * r2.se)};
  return fit;
}

struct MagnetizationRow {
  int K = 0;
  int N = 0;
  double deviation = 0.0;  // int_0^1 dt E<|m1 - E<m1>|>
  double deviation_se = 0.0;
};

// t-integrated mean absolute deviation of m1 (thermal and disorder parts).
inline std::vector<MagnetizationRow> magnetization_concentration(const InterpolationConfig& base,
                                                                 const std::vector<double>& t_grid,
                                                                 const std::vector<int>& K_list) {
  if (!(base.u > 0.0)) throw std::invalid_argument("magnetization concentration needs u > 0");
  std::vector<MagnetizationRow> rows;
  for (int K : K_list) {
    InterpolationConfig cfg = base;
    cfg.params = SystemParams::from_load(K, base.params.beta(), base.params.sigma2());
    cfg.validate();
    std::vector<PathPoint> path;
    for (double t : t_grid) path.push_back(path_eval(t, cfg.m, cfg.params));
    const auto laws = parallel_map(static_cast<std::size_t>(cfg.n_samples), cfg.threads, [&](std::size_t i) {
      const PerturbedInstance pi = instance_for_sample(cfg, i);
      std::vector<Eigen::VectorXd> out;
      for (const PathPoint& p : path) out.push_back(perturbed_free_energy(pi, p, cfg.max_users).m1_law);
      return out;
    });
    std::vector<double> dev(t_grid.size()), dev_se(t_grid.size());
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
      double mean = 0.0;
      for (const auto& l : laws)
        for (int b = 0; b <= K; ++b) mean += l[j](b) * (K - 2.0 * b) / K;
      mean /= laws.size();
      RunningStats d;
      for (const auto& l : laws) {
        double v = 0.0;
        for (int b = 0; b <= K; ++b) v += l[j](b) * std::abs((K - 2.0 * b) / K - mean);
        d.push(v);
      }
      dev[j] = d.mean();
      dev_se[j] = d.standard_error();
    }
    rows.push_back({K, cfg.params.N(), trapezoid(t_grid, dev), trapezoid(t_grid, dev_se)});
  }
  return rows;
}

}  // namespace cdma
