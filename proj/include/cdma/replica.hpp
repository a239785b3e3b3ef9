#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cdma/parallel.hpp"
#include "cdma/params.hpp"
#include "cdma/quadrature.hpp"

namespace cdma {

// Above this effective SNR the Gaussian averages switch to their
// asymptotic forms: E ln cosh(sqrt(l) z + l) = l - ln 2 and
// E tanh(sqrt(l) z + l) = 1, both up to O(exp(-l/2)).
inline constexpr double asymptotic_snr = 1e4;

// ln cosh(a) without overflow.
inline double log_cosh(double a) {
  const double b = std::abs(a);
  return b + std::log1p(std::exp(-2.0 * b)) - ln2;
}

// E ln cosh(sqrt(snr) z + snr) over z ~ N(0, 1).
inline double gaussian_log_cosh(double snr, const QuadratureRule& rule) {
  if (snr == 0.0) return 0.0;
  if (snr > asymptotic_snr) return snr - ln2;
  const double s = std::sqrt(snr);
  return rule.expect([&](double z) { return log_cosh(s * z + snr); });
}

// E tanh(sqrt(snr) z + snr), the mean bit estimate of a BPSK channel.
inline double gaussian_tanh(double snr, const QuadratureRule& rule) {
  if (snr == 0.0) return 0.0;
  if (snr > asymptotic_snr) return 1.0;
  const double s = std::sqrt(snr);
  return rule.expect([&](double z) { return std::tanh(s * z + snr); });
}

// d/dsnr of gaussian_tanh, written as E[sech^2(a) (1 - tanh a)] after
// integrating the z-term by parts (finite at snr = 0).
inline double gaussian_tanh_slope(double snr, const QuadratureRule& rule) {
  if (snr > asymptotic_snr) return 0.0;
  const double s = std::sqrt(snr);
  return rule.expect([&](double z) {
    const double t = std::tanh(s * z + snr);
    return (1.0 - t * t) * (1.0 - t);
  });
}

// Effective single-user SNR lambda = B / (1 + beta B (1 - m)),
// i.e. 1 / (sigma2 + beta (1 - m)).
inline double lambda_of_m(double m, const SystemParams& params) {
  const double B = params.snr();
  return B / (1.0 + params.beta() * B * (1.0 - m));
}

enum class FunctionalVariant {
  corrected,   // ln cosh form; tends to 0 at zero SNR and ln 2 at infinite SNR
  as_printed,  // ln(2 cosh) form; equals corrected - ln 2
};

// Replica-symmetric capacity functional in nats per user:
//   (lambda/2)(1+m) - (1/(2 beta)) ln(lambda sigma2) - E ln cosh(sqrt(lambda) z + lambda)
inline double c_rs(double m, const SystemParams& params, const QuadratureRule& rule = default_rule(),
                   FunctionalVariant variant = FunctionalVariant::corrected) {
  const double beta = params.beta();
  const double B = params.snr();
  const double lambda = lambda_of_m(m, params);
  // -ln(lambda sigma2) = ln(1 + beta B (1 - m))
  const double value = 0.5 * lambda * (1.0 + m) + std::log1p(beta * B * (1.0 - m)) / (2.0 * beta) -
                       gaussian_log_cosh(lambda, rule);
  return variant == FunctionalVariant::corrected ? value : value - ln2;
}

// m -> E tanh(sqrt(lambda(m)) z + lambda(m)); its fixed points are the
// stationary points of c_rs.
inline double fixed_point_map(double m, const SystemParams& params,
                              const QuadratureRule& rule = default_rule()) {
  return gaussian_tanh(lambda_of_m(m, params), rule);
}

inline double fixed_point_map_slope(double m, const SystemParams& params,
                                    const QuadratureRule& rule = default_rule()) {
  const double lambda = lambda_of_m(m, params);
  return params.beta() * lambda * lambda * gaussian_tanh_slope(lambda, rule);
}

struct FixedPoint {
  double m = 0.0;
  double lambda = 0.0;
  double c_rs = 0.0;  // nats per user
  bool stable = false;
  double residual = 0.0;  // F(m) - m
};

inline FixedPoint make_fixed_point(double m, const SystemParams& params, const QuadratureRule& rule,
                                   FunctionalVariant variant = FunctionalVariant::corrected) {
  FixedPoint fp;
  fp.m = m;
  fp.lambda = lambda_of_m(m, params);
  fp.c_rs = c_rs(m, params, rule, variant);
  fp.stable = std::abs(fixed_point_map_slope(m, params, rule)) < 1.0;
  fp.residual = fixed_point_map(m, params, rule) - m;
  return fp;
}

inline constexpr double fixed_point_tolerance = 1e-12;

// All solutions of m = F(m) in [0, 1]: sign changes of g = F - m on a
// uniform grid, each refined by bisection. Damped iteration alone would
// miss the unstable middle root of the three-solution regime.
inline std::vector<FixedPoint> solve_fixed_points(const SystemParams& params,
                                                  const QuadratureRule& rule = default_rule(),
                                                  int grid_size = 512,
                                                  FunctionalVariant variant = FunctionalVariant::corrected) {
  if (grid_size < 64) throw std::invalid_argument("grid_size must be >= 64");
  auto g = [&](double m) { return fixed_point_map(m, params, rule) - m; };
  std::vector<double> values(grid_size + 1);
  for (int i = 0; i <= grid_size; ++i) values[i] = g(static_cast<double>(i) / grid_size);

  std::vector<FixedPoint> roots;
  for (int i = 0; i < grid_size; ++i) {
    double lo = static_cast<double>(i) / grid_size;
    double hi = static_cast<double>(i + 1) / grid_size;
    double glo = values[i];
    const double ghi = values[i + 1];
    if (glo == 0.0) {
      roots.push_back(make_fixed_point(lo, params, rule, variant));
      continue;
    }
    if ((glo > 0.0) == (ghi > 0.0) || ghi == 0.0) continue;
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      mid = 0.5 * (lo + hi);
      const double gm = g(mid);
      if (std::abs(gm) <= 0.1 * fixed_point_tolerance || mid == lo || mid == hi) break;
      if ((gm > 0.0) == (glo > 0.0)) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
      }
    }
    roots.push_back(make_fixed_point(mid, params, rule, variant));
  }
  if (values[grid_size] == 0.0) roots.push_back(make_fixed_point(1.0, params, rule, variant));
  return roots;
}

struct CapacityBound {
  double c_upper = 0.0;  // nats per user
  FixedPoint argmin;
  int root_count = 0;
};

// Minimum of c_rs over all fixed points and the endpoints m = 0, 1.
// Ties go to the smallest m.
inline CapacityBound capacity_bound(const SystemParams& params,
                                    const QuadratureRule& rule = default_rule(), int grid_size = 512,
                                    FunctionalVariant variant = FunctionalVariant::corrected) {
  std::vector<FixedPoint> candidates = solve_fixed_points(params, rule, grid_size, variant);
  CapacityBound out;
  out.root_count = static_cast<int>(candidates.size());
  candidates.push_back(make_fixed_point(0.0, params, rule, variant));
  candidates.push_back(make_fixed_point(1.0, params, rule, variant));
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const FixedPoint& a, const FixedPoint& b) { return a.m < b.m; });
  out.argmin = candidates.front();
  for (const FixedPoint& fp : candidates)
    if (fp.c_rs < out.argmin.c_rs) out.argmin = fp;
  out.c_upper = out.argmin.c_rs;
  return out;
}

// Exponent constants of the Gaussian-spreading concentration bounds:
//   alpha1 = sigma^4 / (16 (64 beta + 32 + sigma^2))
//   alpha2 = sigma^4 beta^{3/2} / (32 (2 sqrt(beta) + sigma)^2)
struct RateConstants {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
};

inline RateConstants concentration_rate_constants(const SystemParams& params) {
  const double s2 = params.sigma2();
  const double beta = params.beta();
  if (!std::isfinite(s2)) throw std::invalid_argument("sigma2 must be finite");
  RateConstants rc;
  rc.alpha1 = s2 * s2 / (16.0 * (64.0 * beta + 32.0 + s2));
  const double d = 2.0 * std::sqrt(beta) + std::sqrt(s2);
  rc.alpha2 = s2 * s2 * beta * std::sqrt(beta) / (32.0 * d * d);
  return rc;
}

struct PhaseCell {
  double beta = 0.0;
  double sigma2 = 0.0;
  int root_count = 0;
  CapacityBound bound;
};

// Where the number of fixed points changes between neighbouring sigma2
// values of one beta row: the uniqueness boundary.
struct PhaseTransition {
  double beta = 0.0;
  double sigma2_before = 0.0;
  double sigma2_after = 0.0;
  int roots_before = 0;
  int roots_after = 0;
};

struct PhaseScan {
  std::vector<PhaseCell> cells;  // beta-major, in input order
  std::vector<PhaseTransition> boundary;
};

inline PhaseScan phase_scan(const std::vector<double>& betas, const std::vector<double>& sigma2s,
                            const QuadratureRule& rule = default_rule(), int grid_size = 512,
                            int threads = 1) {
  if (betas.empty() || sigma2s.empty()) throw std::invalid_argument("phase scan ranges are empty");
  const std::size_t cols = sigma2s.size();
  PhaseScan scan;
  scan.cells = parallel_map(betas.size() * cols, threads, [&](std::size_t idx) {
    PhaseCell cell;
    cell.beta = betas[idx / cols];
    cell.sigma2 = sigma2s[idx % cols];
    cell.bound = capacity_bound(SystemParams::large_system(cell.beta, cell.sigma2), rule, grid_size);
    cell.root_count = cell.bound.root_count;
    return cell;
  });
  for (std::size_t b = 0; b < betas.size(); ++b) {
    for (std::size_t j = 0; j + 1 < cols; ++j) {
      const PhaseCell& a = scan.cells[b * cols + j];
      const PhaseCell& c = scan.cells[b * cols + j + 1];
      if (a.root_count != c.root_count)
        scan.boundary.push_back({a.beta, a.sigma2, c.sigma2, a.root_count, c.root_count});
    }
  }
  return scan;
}

}  // namespace cdma
