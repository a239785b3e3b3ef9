#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cdma/replica.hpp"

namespace cdma {

// Discrete distribution of per-user transmit powers with unit mean.
class PowerProfile {
 public:
  explicit PowerProfile(std::vector<std::pair<double, double>> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw std::invalid_argument("power profile is empty");
    double total = 0.0, mean = 0.0;
    for (const auto& [power, prob] : levels_) {
      if (!(power >= 0.0) || !std::isfinite(power))
        throw std::invalid_argument("power levels must be finite and >= 0");
      if (!(prob >= 0.0)) throw std::invalid_argument("power probabilities must be >= 0");
      total += prob;
      mean += prob * power;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("power probabilities do not sum to 1");
    if (std::abs(mean - 1.0) > 1e-12)
      throw std::invalid_argument("mean power must be 1");
  }

  static PowerProfile equal() { return PowerProfile({{1.0, 1.0}}); }

  const std::vector<std::pair<double, double>>& levels() const { return levels_; }

 private:
  std::vector<std::pair<double, double>> levels_;
};

// Noise power spectrum C(w) on [0, 2 pi).
class NoiseSpectrum {
 public:
  static NoiseSpectrum white(double sigma2) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
      throw std::invalid_argument("sigma2 must be finite and > 0");
    return NoiseSpectrum([sigma2](double) { return sigma2; }, "white");
  }

  // First-order autoregressive noise with variance `power` and lag-one
  // correlation rho: C(w) = power (1 - rho^2) / (1 - 2 rho cos w + rho^2).
  static NoiseSpectrum ar1(double rho, double power = 1.0) {
    if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("AR1 coefficient must satisfy |rho| < 1");
    if (!(power > 0.0) || !std::isfinite(power))
      throw std::invalid_argument("noise power must be finite and > 0");
    return NoiseSpectrum(
        [rho, power](double w) {
          return power * (1.0 - rho * rho) / (1.0 - 2.0 * rho * std::cos(w) + rho * rho);
        },
        "ar1");
  }

  // Values on the uniform grid w_j = 2 pi j / size.
  static NoiseSpectrum tabulated(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("tabulated spectrum is empty");
    for (double v : values)
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument("spectrum must be positive on the grid");
    auto table = std::make_shared<std::vector<double>>(std::move(values));
    return NoiseSpectrum(
        [table](double w) {
          const double n = static_cast<double>(table->size());
          auto j = static_cast<std::size_t>(std::lround(w / (2.0 * std::numbers::pi) * n));
          return (*table)[j % table->size()];
        },
        "tabulated");
  }

  double operator()(double w) const { return fn_(w); }
  const std::string& kind() const { return kind_; }

  // Samples on the uniform grid; rejects non-positive values.
  std::vector<double> sample(int grid) const {
    if (grid < 1) throw std::invalid_argument("omega grid must have >= 1 point");
    std::vector<double> out(grid);
    for (int j = 0; j < grid; ++j) {
      out[j] = fn_(2.0 * std::numbers::pi * j / grid);
      if (!(out[j] > 0.0) || !std::isfinite(out[j]))
        throw std::invalid_argument("noise spectrum is not positive at grid point " + std::to_string(j));
    }
    return out;
  }

 private:
  NoiseSpectrum(std::function<double(double)> fn, std::string kind)
      : fn_(std::move(fn)), kind_(std::move(kind)) {}

  std::function<double(double)> fn_;
  std::string kind_;
};

struct Minimum {
  double value = 0.0;
  double argmin = 0.0;
};

// Global minimum of f on [0, 1]: uniform grid, then golden-section search on
// the two cells around the best grid point. The endpoints are always
// candidates.
template <class F>
Minimum minimize_unit_interval(F&& f, int grid = 256) {
  std::vector<double> v(grid + 1);
  int best = 0;
  for (int i = 0; i <= grid; ++i) {
    v[i] = f(static_cast<double>(i) / grid);
    if (v[i] < v[best]) best = i;
  }
  double a = static_cast<double>(std::max(best - 1, 0)) / grid;
  double b = static_cast<double>(std::min(best + 1, grid)) / grid;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  Minimum out{v[best], static_cast<double>(best) / grid};
  const double mid = 0.5 * (a + b);
  const double fm = f(mid);
  if (fm < out.value) out = {fm, mid};
  return out;
}

// Unequal-power functional (ln cosh form):
//   -E_P[E ln cosh(sqrt(P lambda) z + P lambda)] + (lambda/2)(1+m) - (1/(2 beta)) ln(lambda sigma2)
inline double unequal_power_functional(double m, const SystemParams& params, const PowerProfile& profile,
                                       const QuadratureRule& rule = default_rule()) {
  const double lambda = lambda_of_m(m, params);
  double avg = 0.0;
  for (const auto& [power, prob] : profile.levels())
    if (prob > 0.0) avg += prob * gaussian_log_cosh(power * lambda, rule);
  return -avg + 0.5 * lambda * (1.0 + m) +
         std::log1p(params.beta() * params.snr() * (1.0 - m)) / (2.0 * params.beta());
}

inline Minimum unequal_power_bound(const SystemParams& params, const PowerProfile& profile,
                                   const QuadratureRule& rule = default_rule(), int grid = 256) {
  return minimize_unit_interval(
      [&](double m) { return unequal_power_functional(m, params, profile, rule); }, grid);
}

// Colored-noise functional. The spectrum carries the noise power (white
// noise of variance sigma2 is C = sigma2), so only the load is read from
// params:
//   lambda_c = mean_w 1 / (C(w) + beta (1 - m))
//   -E ln cosh(sqrt(lambda_c) z + lambda_c) + (lambda_c/2)(1+m)
//     + (1/(2 beta)) mean_w ln(1 + beta (1 - m) / C(w))
// which equals c_rs exactly for white noise.
inline double colored_noise_functional(double m, const SystemParams& params,
                                       const std::vector<double>& spectrum_samples,
                                       const QuadratureRule& rule = default_rule()) {
  const double beta = params.beta();
  const double load = beta * (1.0 - m);
  double lambda = 0.0, spectral = 0.0;
  for (double c : spectrum_samples) {
    lambda += 1.0 / (c + load);
    spectral += std::log1p(load / c);
  }
  const double n = static_cast<double>(spectrum_samples.size());
  lambda /= n;
  spectral /= n;
  return -gaussian_log_cosh(lambda, rule) + 0.5 * lambda * (1.0 + m) + spectral / (2.0 * beta);
}

inline Minimum colored_noise_bound(const SystemParams& params, const NoiseSpectrum& spectrum,
                                   const QuadratureRule& rule = default_rule(), int omega_grid = 1024,
                                   int grid = 256) {
  const std::vector<double> samples = spectrum.sample(omega_grid);
  return minimize_unit_interval(
      [&](double m) { return colored_noise_functional(m, params, samples, rule); }, grid);
}

}  // namespace cdma
