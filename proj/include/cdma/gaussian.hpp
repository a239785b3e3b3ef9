#pragma once

#include <cmath>
#include <stdexcept>

namespace cdma {

// Q(x, z) = (sqrt(x (1 + sqrt z)^2 + 1) - sqrt(x (1 - sqrt z)^2 + 1))^2,
// with the difference of square roots taken in cancellation-free form.
inline double marchenko_pastur_q(double x, double z) {
  const double rz = std::sqrt(z);
  const double a = x * (1.0 + rz) * (1.0 + rz) + 1.0;
  const double b = x * (1.0 - rz) * (1.0 - rz) + 1.0;
  const double d = 4.0 * x * rz / (std::sqrt(a) + std::sqrt(b));
  return d * d;
}

// Large-system per-user capacity with Gaussian inputs, in nats:
//   (1/2) ln(1 + x - Q/4) + (1/(2 beta)) ln(1 + x beta - Q/4) - Q / (8 beta x)
// where x = 1/sigma2 and Q = Q(x, beta).
inline double gaussian_closed_form(double beta, double sigma2) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be > 0");
  if (std::isinf(sigma2)) return 0.0;
  const double x = 1.0 / sigma2;
  const double q = marchenko_pastur_q(x, beta);
  return 0.5 * std::log1p(x - 0.25 * q) + std::log1p(x * beta - 0.25 * q) / (2.0 * beta) -
         q / (8.0 * beta * x);
}

struct GaussianReplicaSolution {
  double m = 0.0;
  double lambda = 0.0;
  double c_rs = 0.0;  // nats per user
  int iterations = 0;
};

inline constexpr int gaussian_iteration_cap = 10000;

// Replica functional for Gaussian inputs,
//   (1/2) ln(1 + lambda) - (1/(2 beta)) ln(lambda sigma2) - (lambda/2)(1 - m),
// at the saddle m = lambda / (1 + lambda), lambda = 1 / (sigma2 + beta (1 - m)),
// found by damped iteration.
inline GaussianReplicaSolution gaussian_replica(double beta, double sigma2) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be > 0");
  GaussianReplicaSolution sol;
  if (std::isinf(sigma2)) return sol;
  const double B = 1.0 / sigma2;
  auto lambda_of = [&](double m) { return B / (1.0 + beta * B * (1.0 - m)); };
  double m = 0.5;
  constexpr double damping = 0.5;
  for (int it = 1; it <= gaussian_iteration_cap; ++it) {
    const double l = lambda_of(m);
    const double next = (1.0 - damping) * m + damping * l / (1.0 + l);
    sol.iterations = it;
    const bool done = std::abs(next - m) < 1e-13 * 0.5;
    m = next;
    if (done) break;
  }
  if (sol.iterations == gaussian_iteration_cap)
    throw std::runtime_error("Gaussian saddle iteration did not converge");
  sol.m = m;
  sol.lambda = lambda_of(m);
  sol.c_rs = 0.5 * std::log1p(sol.lambda) + std::log1p(beta * B * (1.0 - m)) / (2.0 * beta) -
             0.5 * sol.lambda * (1.0 - m);
  return sol;
}

}  // namespace cdma
