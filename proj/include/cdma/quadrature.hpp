#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace cdma {

// Nodes and weights approximating integrals against the standard Gaussian
// measure Dz = exp(-z^2/2) dz / sqrt(2 pi).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }

  template <class F>
  double expect(F&& f) const {
    double s = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) s += weights[j] * f(nodes[j]);
    return s;
  }
};

inline constexpr int max_hermite_nodes = 500;

// Gauss-Hermite rule for Dz, exact for polynomials of degree <= 2n - 1.
// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite
// polynomials, followed by Newton polishing of the nodes and Christoffel
// weights from the orthonormal recurrence.
inline QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("node count must be >= 1");
  if (n > max_hermite_nodes)
    throw std::invalid_argument("node count above 500 underflows the outer weights");
  QuadratureRule rule;
  if (n == 1) {
    rule.nodes = {0.0};
    rule.weights = {1.0};
    return rule;
  }
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  std::vector<double> x(eig.eigenvalues().data(), eig.eigenvalues().data() + n);

  // p_k orthonormal against Dz: p_{k+1} = (z p_k - sqrt(k) p_{k-1}) / sqrt(k+1).
  auto orthonormal = [n](double z, double& pn, double& pn1, double& sum_sq) {
    double prev = 0.0, cur = 1.0;
    sum_sq = 1.0;
    for (int k = 0; k < n; ++k) {
      const double next = (z * cur - std::sqrt(static_cast<double>(k)) * prev) /
                          std::sqrt(static_cast<double>(k + 1));
      prev = cur;
      cur = next;
      if (k + 1 < n) sum_sq += cur * cur;
    }
    pn = cur;
    pn1 = prev;
  };
  for (double& z : x) {
    for (int it = 0; it < 3; ++it) {
      double pn, pn1, ss;
      orthonormal(z, pn, pn1, ss);
      const double d = std::sqrt(static_cast<double>(n)) * pn1;
      if (d == 0.0) break;
      z -= pn / d;
    }
  }
  std::sort(x.begin(), x.end());
  for (int j = 0; j < n / 2; ++j) {
    const double a = 0.5 * (x[n - 1 - j] - x[j]);
    x[j] = -a;
    x[n - 1 - j] = a;
  }
  if (n % 2 == 1) x[n / 2] = 0.0;

  rule.nodes = x;
  rule.weights.resize(n);
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    double pn, pn1, ss;
    orthonormal(x[j], pn, pn1, ss);
    rule.weights[j] = std::isfinite(ss) ? 1.0 / ss : 0.0;
    total += rule.weights[j];
  }
  for (int j = 0; j < n / 2; ++j) {
    const double w = 0.5 * (rule.weights[j] + rule.weights[n - 1 - j]);
    rule.weights[j] = rule.weights[n - 1 - j] = w;
  }
  for (double& w : rule.weights) w /= total;
  return rule;
}

// n-point Gauss-Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 0; k < n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k + 1.0) * z * p1 - k * p2) / (k + 1.0);
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    nodes[i] = -z;
    nodes[n - 1 - i] = z;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

// Composite Gauss-Legendre rule for Dz on [-half_width, half_width]: the
// interval is cut into equal panels, each carrying an n-point Legendre rule
// with the Gaussian density folded into the weights. Unlike Gauss-Hermite,
// its accuracy does not degrade when the integrand has complex poles close
// to the real axis, as ln cosh and tanh of (sqrt(lambda) z + lambda) do for
// lambda of order 1..100.
inline QuadratureRule gaussian_panel_rule(int panels = 40, int nodes_per_panel = 16,
                                          double half_width = 10.0) {
  if (panels < 1 || nodes_per_panel < 1 || !(half_width > 0.0))
    throw std::invalid_argument("invalid panel rule parameters");
  std::vector<double> gl_x, gl_w;
  gauss_legendre(nodes_per_panel, gl_x, gl_w);
  const double h = 2.0 * half_width / panels;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  QuadratureRule rule;
  rule.nodes.reserve(panels * nodes_per_panel);
  rule.weights.reserve(panels * nodes_per_panel);
  for (int p = 0; p < panels; ++p) {
    const double mid = -half_width + (p + 0.5) * h;
    for (int j = 0; j < nodes_per_panel; ++j) {
      const double z = mid + 0.5 * h * gl_x[j];
      rule.nodes.push_back(z);
      rule.weights.push_back(0.5 * h * gl_w[j] * inv_sqrt_2pi * std::exp(-0.5 * z * z));
    }
  }
  return rule;
}

// Rule used by the replica formulas unless the caller passes one.
inline const QuadratureRule& default_rule() {
  static const QuadratureRule rule = gaussian_panel_rule();
  return rule;
}

}  // namespace cdma
