#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cdma/rng.hpp"

namespace cdma {

// Chip distribution for the spreading matrix. Every admissible distribution
// is symmetric with zero mean and unit variance.
class SpreadingDistribution {
 public:
  enum class Kind { gaussian_unit, binary_pm1, uniform_symmetric, custom_symmetric };

  static SpreadingDistribution gaussian() { return SpreadingDistribution(Kind::gaussian_unit); }
  static SpreadingDistribution binary() { return SpreadingDistribution(Kind::binary_pm1); }
  // Uniform on [-sqrt(3), sqrt(3)].
  static SpreadingDistribution uniform() { return SpreadingDistribution(Kind::uniform_symmetric); }

  // Discrete table of (value, probability). Rejected unless p(s) = p(-s),
  // probabilities sum to one and the variance is one, each within 1e-12.
  static SpreadingDistribution custom(std::vector<std::pair<double, double>> table) {
    if (table.empty()) throw std::invalid_argument("empty distribution table");
    double total = 0.0;
    for (const auto& [value, prob] : table) {
      if (!std::isfinite(value) || !(prob >= 0.0))
        throw std::invalid_argument("invalid distribution table entry");
      total += prob;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("distribution probabilities do not sum to 1");
    auto mass_at = [&](double v) {
      double m = 0.0;
      for (const auto& [value, prob] : table)
        if (std::abs(value - v) <= 1e-12) m += prob;
      return m;
    };
    double second = 0.0;
    for (const auto& [value, prob] : table) {
      if (std::abs(mass_at(value) - mass_at(-value)) > 1e-12)
        throw std::invalid_argument("asymmetric distribution");
      second += prob * value * value;
    }
    if (std::abs(second - 1.0) > 1e-12)
      throw std::invalid_argument("distribution variance is not 1");
    SpreadingDistribution d(Kind::custom_symmetric);
    d.table_ = std::move(table);
    return d;
  }

  static SpreadingDistribution from_name(std::string_view name) {
    if (name == "gaussian" || name == "gaussian-unit") return gaussian();
    if (name == "binary" || name == "binary-pm1") return binary();
    if (name == "uniform" || name == "uniform-symmetric") return uniform();
    throw std::invalid_argument("unknown spreading distribution '" + std::string(name) + "'");
  }

  Kind kind() const { return kind_; }
  const std::vector<std::pair<double, double>>& table() const { return table_; }

  std::string name() const {
    switch (kind_) {
      case Kind::gaussian_unit: return "gaussian-unit";
      case Kind::binary_pm1: return "binary-pm1";
      case Kind::uniform_symmetric: return "uniform-symmetric";
      case Kind::custom_symmetric: return "custom-symmetric";
    }
    return "unknown";
  }

  // Every kind is a monotone transform of one standard normal draw, so
  // matrices of different kinds drawn from equal engines are coupled
  // chip by chip.
  template <class Rng>
  double operator()(Rng& eng) const {
    return transform(std::normal_distribution<double>{}(eng));
  }

  double transform(double g) const {
    switch (kind_) {
      case Kind::gaussian_unit: return g;
      case Kind::binary_pm1: return g >= 0.0 ? 1.0 : -1.0;
      case Kind::uniform_symmetric: return std::sqrt(3.0) * std::erf(g / std::numbers::sqrt2);
      case Kind::custom_symmetric: {
        double u = 0.5 * std::erfc(-g / std::numbers::sqrt2);
        for (const auto& [value, prob] : table_) {
          if (u < prob) return value;
          u -= prob;
        }
        return table_.back().first;
      }
    }
    return 0.0;
  }

 private:
  explicit SpreadingDistribution(Kind k) : kind_(k) {}

  Kind kind_;
  std::vector<std::pair<double, double>> table_;
};

// N x K matrix of i.i.d. chips. Filled column by column (user by user) so a
// given seed always yields the same matrix.
inline Eigen::MatrixXd sample_spreading(const SpreadingDistribution& dist, int K, int N,
                                        Engine& eng) {
  if (K < 1 || N < 1) throw std::invalid_argument("K and N must be >= 1");
  Eigen::MatrixXd S(N, K);
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < N; ++i) S(i, k) = dist(eng);
  return S;
}

inline Eigen::MatrixXd sample_spreading(const SpreadingDistribution& dist, int K, int N,
                                        std::uint64_t seed) {
  Engine eng = stream_engine(seed, 0, Substream::spreading);
  return sample_spreading(dist, K, N, eng);
}

}  // namespace cdma
