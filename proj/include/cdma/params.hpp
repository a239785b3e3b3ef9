#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cdma {

inline constexpr double ln2 = std::numbers::ln2;

inline double nats_to_bits(double nats) { return nats / ln2; }

// Raised when a posterior would need more than the configured number of
// enumerated users.
class EnumerationRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// (K, N, beta, sigma2, B). K and N are zero for replica-only use, where
// only the load and the noise level matter. B = 0 (sigma2 = +inf) is the
// no-information limit and is legal for the replica formulas.
class SystemParams {
 public:
  static SystemParams finite(int K, int N, double sigma2) {
    if (K < 1) throw std::invalid_argument("K must be >= 1");
    if (N < 1) throw std::invalid_argument("N must be >= 1");
    check_sigma2(sigma2);
    if (!std::isfinite(sigma2))
      throw std::invalid_argument("sigma2 must be finite for a finite system");
    return SystemParams(K, N, static_cast<double>(K) / N, sigma2);
  }

  // N = round(K / beta); the realized load K / N is what gets stored.
  static SystemParams from_load(int K, double beta, double sigma2) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
    if (K < 1) throw std::invalid_argument("K must be >= 1");
    const int N = std::max(1, static_cast<int>(std::lround(K / beta)));
    return finite(K, N, sigma2);
  }

  static SystemParams large_system(double beta, double sigma2) {
    if (!(beta > 0.0) || !std::isfinite(beta))
      throw std::invalid_argument("beta must be finite and > 0");
    check_sigma2(sigma2);
    return SystemParams(0, 0, beta, sigma2);
  }

  static SystemParams large_system_snr(double beta, double snr) {
    if (!(snr >= 0.0) || !std::isfinite(snr))
      throw std::invalid_argument("snr must be finite and >= 0");
    if (snr == 0.0) return large_system(beta, std::numeric_limits<double>::infinity());
    return large_system(beta, 1.0 / snr);
  }

  int K() const { return K_; }
  int N() const { return N_; }
  double beta() const { return beta_; }
  double sigma2() const { return sigma2_; }
  double snr() const { return snr_; }
  double sigma() const { return std::sqrt(sigma2_); }
  bool has_size() const { return K_ > 0; }

 private:
  SystemParams(int K, int N, double beta, double sigma2)
      : K_(K), N_(N), beta_(beta), sigma2_(sigma2),
        snr_(std::isinf(sigma2) ? 0.0 : 1.0 / sigma2) {}

  static void check_sigma2(double sigma2) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be > 0");
  }

  int K_;
  int N_;
  double beta_;
  double sigma2_;
  double snr_;
};

}  // namespace cdma
