#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "cdma/rng.hpp"

namespace cdma {

// One channel use: y = N^{-1/2} S x0 + sigma n.
struct Instance {
  Eigen::MatrixXd S;   // N x K chips
  Eigen::VectorXd x0;  // transmitted bits, entries +-1
  Eigen::VectorXd n;   // standard normal noise
  Eigen::VectorXd y;   // received signal

  int K() const { return static_cast<int>(S.cols()); }
  int N() const { return static_cast<int>(S.rows()); }
};

inline Instance channel_output(Eigen::MatrixXd S, Eigen::VectorXd x0, Eigen::VectorXd noise,
                               double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be > 0");
  if (x0.size() != S.cols())
    throw std::invalid_argument("dimension mismatch: x0 has " + std::to_string(x0.size()) +
                                " entries, S has " + std::to_string(S.cols()) + " columns");
  if (noise.size() != S.rows())
    throw std::invalid_argument("dimension mismatch: noise has " +
                                std::to_string(noise.size()) + " entries, S has " +
                                std::to_string(S.rows()) + " rows");
  for (double b : x0)
    if (b != 1.0 && b != -1.0) throw std::invalid_argument("x0 entries must be +-1");
  Instance inst;
  inst.y = (S * x0) / std::sqrt(static_cast<double>(S.rows())) + std::sqrt(sigma2) * noise;
  inst.S = std::move(S);
  inst.x0 = std::move(x0);
  inst.n = std::move(noise);
  return inst;
}

// Draws fresh standard normal noise from the engine.
inline Instance channel_output(Eigen::MatrixXd S, Eigen::VectorXd x0, double sigma2,
                               Engine& eng) {
  Eigen::VectorXd noise(S.rows());
  fill_standard_normal(eng, noise);
  return channel_output(std::move(S), std::move(x0), std::move(noise), sigma2);
}

inline Instance channel_output(Eigen::MatrixXd S, Eigen::VectorXd x0, double sigma2,
                               std::uint64_t seed) {
  Engine eng = stream_engine(seed, 0, Substream::noise);
  return channel_output(std::move(S), std::move(x0), sigma2, eng);
}

// Uniform +-1 word.
inline Eigen::VectorXd random_input(int K, Engine& eng) {
  std::bernoulli_distribution coin(0.5);
  Eigen::VectorXd x(K);
  for (auto& b : x) b = coin(eng) ? 1.0 : -1.0;
  return x;
}

}  // namespace cdma
