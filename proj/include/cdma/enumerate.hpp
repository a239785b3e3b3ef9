#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "cdma/channel.hpp"
#include "cdma/params.hpp"

namespace cdma {

// Energy of a spin configuration x in {+-1}^K:
//   E(x) = -(scale / 2) ||offset + coupling x||^2 + field . x + constant
// Both the channel posterior and the interpolating posterior have this form.
struct QuadraticModel {
  Eigen::MatrixXd coupling;  // N x K
  Eigen::VectorXd offset;    // N
  double scale = 1.0;
  Eigen::VectorXd field;     // K
  double constant = 0.0;

  int K() const { return static_cast<int>(coupling.cols()); }
  int N() const { return static_cast<int>(coupling.rows()); }

  double energy(const Eigen::VectorXd& x) const {
    return -0.5 * scale * (offset + coupling * x).squaredNorm() + field.dot(x) + constant;
  }
};

// Configuration handed to observables during the walk. r is the current
// residual offset + coupling x.
struct WalkPoint {
  const Eigen::VectorXd& x;
  const Eigen::VectorXd& r;
  double energy;
};

struct WalkResult {
  double log_z = 0.0;
  std::vector<double> averages;  // posterior averages of the accumulated observables
};

inline constexpr int default_max_users = 24;

inline void check_enumeration_size(int K, int N, int max_users) {
  if (K <= max_users) return;
  std::ostringstream msg;
  const double configs = std::ldexp(1.0, K);
  msg << "K=" << K << " exceeds the enumeration limit K_max=" << max_users
      << ": exact enumeration would visit 2^" << K << " = " << configs
      << " configurations at about " << configs * 3.0 * (N + K)
      << " floating-point operations";
  throw EnumerationRefused(msg.str());
}

// Visits all 2^K configurations in reflected Gray-code order, starting from
// the all-(+1) word. Each step flips one bit and updates the residual in
// O(N). The log-partition uses a single running max shift; observables are
// accumulated with weights exp(E - shift) into n_obs slots and rescaled
// whenever the shift moves.
//
// observe(const WalkPoint&, double weight, double* acc) adds weight * obs.
template <class Observe>
WalkResult gray_walk(const QuadraticModel& model, int n_obs, Observe&& observe,
                     int max_users = default_max_users) {
  const int K = model.K();
  check_enumeration_size(K, model.N(), max_users);
  if (model.offset.size() != model.N() || model.field.size() != K)
    throw std::invalid_argument("inconsistent model dimensions");

  Eigen::VectorXd x = Eigen::VectorXd::Ones(K);
  Eigen::VectorXd r = model.offset + model.coupling * x;
  double field_dot = model.field.sum();
  const double half_scale = 0.5 * model.scale;

  std::vector<double> acc(static_cast<std::size_t>(n_obs), 0.0);
  double shift = -half_scale * r.squaredNorm() + field_dot + model.constant;
  double total = 0.0;

  auto visit = [&](double e) {
    if (e > shift) {
      const double rescale = std::exp(shift - e);
      total *= rescale;
      for (double& a : acc) a *= rescale;
      shift = e;
    }
    const double w = std::exp(e - shift);
    total += w;
    observe(WalkPoint{x, r, e}, w, acc.data());
  };

  visit(shift);
  const std::uint64_t count = std::uint64_t{1} << K;
  constexpr std::uint64_t resync_period = 4096;
  for (std::uint64_t i = 1; i < count; ++i) {
    const int k = std::countr_zero(i);
    const double old = x(k);
    x(k) = -old;
    r.noalias() -= (2.0 * old) * model.coupling.col(k);
    field_dot -= 2.0 * old * model.field(k);
    if (i % resync_period == 0) {
      r = model.offset + model.coupling * x;
      field_dot = model.field.dot(x);
    }
    visit(-half_scale * r.squaredNorm() + field_dot + model.constant);
  }

  WalkResult out;
  out.log_z = shift + std::log(total);
  out.averages.resize(acc.size());
  for (std::size_t j = 0; j < acc.size(); ++j) out.averages[j] = acc[j] / total;
  return out;
}

// Exact quantities of one posterior.
struct PosteriorStats {
  double log_z = 0.0;  // nats
  double f = 0.0;      // log_z / K
  Eigen::VectorXd bit_means;
  double m1 = 0.0;   // (1/K) sum_k x0_k <x_k>
  double q12 = 0.0;  // (1/K) sum_k <x_k>^2
  double ber = 0.0;  // (1/2)(1 - (1/K) sum_k x0_k sign<x_k>)
};

inline void finish_stats(PosteriorStats& st, const Eigen::VectorXd& x0) {
  const int K = static_cast<int>(x0.size());
  double m1 = 0.0, q12 = 0.0, agree = 0.0;
  for (int k = 0; k < K; ++k) {
    const double mk = st.bit_means(k);
    m1 += x0(k) * mk;
    q12 += mk * mk;
    const double hard = mk > 0.0 ? 1.0 : (mk < 0.0 ? -1.0 : 0.0);
    agree += x0(k) * hard;
  }
  st.f = st.log_z / K;
  st.m1 = m1 / K;
  st.q12 = q12 / K;
  st.ber = 0.5 * (1.0 - agree / K);
}

inline constexpr double noiseless_sigma2 = 1e-12;

struct EnumerationOptions {
  int max_users = default_max_users;
};

// Exact posterior of the channel under the uniform prior 2^{-K}:
//   Z = 2^{-K} sum_x exp(-||y - N^{-1/2} S x||^2 / (2 sigma2)).
inline PosteriorStats enumerate_posterior(const Instance& inst, double sigma2,
                                          EnumerationOptions opts = {}) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be > 0");
  const int K = inst.K();
  const int N = inst.N();
  check_enumeration_size(K, N, opts.max_users);

  QuadraticModel model;
  model.coupling = -inst.S / std::sqrt(static_cast<double>(N));
  model.offset = inst.y;
  model.field = Eigen::VectorXd::Zero(K);
  PosteriorStats st;

  if (sigma2 < noiseless_sigma2) {
    // Indicator posterior on the residual minimizers.
    model.scale = 1.0;
    double best = std::numeric_limits<double>::infinity();
    gray_walk(model, 0, [&](const WalkPoint& p, double, double*) {
      best = std::min(best, p.r.squaredNorm());
    }, opts.max_users);
    const double tol = 1e-12 * std::max(1.0, best);
    double hits = 0.0;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(K);
    gray_walk(model, 0, [&](const WalkPoint& p, double, double*) {
      if (p.r.squaredNorm() <= best + tol) {
        hits += 1.0;
        sum += p.x;
      }
    }, opts.max_users);
    st.log_z = -K * ln2 + std::log(hits) - best / (2.0 * sigma2);
    st.bit_means = sum / hits;
    finish_stats(st, inst.x0);
    return st;
  }

  model.scale = 1.0 / sigma2;
  model.constant = -K * ln2;
  const WalkResult res = gray_walk(model, K, [K](const WalkPoint& p, double w, double* acc) {
    for (int k = 0; k < K; ++k) acc[k] += w * p.x(k);
  }, opts.max_users);
  st.log_z = res.log_z;
  st.bit_means = Eigen::Map<const Eigen::VectorXd>(res.averages.data(), K);
  finish_stats(st, inst.x0);
  return st;
}

// One-sample estimate of I(X;Y)/K in nats: -1/(2 beta) - f with beta = K/N.
// Its average over instances is the per-user mutual information.
inline double mutual_info_sample(const PosteriorStats& stats, const SystemParams& params) {
  return -0.5 / params.beta() - stats.f;
}

// Information density (ln p(y|x0) - ln p(y)) / K of one instance. Same mean
// as mutual_info_sample, without the spread of the ||n||^2 term.
inline double information_density(const PosteriorStats& stats, const Instance& inst) {
  return (-0.5 * inst.n.squaredNorm() - stats.log_z) / inst.K();
}

}  // namespace cdma
