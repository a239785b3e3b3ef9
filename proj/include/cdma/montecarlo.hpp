#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdma/channel.hpp"
#include "cdma/enumerate.hpp"
#include "cdma/parallel.hpp"
#include "cdma/params.hpp"
#include "cdma/rng.hpp"
#include "cdma/spreading.hpp"
#include "cdma/stats.hpp"

namespace cdma {

// Per-instance estimator of I(X;Y)/K. Both have the same mean.
//   free_energy:          -1/(2 beta) - f
//   information_density:  -||n||^2/(2K) - f, i.e. (ln p(y|x0) - ln p(y)) / K
enum class MiEstimator { free_energy, information_density };

struct ExperimentConfig {
  SystemParams params = SystemParams::finite(1, 1, 1.0);
  SpreadingDistribution dist = SpreadingDistribution::gaussian();
  int n_matrices = 1;
  int n_noise = 1;
  std::uint64_t seed = 0;
  std::vector<double> epsilons{0.05, 0.1};
  // x0 is all-ones unless set; by gauge symmetry both give the same law.
  bool random_input = false;
  MiEstimator estimator = MiEstimator::free_energy;
  int threads = 1;
  int max_users = default_max_users;

  void validate() const {
    if (!params.has_size()) throw std::invalid_argument("experiment needs a finite (K, N) system");
    if (n_matrices < 1) throw std::invalid_argument("n_matrices must be >= 1");
    if (n_noise < 1) throw std::invalid_argument("n_noise must be >= 1");
  }
};

struct EstimateRecord {
  int K = 0;
  int N = 0;
  double beta_actual = 0.0;
  double capacity_mean = 0.0;  // nats per user
  double capacity_se = 0.0;
  std::vector<double> matrix_means;    // per-matrix mean of the per-user MI
  std::vector<double> free_energies;   // every instance, matrix-major
  double ber_mean = 0.0;
  double ber_se = 0.0;
};

namespace detail {

struct MatrixResult {
  double mi_mean = 0.0;
  double ber_mean = 0.0;
  std::vector<double> f;
  std::vector<double> mi;
  std::vector<double> ber;
};

inline MatrixResult run_matrix(const ExperimentConfig& cfg, std::size_t j) {
  const int K = cfg.params.K();
  const int N = cfg.params.N();
  Engine chips = stream_engine(cfg.seed, j, Substream::spreading);
  Engine noise = stream_engine(cfg.seed, j, Substream::noise);
  Engine input = stream_engine(cfg.seed, j, Substream::input);
  Eigen::MatrixXd S = sample_spreading(cfg.dist, K, N, chips);
  MatrixResult out;
  out.f.reserve(cfg.n_noise);
  RunningStats mi, ber;
  for (int i = 0; i < cfg.n_noise; ++i) {
    Eigen::VectorXd x0 = cfg.random_input ? random_input(K, input) : Eigen::VectorXd::Ones(K);
    const Instance inst = channel_output(S, std::move(x0), cfg.params.sigma2(), noise);
    const PosteriorStats st = enumerate_posterior(inst, cfg.params.sigma2(), {cfg.max_users});
    const double mi_sample = cfg.estimator == MiEstimator::free_energy
                                 ? mutual_info_sample(st, cfg.params)
                                 : information_density(st, inst);
    mi.push(mi_sample);
    ber.push(st.ber);
    out.f.push_back(st.f);
    out.mi.push_back(mi_sample);
    out.ber.push_back(st.ber);
  }
  out.mi_mean = mi.mean();
  out.ber_mean = ber.mean();
  return out;
}

}  // namespace detail

// Per-user mutual information averaged over n_matrices spreading draws and
// n_noise (x0, noise) draws per matrix. Standard errors come from the
// between-matrix spread (from the instances when there is one matrix).
inline EstimateRecord estimate_capacity(const ExperimentConfig& cfg) {
  cfg.validate();
  check_enumeration_size(cfg.params.K(), cfg.params.N(), cfg.max_users);
  const auto per_matrix = parallel_map(static_cast<std::size_t>(cfg.n_matrices), cfg.threads,
                                       [&](std::size_t j) { return detail::run_matrix(cfg, j); });
  EstimateRecord rec;
  rec.K = cfg.params.K();
  rec.N = cfg.params.N();
  rec.beta_actual = cfg.params.beta();
  RunningStats mi, ber, mi_inst, ber_inst;
  for (const auto& m : per_matrix) {
    mi.push(m.mi_mean);
    ber.push(m.ber_mean);
    rec.matrix_means.push_back(m.mi_mean);
    for (double f : m.f) rec.free_energies.push_back(f);
    for (double v : m.mi) mi_inst.push(v);
    for (double b : m.ber) ber_inst.push(b);
  }
  rec.capacity_mean = mi.mean();
  rec.ber_mean = ber.mean();
  if (cfg.n_matrices > 1) {
    rec.capacity_se = mi.standard_error();
    rec.ber_se = ber.standard_error();
  } else {
    rec.capacity_se = mi_inst.standard_error();
    rec.ber_se = ber_inst.standard_error();
  }
  return rec;
}

inline ExperimentConfig with_users(const ExperimentConfig& cfg, int K) {
  ExperimentConfig c = cfg;
  c.params = SystemParams::from_load(K, cfg.params.beta(), cfg.params.sigma2());
  return c;
}

struct ConcentrationRow {
  int K = 0;
  int N = 0;
  double beta_actual = 0.0;
  double var_mi = 0.0;        // across matrices, of the conditional per-user MI
  double var_f = 0.0;         // across all instances, of f
  double tail_freq_mi = 0.0;  // fraction of matrices with |I/K - mean| >= epsilon
  double tail_freq_f = 0.0;   // fraction of instances with |f - mean| >= epsilon
  double epsilon = 0.0;
};

// One row per (K, epsilon). The load is cfg.params.beta(); N = round(K / beta).
inline std::vector<ConcentrationRow> concentration_experiment(const ExperimentConfig& cfg,
                                                              const std::vector<int>& K_list) {
  std::vector<ConcentrationRow> rows;
  for (int K : K_list) {
    const ExperimentConfig c = with_users(cfg, K);
    const EstimateRecord rec = estimate_capacity(c);
    RunningStats mi, f;
    for (double v : rec.matrix_means) mi.push(v);
    for (double v : rec.free_energies) f.push(v);
    for (double eps : cfg.epsilons) {
      ConcentrationRow row;
      row.K = K;
      row.N = rec.N;
      row.beta_actual = rec.beta_actual;
      row.var_mi = mi.variance();
      row.var_f = f.variance();
      row.epsilon = eps;
      std::size_t hits = 0;
      for (double v : rec.matrix_means)
        if (std::abs(v - mi.mean()) >= eps) ++hits;
      row.tail_freq_mi = static_cast<double>(hits) / rec.matrix_means.size();
      hits = 0;
      for (double v : rec.free_energies)
        if (std::abs(v - f.mean()) >= eps) ++hits;
      row.tail_freq_f = static_cast<double>(hits) / rec.free_energies.size();
      rows.push_back(row);
    }
  }
  return rows;
}

// Constant alpha in tail <= alpha / (K eps^2), fitted at one row.
inline double fit_tail_constant(const ConcentrationRow& row, bool use_free_energy = false) {
  const double tail = use_free_energy ? row.tail_freq_f : row.tail_freq_mi;
  return tail * row.K * row.epsilon * row.epsilon;
}

struct UniversalityRow {
  int K = 0;
  std::string dist;
  double capacity_mean = 0.0;
  double capacity_se = 0.0;
};

// Same (x0, noise) streams for every distribution; only the chips differ.
inline std::vector<UniversalityRow> universality_experiment(
    const ExperimentConfig& cfg, const std::vector<int>& K_list,
    const std::vector<SpreadingDistribution>& dists = {SpreadingDistribution::gaussian(),
                                                       SpreadingDistribution::binary(),
                                                       SpreadingDistribution::uniform()}) {
  std::vector<UniversalityRow> rows;
  for (int K : K_list) {
    for (const auto& d : dists) {
      ExperimentConfig c = with_users(cfg, K);
      c.dist = d;
      const EstimateRecord rec = estimate_capacity(c);
      rows.push_back({K, d.name(), rec.capacity_mean, rec.capacity_se});
    }
  }
  return rows;
}

struct Gap {
  double value = 0.0;
  double combined_se = 0.0;
};

inline Gap capacity_gap(const UniversalityRow& a, const UniversalityRow& b) {
  return {a.capacity_mean - b.capacity_mean, std::hypot(a.capacity_se, b.capacity_se)};
}

struct TrendRow {
  int K = 0;
  int N = 0;
  double beta_actual = 0.0;
  double capacity_mean = 0.0;
  double capacity_se = 0.0;
};

inline std::vector<TrendRow> limit_trend(const ExperimentConfig& cfg, const std::vector<int>& K_list) {
  std::vector<TrendRow> rows;
  for (int K : K_list) {
    const EstimateRecord rec = estimate_capacity(with_users(cfg, K));
    rows.push_back({K, rec.N, rec.beta_actual, rec.capacity_mean, rec.capacity_se});
  }
  return rows;
}

}  // namespace cdma
