#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cdma/montecarlo.hpp"
#include "cdma/replica.hpp"

using namespace cdma;

namespace {

ExperimentConfig config(int K, double sigma2, int matrices, int noise, std::uint64_t seed = 1) {
  ExperimentConfig cfg;
  cfg.params = SystemParams::from_load(K, 1.0, sigma2);
  cfg.n_matrices = matrices;
  cfg.n_noise = noise;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(RunningStats, MergeIsOrderIndependent) {
  RunningStats a, b, all;
  Engine eng = stream_engine(3, 0);
  std::normal_distribution<double> nd(5.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = nd(eng);
    (i < 300 ? a : b).push(v);
    all.push(v);
  }
  RunningStats ab = a, ba = b;
  ab.merge(b);
  ba.merge(a);
  EXPECT_EQ(ab.count(), ba.count());
  EXPECT_NEAR(ab.mean(), ba.mean(), 1e-12 * std::abs(ab.mean()));
  EXPECT_NEAR(ab.m2(), ba.m2(), 1e-12 * ab.m2());
  EXPECT_NEAR(ab.m2(), all.m2(), 1e-12 * all.m2());
  EXPECT_GE(ab.variance(), 0.0);
  RunningStats empty;
  EXPECT_EQ(empty.variance(), 0.0);
}

TEST(EstimateCapacity, NoInformationLimit) {
  const EstimateRecord rec = estimate_capacity(config(4, 1e6, 200, 10));
  EXPECT_LT(std::abs(rec.capacity_mean), 3 * rec.capacity_se);
  EXPECT_LT(std::abs(rec.ber_mean - 0.5), 3 * rec.ber_se);
}

TEST(EstimateCapacity, NoiselessLimit) {
  const EstimateRecord rec = estimate_capacity(config(4, 1e-4, 200, 10));
  EXPECT_LT(std::abs(rec.capacity_mean - std::numbers::ln2), 3 * rec.capacity_se + 1e-9);
  EXPECT_LT(rec.ber_mean, 3 * rec.ber_se + 1e-12);
}

TEST(EstimateCapacity, BelowReplicaBound) {
  const EstimateRecord rec = estimate_capacity(config(8, 1.0, 400, 50));
  const double bound = capacity_bound(SystemParams::large_system(1.0, 1.0)).c_upper;
  EXPECT_LE(rec.capacity_mean, bound + 3 * rec.capacity_se);
  EXPECT_GE(rec.capacity_mean, -3 * rec.capacity_se);
  EXPECT_LE(rec.capacity_mean, std::numbers::ln2 + 3 * rec.capacity_se);
}

TEST(EstimateCapacity, DeterministicAcrossThreadCounts) {
  ExperimentConfig cfg = config(6, 0.7, 37, 3, 99);
  cfg.threads = 1;
  const EstimateRecord a = estimate_capacity(cfg);
  cfg.threads = 4;
  const EstimateRecord b = estimate_capacity(cfg);
  EXPECT_EQ(a.capacity_mean, b.capacity_mean);
  EXPECT_EQ(a.capacity_se, b.capacity_se);
  EXPECT_EQ(a.matrix_means, b.matrix_means);
  EXPECT_EQ(a.free_energies, b.free_energies);
  EXPECT_EQ(a.ber_mean, b.ber_mean);
}

TEST(EstimateCapacity, RandomInputMatchesAllOnes) {
  ExperimentConfig cfg = config(6, 1.0, 300, 10, 5);
  const EstimateRecord ones = estimate_capacity(cfg);
  cfg.random_input = true;
  const EstimateRecord rnd = estimate_capacity(cfg);
  EXPECT_LT(std::abs(ones.capacity_mean - rnd.capacity_mean),
            3 * std::hypot(ones.capacity_se, rnd.capacity_se));
}

TEST(EstimateCapacity, EstimatorsAgree) {
  ExperimentConfig cfg = config(6, 1.0, 300, 10, 8);
  const EstimateRecord fe = estimate_capacity(cfg);
  cfg.estimator = MiEstimator::information_density;
  const EstimateRecord id = estimate_capacity(cfg);
  EXPECT_LT(std::abs(fe.capacity_mean - id.capacity_mean), 3 * std::hypot(fe.capacity_se, id.capacity_se));
  EXPECT_EQ(fe.free_energies, id.free_energies);
  EXPECT_LT(id.capacity_se, fe.capacity_se);
}

TEST(EstimateCapacity, SingleMatrixUsesInstanceErrors) {
  const EstimateRecord rec = estimate_capacity(config(4, 1.0, 1, 200));
  EXPECT_GT(rec.capacity_se, 0.0);
  EXPECT_EQ(rec.free_energies.size(), 200u);
}

TEST(EstimateCapacity, PropagatesRefusal) {
  ExperimentConfig cfg = config(10, 1.0, 1, 1);
  cfg.max_users = 8;
  EXPECT_THROW(estimate_capacity(cfg), EnumerationRefused);
}

TEST(Concentration, VarianceShrinksWithK) {
  ExperimentConfig cfg = config(4, 1.0, 400, 4, 17);
  const auto rows = concentration_experiment(cfg, {4, 8});
  ASSERT_EQ(rows.size(), 4u);  // two epsilons per K
  EXPECT_EQ(rows[0].K, 4);
  EXPECT_EQ(rows[2].K, 8);
  EXPECT_GT(rows[0].var_mi, rows[2].var_mi);
  EXPECT_GT(rows[0].var_f, rows[2].var_f);
  EXPECT_GE(rows[0].tail_freq_mi, rows[1].tail_freq_mi);  // larger epsilon, fewer hits
}

TEST(Concentration, DegenerateNoiseHasNoMatrixFluctuation) {
  ExperimentConfig cfg = config(4, 1e6, 100, 5);
  cfg.estimator = MiEstimator::information_density;
  const auto rows = concentration_experiment(cfg, {4});
  EXPECT_LT(rows[0].var_mi, 1e-6);
}

TEST(Concentration, TailFrequencyBoundedByFittedConstant) {
  ExperimentConfig cfg = config(4, 1.0, 400, 2, 23);
  cfg.epsilons = {0.05};
  const auto rows = concentration_experiment(cfg, {4, 8, 12});
  const double alpha = fit_tail_constant(rows.back());
  // The fitted constant is a pessimistic yardstick for the smaller K, with a
  // binomial allowance of 3 standard errors.
  for (const auto& r : rows) {
    const double se = std::sqrt(r.tail_freq_mi * (1 - r.tail_freq_mi) / 400);
    EXPECT_LE(r.tail_freq_mi, alpha / (r.K * r.epsilon * r.epsilon) + 3 * se + 1e-12) << r.K;
  }
}

TEST(Universality, SameDistributionDifferentSeeds) {
  ExperimentConfig a = config(6, 1.0, 300, 5, 1), b = config(6, 1.0, 300, 5, 2);
  const auto ra = universality_experiment(a, {6}, {SpreadingDistribution::binary()});
  const auto rb = universality_experiment(b, {6}, {SpreadingDistribution::binary()});
  const Gap g = capacity_gap(ra[0], rb[0]);
  EXPECT_LT(std::abs(g.value), 3 * g.combined_se);
}

TEST(Universality, NoInformationGapsVanish) {
  const auto rows = universality_experiment(config(4, 1e6, 100, 5), {4});
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const Gap g = capacity_gap(rows[0], rows[i]);
    EXPECT_LT(std::abs(g.value), 3 * g.combined_se + 1e-9);
  }
}

TEST(Universality, ChipKindsShareTheUnderlyingDraws) {
  const Eigen::MatrixXd g = sample_spreading(SpreadingDistribution::gaussian(), 4, 5, 11);
  const Eigen::MatrixXd b = sample_spreading(SpreadingDistribution::binary(), 4, 5, 11);
  for (Eigen::Index i = 0; i < g.size(); ++i) EXPECT_EQ(b.reshaped()(i), g.reshaped()(i) >= 0 ? 1.0 : -1.0);
}

TEST(Trend, EntriesBelowBinaryEntropy) {
  const auto rows = limit_trend(config(4, 1.0, 100, 5), {2, 4, 6});
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_LE(r.capacity_mean, std::numbers::ln2 + 3 * r.capacity_se);
    EXPECT_EQ(r.N, r.K);
  }
}

TEST(Trend, ZeroSnrColumnIsZero) {
  for (const auto& r : limit_trend(config(4, 1e9, 100, 5), {2, 4}))
    EXPECT_LT(std::abs(r.capacity_mean), 3 * r.capacity_se + 1e-9);
}
