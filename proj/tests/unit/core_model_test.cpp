#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "cdma/channel.hpp"
#include "cdma/enumerate.hpp"
#include "cdma/params.hpp"
#include "cdma/spreading.hpp"
#include "cdma/stats.hpp"
#include "oracles.hpp"

using namespace cdma;

namespace {

Instance random_instance(int K, int N, double sigma2, std::uint64_t seed) {
  Engine chips = stream_engine(seed, 0, Substream::spreading);
  Engine noise = stream_engine(seed, 0, Substream::noise);
  Engine input = stream_engine(seed, 0, Substream::input);
  Eigen::MatrixXd S = sample_spreading(SpreadingDistribution::gaussian(), K, N, chips);
  return channel_output(S, random_input(K, input), sigma2, noise);
}

}  // namespace

TEST(SystemParams, LoadAndSnrAreConsistent) {
  const SystemParams p = SystemParams::finite(6, 4, 0.25);
  EXPECT_EQ(p.beta(), 1.5);
  EXPECT_NEAR(p.snr() * p.sigma2(), 1.0, 1e-15);
  const SystemParams q = SystemParams::from_load(16, 1.5, 1.0);
  EXPECT_EQ(q.N(), 11);
  EXPECT_DOUBLE_EQ(q.beta(), 16.0 / 11.0);
}

TEST(SystemParams, RejectsInvalidValues) {
  EXPECT_THROW(SystemParams::finite(0, 4, 1.0), std::invalid_argument);
  EXPECT_THROW(SystemParams::finite(4, 0, 1.0), std::invalid_argument);
  EXPECT_THROW(SystemParams::finite(4, 4, 0.0), std::invalid_argument);
  EXPECT_THROW(SystemParams::large_system(1.0, -1.0), std::invalid_argument);
  EXPECT_EQ(SystemParams::large_system(1.0, INFINITY).snr(), 0.0);
}

TEST(Spreading, BinaryEntriesArePlusMinusOne) {
  const Eigen::MatrixXd S = sample_spreading(SpreadingDistribution::binary(), 2, 2, 7);
  for (double v : S.reshaped()) EXPECT_TRUE(v == 1.0 || v == -1.0);
}

TEST(Spreading, SameSeedSameMatrix) {
  for (auto d : {SpreadingDistribution::gaussian(), SpreadingDistribution::binary(),
                 SpreadingDistribution::uniform()}) {
    const Eigen::MatrixXd a = sample_spreading(d, 5, 7, 42);
    const Eigen::MatrixXd b = sample_spreading(d, 5, 7, 42);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, sample_spreading(d, 5, 7, 43));
  }
}

TEST(Spreading, GaussianVarianceWithinFiveStandardErrors) {
  const Eigen::MatrixXd S = sample_spreading(SpreadingDistribution::gaussian(), 1000, 1000, 1);
  RunningStats sq;
  for (double v : S.reshaped()) sq.push(v * v);
  EXPECT_LT(std::abs(sq.mean() - 1.0), 5.0 * sq.standard_error());
}

TEST(Spreading, MillionDrawsHaveZeroMeanAndUnitVariance) {
  const auto table = SpreadingDistribution::custom({{-2.0, 0.125}, {0.0, 0.75}, {2.0, 0.125}});
  for (auto d : {SpreadingDistribution::gaussian(), SpreadingDistribution::binary(),
                 SpreadingDistribution::uniform(), table}) {
    Engine eng = stream_engine(9, 0);
    RunningStats x, sq;
    for (int i = 0; i < 1000000; ++i) {
      const double v = d(eng);
      x.push(v);
      sq.push(v * v);
    }
    EXPECT_LT(std::abs(x.mean()), 5.0 * x.standard_error()) << d.name();
    EXPECT_LE(std::abs(sq.mean() - 1.0), 5.0 * sq.standard_error()) << d.name();
  }
}

TEST(Spreading, UniformStaysInSupport) {
  const Eigen::MatrixXd S = sample_spreading(SpreadingDistribution::uniform(), 50, 50, 3);
  EXPECT_LE(S.cwiseAbs().maxCoeff(), std::sqrt(3.0));
}

TEST(Spreading, RejectsAsymmetricTable) {
  try {
    SpreadingDistribution::custom({{1.0, 0.7}, {-1.0, 0.3}});
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "asymmetric distribution");
  }
}

TEST(Spreading, RejectsNonUnitVariance) {
  EXPECT_THROW(SpreadingDistribution::custom({{2.0, 0.5}, {-2.0, 0.5}}), std::invalid_argument);
  EXPECT_NO_THROW(SpreadingDistribution::custom({{1.0, 0.5}, {-1.0, 0.5}}));
}

TEST(Channel, InstanceInvariantHolds) {
  const Instance inst = random_instance(5, 9, 0.7, 4);
  const Eigen::VectorXd resid =
      inst.y - std::sqrt(0.7) * inst.n - inst.S * inst.x0 / std::sqrt(9.0);
  EXPECT_LT(resid.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Channel, ZeroSignalGivesScaledNoise) {
  const Instance inst = channel_output(Eigen::MatrixXd::Zero(3, 2), Eigen::Vector2d(1, -1), 4.0, 5ULL);
  EXPECT_EQ(inst.y, 2.0 * inst.n);
}

TEST(Channel, TinyNoiseLeavesTheSignal) {
  Eigen::MatrixXd S = sample_spreading(SpreadingDistribution::gaussian(), 3, 4, 2);
  const Instance inst = channel_output(S, Eigen::Vector3d(1, -1, 1), 1e-300, 5ULL);
  const Eigen::VectorXd signal = S * Eigen::Vector3d(1, -1, 1) / 2.0;
  EXPECT_EQ(inst.y, signal);
}

TEST(Channel, ScalarArithmetic) {
  const Instance inst = channel_output(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1),
                                       Eigen::VectorXd::Constant(1, 0.5), 1.0);
  EXPECT_EQ(inst.y(0), 1.5);
}

TEST(Channel, DimensionMismatch) {
  EXPECT_THROW(channel_output(Eigen::MatrixXd::Ones(3, 2), Eigen::VectorXd::Ones(3),
                              Eigen::VectorXd::Zero(3), 1.0),
               std::invalid_argument);
  EXPECT_THROW(channel_output(Eigen::MatrixXd::Ones(3, 2), Eigen::VectorXd::Ones(2),
                              Eigen::VectorXd::Zero(2), 1.0),
               std::invalid_argument);
}

TEST(Enumeration, ZeroChipsGivePrior) {
  const Instance inst = channel_output(Eigen::MatrixXd::Zero(4, 3), Eigen::Vector3d(1, 1, -1), 0.5, 8ULL);
  const PosteriorStats st = enumerate_posterior(inst, 0.5);
  EXPECT_LT(st.bit_means.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(st.m1, 0.0, 1e-15);
  EXPECT_NEAR(st.q12, 0.0, 1e-15);
  EXPECT_EQ(st.ber, 0.5);
  EXPECT_NEAR(st.log_z, -inst.y.squaredNorm() / (2 * 0.5), 1e-12);
}

TEST(Enumeration, SingleUserPosteriorMeanIsTanh) {
  for (double y : {-1.3, 0.2, 2.5}) {
    Instance inst;
    inst.S = Eigen::MatrixXd::Ones(1, 1);
    inst.x0 = Eigen::VectorXd::Ones(1);
    inst.n = Eigen::VectorXd::Zero(1);
    inst.y = Eigen::VectorXd::Constant(1, y);
    const PosteriorStats st = enumerate_posterior(inst, 0.8);
    EXPECT_NEAR(st.bit_means(0), std::tanh(y / 0.8), 1e-15);
  }
}

TEST(Enumeration, MatchesNaiveOracle) {
  for (int K = 1; K <= 12; ++K) {
    const int N = 3 + K / 2;
    const Instance inst = random_instance(K, N, 0.6, 100 + K);
    const PosteriorStats st = enumerate_posterior(inst, 0.6);
    const oracle::Posterior ref = oracle::naive_posterior(inst.S, inst.y, 0.6);
    EXPECT_NEAR(st.log_z, ref.log_z, 1e-10) << "K=" << K;
    EXPECT_LT((st.bit_means - ref.bit_means).cwiseAbs().maxCoeff(), 1e-10) << "K=" << K;
  }
}

TEST(Enumeration, LargeSystemStaysAccurateAcrossResync) {
  // K = 14 crosses the periodic residual resync several times.
  const Instance inst = random_instance(14, 14, 0.3, 5);
  const PosteriorStats st = enumerate_posterior(inst, 0.3);
  const oracle::Posterior ref = oracle::naive_posterior(inst.S, inst.y, 0.3);
  EXPECT_NEAR(st.log_z, ref.log_z, 1e-10);
  EXPECT_LT((st.bit_means - ref.bit_means).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Enumeration, StatsRespectBounds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance inst = random_instance(8, 6, 0.2 + 0.1 * seed, seed);
    const PosteriorStats st = enumerate_posterior(inst, 0.2 + 0.1 * seed);
    EXPECT_LE(st.f, 0.0);
    EXPECT_LE(st.bit_means.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_GE(st.q12, 0.0);
    EXPECT_LE(st.q12, 1.0);
    EXPECT_LE(std::abs(st.m1), 1.0);
    EXPECT_GE(st.ber, 0.0);
    EXPECT_LE(st.ber, 1.0);
  }
}

TEST(Enumeration, GaugeCovariance) {
  const Instance inst = random_instance(9, 7, 0.5, 77);
  const PosteriorStats base = enumerate_posterior(inst, 0.5);
  Engine eng = stream_engine(1, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd eps = random_input(9, eng);
    const Instance g = channel_output(inst.S * eps.asDiagonal(), inst.x0.cwiseProduct(eps), inst.n, 0.5);
    const PosteriorStats st = enumerate_posterior(g, 0.5);
    // Equal up to summation order.
    EXPECT_NEAR(st.log_z, base.log_z, 1e-12);
    EXPECT_NEAR(st.m1, base.m1, 1e-12);
    EXPECT_NEAR(st.q12, base.q12, 1e-12);
    EXPECT_EQ(st.ber, base.ber);
  }
}

TEST(Enumeration, PermutingUsersPermutesBitMeans) {
  const Instance inst = random_instance(7, 5, 0.4, 12);
  const PosteriorStats base = enumerate_posterior(inst, 0.4);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(7);
  perm.indices() << 3, 0, 6, 1, 5, 2, 4;
  const Instance p = channel_output(inst.S * perm, perm.transpose() * inst.x0, inst.n, 0.4);
  const PosteriorStats st = enumerate_posterior(p, 0.4);
  EXPECT_LT((st.bit_means - perm.transpose() * base.bit_means).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(st.f, base.f, 1e-12);
  EXPECT_NEAR(st.m1, base.m1, 1e-12);
  EXPECT_NEAR(st.q12, base.q12, 1e-12);
}

TEST(Enumeration, NoiselessBranchIsIndicatorPosterior) {
  Eigen::MatrixXd S = sample_spreading(SpreadingDistribution::gaussian(), 6, 8, 3);
  const Eigen::VectorXd x0 = (Eigen::VectorXd(6) << 1, -1, -1, 1, 1, -1).finished();
  const Instance inst = channel_output(S, x0, 1e-300, 1ULL);
  const PosteriorStats st = enumerate_posterior(inst, 1e-300);
  EXPECT_EQ(st.bit_means, x0);
  EXPECT_EQ(st.ber, 0.0);
  EXPECT_EQ(st.m1, 1.0);
}

TEST(Enumeration, RefusesLargeSystemsWithCostEstimate) {
  const Instance inst = random_instance(10, 4, 1.0, 1);
  try {
    enumerate_posterior(inst, 1.0, {8});
    FAIL() << "expected refusal";
  } catch (const EnumerationRefused& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2^10"), std::string::npos);
    EXPECT_NE(msg.find("floating-point operations"), std::string::npos);
  }
}

TEST(MutualInformation, NoInformationLimit) {
  RunningStats mi;
  const SystemParams params = SystemParams::finite(3, 3, 1e8);
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const Instance inst = random_instance(3, 3, 1e8, s);
    mi.push(mutual_info_sample(enumerate_posterior(inst, 1e8), params));
  }
  EXPECT_LT(std::abs(mi.mean()), 3.0 * mi.standard_error() + 1e-9);
}

TEST(MutualInformation, PerfectDetectionLimit) {
  RunningStats mi;
  const SystemParams params = SystemParams::finite(3, 6, 1e-4);
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const Instance inst = random_instance(3, 6, 1e-4, s);
    mi.push(mutual_info_sample(enumerate_posterior(inst, 1e-4), params));
  }
  EXPECT_LT(std::abs(mi.mean() - std::log(2.0)), 3.0 * mi.standard_error() + 1e-6);
}

TEST(MutualInformation, SingleUserMatchesBpskIntegral) {
  const SystemParams params = SystemParams::finite(1, 1, 1.0);
  RunningStats mi, dens;
  for (std::uint64_t s = 0; s < 100000; ++s) {
    Engine noise = stream_engine(31, s, Substream::noise);
    Engine input = stream_engine(31, s, Substream::input);
    const Instance inst = channel_output(Eigen::MatrixXd::Ones(1, 1), random_input(1, input), 1.0, noise);
    const PosteriorStats st = enumerate_posterior(inst, 1.0);
    mi.push(mutual_info_sample(st, params));
    dens.push(information_density(st, inst));
  }
  const double ref = oracle::bpsk_mutual_information(1.0);
  EXPECT_LT(std::abs(mi.mean() - ref), 3.0 * mi.standard_error());
  EXPECT_LT(std::abs(dens.mean() - ref), 3.0 * dens.standard_error());
}
