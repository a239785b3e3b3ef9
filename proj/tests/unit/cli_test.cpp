#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cdma/cli.hpp"

namespace fs = std::filesystem;
using cdma::cli::run;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cdma_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

  static std::string header(const std::string& p) {
    const std::string s = slurp(p);
    return s.substr(0, s.find('\n'));
  }

  static std::vector<std::vector<std::string>> rows(const std::string& p) {
    std::vector<std::vector<std::string>> out;
    std::stringstream ss(slurp(p));
    std::string line;
    std::getline(ss, line);
    while (std::getline(ss, line)) {
      std::vector<std::string> cells;
      std::stringstream ls(line);
      std::string c;
      while (std::getline(ls, c, ',')) cells.push_back(c);
      out.push_back(cells);
    }
    return out;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, ReplicaRow) {
  ASSERT_EQ(run({"replica", "--beta", "1", "--sigma2", "1", "--out", path("r.csv")}), 0);
  EXPECT_EQ(header(path("r.csv")), "beta,sigma2,m_star,lambda_star,c_rs_nats,c_rs_bits,n_fixed_points");
  const auto r = rows(path("r.csv"));
  ASSERT_EQ(r.size(), 1u);
  const double nats = std::stod(r[0][4]), bits = std::stod(r[0][5]);
  EXPECT_NEAR(bits, nats / std::log(2.0), 1e-15);
  EXPECT_NEAR(nats, cdma::capacity_bound(cdma::SystemParams::large_system(1, 1)).c_upper, 1e-15);
  EXPECT_EQ(r[0][6], "1");
  EXPECT_TRUE(fs::exists(path("r.csv.manifest.json")));
}

TEST_F(CliTest, ReplicaAtHugeNoiseIsZero) {
  ASSERT_EQ(run({"replica", "--beta", "1", "--sigma2", "1e9", "--out", path("r.csv")}), 0);
  EXPECT_LT(std::abs(std::stod(rows(path("r.csv"))[0][4])), 1e-6);
}

TEST_F(CliTest, ValidationNamesTheFlag) {
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"simulate", "--K", "0", "--out", path("s.csv")}), 2);
  const std::string err = ::testing::internal::GetCapturedStderr();
  EXPECT_NE(err.find("--K"), std::string::npos) << err;
  EXPECT_FALSE(fs::exists(path("s.csv")));

  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"replica", "--beta", "1", "--bogus", "3", "--out", path("r.csv")}), 2);
  EXPECT_NE(::testing::internal::GetCapturedStderr().find("--bogus"), std::string::npos);

  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"replica", "--beta", "1"}), 2);
  EXPECT_NE(::testing::internal::GetCapturedStderr().find("--out"), std::string::npos);

  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"replica", "--sigma2", "-1", "--out", path("r.csv")}), 2);
  EXPECT_NE(::testing::internal::GetCapturedStderr().find("--sigma2"), std::string::npos);

  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"nosuch"}), 2);
  ::testing::internal::GetCapturedStderr();
}

TEST_F(CliTest, EnumerationRefusalExitCode) {
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"simulate", "--K", "30", "--matrices", "1", "--noise", "1", "--out", path("s.csv")}), 3);
  EXPECT_NE(::testing::internal::GetCapturedStderr().find("2^30"), std::string::npos);
}

TEST_F(CliTest, PinnedHeaders) {
  struct Case {
    std::vector<std::string> args;
    std::string header;
  };
  const std::vector<Case> cases{
      {{"simulate", "--K", "3", "--matrices", "2", "--noise", "2"},
       "K,N,beta_actual,sigma2,dist,n_matrices,n_noise,mi_nats_mean,mi_nats_se,ber_mean,ber_se,bound_nats"},
      {{"concentrate", "--K", "2,3", "--matrices", "3", "--noise", "2"}, "K,var_mi,var_f,tail_freq_mi,tail_freq_f,epsilon"},
      {{"universality", "--K", "2", "--matrices", "2", "--noise", "2"}, "K,dist,mi_nats_mean,mi_nats_se"},
      {{"trend", "--K", "2,3", "--matrices", "2", "--noise", "2"}, "K,N,beta_actual,mi_nats_mean,mi_nats_se"},
      {{"interpolate", "--K", "3", "--samples", "4", "--t", "0.5", "--u", "0.1"},
       "t,u,f_mean,f_se,dfdt_fd,T1_raw,T2_raw,T1_reduced,T2_reduced,R,R_se"},
      {{"nishimori", "--K", "3", "--samples", "4"}, "t,u,res_mq,res_mq_se,res_X11,res_X11_se,res_X12,res_X12_se"},
      {{"sumrule", "--K", "3", "--samples", "4", "--t-points", "3"}, "m,u,lhs,rhs,residual,budget"},
      {{"phase", "--beta-points", "2", "--sigma2-points", "3"},
       "beta,sigma2,m_star,lambda_star,c_rs_nats,c_rs_bits,root_count"},
      {{"gaussian"}, "beta,sigma2,closed_form_nats,replica_nats,m_saddle,abs_diff"},
      {{"colored", "--rho", "0.5"}, "beta,rho,noise_power,c_upper_nats,m_argmin,white_c_upper_nats"},
      {{"powers"}, "beta,sigma2,profile,c_upper_nats,m_argmin,equal_power_nats"},
  };
  for (const Case& c : cases) {
    std::vector<std::string> args = c.args;
    args.push_back("--out");
    args.push_back(path(c.args[0] + ".csv"));
    ASSERT_EQ(run(args), 0) << c.args[0];
    EXPECT_EQ(header(path(c.args[0] + ".csv")), c.header) << c.args[0];
    EXPECT_GT(rows(path(c.args[0] + ".csv")).size(), 0u) << c.args[0];
  }
  EXPECT_EQ(header(path("phase.csv.boundary.csv")), "beta,sigma2_before,sigma2_after,roots_before,roots_after");
}

TEST_F(CliTest, BitsAddColumns) {
  ASSERT_EQ(run({"simulate", "--K", "3", "--matrices", "2", "--noise", "2", "--bits", "--out", path("s.csv")}), 0);
  EXPECT_EQ(header(path("s.csv")),
            "K,N,beta_actual,sigma2,dist,n_matrices,n_noise,mi_nats_mean,mi_nats_se,ber_mean,ber_se,bound_nats,"
            "mi_bits_mean,mi_bits_se,bound_bits");
  const auto r = rows(path("s.csv"))[0];
  EXPECT_NEAR(std::stod(r[12]), std::stod(r[7]) / std::log(2.0), 1e-15);
}

TEST_F(CliTest, ManifestRecordsEverything) {
  ASSERT_EQ(run({"simulate", "--K", "3,4", "--matrices", "2", "--noise", "2", "--seed", "77", "--out",
                 path("s.csv")}),
            0);
  const auto m = cdma::cli::Json::parse(slurp(path("s.csv.manifest.json")));
  EXPECT_EQ(m["subcommand"], "simulate");
  EXPECT_EQ(m["seed"], 77);
  EXPECT_EQ(m["params"]["K"], cdma::cli::Json::array({3, 4}));
  EXPECT_EQ(m["params"]["dist"], "gaussian");
  EXPECT_EQ(m["params"]["matrices"], 2);
  EXPECT_EQ(m["outputs"][0], path("s.csv"));
  EXPECT_EQ(m["version"], CDMA_LAB_VERSION);
  const std::string ts = m["timestamp"];
  EXPECT_EQ(ts.size(), 20u);
  EXPECT_EQ(ts.back(), 'Z');
}

TEST_F(CliTest, ConfigFileWithFlagPrecedence) {
  {
    std::ofstream cfg(path("c.ini"));
    cfg << "K = 3\nmatrices = 2\nnoise = 3\nseed = 5\n";
  }
  ASSERT_EQ(run({"simulate", "--config", path("c.ini"), "--noise", "2", "--out", path("s.csv")}), 0);
  const auto r = rows(path("s.csv"))[0];
  EXPECT_EQ(r[0], "3");
  EXPECT_EQ(r[5], "2");
  EXPECT_EQ(r[6], "2");
  const auto m = cdma::cli::Json::parse(slurp(path("s.csv.manifest.json")));
  EXPECT_EQ(m["config_file"], path("c.ini"));
  EXPECT_EQ(m["seed"], 5);
}

TEST_F(CliTest, IdenticalArgumentsGiveIdenticalBytes) {
  const std::vector<std::string> base{"simulate", "--K", "4", "--matrices", "5", "--noise", "3", "--seed", "9"};
  auto with = [&](const std::string& out, const std::string& threads) {
    auto a = base;
    a.insert(a.end(), {"--out", out, "--threads", threads});
    return a;
  };
  ASSERT_EQ(run(with(path("a.csv"), "1")), 0);
  ASSERT_EQ(run(with(path("b.csv"), "3")), 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
}

TEST_F(CliTest, RerunReproducesBytes) {
  ASSERT_EQ(run({"nishimori", "--K", "4", "--samples", "20", "--t", "0.2,0.8", "--seed", "3", "--out", path("n.csv")}),
            0);
  ASSERT_EQ(run({"rerun", "--manifest", path("n.csv.manifest.json"), "--out", path("n2.csv"), "--threads", "2"}), 0);
  EXPECT_EQ(slurp(path("n.csv")), slurp(path("n2.csv")));
}

TEST_F(CliTest, ProfileTextIsKeptIntact) {
  ASSERT_EQ(run({"powers", "--profile", "1:1", "--profile", "0.5:0.5;1.5:0.5", "--out", path("p.csv")}), 0);
  const auto r = rows(path("p.csv"));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1][2], "0.5:0.5;1.5:0.5");
  EXPECT_NEAR(std::stod(r[0][3]), std::stod(r[0][5]), 1e-10);
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"powers", "--profile", "0:1", "--out", path("q.csv")}), 2);
  EXPECT_NE(::testing::internal::GetCapturedStderr().find("--profile"), std::string::npos);
}

TEST_F(CliTest, CsvTableRejectsNonFinite) {
  cdma::cli::CsvTable t({"a"});
  EXPECT_THROW(t.add_row({std::nan("")}), std::runtime_error);
  t.add_row({1.0 / 3.0});
  EXPECT_EQ(t.str(), "a\n0.33333333333333331\n");
}
