#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "abflux/io.hpp"

using namespace abflux;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(ABFLUX_CLI) + " " + args + " 2>/dev/null >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(CliClassical, WritesTrajectoryAndSummary) {
  ASSERT_EQ(run("classical --phi 0.5 --q0 1,0 --p0 0.3,1.2 --s-end 50 --samples 201 --out cli_cls"),
            0);
  const auto t = io::read_csv("cli_cls.csv");
  const std::vector<std::string> header{"s", "qx", "qy", "px", "py", "cx", "cy", "H", "K", "I1"};
  EXPECT_EQ(t.header, header);
  EXPECT_EQ(t.rows.size(), 201u);
  const auto j = io::read_json("cli_cls.json");
  for (const char* key : {"s0", "a0", "drift_angle", "H_limit", "K_drift", "puncture_hit"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_FALSE(j["puncture_hit"].get<bool>());
  EXPECT_LE(j["K_drift"].get<double>(), 1e-8);
}

TEST(CliClassical, SingleRowWhenSpanIsEmpty) {
  ASSERT_EQ(run("classical --s-start 3 --s-end 3 --out cli_one"), 0);
  EXPECT_EQ(io::read_csv("cli_one.csv").rows.size(), 1u);
}

TEST(CliClassical, ValidationExitCodes) {
  EXPECT_EQ(run("classical --phi 0 --out cli_bad"), 2);
  EXPECT_EQ(run("classical --phi -1 --out cli_bad"), 2);
  EXPECT_EQ(run("classical --tol 1e-3 --out cli_bad"), 2);
  EXPECT_EQ(run("classical --q0 0,0 --out cli_bad"), 2);
  EXPECT_EQ(run("classical --no-such-flag"), 2);
  EXPECT_EQ(run(""), 2);
}

TEST(CliClassical, PunctureExitCodeKeepsPartialData) {
  // heads straight for the origin; a wide guard radius turns the approach into an event
  EXPECT_EQ(run("classical --phi 0.5 --q0 1,0 --p0 -1,0.5 --s-end 10 --r-guard 0.9 "
                "--out cli_punct"),
            3);
  const auto j = io::read_json("cli_punct.json");
  EXPECT_TRUE(j["puncture_hit"].get<bool>());
  EXPECT_TRUE(j.contains("puncture_time"));
  EXPECT_GE(io::read_csv("cli_punct.csv").rows.size(), 1u);
}

TEST(CliReduced, ZeroForcingHasZeroResidual) {
  ASSERT_EQ(run("reduced --zero-forcing --s-max 200 --samples 101 --out cli_red0"), 0);
  const auto j = io::read_json("cli_red0.json");
  EXPECT_EQ(j["max_residual"].get<double>(), 0.0);
  for (const char* key : {"iters", "tail_estimate", "c1_fit", "c2_fit", "a0"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  const auto t = io::read_csv("cli_red0.csv");
  const std::vector<std::string> header{"s", "x1", "x2", "residual1", "residual2"};
  EXPECT_EQ(t.header, header);
}

TEST(CliReduced, DefaultRunAndCrosscheck) {
  ASSERT_EQ(run("reduced --s-max 200 --crosscheck --out cli_red"), 0);
  const auto j = io::read_json("cli_red.json");
  EXPECT_LE(j["max_residual"].get<double>(), 10 * 1e-10);
  ASSERT_TRUE(j.contains("crosscheck_deviation"));
  EXPECT_LE(j["crosscheck_deviation"].get<double>(), 1e-6);
}

TEST(CliReduced, NoConvergenceExitCode) {
  EXPECT_EQ(run("reduced --max-iters 2 --s-max 200 --out cli_red_nc"), 4);
  EXPECT_EQ(run("reduced --s-start 0 --out cli_red_bad"), 2);
}

TEST(CliSpectral, OscillatorEigenvalues) {
  ASSERT_EQ(run("spectral --s 0 --levels 8 --out cli_spec"), 0);
  const auto t = io::read_csv("cli_spec.csv");
  ASSERT_EQ(t.rows.size(), 8u);
  for (int n = 0; n < 8; ++n) EXPECT_NEAR(t.rows[n][t.column("E")], 2.0 * n + 1.0, 1e-14);
}

TEST(CliSpectral, KernelCheckAtZero) {
  ASSERT_EQ(run("spectral --s 0 --check kernel --out cli_kern"), 0);
  const auto j = io::read_json("cli_kern.json");
  const auto& k = j["results"][0]["kernel"];
  EXPECT_EQ(k["bound"].get<double>(), 2.0);
  EXPECT_LE(k["norm"].get<double>(), 2.0 + 1e-6);
}

TEST(CliSpectral, FullReportAtOne) {
  EXPECT_EQ(run("spectral --s 1 --check all --out cli_all"), 0);
  const auto j = io::read_json("cli_all.json");
  EXPECT_TRUE(j["passed"].get<bool>());
  for (const char* key : {"oracle", "kernel", "coupling", "gamma"}) {
    EXPECT_TRUE(j["results"][0].contains(key)) << key;
  }
  EXPECT_EQ(run("spectral --check bogus --out cli_all"), 2);
}

TEST(CliAdiabatic, ZeroCouplingGivesZeroNorms) {
  ASSERT_EQ(run("adiabatic --zero-coupling --levels 8 --s-end 1 --epsilons 0.2,0.1 "
                "--out cli_adi0"),
            0);
  const auto t = io::read_csv("cli_adi0.csv");
  const std::vector<std::string> header{"epsilon", "s", "norm_I", "norm_C_minus_id",
                                        "norm_Uw_minus_Uad", "unitarity_defect"};
  EXPECT_EQ(t.header, header);
  for (const auto& row : t.rows) {
    EXPECT_EQ(row[2], 0.0);
    EXPECT_EQ(row[3], 0.0);
    EXPECT_EQ(row[4], 0.0);
  }
}

TEST(CliAdiabatic, SingleEpsilonSkipsFit) {
  ASSERT_EQ(run("adiabatic --levels 8 --s-end 0.5 --epsilons 0.1 --out cli_adi1"), 0);
  const auto j = io::read_json("cli_adi1.json");
  EXPECT_TRUE(j["exponents"]["norm_I"].is_null());
  EXPECT_FALSE(j["scaling_checked"].get<bool>());
  EXPECT_GT(io::read_csv("cli_adi1.csv").rows.size(), 1u);
  EXPECT_EQ(run("adiabatic --epsilons 0 --out cli_adi_bad"), 2);
}

TEST(CliDeterminism, RepeatedRunsAreByteIdentical) {
  const std::string args = "classical --phi 0.5 --q0 1,0.5 --p0 -0.2,1 --s-end 30 --samples 301";
  ASSERT_EQ(run(args + " --out cli_det_a"), 0);
  ASSERT_EQ(run(args + " --out cli_det_b"), 0);
  EXPECT_EQ(slurp("cli_det_a.csv"), slurp("cli_det_b.csv"));
  EXPECT_EQ(slurp("cli_det_a.json"), slurp("cli_det_b.json"));
}

TEST(CliConfig, FileMirrorsFlagsAndFlagsWin) {
  {
    std::ofstream cfg("cli_cfg.ini");
    cfg << "[spectral]\nlevels=6\ns=0.5,1\nout=cli_cfg_file\n";
  }
  ASSERT_EQ(run("--config cli_cfg.ini spectral"), 0);
  const auto t = io::read_csv("cli_cfg_file.csv");
  ASSERT_EQ(t.rows.size(), 12u);
  EXPECT_EQ(t.rows[0][0], 0.5);
  EXPECT_EQ(t.rows[6][0], 1.0);
  ASSERT_EQ(run("--config cli_cfg.ini spectral --levels 4 --out cli_cfg_flag"), 0);
  EXPECT_EQ(io::read_csv("cli_cfg_flag.csv").rows.size(), 8u);
}
