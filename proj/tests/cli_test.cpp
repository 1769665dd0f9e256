// Copyright 2026 The SPI-GAN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "spigan/metrics.hpp"

namespace spigan {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(SPIGAN_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("spigan_cli_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Trains a tiny model and returns the run directory.
  std::string train_small(int iters = 60) {
    std::ofstream(path("c.cfg")) << "batch = 32\ndataset_size = 512\nhidden_dim = 8\ngen_width = 16\n"
                                    "disc_width = 16\ntime_dim = 8\nlog_every = 20\nckpt_every = 40\n";
    const RunResult r = run("train --config " + path("c.cfg") + " --out " + path("run") + " --max-iter " +
                            std::to_string(iters) + " --quiet");
    EXPECT_EQ(r.code, 0) << r.out;
    return path("run");
  }

  fs::path dir_;
};

TEST_F(CliTest, TrainThenSampleWritesHeaderAndRows) {
  const std::string run_dir = train_small();
  EXPECT_TRUE(fs::exists(run_dir + "/final.ckpt"));
  EXPECT_TRUE(fs::exists(run_dir + "/ckpt_0000040.ckpt"));
  EXPECT_TRUE(fs::exists(run_dir + "/manifest.txt"));
  const auto metrics = read_lines(run_dir + "/metrics.tsv");
  ASSERT_EQ(metrics.size(), 4u);  // header and iterations 20, 40, 60
  EXPECT_EQ(metrics[0], "iter\td_loss\tg_loss\tr1\tpath_pen\tema_gap");
  EXPECT_EQ(metrics[3].rfind("60\t", 0), 0u);

  const std::string before = read_all(run_dir + "/final.ckpt");
  const RunResult r = run("sample --ckpt " + run_dir + "/final.ckpt --n 1000 --out " + path("s.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto lines = read_lines(path("s.csv"));
  ASSERT_EQ(lines.size(), 1001u);
  EXPECT_EQ(lines[0], "x,y");
  EXPECT_NE(r.out.find("generator_calls 1"), std::string::npos) << r.out;
  EXPECT_EQ(read_all(run_dir + "/final.ckpt"), before);
  EXPECT_TRUE(fs::exists(path("s.csv.manifest")));
}

TEST_F(CliTest, SampleModesWriteOneFilePerFrame) {
  const std::string run_dir = train_small(20);
  RunResult r = run("sample --ckpt " + run_dir + "/final.ckpt --n 10 --mode vary_u --u-grid 0.25,0.5,1 --out " +
                    path("v.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"v_000.csv", "v_001.csv", "v_002.csv"}) EXPECT_EQ(read_lines(path(f)).size(), 11u) << f;
  r = run("sample --ckpt " + run_dir + "/final.ckpt --n 10 --mode h_interp --steps 4 --out " + path("h.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(path("h_003.csv")));
  EXPECT_FALSE(fs::exists(path("h_004.csv")));
}

TEST_F(CliTest, ResumeContinuesToTheSameCheckpoint) {
  const std::string run_dir = train_small(60);
  const RunResult r = run("train --resume " + run_dir + "/ckpt_0000040.ckpt --out " + path("resumed") +
                          " --max-iter 60 --quiet");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(read_all(path("resumed/final.ckpt")), read_all(run_dir + "/final.ckpt"));
}

TEST_F(CliTest, PathCompareSpiColumnIsAffine) {
  const RunResult r = run("path-compare --dataset gaussians8 --grid 21 --out " + path("p.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto lines = read_lines(path("p.csv"));
  ASSERT_EQ(lines.size(), 22u);
  EXPECT_EQ(lines[0], "u,spi_dist,sde_dist");
  std::vector<double> u, spi;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream row(lines[i]);
    std::string a, b;
    std::getline(row, a, ',');
    std::getline(row, b, ',');
    u.push_back(std::stod(a));
    spi.push_back(std::stod(b));
  }
  EXPECT_GT(linear_fit_r2(u, spi), 0.9999);
  EXPECT_NEAR(spi.back(), 0.0, 1e-12);
  const auto manifest = read_all(path("p.csv.manifest"));
  EXPECT_NE(manifest.find("version = "), std::string::npos);
  EXPECT_NE(manifest.find("seed = 0"), std::string::npos);
}

TEST_F(CliTest, GradcheckReportsSmallError) {
  const RunResult r = run("gradcheck");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto pos = r.out.find("max relative error ");
  ASSERT_NE(pos, std::string::npos) << r.out;
  EXPECT_LT(std::stod(r.out.substr(pos + 19)), 1e-3);
}

TEST_F(CliTest, EvalReportsMetrics) {
  const std::string run_dir = train_small(20);
  const RunResult r = run("eval --ckpt " + run_dir + "/final.ckpt --n 200 --out " + path("e.tsv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string report = read_all(path("e.tsv"));
  for (const char* name : {"wasserstein2\t", "recall\t", "coverage\t", "modes_covered\t"})
    EXPECT_NE(report.find(name), std::string::npos) << name << "\n" << report;
}

TEST_F(CliTest, InfoPrintsHeader) {
  const std::string run_dir = train_small(20);
  const RunResult r = run("info --ckpt " + run_dir + "/final.ckpt");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("iter"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("20"), std::string::npos) << r.out;
}

TEST_F(CliTest, ExitCodes) {
  std::ofstream(path("bad.cfg")) << "lr_g = -1\n";
  RunResult r = run("train --config " + path("bad.cfg") + " --out " + path("x"));
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("lr_g"), std::string::npos) << r.out;
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("sample --n 3").code, 1);
  std::ofstream(path("junk.ckpt")) << "not a checkpoint";
  r = run("sample --ckpt " + path("junk.ckpt") + " --out " + path("o.csv"));
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("magic"), std::string::npos) << r.out;
}

TEST_F(CliTest, VersionFlag) {
  const RunResult r = run("--version");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("1.0.0"), std::string::npos) << r.out;
}

}  // namespace
}  // namespace spigan
