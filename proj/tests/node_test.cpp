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

#include "spigan/node.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "spigan/error.hpp"
#include "spigan/gradcheck.hpp"
#include "spigan/random.hpp"

namespace spigan {
namespace {

using T = Tensor<double>;

// Exponential test field r(h, t) = h.
struct Exponential {
  T operator()(Graph<double>&, const T& h, double) const { return h; }
};

double solve_exponential(SolverKind kind, int steps, double u = 1.0) {
  Graph<double> g;
  const T h = integrate(g, Exponential{}, T({1}, {1.0}), 0.0, u, SolverSpec{kind, steps});
  return h.item();
}

Tensor<double>* param(NamedParams<double>& params, const std::string& name) {
  for (auto& [n, t] : params)
    if (n == name) return t;
  ADD_FAILURE() << "no parameter " << name;
  return nullptr;
}

void zero_field(MappingNetwork<double>& net) {
  for (auto& [name, t] : net.named_parameters()) {
    if (name.rfind("mapping.field", 0) == 0) std::fill(t->data().begin(), t->data().end(), 0.0);
  }
}

MappingConfig small_config(std::size_t input_dim = 2, std::size_t hidden = 6) {
  MappingConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden_dim = hidden;
  cfg.depth = 2;
  return cfg;
}

T random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  T x({n, d});
  rng.fill_normal(x.data());
  return x;
}

TEST(Integrate, ExponentialFieldEulerOneStep) { EXPECT_DOUBLE_EQ(solve_exponential(SolverKind::kEuler, 1), 2.0); }

TEST(Integrate, ExponentialFieldRk4EightSteps) {
  EXPECT_NEAR(solve_exponential(SolverKind::kRk4, 8), std::exp(1.0), 1e-5);
}

TEST(Integrate, ConvergenceOrders) {
  const double e = std::exp(1.0);
  const double rk4_ratio =
      std::abs(solve_exponential(SolverKind::kRk4, 4) - e) / std::abs(solve_exponential(SolverKind::kRk4, 8) - e);
  const double euler_ratio = std::abs(solve_exponential(SolverKind::kEuler, 4) - e) /
                             std::abs(solve_exponential(SolverKind::kEuler, 8) - e);
  EXPECT_GE(rk4_ratio, 12.0);
  EXPECT_LE(rk4_ratio, 20.0);
  EXPECT_GE(euler_ratio, 1.8);
  EXPECT_LE(euler_ratio, 2.2);
}

TEST(Integrate, RejectsNonPositiveSteps) {
  Graph<double> g;
  EXPECT_THROW(integrate(g, Exponential{}, T({1}, {1.0}), 0.0, 1.0, SolverSpec{SolverKind::kRk4, 0}), RangeError);
}

TEST(MappingEmbed, ZeroWeightsGiveZeroState) {
  Rng rng(1);
  MappingNetwork<double> net(small_config(), rng);
  auto params = net.named_parameters();
  for (const char* n : {"mapping.embed.weight", "mapping.embed.bias"}) {
    T* t = param(params, n);
    std::fill(t->data().begin(), t->data().end(), 0.0);
  }
  Graph<double> g;
  for (double v : net.embed(g, random_batch(4, 2, 2)).data()) EXPECT_EQ(v, 0.0);
}

TEST(MappingEmbed, IdentityWeightsPassPositiveInputs) {
  Rng rng(1);
  MappingNetwork<double> net(small_config(3, 3), rng);
  auto params = net.named_parameters();
  T* w = param(params, "mapping.embed.weight");
  T* b = param(params, "mapping.embed.bias");
  std::fill(b->data().begin(), b->data().end(), 0.0);
  // Stored weights are scaled by 1/sqrt(fan_in) at run time.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) w->data()[i * 3 + j] = i == j ? std::sqrt(3.0) : 0.0;
  const T x({2, 3}, {0.5, 1.0, 2.0, 3.0, 0.25, 0.125});
  Graph<double> g;
  const T h = net.embed(g, x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(h.at(i), x.at(i), 1e-12);
}

TEST(MappingEmbed, RejectsWrongInputWidth) {
  Rng rng(1);
  MappingNetwork<double> net(small_config(), rng);
  Graph<double> g;
  EXPECT_THROW(net.embed(g, random_batch(4, 3, 1)), ShapeError);
}

TEST(MappingIvp, ZeroFieldKeepsInitialState) {
  Rng rng(3);
  MappingNetwork<double> net(small_config(), rng);
  zero_field(net);
  const T x = random_batch(5, 2, 4);
  Graph<double> g;
  const T h0 = net.embed(g, x);
  for (double u : {0.1, 0.5, 1.0}) {
    EXPECT_EQ(net.solve_ivp(g, h0, u).values(), h0.values());
    EXPECT_EQ(net.map(g, x, u).values(), h0.values());
  }
}

TEST(MappingIvp, RejectsUOutsideUnitInterval) {
  Rng rng(3);
  MappingNetwork<double> net(small_config(), rng);
  Graph<double> g;
  EXPECT_THROW(net.map(g, random_batch(2, 2, 1), 1.5), RangeError);
}

TEST(MappingIvp, SplittingTheIntervalMatchesOneSolve) {
  Rng rng(5);
  MappingConfig cfg = small_config();
  cfg.solver.steps = 8;
  MappingNetwork<double> whole(cfg, rng);
  // Same parameters, half the steps per sub-interval.
  cfg.solver.steps = 4;
  Rng same(5);
  const MappingNetwork<double> half(cfg, same);
  const T x = random_batch(3, 2, 6);
  Graph<double> g;
  const double u = 0.8;
  const T h0 = whole.embed(g, x);
  const T direct = whole.solve_ivp(g, h0, u);
  const T split = half.solve_between(g, half.solve_between(g, h0, 0.0, u / 2), u / 2, u);
  for (std::size_t i = 0; i < direct.numel(); ++i) EXPECT_NEAR(direct.at(i), split.at(i), 1e-6);
}

TEST(MappingIvp, TrajectoryIsLipschitzInU) {
  Rng rng(8);
  MappingNetwork<double> net(small_config(), rng);
  const T x = random_batch(4, 2, 9);
  Graph<double> g;
  // L bounds the field's norm along the trajectory.
  double lipschitz = 0.0;
  for (int i = 0; i <= 20; ++i) {
    const double t = i / 20.0;
    const T r = net.field(g, net.map(g, x, t), t);
    double n2 = 0.0;
    for (double v : r.data()) n2 += v * v;
    lipschitz = std::max(lipschitz, std::sqrt(n2));
  }
  const double delta = 1e-3;
  for (double u : {0.1, 0.4, 0.7, 0.95}) {
    const T a = net.map(g, x, u), b = net.map(g, x, u + delta);
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) d2 += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
    EXPECT_LE(std::sqrt(d2), 10.0 * lipschitz * delta) << u;
  }
}

TEST(MappingIvp, FieldEvaluationsMatchTheSolver) {
  Rng rng(2);
  MappingNetwork<double> net(small_config(), rng);
  Graph<double> g;
  net.map(g, random_batch(2, 2, 3), 0.7);
  EXPECT_EQ(net.field_evaluations(), 32u);
  net.reset_counters();
  net.map(g, random_batch(2, 2, 3), 0.0);
  EXPECT_EQ(net.field_evaluations(), 0u);
}

TEST(MappingIvp, DeterministicForFixedParameters) {
  Rng rng(2);
  MappingNetwork<double> net(small_config(), rng);
  const T x = random_batch(3, 2, 4);
  Graph<double> g1, g2;
  EXPECT_EQ(net.map(g1, x, 0.6).values(), net.map(g2, x, 0.6).values());
}

TEST(MappingGradients, NodeParametersMatchFiniteDifferences) {
  for (SolverKind kind : {SolverKind::kRk4, SolverKind::kEuler}) {
    Rng rng(12);
    MappingConfig cfg = small_config(2, 4);
    cfg.solver = SolverSpec{kind, 3};
    MappingNetwork<double> net(cfg, rng);
    for (auto& [name, t] : net.named_parameters())
      if (name.ends_with("bias")) rng.fill_normal(t->data(), 0.0, 0.3);
    const T x = random_batch(3, 2, 13);
    const T w = random_batch(3, 4, 14);
    const auto report = gradcheck(
        "map", [&](Graph<double>& g) { return g.sum(g.mul(net.map(g, x, 0.7), w)); },
        param_tensors(net.named_parameters()), GradcheckOptions{1e-3, 1e-3});
    EXPECT_GT(report.checked, 0u);
    EXPECT_LT(report.max_rel_error, 1e-3) << solver_name(kind);
  }
}

TEST(MlpMapping, ShapeAndDistinctFromNode) {
  Rng rng(4);
  MappingConfig cfg = small_config();
  MappingNetwork<double> node(cfg, rng);
  cfg.kind = MappingKind::kMlp;
  Rng same(4);
  const MappingNetwork<double> mlp(cfg, same);
  const T x = random_batch(5, 2, 1);
  Graph<double> g;
  const T a = mlp.map(g, x, 0.5);
  ASSERT_EQ(a.shape(), (Shape{5, cfg.hidden_dim}));
  const T b = node.map(g, x, 0.5);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a.at(i) - b.at(i));
  EXPECT_GT(diff, 1e-6);
}

TEST(MlpMapping, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  MappingConfig cfg = small_config(2, 4);
  cfg.kind = MappingKind::kMlp;
  MappingNetwork<double> net(cfg, rng);
  for (auto& [name, t] : net.named_parameters())
    if (name.ends_with("bias")) rng.fill_normal(t->data(), 0.0, 0.3);
  const T x = random_batch(3, 2, 7);
  const T w = random_batch(3, 4, 8);
  const auto report = gradcheck(
      "mlp", [&](Graph<double>& g) { return g.sum(g.mul(net.map(g, x, 0.4), w)); },
      param_tensors(net.named_parameters()), GradcheckOptions{1e-3, 1e-3});
  EXPECT_LT(report.max_rel_error, 1e-3);
}

}  // namespace
}  // namespace spigan
