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

#include "spigan/autodiff.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "spigan/error.hpp"
#include "spigan/gradcheck.hpp"
#include "spigan/nn.hpp"
#include "spigan/random.hpp"

namespace spigan {
namespace {

using T = Tensor<float>;
using G = Graph<float>;

T leaf(Shape shape, std::vector<float> v) {
  T t(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

TEST(AutodiffForward, LeakyReluUsesSlopePointTwo) {
  G g;
  const T y = g.leaky_relu(T({2}, {-1.0f, 2.0f}));
  EXPECT_FLOAT_EQ(y.at(0), -0.2f);
  EXPECT_FLOAT_EQ(y.at(1), 2.0f);
}

TEST(AutodiffForward, IdentityMatmulReturnsOperand) {
  G g;
  const T eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const T a({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  const T y = g.matmul(eye, a);
  ASSERT_EQ(y.shape(), a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(y.at(i), a.at(i));
}

TEST(AutodiffForward, SigmoidOfZeroIsHalf) {
  G g;
  EXPECT_FLOAT_EQ(g.sigmoid(T::scalar(0.0f)).item(), 0.5f);
}

TEST(AutodiffForward, TransposedMatmulMatchesExplicitTranspose) {
  Rng rng(3);
  Tensor<double> a({4, 3}), b({5, 3});
  rng.fill_normal(a.data());
  rng.fill_normal(b.data());
  Graph<double> g;
  const auto nt = g.matmul(a, b, false, true);
  const auto ref = g.matmul(a, g.transpose(b));
  ASSERT_EQ(nt.shape(), (Shape{4, 5}));
  for (std::size_t i = 0; i < nt.numel(); ++i) EXPECT_NEAR(nt.at(i), ref.at(i), 1e-12);
  const auto tn = g.matmul(g.transpose(a), g.transpose(b), true, false);
  const auto tt = g.matmul(g.transpose(a), b, true, true);
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    EXPECT_NEAR(tn.at(i), ref.at(i), 1e-12);
    EXPECT_NEAR(tt.at(i), ref.at(i), 1e-12);
  }
}

TEST(AutodiffForward, BroadcastingAddsRowVector) {
  G g;
  const T y = g.add(T({2, 3}, {1, 2, 3, 4, 5, 6}), T({3}, {10, 20, 30}));
  EXPECT_EQ(y.values(), (std::vector<float>{11, 22, 33, 14, 25, 36}));
  const T z = g.mul(T({2, 1}, {2, 3}), T({1, 3}, {1, 2, 3}));
  EXPECT_EQ(z.values(), (std::vector<float>{2, 4, 6, 3, 6, 9}));
}

TEST(AutodiffForward, ShapeMismatchNamesOpAndShapes) {
  G g;
  try {
    g.add(T({2, 3}), T({4}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("add"), std::string::npos) << what;
    EXPECT_NE(what.find("[2,3]"), std::string::npos) << what;
    EXPECT_NE(what.find("[4]"), std::string::npos) << what;
  }
  EXPECT_THROW(g.matmul(T({2, 3}), T({2, 3})), ShapeError);
}

TEST(AutodiffForward, ConcatAndSliceRoundTrip) {
  G g;
  const T a({2, 2}, {1, 2, 3, 4});
  const T b({2, 1}, {5, 6});
  const T c = g.concat({a, b}, 1);
  EXPECT_EQ(c.values(), (std::vector<float>{1, 2, 5, 3, 4, 6}));
  EXPECT_EQ(g.slice(c, 1, 2, 3).values(), b.values());
  EXPECT_EQ(g.slice(c, 1, 0, 2).values(), a.values());
}

TEST(AutodiffForward, NoNodeRecordedWithoutRequiresGrad) {
  G g;
  g.add(T({2}, {1, 2}), T({2}, {3, 4}));
  EXPECT_EQ(g.size(), 0u);
  T x = leaf({2}, {1, 2});
  g.add(x, T({2}, {3, 4}));
  EXPECT_EQ(g.size(), 1u);
  {
    G::NoGrad off(g);
    g.add(x, x);
  }
  EXPECT_EQ(g.size(), 1u);
}

TEST(AutodiffForward, ReductionsAccumulateInDouble) {
  // 2^24 + 1 ones: a float running sum stalls at 2^24.
  const std::size_t n = (1u << 24) + 2;
  T x(Shape{n}, 1.0f);
  G g;
  EXPECT_EQ(static_cast<double>(g.sum(x).item()), static_cast<double>(static_cast<float>(n)));
  EXPECT_FLOAT_EQ(g.mean(x).item(), 1.0f);
}

TEST(AutodiffBackward, SumOfSquares) {
  G g;
  T x = leaf({3}, {1, 2, 3});
  g.backward(g.sum(g.square(x)));
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), (std::vector<float>{2, 4, 6}));
}

TEST(AutodiffBackward, MeanSpreadsEvenly) {
  G g;
  T x = leaf({4}, {1, -2, 3, 7});
  g.backward(g.mean(x));
  for (float v : x.grad()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(AutodiffBackward, RepeatedCallsAccumulate) {
  G g;
  T x = leaf({2}, {1, 2});
  const T loss = g.sum(g.square(x));
  g.backward(loss);
  g.backward(loss);
  EXPECT_FLOAT_EQ(x.grad()[0], 4.0f);
  EXPECT_FLOAT_EQ(x.grad()[1], 8.0f);
}

TEST(AutodiffBackward, NonScalarLossIsRejected) {
  G g;
  T x = leaf({2}, {1, 2});
  EXPECT_THROW(g.backward(g.square(x)), AutodiffError);
}

TEST(AutodiffBackward, LeakyReluDerivativeAtZeroIsOne) {
  G g;
  T x = leaf({3}, {0.0f, -1.0f, 1.0f});
  g.backward(g.sum(g.leaky_relu(x)));
  EXPECT_FLOAT_EQ(x.grad()[0], 1.0f);
  EXPECT_FLOAT_EQ(x.grad()[1], 0.2f);
  EXPECT_FLOAT_EQ(x.grad()[2], 1.0f);
}

TEST(AutodiffBackward, BroadcastOperandReceivesSummedGradient) {
  G g;
  T b = leaf({3}, {1, 1, 1});
  const T x({4, 3}, std::vector<float>(12, 2.0f));
  g.backward(g.sum(g.mul(x, b)));
  for (float v : b.grad()) EXPECT_FLOAT_EQ(v, 8.0f);
}

TEST(AutodiffBackward, TwoLayerMlpMatchesFiniteDifferences) {
  Rng rng(11);
  Linear<double> l1(3, 5, rng), l2(5, 1, rng);
  for (auto* p : {&l1.bias.tensor(), &l2.bias.tensor()}) rng.fill_normal(p->data(), 0.0, 0.3);
  Tensor<double> x({6, 3});
  rng.fill_normal(x.data());
  NamedParams<double> params;
  l1.collect(params, "l1");
  l2.collect(params, "l2");
  const auto report = gradcheck(
      "mlp",
      [&](Graph<double>& g) { return g.mean(g.square(l2(g, g.leaky_relu(l1(g, x))))); },
      param_tensors(params), GradcheckOptions{1e-3, 1e-3});
  EXPECT_GT(report.checked, 0u);
  EXPECT_LT(report.max_rel_error, 1e-3);
}

TEST(AutodiffBackward, GradientIsLinearInTheLoss) {
  Rng rng(5);
  Tensor<float> x({8});
  rng.fill_normal(x.data());
  x.set_requires_grad(true);
  auto f = [](G& g, const T& v) { return g.sum(g.mul(g.sigmoid(v), v)); };
  auto h = [](G& g, const T& v) { return g.mean(g.exp(g.scale(v, 0.5))); };
  const double a = 0.7, b = -1.3;

  auto grad_of_loss = [&](auto build) {
    x.zero_grad();
    G g;
    g.backward(build(g));
    return std::vector<float>(x.grad().begin(), x.grad().end());
  };
  const auto gf = grad_of_loss([&](G& g) { return f(g, x); });
  const auto gh = grad_of_loss([&](G& g) { return h(g, x); });
  const auto gc = grad_of_loss([&](G& g) { return g.add(g.scale(f(g, x), a), g.scale(h(g, x), b)); });
  for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gh[i], 1e-6);
}

TEST(AutodiffBackward, DeterministicAcrossRuns) {
  auto run = [] {
    Rng rng(9);
    Linear<float> l(4, 3, rng);
    T x({5, 4});
    rng.fill_normal(x.data());
    G g;
    g.backward(g.sum(g.leaky_relu(l(g, x))));
    std::vector<float> out(l.weight.tensor().grad().begin(), l.weight.tensor().grad().end());
    out.insert(out.end(), l.bias.tensor().grad().begin(), l.bias.tensor().grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(AutodiffVjp, ScaledScalar) {
  G g;
  T x = leaf({}, {2.0f});
  const T y = g.scale(x, 3.0);
  EXPECT_FLOAT_EQ(g.vjp(y, x, T::scalar(1.0f)).item(), 3.0f);
}

TEST(AutodiffVjp, LinearMapGivesTransposeProduct) {
  G g;
  const T w({2, 3}, {1, 2, 3, 4, 5, 6});
  T x = leaf({3, 1}, {0.5f, -1.0f, 2.0f});
  const T y = g.matmul(w, x);
  const T v({2, 1}, {1.0f, -2.0f});
  const T r = g.vjp(y, x, v);
  // W^T v = (1-8, 2-10, 3-12).
  EXPECT_EQ(r.values(), (std::vector<float>{-7.0f, -8.0f, -9.0f}));
}

TEST(AutodiffVjp, GradientPenaltyOfQuadraticIsEightX) {
  Graph<double> g;
  Tensor<double> x({3}, {0.5, -1.0, 2.0});
  x.set_requires_grad(true);
  const auto d = g.sum(g.square(x));
  const auto grad = g.vjp(d, x, Tensor<double>::scalar(1.0), /*create_graph=*/true);
  g.backward(g.sum(g.square(grad)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x.grad()[i], 8.0 * x.at(i), 1e-12);
}

TEST(AutodiffVjp, UnreachableInputIsRejected) {
  G g;
  T x = leaf({2}, {1, 2});
  T other = leaf({2}, {3, 4});
  const T y = g.sum(g.square(x));
  EXPECT_THROW(g.vjp(y, other, T::scalar(1.0f)), AutodiffError);
  EXPECT_THROW(g.vjp(y, x, T({2}, {1, 1})), ShapeError);
}

TEST(AutodiffGradcheck, EveryOpAndNetworkWithinTolerance) {
  const auto reports = run_gradcheck_suite(1);
  ASSERT_FALSE(reports.empty());
  for (const auto& r : reports) {
    EXPECT_GT(r.checked, 0u) << r.name;
    EXPECT_LT(r.max_rel_error, 1e-3) << r.name;
  }
}

}  // namespace
}  // namespace spigan
