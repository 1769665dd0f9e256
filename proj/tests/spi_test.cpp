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

#include "spigan/spi.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "spigan/error.hpp"
#include "spigan/random.hpp"

namespace spigan {
namespace {

using T = Tensor<double>;

T point(double x, double y) { return T({1, 2}, {x, y}); }

void expect_near(const T& a, const T& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.at(i), b.at(i), tol) << "index " << i;
}

TEST(Interpolate, EndpointsReturnTheInputs) {
  const T x0 = point(2, 0), xT = point(0, 2);
  EXPECT_EQ(interpolate(x0, xT, 1.0).values(), x0.values());
  EXPECT_EQ(interpolate(x0, xT, 0.0).values(), xT.values());
}

TEST(Interpolate, MidpointAndThreeQuarters) {
  const T x0 = point(2, 0), xT = point(0, 2);
  expect_near(interpolate(x0, xT, 0.5), point(1, 1), 1e-15);
  expect_near(interpolate(x0, xT, 0.75), point(1.5, 0.5), 1e-15);
}

TEST(Interpolate, RejectsMismatchedShapesAndBadU) {
  EXPECT_THROW(interpolate(T({1, 2}), T({2, 2}), 0.5), ShapeError);
  EXPECT_THROW(interpolate(point(0, 0), point(1, 1), 1.5), RangeError);
  EXPECT_THROW(interpolate(point(0, 0), point(1, 1), -0.1), RangeError);
}

TEST(SpiOdeStep, MatchesInterpolationAtShiftedPoint) {
  const T x0 = point(2, 0), xT = point(0, 2);
  const T i25 = interpolate(x0, xT, 0.25);
  expect_near(spi_ode_step(i25, x0, xT, 0.5), point(1.5, 0.5), 1e-15);
  expect_near(spi_ode_step(i25, x0, xT, 0.5), interpolate(x0, xT, 0.75), 1e-15);
}

TEST(SpiOdeStep, ZeroStepIsIdentity) {
  const T x0 = point(2, 0), xT = point(0, 2);
  const T i = interpolate(x0, xT, 0.3);
  EXPECT_EQ(spi_ode_step(i, x0, xT, 0.0).values(), i.values());
}

TEST(SpiOdeStep, TwoQuarterStepsEqualOneHalfStep) {
  const T x0 = point(2, 0), xT = point(0, 2);
  const T i = interpolate(x0, xT, 0.25);
  EXPECT_EQ(spi_ode_step(spi_ode_step(i, x0, xT, 0.25), x0, xT, 0.25).values(), spi_ode_step(i, x0, xT, 0.5).values());
}

TEST(SpiProperties, DistanceLawAndMidpointOnRandomPairs) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    T x0({1, 5}), xT({1, 5});
    rng.fill_normal(x0.data());
    rng.fill_normal(xT.data());
    const double u = rng.uniform(), v = rng.uniform();
    double gap = 0.0, dist = 0.0;
    const T iu = interpolate(x0, xT, u);
    for (std::size_t k = 0; k < 5; ++k) {
      gap += (x0.at(k) - xT.at(k)) * (x0.at(k) - xT.at(k));
      dist += (iu.at(k) - x0.at(k)) * (iu.at(k) - x0.at(k));
    }
    EXPECT_NEAR(std::sqrt(dist), (1.0 - u) * std::sqrt(gap), 1e-5);
    const T mid = interpolate(x0, xT, 0.5 * (u + v));
    const T iv = interpolate(x0, xT, v);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(mid.at(k), 0.5 * (iu.at(k) + iv.at(k)), 1e-6);
  }
}

TEST(SampleU, FixedModeAlwaysReturnsItsValue) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_u(FixedU{0.5}, rng), 0.5);
}

TEST(SampleU, FixedValueOutsideRangeIsAConfigError) {
  Rng rng(1);
  EXPECT_THROW(sample_u(FixedU{0.0}, rng), ConfigError);
  EXPECT_THROW(sample_u(FixedU{1.5}, rng), ConfigError);
  EXPECT_NO_THROW(sample_u(FixedU{1.0}, rng));
}

TEST(SampleU, RandomDrawsAreUniformOnHalfOpenInterval) {
  Rng rng(2);
  double sum = 0.0, lo = 1.0, hi = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = sample_u(RandomU{}, rng);
    sum += u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
  EXPECT_GT(lo, 0.0);
  EXPECT_LE(hi, 1.0);
}

TEST(SampleU, RandomSequenceIsReproducible) {
  Rng a(7), b(7);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_u(RandomU{}, a), sample_u(RandomU{}, b));
}

TEST(InterpolatedBatch, HoldsTheBlend) {
  Rng rng(3);
  Tensor<float> x0({16, 2}), xT({16, 2});
  rng.fill_normal(x0.data());
  rng.fill_normal(xT.data());
  const auto batch = make_interpolated_batch(x0, xT, 0.3);
  EXPECT_EQ(batch.u, 0.3);
  for (std::size_t i = 0; i < batch.iu.numel(); ++i) {
    EXPECT_NEAR(batch.iu.at(i), 0.3 * x0.at(i) + 0.7 * xT.at(i), 1e-6);
  }
}

}  // namespace
}  // namespace spigan
