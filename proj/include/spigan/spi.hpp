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

// Straight-path interpolation i(u) = u x0 + (1 - u) xT between a clean
// batch (u = 1) and its diffused endpoint (u = 0).

#pragma once

#include <string>
#include <variant>

#include "spigan/autodiff.hpp"
#include "spigan/error.hpp"
#include "spigan/random.hpp"

namespace spigan {

namespace detail {
template <class Real>
void check_same_shape(const char* op, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
}
}  // namespace detail

template <class Real>
Tensor<Real> interpolate(const Tensor<Real>& x0, const Tensor<Real>& xT, double u) {
  detail::check_same_shape("interpolate", x0, xT);
  if (!(u >= 0.0 && u <= 1.0)) throw RangeError("interpolate: u=" + std::to_string(u) + " outside [0,1]");
  Tensor<Real> out(x0.shape());
  auto dst = out.data();
  const auto a = x0.data();
  const auto b = xT.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = static_cast<Real>(u * static_cast<double>(a[i]) + (1.0 - u) * static_cast<double>(b[i]));
  }
  return out;
}

// Euler step of di/du = x0 - xT. The field is constant, so the step is
// exact for any h.
template <class Real>
Tensor<Real> spi_ode_step(const Tensor<Real>& iu, const Tensor<Real>& x0, const Tensor<Real>& xT, double h) {
  detail::check_same_shape("spi_ode_step", iu, x0);
  detail::check_same_shape("spi_ode_step", x0, xT);
  Tensor<Real> out(iu.shape());
  auto dst = out.data();
  const auto i = iu.data();
  const auto a = x0.data();
  const auto b = xT.data();
  for (std::size_t k = 0; k < dst.size(); ++k) {
    dst[k] = static_cast<Real>(static_cast<double>(i[k]) +
                               h * (static_cast<double>(a[k]) - static_cast<double>(b[k])));
  }
  return out;
}

struct RandomU {};
struct FixedU {
  double value = 0.5;
};
using UMode = std::variant<RandomU, FixedU>;

inline void validate_u_mode(const UMode& mode) {
  if (const auto* f = std::get_if<FixedU>(&mode)) {
    if (!(f->value > 0.0 && f->value <= 1.0)) {
      throw ConfigError("u_mode", 0, "fixed value " + std::to_string(f->value) + " outside (0,1]");
    }
  }
}

// One interpolation point per mini-batch, in (0, 1].
inline double sample_u(const UMode& mode, Rng& rng) {
  if (const auto* f = std::get_if<FixedU>(&mode)) {
    validate_u_mode(mode);
    return f->value;
  }
  return 1.0 - rng.uniform();
}

template <class Real>
struct InterpolatedBatch {
  Tensor<Real> x0;
  Tensor<Real> xT;
  double u = 1.0;
  Tensor<Real> iu;
};

template <class Real>
InterpolatedBatch<Real> make_interpolated_batch(Tensor<Real> x0, Tensor<Real> xT, double u) {
  Tensor<Real> iu = interpolate(x0, xT, u);
  return {std::move(x0), std::move(xT), u, std::move(iu)};
}

}  // namespace spigan
