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

// Variance-preserving forward diffusion with an affine noise rate
// beta(t) = beta_min + t (beta_max - beta_min) on normalized time t in [0,1].
// Only the closed-form perturbation kernel is used; no path simulation.

#pragma once

#include <cmath>
#include <string>

#include "spigan/autodiff.hpp"
#include "spigan/error.hpp"
#include "spigan/random.hpp"

namespace spigan {

struct VpSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double sigma2 = 1.0;  // prior variance; always 1 for VP

  void validate() const {
    if (!(beta_min > 0.0) || !(beta_min < beta_max)) {
      throw RangeError("vp schedule: need 0 < beta_min < beta_max, got beta_min=" + std::to_string(beta_min) +
                       " beta_max=" + std::to_string(beta_max));
    }
    if (sigma2 != 1.0) throw RangeError("vp schedule: sigma2 must be 1.0");
  }

  // B(t) = integral of beta over [0, t].
  double integral(double t) const { return beta_min * t + 0.5 * (beta_max - beta_min) * t * t; }
};

struct KernelCoeffs {
  double t = 0.0;
  double mean_coef = 1.0;  // exp(-B(t)/2)
  double var = 0.0;        // 1 - exp(-B(t))
};

namespace detail {
inline void check_unit_time(const char* what, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw RangeError(std::string(what) + ": time " + std::to_string(t) + " outside [0,1]");
}
}  // namespace detail

inline double beta(double s, const VpSchedule& sched = {}) {
  detail::check_unit_time("beta", s);
  return sched.beta_min + s * (sched.beta_max - sched.beta_min);
}

inline KernelCoeffs kernel(double t, const VpSchedule& sched = {}) {
  detail::check_unit_time("kernel", t);
  const double b = sched.integral(t);
  return KernelCoeffs{t, std::exp(-0.5 * b), -std::expm1(-b)};
}

// x_t = mean_coef(t) x0 + sqrt(var(t)) eps, eps ~ N(0, I).
template <class Real>
Tensor<Real> diffuse(const Tensor<Real>& x0, double t, const VpSchedule& sched, Rng& rng) {
  const KernelCoeffs k = kernel(t, sched);
  const double sd = std::sqrt(k.var);
  Tensor<Real> out(x0.shape());
  auto dst = out.data();
  const auto src = x0.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = static_cast<Real>(k.mean_coef * static_cast<double>(src[i]) + sd * rng.normal());
  }
  return out;
}

// One-shot noising of a clean batch to the t = 1 endpoint.
template <class Real>
Tensor<Real> diffuse_to_prior(const Tensor<Real>& x0, const VpSchedule& sched, Rng& rng) {
  return diffuse(x0, 1.0, sched, rng);
}

}  // namespace spigan
