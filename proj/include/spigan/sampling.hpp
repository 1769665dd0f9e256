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

// Single-pass generation and latent-space traversals.
//
// Every frame costs exactly one generator forward pass; the mapping's IVP
// runs on h(0) = o(z) and only h(u) (h(1) for plain sampling) reaches the
// generator.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spigan/autodiff.hpp"
#include "spigan/diffusion.hpp"
#include "spigan/error.hpp"
#include "spigan/random.hpp"
#include "spigan/training.hpp"

namespace spigan {

enum class SampleMode { kStandard, kVaryU, kZInterp, kHInterp };

inline const char* sample_mode_name(SampleMode m) {
  switch (m) {
    case SampleMode::kStandard: return "standard";
    case SampleMode::kVaryU: return "vary_u";
    case SampleMode::kZInterp: return "z_interp";
    case SampleMode::kHInterp: return "h_interp";
  }
  return "?";
}

inline SampleMode parse_sample_mode(const std::string& s) {
  for (SampleMode m : {SampleMode::kStandard, SampleMode::kVaryU, SampleMode::kZInterp, SampleMode::kHInterp}) {
    if (s == sample_mode_name(m)) return m;
  }
  throw ConfigError("mode", 0, "unknown sampling mode '" + s + "'");
}

struct SampleRequest {
  std::size_t n = 1;
  std::uint64_t seed = 0;
  SampleMode mode = SampleMode::kStandard;
  std::vector<double> u_grid;  // vary_u
  std::size_t steps = 2;       // z_interp, h_interp
  bool use_ema = true;
  bool stochastic = true;      // standard mode only

  void validate() const {
    if (n < 1) throw ConfigError("n", 0, "must be >= 1");
    if (mode == SampleMode::kVaryU) {
      if (u_grid.empty()) throw ConfigError("u_grid", 0, "must not be empty");
      for (std::size_t i = 0; i < u_grid.size(); ++i) {
        const double u = u_grid[i];
        if (!(u >= 0.0 && u <= 1.0)) throw ConfigError("u_grid", 0, "value " + std::to_string(u) + " outside [0,1]");
        if (i > 0 && !(u > u_grid[i - 1])) throw ConfigError("u_grid", 0, "values must be strictly ascending");
      }
    }
    if ((mode == SampleMode::kZInterp || mode == SampleMode::kHInterp) && steps < 2) {
      throw ConfigError("steps", 0, "interpolation needs at least 2 steps");
    }
  }
};

struct SampleResult {
  std::vector<Tensor<TrainReal>> frames;  // model space, [n, D] each
  std::vector<double> coords;             // u or a per frame; empty for standard
  std::uint64_t generator_calls = 0;
  std::uint64_t field_evaluations = 0;
};

// Noise in data shape with the prior's variance.
inline Tensor<TrainReal> draw_prior_noise(std::size_t n, std::size_t dim, const VpSchedule& sched, Rng& rng) {
  Tensor<TrainReal> z(Shape{n, dim});
  rng.fill_normal(z.data(), 0.0, std::sqrt(sched.sigma2));
  return z;
}

// Read-only view over the live or shadow generator-side networks.
class Sampler {
 public:
  Sampler(const ModelState& state, bool use_ema)
      : mapping_(use_ema ? state.ema_mapping : state.mapping),
        generator_(use_ema ? state.ema_generator : state.generator) {}

  const MappingNetwork<TrainReal>& mapping() const { return mapping_; }
  const Generator<TrainReal>& generator() const { return generator_; }

  Tensor<TrainReal> latent(const Tensor<TrainReal>& z, double u) const {
    Graph<TrainReal> g;
    typename Graph<TrainReal>::NoGrad off(g);
    return mapping_.map(g, z, u);
  }

  Tensor<TrainReal> render(const Tensor<TrainReal>& h, Rng& rng, bool stochastic) const {
    Graph<TrainReal> g;
    typename Graph<TrainReal>::NoGrad off(g);
    return generator_.generate(g, h, rng, stochastic);
  }

  Tensor<TrainReal> render(const Tensor<TrainReal>& h) const {
    Rng unused;
    return render(h, unused, false);
  }

  // generate(map(z, u)).
  Tensor<TrainReal> pipeline(const Tensor<TrainReal>& z, double u, Rng& rng, bool stochastic) const {
    return render(latent(z, u), rng, stochastic);
  }

 private:
  const MappingNetwork<TrainReal>& mapping_;
  const Generator<TrainReal>& generator_;
};

namespace detail {

inline Tensor<TrainReal> lerp(const Tensor<TrainReal>& a, const Tensor<TrainReal>& b, double t) {
  if (a.shape() != b.shape()) throw ShapeError("lerp: shapes differ");
  Tensor<TrainReal> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data()[i] = static_cast<TrainReal>((1.0 - t) * a.data()[i] + t * b.data()[i]);
  }
  return out;
}

inline std::vector<double> interp_grid(std::size_t steps) {
  std::vector<double> a(steps);
  for (std::size_t i = 0; i < steps; ++i) a[i] = static_cast<double>(i) / static_cast<double>(steps - 1);
  a.back() = 1.0;
  return a;
}

}  // namespace detail

// generate(map(z, u)) for each u, noise off.
inline std::vector<Tensor<TrainReal>> vary_u(const Sampler& s, const Tensor<TrainReal>& z, const std::vector<double>& u_grid) {
  std::vector<Tensor<TrainReal>> frames;
  for (const double u : u_grid) frames.push_back(s.render(s.latent(z, u)));
  return frames;
}

// Frames on (1 - a) z1 + a z2 for a uniform grid of `steps` values of a.
inline std::vector<Tensor<TrainReal>> z_interpolate(const Sampler& s, const Tensor<TrainReal>& z1,
                                                    const Tensor<TrainReal>& z2, std::size_t steps) {
  if (steps < 2) throw ConfigError("steps", 0, "interpolation needs at least 2 steps");
  std::vector<Tensor<TrainReal>> frames;
  for (const double a : detail::interp_grid(steps)) frames.push_back(s.render(s.latent(detail::lerp(z1, z2, a), 1.0)));
  return frames;
}

// Frames on (1 - a) h1 + a h2 with h = map(z, 1).
inline std::vector<Tensor<TrainReal>> h_interpolate(const Sampler& s, const Tensor<TrainReal>& z1,
                                                    const Tensor<TrainReal>& z2, std::size_t steps) {
  if (steps < 2) throw ConfigError("steps", 0, "interpolation needs at least 2 steps");
  const Tensor<TrainReal> h1 = s.latent(z1, 1.0);
  const Tensor<TrainReal> h2 = s.latent(z2, 1.0);
  std::vector<Tensor<TrainReal>> frames;
  for (const double a : detail::interp_grid(steps)) frames.push_back(s.render(detail::lerp(h1, h2, a)));
  return frames;
}

// Draws z (and, for interpolations, a second z) from the request's seed and
// runs the requested mode. Counters report work done for this request only.
inline SampleResult sample(const SampleRequest& req, const ModelState& state, const VpSchedule& sched) {
  req.validate();
  const Sampler s(state, req.use_ema);
  const std::uint64_t calls0 = s.generator().calls();
  const std::uint64_t evals0 = s.mapping().field_evaluations();

  Rng rng(req.seed);
  const Tensor<TrainReal> z = draw_prior_noise(req.n, state.data_dim, sched, rng);
  SampleResult r;
  switch (req.mode) {
    case SampleMode::kStandard:
      r.frames.push_back(s.pipeline(z, 1.0, rng, req.stochastic));
      break;
    case SampleMode::kVaryU:
      r.frames = vary_u(s, z, req.u_grid);
      r.coords = req.u_grid;
      break;
    case SampleMode::kZInterp:
    case SampleMode::kHInterp: {
      const Tensor<TrainReal> z2 = draw_prior_noise(req.n, state.data_dim, sched, rng);
      r.frames = req.mode == SampleMode::kZInterp ? z_interpolate(s, z, z2, req.steps) : h_interpolate(s, z, z2, req.steps);
      r.coords = detail::interp_grid(req.steps);
      break;
    }
  }
  r.generator_calls = s.generator().calls() - calls0;
  r.field_evaluations = s.mapping().field_evaluations() - evals0;
  return r;
}

}  // namespace spigan
