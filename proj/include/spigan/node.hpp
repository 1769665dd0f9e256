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

// Fixed-step ODE integration and the neural-ODE mapping network.
//
// The mapping network embeds an input x to h(0) = LeakyReLU(W x + b) and
// evolves it with a learned time-dependent field r(h, t), giving one latent
// trajectory h(u) for u in [0, 1]. Gradients flow through the unrolled
// solver steps.

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "spigan/autodiff.hpp"
#include "spigan/error.hpp"
#include "spigan/nn.hpp"
#include "spigan/random.hpp"

namespace spigan {

enum class SolverKind { kEuler, kRk4 };

struct SolverSpec {
  SolverKind kind = SolverKind::kRk4;
  int steps = 8;

  void validate() const {
    if (steps < 1) throw RangeError("solver: steps must be >= 1, got " + std::to_string(steps));
  }

  // Vector-field evaluations per integration.
  int field_evaluations() const { return kind == SolverKind::kRk4 ? 4 * steps : steps; }
};

inline const char* solver_name(SolverKind k) { return k == SolverKind::kRk4 ? "rk4" : "euler"; }

// Integrates dh/dt = field(g, h, t) from t0 to t1 with `solver.steps`
// uniform steps. `field` is any callable (Graph<Real>&, const Tensor<Real>&,
// double) -> Tensor<Real>.
template <class Real, class Field>
Tensor<Real> integrate(Graph<Real>& g, Field&& field, Tensor<Real> h, double t0, double t1,
                       const SolverSpec& solver) {
  solver.validate();
  const double dt = (t1 - t0) / solver.steps;
  for (int i = 0; i < solver.steps; ++i) {
    const double t = t0 + i * dt;
    if (solver.kind == SolverKind::kEuler) {
      h = g.lincomb({h, field(g, h, t)}, {1.0, dt});
      continue;
    }
    const Tensor<Real> k1 = field(g, h, t);
    const Tensor<Real> k2 = field(g, g.lincomb({h, k1}, {1.0, 0.5 * dt}), t + 0.5 * dt);
    const Tensor<Real> k3 = field(g, g.lincomb({h, k2}, {1.0, 0.5 * dt}), t + 0.5 * dt);
    const Tensor<Real> k4 = field(g, g.lincomb({h, k3}, {1.0, dt}), t + dt);
    h = g.lincomb({h, k1, k2, k3, k4}, {1.0, dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0});
  }
  return h;
}

enum class MappingKind { kNode, kMlp };

inline const char* mapping_name(MappingKind k) { return k == MappingKind::kNode ? "node" : "mlp"; }

struct MappingConfig {
  std::size_t input_dim = 2;
  std::size_t hidden_dim = 32;
  std::size_t depth = 2;  // layers in the vector field r
  SolverSpec solver;
  MappingKind kind = MappingKind::kNode;
};

template <class Real>
class MappingNetwork {
 public:
  MappingNetwork() = default;

  MappingNetwork(const MappingConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.solver.validate();
    if (cfg.input_dim == 0 || cfg.hidden_dim == 0 || cfg.depth == 0) {
      throw RangeError("mapping: input_dim, hidden_dim and depth must be positive");
    }
    embed_ = Linear<Real>(cfg.input_dim, cfg.hidden_dim, rng);
    for (std::size_t i = 0; i < cfg.depth; ++i) {
      field_layers_.emplace_back(cfg.hidden_dim + 1, cfg.hidden_dim, rng);
    }
  }

  const MappingConfig& config() const { return cfg_; }

  // h(0) = LeakyReLU(x W + b).
  Tensor<Real> embed(Graph<Real>& g, const Tensor<Real>& x) const {
    if (x.rank() != 2 || x.dim(1) != cfg_.input_dim) {
      throw ShapeError("mapping.embed: expected [batch," + std::to_string(cfg_.input_dim) + "], got " +
                       shape_str(x.shape()));
    }
    return g.leaky_relu(embed_(g, x));
  }

  // r(h, t): each layer is LeakyReLU(Linear([state; t])).
  Tensor<Real> field(Graph<Real>& g, const Tensor<Real>& h, double t) const {
    field_evals_.increment();
    return stack(g, h, t);
  }

  // h(u) = h0 + integral of r over [0, u].
  Tensor<Real> solve_ivp(Graph<Real>& g, const Tensor<Real>& h0, double u) const {
    if (!(u >= 0.0 && u <= 1.0)) throw RangeError("solve_ivp: u=" + std::to_string(u) + " outside [0,1]");
    if (u == 0.0) return h0;
    return solve_between(g, h0, 0.0, u);
  }

  Tensor<Real> solve_between(Graph<Real>& g, const Tensor<Real>& h, double t0, double t1) const {
    return integrate(
        g, [this](Graph<Real>& gg, const Tensor<Real>& s, double t) { return field(gg, s, t); }, h, t0, t1,
        cfg_.solver);
  }

  // The configured mapping: the NODE trajectory or the MLP ablation.
  Tensor<Real> map(Graph<Real>& g, const Tensor<Real>& x, double u) const {
    if (cfg_.kind == MappingKind::kMlp) return mlp_mapping(g, x, u);
    return solve_ivp(g, embed(g, x), u);
  }

  // Ablation: the same layers applied once as a feed-forward stack over
  // [x; u], with no ODE structure. Parameter shapes match the NODE variant.
  Tensor<Real> mlp_mapping(Graph<Real>& g, const Tensor<Real>& x, double u) const {
    return stack(g, embed(g, x), u);
  }

  std::uint64_t field_evaluations() const { return field_evals_.value(); }
  void reset_counters() const { field_evals_.reset(); }

  NamedParams<Real> named_parameters() {
    NamedParams<Real> out;
    embed_.collect(out, "mapping.embed");
    for (std::size_t i = 0; i < field_layers_.size(); ++i) {
      field_layers_[i].collect(out, "mapping.field." + std::to_string(i));
    }
    return out;
  }

 private:
  // [state; t] W + b is evaluated as state W_h + (t w_t + b), where w_t is
  // the last row of W; t is shared by the batch.
  Tensor<Real> stack(Graph<Real>& g, const Tensor<Real>& h, double t) const {
    const std::size_t d = cfg_.hidden_dim;
    Tensor<Real> cur = h;
    for (const auto& layer : field_layers_) {
      const Tensor<Real> w = layer.scaled_weight(g);
      const Tensor<Real> w_state = g.slice(w, 0, 0, d);
      const Tensor<Real> bias = g.add(g.scale(g.slice(w, 0, d, d + 1), t), layer.bias);
      cur = g.leaky_relu(g.add(g.matmul(cur, w_state), bias));
    }
    return cur;
  }

  MappingConfig cfg_;
  Linear<Real> embed_;
  std::vector<Linear<Real>> field_layers_;
  CallCounter field_evals_;
};

}  // namespace spigan
