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

// Central finite-difference verification of reverse-mode gradients.
//
// Checks run in double precision. A perturbation that flips the sign
// pattern of any leaky_relu input is skipped, since the function is not
// differentiable across the kink.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <tuple>
#include <string>
#include <vector>

#include "spigan/autodiff.hpp"
#include "spigan/losses.hpp"
#include "spigan/models.hpp"
#include "spigan/nn.hpp"
#include "spigan/node.hpp"
#include "spigan/random.hpp"

namespace spigan {

struct GradcheckReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

struct GradcheckOptions {
  double step = 1e-3;
  double floor = 1e-3;  // denominator floor of the relative error
};

// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

using ScalarFn = std::function<Tensor<double>(Graph<double>&)>;

// Compares d fn / d inputs from backward() against central differences.
// `fn` must read the inputs through shared handles (e.g. network
// parameters); they are perturbed in place and restored.
inline GradcheckReport gradcheck(const std::string& name, const ScalarFn& fn, const std::vector<Tensor<double>>& inputs,
                                 const GradcheckOptions& opt = {}) {
  GradcheckReport rep;
  rep.name = name;
  std::vector<bool> saved_rg;
  for (const auto& t : inputs) {
    saved_rg.push_back(t.requires_grad());
    Tensor<double>(t).set_requires_grad(true);
    Tensor<double>(t).zero_grad();
  }
  {
    Graph<double> g;
    const Tensor<double> out = fn(g);
    g.backward(out);
  }
  const auto eval = [&](std::uint64_t& pattern) {
    // Recording stays on: second-order cases need a graph to take vjps.
    Graph<double> g;
    g.track_activation_pattern(true);
    const double v = fn(g).item();
    pattern = g.activation_pattern();
    return v;
  };
  std::uint64_t base_pattern = 0;
  eval(base_pattern);

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double> t = inputs[k];
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.numel(), 0.0);
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double x = data[i];
      std::uint64_t p_plus = 0, p_minus = 0;
      data[i] = x + opt.step;
      const double f_plus = eval(p_plus);
      data[i] = x - opt.step;
      const double f_minus = eval(p_minus);
      data[i] = x;
      if (p_plus != base_pattern || p_minus != base_pattern) {
        ++rep.skipped;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * opt.step);
      rep.max_rel_error = std::max(rep.max_rel_error, relative_error(analytic[i], numeric, opt.floor));
      ++rep.checked;
    }
    t.zero_grad();
    t.set_requires_grad(saved_rg[k]);
  }
  return rep;
}

inline std::vector<Tensor<double>> param_tensors(const NamedParams<double>& params) {
  std::vector<Tensor<double>> out;
  for (const auto& [name, t] : params) out.push_back(*t);
  return out;
}

namespace detail {

inline Tensor<double> gc_random(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// sum(out * w) with w fixed per case, so every output element carries a
// distinct weight.
inline Tensor<double> gc_project(Graph<double>& g, const Tensor<double>& out, const Tensor<double>& w) {
  return g.sum(g.mul(out, w));
}

}  // namespace detail

// One case per op kind, the losses and regularizers (including the
// double-backward paths), and each network with respect to its parameters
// and inputs.
inline std::vector<GradcheckReport> run_gradcheck_suite(std::uint64_t seed = 0, const GradcheckOptions& opt = {}) {
  using detail::gc_project;
  using detail::gc_random;
  using T = Tensor<double>;
  using G = Graph<double>;
  Rng rng(seed);
  std::vector<GradcheckReport> out;

  auto unary = [&](const std::string& name, Shape shape, double lo, double hi, std::function<T(G&, const T&)> op,
                   Shape out_shape) {
    T x = gc_random(shape, rng, lo, hi);
    T w = gc_random(out_shape, rng);
    out.push_back(gradcheck(name, [=](G& g) { return gc_project(g, op(g, x), w); }, {x}, opt));
  };
  auto binary = [&](const std::string& name, Shape sa, Shape sb, double lo_b, double hi_b,
                    std::function<T(G&, const T&, const T&)> op, Shape out_shape) {
    T a = gc_random(sa, rng);
    T b = gc_random(sb, rng, lo_b, hi_b);
    T w = gc_random(out_shape, rng);
    out.push_back(gradcheck(name, [=](G& g) { return gc_project(g, op(g, a, b), w); }, {a, b}, opt));
  };

  binary("add", {3, 4}, {4}, -1, 1, [](G& g, const T& a, const T& b) { return g.add(a, b); }, {3, 4});
  binary("sub", {3, 1}, {1, 4}, -1, 1, [](G& g, const T& a, const T& b) { return g.sub(a, b); }, {3, 4});
  binary("mul", {3, 4}, {3, 4}, -1, 1, [](G& g, const T& a, const T& b) { return g.mul(a, b); }, {3, 4});
  binary("div", {3, 4}, {4}, 0.5, 2.0, [](G& g, const T& a, const T& b) { return g.div(a, b); }, {3, 4});
  binary("matmul", {3, 5}, {5, 2}, -1, 1, [](G& g, const T& a, const T& b) { return g.matmul(a, b); }, {3, 2});
  binary("matmul_tn", {5, 3}, {5, 2}, -1, 1, [](G& g, const T& a, const T& b) { return g.matmul(a, b, true, false); }, {3, 2});
  binary("matmul_nt", {3, 5}, {2, 5}, -1, 1, [](G& g, const T& a, const T& b) { return g.matmul(a, b, false, true); }, {3, 2});
  binary("matmul_tt", {5, 3}, {2, 5}, -1, 1, [](G& g, const T& a, const T& b) { return g.matmul(a, b, true, true); }, {3, 2});
  unary("transpose", {3, 5}, -1, 1, [](G& g, const T& x) { return g.transpose(x); }, {5, 3});
  unary("leaky_relu", {4, 6}, -1, 1, [](G& g, const T& x) { return g.leaky_relu(x); }, {4, 6});
  unary("square", {4, 3}, -1, 1, [](G& g, const T& x) { return g.square(x); }, {4, 3});
  unary("sqrt", {4, 3}, 0.2, 2.0, [](G& g, const T& x) { return g.sqrt(x); }, {4, 3});
  unary("exp", {4, 3}, -1, 1, [](G& g, const T& x) { return g.exp(x); }, {4, 3});
  unary("log", {4, 3}, 0.2, 2.0, [](G& g, const T& x) { return g.log(x); }, {4, 3});
  unary("sigmoid", {4, 3}, -4, 4, [](G& g, const T& x) { return g.sigmoid(x); }, {4, 3});
  unary("softplus", {4, 3}, -4, 4, [](G& g, const T& x) { return g.softplus(x); }, {4, 3});
  // Bounds at +/-0.5 split the inputs into clipped and pass-through; the
  // chance of landing within one step of a bound is negligible.
  unary("clamp", {4, 3}, -1, 1, [](G& g, const T& x) { return g.clamp(x, -0.5, 0.5); }, {4, 3});
  unary("affine", {4, 3}, -1, 1, [](G& g, const T& x) { return g.affine(x, -1.7, 0.3); }, {4, 3});
  unary("sum", {4, 3}, -1, 1, [](G& g, const T& x) { return g.square(g.sum(x)); }, {});
  unary("sum_axis", {4, 3}, -1, 1, [](G& g, const T& x) { return g.sum(x, 0); }, {3});
  unary("mean", {4, 3}, -1, 1, [](G& g, const T& x) { return g.square(g.mean(x)); }, {});
  unary("broadcast", {1, 3}, -1, 1, [](G& g, const T& x) { return g.broadcast_to(x, Shape{4, 3}); }, {4, 3});
  unary("sum_to", {4, 3}, -1, 1, [](G& g, const T& x) { return g.sum_to(x, Shape{1, 3}); }, {1, 3});
  unary("reshape", {4, 3}, -1, 1, [](G& g, const T& x) { return g.reshape(x, Shape{2, 6}); }, {2, 6});
  binary("concat", {3, 2}, {3, 4}, -1, 1, [](G& g, const T& a, const T& b) { return g.concat({a, b}, 1); }, {3, 6});
  unary("slice", {4, 5}, -1, 1, [](G& g, const T& x) { return g.slice(x, 1, 1, 4); }, {4, 3});
  unary("pad", {4, 3}, -1, 1, [](G& g, const T& x) { return g.pad(x, 1, 2, 6); }, {4, 6});
  binary("lincomb", {3, 4}, {3, 4}, -1, 1,
         [](G& g, const T& a, const T& b) { return g.lincomb({a, b, a}, {0.5, -2.0, 1.5}); }, {3, 4});

  // Losses.
  {
    T real = gc_random({5}, rng, -3, 3), fake = gc_random({5}, rng, -3, 3);
    out.push_back(gradcheck("d_loss", [=](G& g) { return d_loss_from_logits(g, real, fake); }, {real, fake}, opt));
    out.push_back(gradcheck("g_loss", [=](G& g) { return g_loss_from_logits(g, fake); }, {fake}, opt));
  }

  const std::size_t batch = 3;
  Rng init(mix_seed(seed, 1));

  // Mapping network: NODE trajectory (RK4 and Euler) and the MLP ablation.
  for (const auto& [label, kind, solver] :
       std::vector<std::tuple<std::string, MappingKind, SolverKind>>{{"mapping.node_rk4", MappingKind::kNode, SolverKind::kRk4},
                                                                    {"mapping.node_euler", MappingKind::kNode, SolverKind::kEuler},
                                                                    {"mapping.mlp", MappingKind::kMlp, SolverKind::kRk4}}) {
    MappingConfig mc{2, 6, 2, SolverSpec{solver, 3}, kind};
    auto net = std::make_shared<MappingNetwork<double>>(mc, init);
    T x = gc_random({batch, 2}, rng);
    T w = gc_random({batch, 6}, rng);
    auto inputs = param_tensors(net->named_parameters());
    inputs.push_back(x);
    out.push_back(gradcheck(label, [=](G& g) { return gc_project(g, net->map(g, x, 0.7), w); }, inputs, opt));
  }

  // Generator with noise injection; the noise draw is fixed per evaluation.
  auto gen = std::make_shared<Generator<double>>(GeneratorConfig{4, 8, 2, 2}, init);
  for (auto& [name, t] : gen->named_parameters()) {
    if (name.ends_with("noise_gain")) for (auto& v : t->data()) v = rng.uniform(-0.5, 0.5);
  }
  {
    T h = gc_random({batch, 4}, rng);
    T w = gc_random({batch, 2}, rng);
    auto inputs = param_tensors(gen->named_parameters());
    inputs.push_back(h);
    out.push_back(gradcheck(
        "generator",
        [=](G& g) {
          Rng noise(99);
          return gc_project(g, gen->generate(g, h, noise, true), w);
        },
        inputs, opt));
  }

  auto disc = std::make_shared<Discriminator<double>>(DiscriminatorConfig{2, 8, 2, 4}, init);
  {
    T x = gc_random({batch, 2}, rng);
    T w = gc_random({batch}, rng);
    auto inputs = param_tensors(disc->named_parameters());
    inputs.push_back(x);
    out.push_back(gradcheck("discriminator", [=](G& g) { return gc_project(g, disc->logits(g, x, 0.3), w); }, inputs, opt));
  }

  // R1 differentiated w.r.t. the discriminator (second order).
  {
    T x = gc_random({batch, 2}, rng);
    out.push_back(gradcheck(
        "r1_penalty",
        [=](G& g) { return r1_penalty(g, [&](G& gg, const T& in, double u) { return disc->logits(gg, in, u); }, x, 0.3, 10.0); },
        param_tensors(disc->named_parameters()), opt));
  }

  // Path-length penalty differentiated w.r.t. the generator (second order).
  {
    T h = gc_random({batch, 4}, rng);
    T y = gc_random({batch, 2}, rng);
    out.push_back(gradcheck(
        "path_length_penalty",
        [=](G& g) {
          T leaf = h.detach();
          leaf.set_requires_grad(true);
          double running = 0.5;
          return path_length_penalty(
                     g, [&](G& gg, const T& hh) { return gen->generate(gg, hh); }, leaf, y, running, 2.0)
              .penalty;
        },
        param_tensors(gen->named_parameters()), opt));
  }
  return out;
}

inline double max_relative_error(const std::vector<GradcheckReport>& reports) {
  double m = 0.0;
  for (const auto& r : reports) m = std::max(m, r.max_rel_error);
  return m;
}

}  // namespace spigan
