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

// Adversarial losses and regularizers, computed in logit space.

#pragma once

#include <cmath>
#include <cstddef>

#include "spigan/autodiff.hpp"

namespace spigan {

// Logits are clamped to +/- this bound so every log(sigmoid) argument
// stays >= 1e-12.
inline constexpr double kLogitClamp = 27.631021115928547;

// mean(-log s(real)) + mean(-log(1 - s(fake))), s = sigmoid.
template <class Real>
Tensor<Real> d_loss_from_logits(Graph<Real>& g, const Tensor<Real>& real_logits, const Tensor<Real>& fake_logits) {
  const Tensor<Real> real_term = g.mean(g.softplus(g.scale(g.clamp(real_logits, -kLogitClamp, kLogitClamp), -1.0)));
  const Tensor<Real> fake_term = g.mean(g.softplus(g.clamp(fake_logits, -kLogitClamp, kLogitClamp)));
  return g.add(real_term, fake_term);
}

// Non-saturating generator loss mean(-log s(fake)).
template <class Real>
Tensor<Real> g_loss_from_logits(Graph<Real>& g, const Tensor<Real>& fake_logits) {
  return g.mean(g.softplus(g.scale(g.clamp(fake_logits, -kLogitClamp, kLogitClamp), -1.0)));
}

// `critic` is any callable (Graph<Real>&, const Tensor<Real>&, double u) -> logits.
template <class Real, class Critic>
Tensor<Real> d_loss(Graph<Real>& g, const Critic& critic, const Tensor<Real>& real_iu, const Tensor<Real>& fake_iu,
                    double u) {
  return d_loss_from_logits(g, critic(g, real_iu, u), critic(g, fake_iu, u));
}

template <class Real, class Critic>
Tensor<Real> g_loss(Graph<Real>& g, const Critic& critic, const Tensor<Real>& fake_iu, double u) {
  return g_loss_from_logits(g, critic(g, fake_iu, u));
}

// lambda * mean_batch ||d logit / d input||^2, given logits already computed
// from `real` (a leaf that requires grad). Differentiable w.r.t. the critic.
template <class Real>
Tensor<Real> r1_from_logits(Graph<Real>& g, const Tensor<Real>& logits, const Tensor<Real>& real, double lambda) {
  const Tensor<Real> total = g.sum(logits);
  const Tensor<Real> grad = g.vjp(total, real, Tensor<Real>(total.shape(), Real(1)), /*create_graph=*/true);
  return g.scale(g.sum(g.square(grad)), lambda / static_cast<double>(real.dim(0)));
}

template <class Real, class Critic>
Tensor<Real> r1_penalty(Graph<Real>& g, const Critic& critic, const Tensor<Real>& real_iu, double u, double lambda) {
  Tensor<Real> leaf = real_iu.detach();
  leaf.set_requires_grad(true);
  return r1_from_logits(g, critic(g, leaf, u), leaf, lambda);
}

template <class Real>
struct PathLengthResult {
  Tensor<Real> penalty;       // lambda * mean((l - a)^2), a taken before the update
  Tensor<Real> lengths;       // l per example
  double mean_length = 0.0;
};

// Per example l = ||J^T y|| where J = d gen(h) / d h, via one vector-Jacobian
// product. Updates running_mean <- 0.99 a + 0.01 mean(l). `gen` maps
// (Graph<Real>&, const Tensor<Real>& h) -> output; `h` must be a leaf that
// requires grad and `y` has the output's shape.
template <class Real, class GenFn>
PathLengthResult<Real> path_length_penalty(Graph<Real>& g, GenFn&& gen, const Tensor<Real>& h, const Tensor<Real>& y,
                                           double& running_mean, double lambda) {
  const Tensor<Real> out = gen(g, h);
  const Tensor<Real> jty = g.vjp(out, h, y, /*create_graph=*/lambda != 0.0);
  const Tensor<Real> lengths = g.sqrt(g.sum(g.square(jty), 1));
  double mean_len = 0.0;
  for (const Real l : lengths.data()) mean_len += l;
  mean_len /= static_cast<double>(lengths.numel());

  PathLengthResult<Real> r;
  r.lengths = lengths;
  r.mean_length = mean_len;
  if (lambda == 0.0) {
    r.penalty = Tensor<Real>::scalar(Real(0));
  } else {
    const Tensor<Real> dev = g.affine(lengths, 1.0, -running_mean);
    r.penalty = g.scale(g.mean(g.square(dev)), lambda);
  }
  running_mean = 0.99 * running_mean + 0.01 * mean_len;
  return r;
}

}  // namespace spigan
