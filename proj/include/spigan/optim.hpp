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

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spigan/error.hpp"
#include "spigan/nn.hpp"

namespace spigan {

struct AdamHyper {
  double lr = 0.0025;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// One bias-corrected Adam update at step t >= 1. An empty `grads` span is
// treated as all zeros.
template <class Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, std::span<Real> m, std::span<Real> v,
               const AdamHyper& hp, std::int64_t t) {
  if (m.size() != params.size() || v.size() != params.size() || (!grads.empty() && grads.size() != params.size())) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  }
  if (t < 1) throw RangeError("adam_step: step must be >= 1");
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double gr = grads.empty() ? 0.0 : static_cast<double>(grads[i]);
    const double mi = hp.beta1 * static_cast<double>(m[i]) + (1.0 - hp.beta1) * gr;
    const double vi = hp.beta2 * static_cast<double>(v[i]) + (1.0 - hp.beta2) * gr * gr;
    m[i] = static_cast<Real>(mi);
    v[i] = static_cast<Real>(vi);
    const double upd = hp.lr * (mi / bc1) / (std::sqrt(vi / bc2) + hp.eps);
    params[i] = static_cast<Real>(static_cast<double>(params[i]) - upd);
  }
}

// Adam moments for an ordered parameter group. Parameters are passed to
// each step rather than stored, so the optimizer holds no pointers into
// the networks it updates.
template <class Real>
class Adam {
 public:
  Adam() = default;
  Adam(const NamedParams<Real>& params, AdamHyper hp) : hp_(hp) {
    for (const auto& [name, t] : params) {
      names_.push_back(name);
      m_.emplace_back(t->numel(), Real(0));
      v_.emplace_back(t->numel(), Real(0));
    }
  }

  void step(const NamedParams<Real>& params) {
    if (params.size() != m_.size()) throw ShapeError("adam: parameter group changed size");
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<Real>& p = *params[i].second;
      adam_step<Real>(p.data(), p.grad(), m_[i], v_[i], hp_, t_);
    }
  }

  const AdamHyper& hyper() const { return hp_; }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::size_t size() const { return m_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::vector<Real>& first_moment(std::size_t i) { return m_.at(i); }
  std::vector<Real>& second_moment(std::size_t i) { return v_.at(i); }
  const std::vector<Real>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<Real>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  AdamHyper hp_;
  std::vector<std::string> names_;
  std::vector<std::vector<Real>> m_;
  std::vector<std::vector<Real>> v_;
  std::int64_t t_ = 0;
};

// shadow <- decay * shadow + (1 - decay) * live
template <class Real>
void ema_update(std::span<Real> shadow, std::span<const Real> live, double decay) {
  if (shadow.size() != live.size()) throw ShapeError("ema_update: shadow and live sizes differ");
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    shadow[i] = static_cast<Real>(decay * static_cast<double>(shadow[i]) + (1.0 - decay) * static_cast<double>(live[i]));
  }
}

template <class Real>
void ema_update(const NamedParams<Real>& shadow, const NamedParams<Real>& live, double decay) {
  if (shadow.size() != live.size()) throw ShapeError("ema_update: parameter groups differ");
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    ema_update<Real>(shadow[i].second->data(), std::span<const Real>(live[i].second->data()), decay);
  }
}

}  // namespace spigan
