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

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spigan/autodiff.hpp"
#include "spigan/random.hpp"

namespace spigan {

// Trainable tensor with value semantics: copying a Parameter copies its
// values, so copying a network yields an independent network.
template <class Real>
class Parameter {
 public:
  Parameter() = default;
  explicit Parameter(Tensor<Real> t) : t_(std::move(t)) { t_.set_requires_grad(true); }

  Parameter(const Parameter& o) : t_(o.t_.defined() ? o.t_.clone() : Tensor<Real>()) {}
  Parameter& operator=(const Parameter& o) {
    if (this != &o) t_ = o.t_.defined() ? o.t_.clone() : Tensor<Real>();
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  operator const Tensor<Real>&() const { return t_; }  // NOLINT(google-explicit-constructor)
  const Tensor<Real>& tensor() const { return t_; }
  Tensor<Real>& tensor() { return t_; }

 private:
  Tensor<Real> t_;
};

template <class Real>
using NamedParams = std::vector<std::pair<std::string, Tensor<Real>*>>;

template <class Real>
Tensor<Real> random_normal(Shape shape, double stddev, Rng& rng) {
  Tensor<Real> t(std::move(shape));
  rng.fill_normal(t.data(), 0.0, stddev);
  return t;
}

// y = x (c W) + b with W of shape (in, out). W is stored with unit variance
// and scaled at runtime by c = gain / sqrt(in) (equalized learning rate), so
// Adam steps have the same relative size in every layer.
template <class Real>
struct Linear {
  Parameter<Real> weight;
  Parameter<Real> bias;
  double weight_scale = 1.0;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0)
      : weight(random_normal<Real>({in, out}, 1.0, rng)),
        bias(Tensor<Real>(Shape{out})),
        weight_scale(gain / std::sqrt(static_cast<double>(in))) {}

  std::size_t in_features() const { return weight.tensor().dim(0); }
  std::size_t out_features() const { return weight.tensor().dim(1); }

  // The runtime-scaled weight c W.
  Tensor<Real> scaled_weight(Graph<Real>& g) const { return g.scale(weight, weight_scale); }

  Tensor<Real> operator()(Graph<Real>& g, const Tensor<Real>& x) const {
    return g.add(g.matmul(x, scaled_weight(g)), bias);
  }

  void collect(NamedParams<Real>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".weight", &weight.tensor());
    out.emplace_back(prefix + ".bias", &bias.tensor());
  }
};

// Copyable atomic counter (copies start from the source's current value).
class CallCounter {
 public:
  CallCounter() = default;
  CallCounter(const CallCounter& o) : n_(o.value()) {}
  CallCounter& operator=(const CallCounter& o) {
    n_.store(o.value(), std::memory_order_relaxed);
    return *this;
  }

  void increment(std::uint64_t by = 1) const { n_.fetch_add(by, std::memory_order_relaxed); }
  std::uint64_t value() const { return n_.load(std::memory_order_relaxed); }
  void reset() const { n_.store(0, std::memory_order_relaxed); }

 private:
  mutable std::atomic<std::uint64_t> n_{0};
};

template <class Real>
void zero_grads(const NamedParams<Real>& params) {
  for (auto& [name, t] : params) t->zero_grad();
}

template <class Real>
double grad_norm(const NamedParams<Real>& params) {
  double acc = 0.0;
  for (const auto& [name, t] : params) {
    for (const Real g : t->grad()) acc += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(acc);
}

}  // namespace spigan
