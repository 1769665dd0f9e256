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

// Vector-scale generator and time-conditioned discriminator.
//
// The generator follows the StyleGAN2 layout with dense layers: a learned
// constant input, blocks whose pre-activations are modulated by the latent
// h (per-feature scale and shift), and per-block noise with a learned per-feature gain.
// It never sees u directly; time enters only through h(u).

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "spigan/autodiff.hpp"
#include "spigan/error.hpp"
#include "spigan/nn.hpp"
#include "spigan/random.hpp"

namespace spigan {

// Sinusoidal embedding of u in [0, 1]: component 2k is
// sin(1000 u / 10000^(2k/dim)), component 2k+1 the matching cos.
inline std::vector<double> time_embedding(double u, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw ConfigError("time_dim", 0, "must be a positive even integer, got " + std::to_string(dim));
  }
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * k) / static_cast<double>(dim));
    const double arg = 1000.0 * u * freq;
    out[2 * k] = std::sin(arg);
    out[2 * k + 1] = std::cos(arg);
  }
  return out;
}

struct GeneratorConfig {
  std::size_t latent_dim = 32;
  std::size_t width = 64;
  std::size_t blocks = 3;
  std::size_t output_dim = 2;
};

template <class Real>
class Generator {
 public:
  Generator() = default;

  Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.latent_dim == 0 || cfg.width == 0 || cfg.blocks == 0 || cfg.output_dim == 0) {
      throw RangeError("generator: all dimensions must be positive");
    }
    const_input_ = Parameter<Real>(random_normal<Real>({1, cfg.width}, 1.0, rng));
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      Block blk;
      blk.linear = Linear<Real>(cfg.width, cfg.width, rng);
      blk.style_scale = Linear<Real>(cfg.latent_dim, cfg.width, rng);
      blk.style_shift = Linear<Real>(cfg.latent_dim, cfg.width, rng);
      blk.noise_gain = Parameter<Real>(Tensor<Real>(Shape{1}));
      blocks_.push_back(std::move(blk));
    }
    out_ = Linear<Real>(cfg.width, cfg.output_dim, rng);
  }

  const GeneratorConfig& config() const { return cfg_; }

  // With `stochastic`, every block adds gain * eps, where eps ~ N(0, I) is
  // drawn fresh from `rng` for every example and feature and gain is one
  // learned scalar per block; otherwise the output is a deterministic
  // function of h.
  Tensor<Real> generate(Graph<Real>& g, const Tensor<Real>& h, Rng& rng, bool stochastic) const {
    if (h.rank() != 2 || h.dim(1) != cfg_.latent_dim) {
      throw ShapeError("generator: expected latent [batch," + std::to_string(cfg_.latent_dim) + "], got " +
                       shape_str(h.shape()));
    }
    calls_.increment();
    const std::size_t batch = h.dim(0);
    // The constant input is shared by the batch; it first becomes per-example
    // at the first modulation.
    Tensor<Real> x = const_input_;
    for (const auto& blk : blocks_) {
      const Tensor<Real> pre = blk.linear(g, x);
      const Tensor<Real> scale = g.affine(blk.style_scale(g, h), 1.0, 1.0);
      const Tensor<Real> shift = blk.style_shift(g, h);
      Tensor<Real> y = g.add(g.mul(pre, scale), shift);
      if (stochastic) {
        Tensor<Real> eps(Shape{batch, cfg_.width});
        rng.fill_normal(eps.data());
        y = g.add(y, g.mul(eps, blk.noise_gain));
      }
      x = g.leaky_relu(y);
    }
    return out_(g, x);
  }

  Tensor<Real> generate(Graph<Real>& g, const Tensor<Real>& h) const {
    Rng unused;
    return generate(g, h, unused, false);
  }

  // Generator forward passes since construction or the last reset.
  std::uint64_t calls() const { return calls_.value(); }
  void reset_calls() const { calls_.reset(); }

  NamedParams<Real> named_parameters() {
    NamedParams<Real> out;
    out.emplace_back("generator.const", &const_input_.tensor());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const std::string p = "generator.block." + std::to_string(b);
      blocks_[b].linear.collect(out, p + ".linear");
      blocks_[b].style_scale.collect(out, p + ".style_scale");
      blocks_[b].style_shift.collect(out, p + ".style_shift");
      out.emplace_back(p + ".noise_gain", &blocks_[b].noise_gain.tensor());
    }
    out_.collect(out, "generator.out");
    return out;
  }

 private:
  struct Block {
    Linear<Real> linear;
    Linear<Real> style_scale;
    Linear<Real> style_shift;
    Parameter<Real> noise_gain;
  };

  GeneratorConfig cfg_;
  Parameter<Real> const_input_;
  std::vector<Block> blocks_;
  Linear<Real> out_;
  CallCounter calls_;
};

struct DiscriminatorConfig {
  std::size_t input_dim = 2;
  std::size_t width = 128;
  std::size_t layers = 2;
  std::size_t time_dim = 16;
};

template <class Real>
class Discriminator {
 public:
  Discriminator() = default;

  Discriminator(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.input_dim == 0 || cfg.width == 0 || cfg.layers == 0) {
      throw RangeError("discriminator: all dimensions must be positive");
    }
    time_embedding(0.0, cfg.time_dim);  // validates time_dim
    std::size_t in = cfg.input_dim + cfg.time_dim;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      trunk_.emplace_back(in, cfg.width, rng);
      in = cfg.width;
    }
    head_ = Linear<Real>(cfg.width, 1, rng);
  }

  const DiscriminatorConfig& config() const { return cfg_; }

  // Pre-sigmoid logit per example, shape [batch].
  Tensor<Real> logits(Graph<Real>& g, const Tensor<Real>& x, double u) const {
    if (x.rank() != 2 || x.dim(1) != cfg_.input_dim) {
      throw ShapeError("discriminator: expected [batch," + std::to_string(cfg_.input_dim) + "], got " +
                       shape_str(x.shape()));
    }
    const std::vector<double> emb = time_embedding(u, cfg_.time_dim);
    const Tensor<Real> row(Shape{1, cfg_.time_dim}, std::vector<Real>(emb.begin(), emb.end()));
    // The first layer sees [x; emb(u)]. The embedding is shared by the batch,
    // so its contribution emb W_e is folded into the bias.
    const Linear<Real>& first = trunk_.front();
    const Tensor<Real> w = first.scaled_weight(g);
    const std::size_t d = cfg_.input_dim;
    const Tensor<Real> bias = g.add(g.matmul(row, g.slice(w, 0, d, d + cfg_.time_dim)), first.bias);
    Tensor<Real> cur = g.leaky_relu(g.add(g.matmul(x, g.slice(w, 0, 0, d)), bias));
    for (std::size_t l = 1; l < trunk_.size(); ++l) cur = g.leaky_relu(trunk_[l](g, cur));
    return g.reshape(head_(g, cur), Shape{x.dim(0)});
  }

  Tensor<Real> operator()(Graph<Real>& g, const Tensor<Real>& x, double u) const { return logits(g, x, u); }

  NamedParams<Real> named_parameters() {
    NamedParams<Real> out;
    for (std::size_t l = 0; l < trunk_.size(); ++l) trunk_[l].collect(out, "discriminator.trunk." + std::to_string(l));
    head_.collect(out, "discriminator.head");
    return out;
  }

 private:
  DiscriminatorConfig cfg_;
  std::vector<Linear<Real>> trunk_;
  Linear<Real> head_;
};

}  // namespace spigan
