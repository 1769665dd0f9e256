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

// Alternating adversarial training over interpolated batches.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spigan/autodiff.hpp"
#include "spigan/config.hpp"
#include "spigan/data.hpp"
#include "spigan/diffusion.hpp"
#include "spigan/error.hpp"
#include "spigan/losses.hpp"
#include "spigan/models.hpp"
#include "spigan/nn.hpp"
#include "spigan/node.hpp"
#include "spigan/optim.hpp"
#include "spigan/random.hpp"
#include "spigan/spi.hpp"

namespace spigan {

using TrainReal = float;

// Seed streams derived from TrainConfig::seed.
inline constexpr std::uint64_t kDataStream = 0;
inline constexpr std::uint64_t kBatchStream = 1;
inline constexpr std::uint64_t kTrainStream = 2;
inline constexpr std::uint64_t kInitStream = 3;

inline MappingConfig mapping_config(const TrainConfig& cfg, std::size_t data_dim) {
  MappingConfig m;
  m.input_dim = data_dim;
  m.hidden_dim = cfg.model.hidden_dim;
  m.depth = cfg.model.mapping_depth;
  m.solver = cfg.model.solver;
  m.kind = cfg.mapping_kind;
  return m;
}

inline GeneratorConfig generator_config(const TrainConfig& cfg, std::size_t data_dim) {
  return {cfg.model.hidden_dim, cfg.model.gen_width, cfg.model.gen_blocks, data_dim};
}

inline DiscriminatorConfig discriminator_config(const TrainConfig& cfg, std::size_t data_dim) {
  return {data_dim, cfg.model.disc_width, cfg.model.disc_layers, cfg.model.time_dim};
}

// Everything needed to continue training or to sample.
struct ModelState {
  TrainConfig config;
  std::size_t data_dim = 0;

  MappingNetwork<TrainReal> mapping;              // psi
  Generator<TrainReal> generator;                 // theta
  Discriminator<TrainReal> discriminator;         // phi
  MappingNetwork<TrainReal> ema_mapping;          // shadow of psi
  Generator<TrainReal> ema_generator;             // shadow of theta
  Adam<TrainReal> adam_g;                         // over psi then theta
  Adam<TrainReal> adam_d;
  double path_len_mean = 0.0;

  std::int64_t iter = 0;
  std::int64_t d_updates = 0;
  std::int64_t g_updates = 0;
  Rng rng;
  std::uint64_t data_epoch = 0;
  std::uint64_t data_cursor = 0;
  Normalization norm;
  std::size_t rows = 0;
  std::size_t cols = 0;

  // Fresh networks initialized from the config's seed.
  static ModelState initialize(const TrainConfig& cfg, std::size_t data_dim) {
    cfg.validate();
    ModelState s;
    s.config = cfg;
    s.data_dim = data_dim;
    Rng init(mix_seed(cfg.seed, kInitStream));
    s.mapping = MappingNetwork<TrainReal>(mapping_config(cfg, data_dim), init);
    s.generator = Generator<TrainReal>(generator_config(cfg, data_dim), init);
    s.discriminator = Discriminator<TrainReal>(discriminator_config(cfg, data_dim), init);
    s.ema_mapping = s.mapping;
    s.ema_generator = s.generator;
    s.adam_g = Adam<TrainReal>(s.generator_side(), {cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    s.adam_d = Adam<TrainReal>(s.discriminator.named_parameters(), {cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    s.rng = Rng(mix_seed(cfg.seed, kTrainStream));
    s.norm = Normalization::identity(data_dim);
    return s;
  }

  // psi followed by theta.
  NamedParams<TrainReal> generator_side() {
    NamedParams<TrainReal> out = mapping.named_parameters();
    for (auto& p : generator.named_parameters()) out.push_back(p);
    return out;
  }

  NamedParams<TrainReal> ema_side() {
    NamedParams<TrainReal> out = ema_mapping.named_parameters();
    for (auto& p : ema_generator.named_parameters()) out.push_back(p);
    return out;
  }

  // Root-mean-square difference between live and shadow generator-side
  // parameters.
  double ema_gap() {
    const auto live = generator_side();
    const auto shadow = ema_side();
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto a = live[i].second->data();
      const auto b = shadow[i].second->data();
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        acc += d * d;
      }
      n += a.size();
    }
    return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
  }
};

// FNV-1a over the raw bytes of a parameter group; used to detect which
// partition an update touched.
inline std::uint64_t checksum(const NamedParams<TrainReal>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : params) {
    for (const TrainReal v : t->data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

struct StepStats {
  std::int64_t iter = 0;
  bool d_step = false;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double r1 = 0.0;
  double path_pen = 0.0;
  bool r1_applied = false;
  bool path_applied = false;
  double u = 0.0;
  double grad_norm = 0.0;
};

class Trainer {
 public:
  // Starts from freshly initialized networks.
  Trainer(const TrainConfig& cfg, const Dataset& data)
      : Trainer(init_state(cfg, data), data) {}

  // Continues from a restored state.
  Trainer(ModelState state, const Dataset& data) : state_(std::move(state)), data_(data) {
    state_.config.validate();
    if (data.dim() != state_.data_dim) {
      throw ShapeError("trainer: dataset dimension " + std::to_string(data.dim()) + " does not match model dimension " +
                       std::to_string(state_.data_dim));
    }
    batches_.emplace(data.size(), state_.config.batch, /*shuffle=*/true, mix_seed(state_.config.seed, kBatchStream));
    batches_->set_position(state_.data_epoch, state_.data_cursor);
  }

  const ModelState& state() const { return state_; }
  ModelState& mutable_state() { return state_; }

  // Syncs the batch position into the state, e.g. before checkpointing.
  const ModelState& snapshot() {
    state_.data_epoch = batches_->epoch();
    state_.data_cursor = batches_->cursor();
    return state_;
  }

  // One loop iteration: a discriminator update on even iterations, a
  // mapping+generator update on odd ones.
  StepStats step() {
    const TrainConfig& cfg = state_.config;
    const Tensor<TrainReal> x0 = gather_rows(data_.points, batches_->next());
    const Tensor<TrainReal> xT = diffuse_to_prior(x0, cfg.schedule, state_.rng);
    const double u = sample_u(cfg.u_mode, state_.rng);

    StepStats st;
    st.iter = state_.iter;
    st.u = u;
    if (state_.iter % 2 == 0) {
      d_update(x0, xT, u, st);
    } else {
      g_update(xT, u, st);
    }
    ++state_.iter;
    state_.data_epoch = batches_->epoch();
    state_.data_cursor = batches_->cursor();
    last_ = st;
    if (st.d_step) last_d_ = st; else last_g_ = st;
    return st;
  }

  // Runs until state().iter == until; `on_step` sees every iteration.
  void run(std::int64_t until, const std::function<void(const StepStats&)>& on_step = {}) {
    while (state_.iter < until) {
      const StepStats st = step();
      if (on_step) on_step(st);
    }
  }

  // "iter<TAB>d_loss<TAB>g_loss<TAB>r1<TAB>path_pen<TAB>ema_gap" using the
  // latest update of each network.
  std::string metrics_line() {
    std::ostringstream os;
    os.precision(8);
    os << state_.iter << '\t' << last_d_.d_loss << '\t' << last_g_.g_loss << '\t' << last_d_.r1 << '\t'
       << last_g_.path_pen << '\t' << state_.ema_gap();
    return os.str();
  }

  // The real-side discriminator input of the most recent D update.
  const Tensor<TrainReal>& last_real_input() const { return last_real_input_; }
  const StepStats& last_stats() const { return last_; }

 private:
  static ModelState init_state(const TrainConfig& cfg, const Dataset& data) {
    ModelState s = ModelState::initialize(cfg, data.dim());
    s.norm = data.norm;
    s.rows = data.rows;
    s.cols = data.cols;
    return s;
  }

  Tensor<TrainReal> fakes(Graph<TrainReal>& g, const Tensor<TrainReal>& xT, double u) {
    const Tensor<TrainReal> h = state_.mapping.map(g, xT, u);
    return state_.generator.generate(g, h, state_.rng, /*stochastic=*/true);
  }

  void d_update(const Tensor<TrainReal>& x0, const Tensor<TrainReal>& xT, double u, StepStats& st) {
    const TrainConfig& cfg = state_.config;
    Graph<TrainReal> g;
    Tensor<TrainReal> fake;
    {
      typename Graph<TrainReal>::NoGrad off(g);
      fake = fakes(g, xT, u);
    }
    const bool lazy_r1 = cfg.lambda_r1 != 0.0 && (state_.d_updates + 1) % cfg.lazy_d == 0;
    Tensor<TrainReal> real = interpolate(x0, xT, u);
    if (lazy_r1) real.set_requires_grad(true);
    last_real_input_ = real.detach();

    const Tensor<TrainReal> real_logits = state_.discriminator(g, real, u);
    const Tensor<TrainReal> fake_logits = state_.discriminator(g, fake.detach(), u);
    const Tensor<TrainReal> adv = d_loss_from_logits(g, real_logits, fake_logits);
    Tensor<TrainReal> total = adv;
    if (lazy_r1) {
      const Tensor<TrainReal> r1 = r1_from_logits(g, real_logits, real, cfg.lambda_r1);
      st.r1 = r1.item();
      st.r1_applied = true;
      total = g.add(total, r1);
    }
    st.d_step = true;
    st.d_loss = adv.item();
    check_finite(st, "d_loss", st.d_loss + st.r1);

    const auto params = state_.discriminator.named_parameters();
    zero_grads(params);
    g.backward(total);
    st.grad_norm = grad_norm(params);
    check_finite(st, "discriminator gradient", st.grad_norm);
    state_.adam_d.step(params);
    zero_grads(params);
    ++state_.d_updates;
  }

  void g_update(const Tensor<TrainReal>& xT, double u, StepStats& st) {
    const TrainConfig& cfg = state_.config;
    const auto d_params = state_.discriminator.named_parameters();
    for (auto& [name, t] : d_params) t->set_requires_grad(false);
    struct Restore {
      const NamedParams<TrainReal>& p;
      ~Restore() {
        for (auto& [name, t] : p) t->set_requires_grad(true);
      }
    } restore{d_params};

    Graph<TrainReal> g;
    const Tensor<TrainReal> h = state_.mapping.map(g, xT, u);
    const Tensor<TrainReal> fake = state_.generator.generate(g, h, state_.rng, /*stochastic=*/true);
    const Tensor<TrainReal> adv = g_loss_from_logits(g, state_.discriminator(g, fake, u));
    Tensor<TrainReal> total = adv;
    st.g_loss = adv.item();

    if ((state_.g_updates + 1) % cfg.lazy_g == 0) {
      Tensor<TrainReal> h_leaf = h.detach();
      h_leaf.set_requires_grad(true);
      Tensor<TrainReal> y(Shape{xT.dim(0), state_.data_dim});
      state_.rng.fill_normal(y.data(), 0.0, 1.0 / std::sqrt(static_cast<double>(state_.data_dim)));
      // The penalty sees a fresh noise draw; path length is measured on the
      // deterministic part of the generator.
      const auto res = path_length_penalty(
          g, [this](Graph<TrainReal>& gg, const Tensor<TrainReal>& hh) { return state_.generator.generate(gg, hh); },
          h_leaf, y, state_.path_len_mean, cfg.lambda_path);
      st.path_pen = res.penalty.item();
      st.path_applied = true;
      if (cfg.lambda_path != 0.0) total = g.add(total, res.penalty);
    }
    check_finite(st, "g_loss", st.g_loss + st.path_pen);

    const auto params = state_.generator_side();
    zero_grads(params);
    g.backward(total);
    st.grad_norm = grad_norm(params);
    check_finite(st, "generator gradient", st.grad_norm);
    state_.adam_g.step(params);
    zero_grads(params);
    ema_update(state_.ema_side(), params, cfg.ema_decay);
    ++state_.g_updates;
  }

  void check_finite(const StepStats& st, const char* what, double v) const {
    if (std::isfinite(v)) return;
    std::ostringstream os;
    os << "non-finite " << what << " at iter " << st.iter << " (d_loss=" << st.d_loss << ", g_loss=" << st.g_loss
       << ", r1=" << st.r1 << ", path_pen=" << st.path_pen << ", grad_norm=" << st.grad_norm << ", u=" << st.u << ")";
    throw NumericalError(os.str());
  }

  ModelState state_;
  const Dataset& data_;
  std::optional<BatchIterator> batches_;
  Tensor<TrainReal> last_real_input_;
  StepStats last_, last_d_, last_g_;
};

// The dataset a config trains on, drawn from the config's data stream.
inline Dataset load_training_data(const TrainConfig& cfg) {
  return load_dataset(cfg.dataset, cfg.dataset_size, mix_seed(cfg.seed, kDataStream));
}

// Trains from scratch for cfg.max_iter iterations.
inline ModelState train(const TrainConfig& cfg, const Dataset& data,
                        const std::function<void(const StepStats&)>& on_step = {}) {
  Trainer t(cfg, data);
  t.run(cfg.max_iter, on_step);
  return t.snapshot();
}

}  // namespace spigan
