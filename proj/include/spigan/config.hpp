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

// Run configuration and its "key = value" text format.
//
// Defaults for optimizer and regularizer settings follow the CIFAR-10
// column of the reference hyperparameters; model widths are sized for 2-D
// toy data.

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>

#include "spigan/diffusion.hpp"
#include "spigan/error.hpp"
#include "spigan/node.hpp"
#include "spigan/spi.hpp"

namespace spigan {

struct ModelDims {
  std::size_t hidden_dim = 32;
  std::size_t mapping_depth = 2;
  SolverSpec solver;
  std::size_t gen_width = 64;
  std::size_t gen_blocks = 3;
  std::size_t disc_width = 128;
  std::size_t disc_layers = 2;
  std::size_t time_dim = 16;
};

struct TrainConfig {
  double lr_g = 0.0025;
  double lr_d = 0.0025;
  double ema_decay = 0.999;
  int lazy_g = 4;
  int lazy_d = 16;
  double lambda_r1 = 0.01;
  double lambda_path = 0.0;
  std::int64_t max_iter = 30000;
  std::size_t batch = 256;
  UMode u_mode = RandomU{};
  MappingKind mapping_kind = MappingKind::kNode;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  ModelDims model;
  VpSchedule schedule;
  std::string dataset = "gaussians8";
  std::size_t dataset_size = 50000;
  std::int64_t log_every = 100;
  std::int64_t ckpt_every = 1000;

  void validate() const;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, std::size_t line, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key, line, "cannot parse '" + v + "' as a number");
  return out;
}

inline std::int64_t parse_int(const std::string& key, std::size_t line, const std::string& v) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key, line, "cannot parse '" + v + "' as an integer");
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline UMode parse_u_mode(const std::string& key, std::size_t line, const std::string& v) {
  if (v == "random") return RandomU{};
  if (v.rfind("fixed:", 0) == 0) {
    const double u = parse_double(key, line, v.substr(6));
    if (!(u > 0.0 && u <= 1.0)) throw ConfigError(key, line, "fixed u must lie in (0,1], got " + v.substr(6));
    return FixedU{u};
  }
  throw ConfigError(key, line, "expected 'random' or 'fixed:<v>', got '" + v + "'");
}

inline std::string format_u_mode(const UMode& m) {
  if (const auto* f = std::get_if<FixedU>(&m)) return "fixed:" + format_double(f->value);
  return "random";
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, std::size_t)> set;
  std::function<std::string(const TrainConfig&)> get;
};

// Keys in canonical output order.
inline const std::map<std::string, Field>& config_fields() {
  using C = TrainConfig;
  auto real = [](auto getter) {
    return Field{[getter](C& c, const std::string& v, std::size_t) { getter(c) = parse_double("", 0, v); },
                 [getter](const C& c) { return format_double(getter(const_cast<C&>(c))); }};
  };
  auto integer = [](auto getter) {
    return Field{[getter](C& c, const std::string& v, std::size_t) {
                   using T = std::remove_reference_t<decltype(getter(c))>;
                   const std::int64_t parsed = parse_int("", 0, v);
                   if (std::is_unsigned_v<T> && parsed < 0) throw ConfigError("", 0, "must be non-negative, got " + v);
                   getter(c) = static_cast<T>(parsed);
                 },
                 [getter](const C& c) { return std::to_string(getter(const_cast<C&>(c))); }};
  };
  static const std::map<std::string, Field> fields = {
      {"lr_g", real([](C& c) -> double& { return c.lr_g; })},
      {"lr_d", real([](C& c) -> double& { return c.lr_d; })},
      {"ema_decay", real([](C& c) -> double& { return c.ema_decay; })},
      {"lazy_g", integer([](C& c) -> int& { return c.lazy_g; })},
      {"lazy_d", integer([](C& c) -> int& { return c.lazy_d; })},
      {"lambda_r1", real([](C& c) -> double& { return c.lambda_r1; })},
      {"lambda_path", real([](C& c) -> double& { return c.lambda_path; })},
      {"max_iter", integer([](C& c) -> std::int64_t& { return c.max_iter; })},
      {"batch", integer([](C& c) -> std::size_t& { return c.batch; })},
      {"u_mode", Field{[](C& c, const std::string& v, std::size_t line) { c.u_mode = parse_u_mode("u_mode", line, v); },
                       [](const C& c) { return format_u_mode(c.u_mode); }}},
      {"mapping_kind", Field{[](C& c, const std::string& v, std::size_t line) {
                               if (v == "node") c.mapping_kind = MappingKind::kNode;
                               else if (v == "mlp") c.mapping_kind = MappingKind::kMlp;
                               else throw ConfigError("mapping_kind", line, "expected 'node' or 'mlp', got '" + v + "'");
                             },
                             [](const C& c) { return std::string(mapping_name(c.mapping_kind)); }}},
      {"adam_beta1", real([](C& c) -> double& { return c.adam_beta1; })},
      {"adam_beta2", real([](C& c) -> double& { return c.adam_beta2; })},
      {"adam_eps", real([](C& c) -> double& { return c.adam_eps; })},
      {"seed", integer([](C& c) -> std::uint64_t& { return c.seed; })},
      {"hidden_dim", integer([](C& c) -> std::size_t& { return c.model.hidden_dim; })},
      {"mapping_depth", integer([](C& c) -> std::size_t& { return c.model.mapping_depth; })},
      {"solver", Field{[](C& c, const std::string& v, std::size_t line) {
                         if (v == "rk4") c.model.solver.kind = SolverKind::kRk4;
                         else if (v == "euler") c.model.solver.kind = SolverKind::kEuler;
                         else throw ConfigError("solver", line, "expected 'rk4' or 'euler', got '" + v + "'");
                       },
                       [](const C& c) { return std::string(solver_name(c.model.solver.kind)); }}},
      {"solver_steps", integer([](C& c) -> int& { return c.model.solver.steps; })},
      {"gen_width", integer([](C& c) -> std::size_t& { return c.model.gen_width; })},
      {"gen_blocks", integer([](C& c) -> std::size_t& { return c.model.gen_blocks; })},
      {"disc_width", integer([](C& c) -> std::size_t& { return c.model.disc_width; })},
      {"disc_layers", integer([](C& c) -> std::size_t& { return c.model.disc_layers; })},
      {"time_dim", integer([](C& c) -> std::size_t& { return c.model.time_dim; })},
      {"beta_min", real([](C& c) -> double& { return c.schedule.beta_min; })},
      {"beta_max", real([](C& c) -> double& { return c.schedule.beta_max; })},
      {"dataset", Field{[](C& c, const std::string& v, std::size_t) { c.dataset = v; },
                        [](const C& c) { return c.dataset; }}},
      {"dataset_size", integer([](C& c) -> std::size_t& { return c.dataset_size; })},
      {"log_every", integer([](C& c) -> std::int64_t& { return c.log_every; })},
      {"ckpt_every", integer([](C& c) -> std::int64_t& { return c.ckpt_every; })},
  };
  return fields;
}

}  // namespace detail

inline void TrainConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0.0)) throw ConfigError(key, 0, "must be positive, got " + detail::format_double(v));
  };
  positive("lr_g", lr_g);
  positive("lr_d", lr_d);
  positive("adam_eps", adam_eps);
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay", 0, "must lie in (0,1)");
  if (lazy_g < 1) throw ConfigError("lazy_g", 0, "must be >= 1");
  if (lazy_d < 1) throw ConfigError("lazy_d", 0, "must be >= 1");
  if (lambda_r1 < 0.0) throw ConfigError("lambda_r1", 0, "must be >= 0");
  if (lambda_path < 0.0) throw ConfigError("lambda_path", 0, "must be >= 0");
  if (max_iter < 0) throw ConfigError("max_iter", 0, "must be >= 0");
  if (batch < 1) throw ConfigError("batch", 0, "must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1", 0, "must lie in [0,1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2", 0, "must lie in [0,1)");
  validate_u_mode(u_mode);
  if (model.hidden_dim < 1) throw ConfigError("hidden_dim", 0, "must be >= 1");
  if (model.mapping_depth < 1) throw ConfigError("mapping_depth", 0, "must be >= 1");
  if (model.solver.steps < 1) throw ConfigError("solver_steps", 0, "must be >= 1");
  if (model.gen_width < 1) throw ConfigError("gen_width", 0, "must be >= 1");
  if (model.gen_blocks < 1) throw ConfigError("gen_blocks", 0, "must be >= 1");
  if (model.disc_width < 1) throw ConfigError("disc_width", 0, "must be >= 1");
  if (model.disc_layers < 1) throw ConfigError("disc_layers", 0, "must be >= 1");
  if (model.time_dim < 2 || model.time_dim % 2 != 0) throw ConfigError("time_dim", 0, "must be a positive even integer");
  if (!(schedule.beta_min > 0.0 && schedule.beta_min < schedule.beta_max)) {
    throw ConfigError("beta_min", 0, "need 0 < beta_min < beta_max");
  }
  if (dataset.empty()) throw ConfigError("dataset", 0, "must not be empty");
  if (dataset_size < 2) throw ConfigError("dataset_size", 0, "must be >= 2");
  if (log_every < 1) throw ConfigError("log_every", 0, "must be >= 1");
  if (ckpt_every < 1) throw ConfigError("ckpt_every", 0, "must be >= 1");
}

// Parses "key = value" lines; '#' starts a comment. Unknown keys and
// malformed or out-of-range values raise ConfigError naming key and line.
inline TrainConfig parse_config_text(std::string_view text) {
  TrainConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  const auto& fields = detail::config_fields();
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line, line_no, "expected 'key = value'");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError(key, line_no, "unknown key");
    if (value.empty()) throw ConfigError(key, line_no, "missing value");
    try {
      it->second.set(cfg, value, line_no);
    } catch (const ConfigError& e) {
      if (e.line() != 0) throw;
      throw ConfigError(key, line_no, e.detail());
    }
    seen[key] = line_no;
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    const auto it = seen.find(e.key());
    if (it == seen.end()) throw;
    throw ConfigError(e.key(), it->second, e.detail());
  }
  return cfg;
}

inline TrainConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// Canonical text form; parse_config_text(to_config_text(c)) reproduces c.
inline std::string to_config_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : detail::config_fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace spigan
