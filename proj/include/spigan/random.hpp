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
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>

#include "spigan/error.hpp"

namespace spigan {

// Seeded 64-bit generator with a serializable state.
//
// Uniform and normal draws are computed here rather than through the
// <random> distributions so that no hidden distribution state exists
// outside the engine: saving `state()` captures the full stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on {0, ..., n-1}.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  // Standard normal via Box-Muller; one engine pair per draw.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uses both Box-Muller outputs of each engine pair; nothing carries over
  // between calls.
  template <class Real>
  void fill_normal(std::span<Real> out, double mean = 0.0, double stddev = 1.0) {
    std::size_t i = 0;
    for (; i + 1 < out.size(); i += 2) {
      const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
      const double a = 2.0 * std::numbers::pi * uniform();
      out[i] = static_cast<Real>(mean + stddev * r * std::cos(a));
      out[i + 1] = static_cast<Real>(mean + stddev * r * std::sin(a));
    }
    if (i < out.size()) out[i] = static_cast<Real>(mean + stddev * normal());
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    std::mt19937_64 e;
    is >> e;
    if (is.fail()) throw Error("rng: malformed state string");
    engine_ = e;
  }

  bool operator==(const Rng& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; derives independent seeds from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace spigan
