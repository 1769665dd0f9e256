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

// Binary checkpoint: little-endian, fixed-width fields, CRC-32 trailer.
//
//   "SPIG" | u32 version | u64 total_size
//   u32 x 9: data_dim hidden_dim mapping_depth solver_steps gen_width
//            gen_blocks disc_width disc_layers time_dim
//   u32 rows << 16 | cols
//   str config text
//   i64 iter d_updates g_updates adam_g_steps adam_d_steps
//   f64 path_len_mean | u64 data_epoch data_cursor
//   u32 n | f64[n] norm shift | f64[n] norm scale
//   u32 count | count x (str name | u64 numel | f32[numel])
//   str rng state
//   u32 crc32 of all preceding bytes
//
// str is u32 length followed by raw bytes.

#pragma once

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spigan/config.hpp"
#include "spigan/data.hpp"
#include "spigan/error.hpp"
#include "spigan/training.hpp"

namespace spigan {

inline constexpr char kCheckpointMagic[4] = {'S', 'P', 'I', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void put_floats(std::span<const float> v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    bytes_.insert(bytes_.end(), p, p + v.size() * sizeof(float));
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void get_floats(std::span<float> out) {
    need(out.size() * sizeof(float));
    std::memcpy(out.data(), b_.data() + pos_, out.size() * sizeof(float));
    pos_ += out.size() * sizeof(float);
  }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CheckpointError("checkpoint: truncated at byte offset " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};


// Canonical array order shared by encoder and decoder.
inline void for_each_array(ModelState& s, const std::function<void(const std::string&, std::span<float>)>& fn) {
  auto group = [&](const std::string& prefix, const NamedParams<float>& params) {
    for (const auto& [name, t] : params) fn(prefix + name, t->data());
  };
  const auto g_side = s.generator_side();
  group("live.", g_side);
  group("live.", s.discriminator.named_parameters());
  group("ema.", s.ema_side());
  for (std::size_t i = 0; i < s.adam_g.size(); ++i) {
    fn("adam_g.m." + s.adam_g.name(i), s.adam_g.first_moment(i));
    fn("adam_g.v." + s.adam_g.name(i), s.adam_g.second_moment(i));
  }
  for (std::size_t i = 0; i < s.adam_d.size(); ++i) {
    fn("adam_d.m." + s.adam_d.name(i), s.adam_d.first_moment(i));
    fn("adam_d.v." + s.adam_d.name(i), s.adam_d.second_moment(i));
  }
}

inline std::uint32_t packed_image_dims(std::size_t rows, std::size_t cols) {
  if (rows > 0xffff || cols > 0xffff) throw CheckpointError("checkpoint: image dimensions exceed 65535");
  return static_cast<std::uint32_t>(rows << 16 | cols);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const ModelState& state) {
  ModelState& s = const_cast<ModelState&>(state);  // array views only; nothing is modified
  detail::ByteWriter w;
  for (const char c : kCheckpointMagic) w.put<char>(c);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(0);  // total size, patched below
  const ModelDims& m = s.config.model;
  for (const std::size_t d : {s.data_dim, m.hidden_dim, m.mapping_depth, static_cast<std::size_t>(m.solver.steps), m.gen_width,
                              m.gen_blocks, m.disc_width, m.disc_layers, m.time_dim}) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
  w.put<std::uint32_t>(detail::packed_image_dims(s.rows, s.cols));
  w.put_str(to_config_text(s.config));
  for (const std::int64_t v : {s.iter, s.d_updates, s.g_updates, s.adam_g.steps(), s.adam_d.steps()}) w.put<std::int64_t>(v);
  w.put<double>(s.path_len_mean);
  w.put<std::uint64_t>(s.data_epoch);
  w.put<std::uint64_t>(s.data_cursor);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.norm.shift.size()));
  for (const double v : s.norm.shift) w.put<double>(v);
  for (const double v : s.norm.scale) w.put<double>(v);

  std::vector<std::pair<std::string, std::span<float>>> arrays;
  detail::for_each_array(s, [&](const std::string& name, std::span<float> v) { arrays.emplace_back(name, v); });
  w.put<std::uint32_t>(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, v] : arrays) {
    w.put_str(name);
    w.put<std::uint64_t>(v.size());
    w.put_floats(v);
  }
  w.put_str(s.rng.state());

  auto& bytes = w.bytes();
  const std::uint64_t total = bytes.size() + sizeof(std::uint32_t);
  std::memcpy(bytes.data() + 8, &total, sizeof total);
  const std::uint32_t crc = crc32_of(bytes.data(), bytes.size());
  w.put<std::uint32_t>(crc);
  return std::move(bytes);
}

// Validates magic, size, CRC and version before building any state, so a
// failed load never yields a partial state.
inline ModelState decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kPreamble = 16;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError("checkpoint: wrong magic (expected \"SPIG\")");
  }
  if (bytes.size() < kPreamble + 4) throw CheckpointError("checkpoint: truncated header");
  std::uint64_t total = 0;
  std::memcpy(&total, bytes.data() + 8, sizeof total);
  if (bytes.size() < total) {
    throw CheckpointError("checkpoint: truncated, " + std::to_string(bytes.size()) + " of " + std::to_string(total) +
                          " bytes present");
  }
  if (bytes.size() > total) throw CheckpointError("checkpoint: trailing bytes after the CRC trailer");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (crc32_of(bytes.data(), body) != stored) throw CheckpointError("checkpoint: CRC-32 mismatch");

  detail::ByteReader r(bytes, body);
  r.seek(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  r.get<std::uint64_t>();
  std::uint32_t dims[9];
  for (auto& d : dims) d = r.get<std::uint32_t>();
  const auto image = r.get<std::uint32_t>();

  TrainConfig cfg;
  try {
    cfg = parse_config_text(r.get_str());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: bad config echo: ") + e.what());
  }
  const ModelDims& m = cfg.model;
  const std::uint32_t expect[9] = {dims[0],
                                   static_cast<std::uint32_t>(m.hidden_dim),
                                   static_cast<std::uint32_t>(m.mapping_depth),
                                   static_cast<std::uint32_t>(m.solver.steps),
                                   static_cast<std::uint32_t>(m.gen_width),
                                   static_cast<std::uint32_t>(m.gen_blocks),
                                   static_cast<std::uint32_t>(m.disc_width),
                                   static_cast<std::uint32_t>(m.disc_layers),
                                   static_cast<std::uint32_t>(m.time_dim)};
  if (dims[0] == 0 || std::memcmp(dims, expect, sizeof dims) != 0) {
    throw CheckpointError("checkpoint: header dimensions disagree with the config echo");
  }

  ModelState s = ModelState::initialize(cfg, dims[0]);
  s.rows = image >> 16;
  s.cols = image & 0xffff;
  s.iter = r.get<std::int64_t>();
  s.d_updates = r.get<std::int64_t>();
  s.g_updates = r.get<std::int64_t>();
  s.adam_g.set_steps(r.get<std::int64_t>());
  s.adam_d.set_steps(r.get<std::int64_t>());
  s.path_len_mean = r.get<double>();
  s.data_epoch = r.get<std::uint64_t>();
  s.data_cursor = r.get<std::uint64_t>();
  const auto nd = r.get<std::uint32_t>();
  if (nd != dims[0]) throw CheckpointError("checkpoint: normalization size disagrees with data dimension");
  s.norm.shift.resize(nd);
  s.norm.scale.resize(nd);
  for (auto& v : s.norm.shift) v = r.get<double>();
  for (auto& v : s.norm.scale) v = r.get<double>();

  const auto count = r.get<std::uint32_t>();
  std::size_t index = 0;
  detail::for_each_array(s, [&](const std::string& name, std::span<float> v) {
    if (index++ >= count) throw CheckpointError("checkpoint: missing array '" + name + "'");
    const std::string got = r.get_str();
    if (got != name) throw CheckpointError("checkpoint: expected array '" + name + "', found '" + got + "'");
    const auto n = r.get<std::uint64_t>();
    if (n != v.size()) {
      throw CheckpointError("checkpoint: array '" + name + "' has " + std::to_string(n) + " values, expected " +
                            std::to_string(v.size()));
    }
    r.get_floats(v);
  });
  if (index != count) throw CheckpointError("checkpoint: unexpected extra arrays");
  try {
    s.rng.set_state(r.get_str());
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  if (r.pos() != body) throw CheckpointError("checkpoint: unexpected bytes before the CRC trailer");
  return s;
}

inline void save_checkpoint(const ModelState& state, const std::string& path) {
  write_file_bytes(path, encode_checkpoint(state));
}

inline ModelState load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace spigan
