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

// Toy 2-D distributions, IDX image ingestion, and batch iteration.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "spigan/autodiff.hpp"
#include "spigan/error.hpp"
#include "spigan/random.hpp"

namespace spigan {

inline constexpr double kToyRadius = 2.0;
inline constexpr double kToyStd = 0.05;

// Per-dimension x_norm = (x - shift) / scale.
struct Normalization {
  std::vector<double> shift;
  std::vector<double> scale;

  static Normalization identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

  // Centers each dimension and scales its largest deviation to 1.
  static Normalization fit(const Tensor<float>& points) {
    const std::size_t n = points.dim(0), d = points.dim(1);
    Normalization out{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) out.shift[j] += points.at(i, j);
    for (auto& s : out.shift) s /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) out.scale[j] = std::max(out.scale[j], std::abs(points.at(i, j) - out.shift[j]));
    for (auto& s : out.scale) if (s == 0.0) s = 1.0;
    return out;
  }

  Tensor<float> normalize(const Tensor<float>& x) const { return apply(x, true); }
  Tensor<float> denormalize(const Tensor<float>& x) const { return apply(x, false); }

 private:
  Tensor<float> apply(const Tensor<float>& x, bool forward) const {
    if (x.rank() != 2 || x.dim(1) != shift.size()) {
      throw ShapeError("normalization: expected [n," + std::to_string(shift.size()) + "], got " + shape_str(x.shape()));
    }
    Tensor<float> out(x.shape());
    auto dst = out.data();
    const auto src = x.data();
    const std::size_t d = shift.size();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const std::size_t j = i % d;
      dst[i] = static_cast<float>(forward ? (src[i] - shift[j]) / scale[j] : src[i] * scale[j] + shift[j]);
    }
    return out;
  }
};

struct Dataset {
  std::string kind;
  Tensor<float> points;  // normalized, [n, dim]
  Normalization norm;
  std::size_t rows = 0;  // image height/width; 0 for point data
  std::size_t cols = 0;

  std::size_t size() const { return points.dim(0); }
  std::size_t dim() const { return points.dim(1); }
  bool is_image() const { return rows > 0 && cols > 0; }
};

// Mode centers of a ring mixture ("gaussians8" is ring:8).
inline std::vector<std::array<double, 2>> ring_centers(std::size_t modes, double radius = kToyRadius) {
  std::vector<std::array<double, 2>> out;
  for (std::size_t k = 0; k < modes; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(modes);
    out.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  return out;
}

// Number of ring modes for "gaussians8" / "ring:<m>", or 0 for other kinds.
inline std::size_t ring_modes(const std::string& kind) {
  if (kind == "gaussians8") return 8;
  if (kind.rfind("ring:", 0) == 0) {
    try {
      const long m = std::stol(kind.substr(5));
      if (m >= 1) return static_cast<std::size_t>(m);
    } catch (const std::exception&) {
    }
    throw ConfigError("dataset", 0, "bad ring spec '" + kind + "'");
  }
  return 0;
}

// Raw (unnormalized) toy samples, shape [n, 2].
inline Tensor<float> generate_toy(const std::string& kind, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw RangeError("generate_toy: n must be >= 1");
  Rng rng(seed);
  Tensor<float> out(Shape{n, 2});
  auto d = out.data();
  if (const std::size_t modes = ring_modes(kind); modes > 0) {
    const auto centers = ring_centers(modes);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = centers[rng.index(modes)];
      d[2 * i] = static_cast<float>(c[0] + kToyStd * rng.normal());
      d[2 * i + 1] = static_cast<float>(c[1] + kToyStd * rng.normal());
    }
  } else if (kind == "checkerboard") {
    // 8 alternating unit squares of [-2, 2]^2.
    for (std::size_t i = 0; i < n; ++i) {
      const double x = rng.uniform(-2.0, 2.0);
      const double y0 = rng.uniform() - 2.0 * static_cast<double>(rng.index(2));
      const double y = y0 + static_cast<double>(static_cast<long>(std::floor(x)) & 1);
      d[2 * i] = static_cast<float>(x);
      d[2 * i + 1] = static_cast<float>(y);
    }
  } else if (kind == "swiss_roll") {
    for (std::size_t i = 0; i < n; ++i) {
      const double t = 1.5 * std::numbers::pi * (1.0 + 2.0 * rng.uniform());
      d[2 * i] = static_cast<float>(t * std::cos(t) / 5.0 + kToyStd * rng.normal());
      d[2 * i + 1] = static_cast<float>(t * std::sin(t) / 5.0 + kToyStd * rng.normal());
    }
  } else {
    throw ConfigError("dataset", 0, "unknown toy dataset '" + kind + "'");
  }
  return out;
}

inline Dataset make_toy_dataset(const std::string& kind, std::size_t n, std::uint64_t seed) {
  Tensor<float> raw = generate_toy(kind, n, seed);
  Dataset ds;
  ds.kind = kind;
  ds.norm = Normalization::fit(raw);
  ds.points = ds.norm.normalize(raw);
  return ds;
}

// ---- IDX (unsigned byte, 3 dims) ----

inline constexpr std::uint32_t kIdxMagicU8x3 = 0x00000803;

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

inline IdxImages decode_idx(const std::vector<std::uint8_t>& bytes) {
  auto be32 = [&](std::size_t off) -> std::uint32_t {
    if (off + 4 > bytes.size()) throw ParseError("idx: truncated header", bytes.size());
    return (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
           (std::uint32_t{bytes[off + 2]} << 8) | std::uint32_t{bytes[off + 3]};
  };
  const std::uint32_t magic = be32(0);
  if (magic != kIdxMagicU8x3) {
    std::ostringstream os;
    os << "idx: unexpected magic 0x" << std::hex << std::setw(8) << std::setfill('0') << magic;
    throw ParseError(os.str(), 0);
  }
  IdxImages img;
  img.count = be32(4);
  img.rows = be32(8);
  img.cols = be32(12);
  const std::size_t need = img.count * img.rows * img.cols;
  if (bytes.size() - 16 < need) {
    throw ParseError("idx: truncated pixel data, expected " + std::to_string(need) + " bytes", bytes.size());
  }
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

inline std::vector<std::uint8_t> encode_idx(const IdxImages& img) {
  std::vector<std::uint8_t> out;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put(kIdxMagicU8x3);
  put(static_cast<std::uint32_t>(img.count));
  put(static_cast<std::uint32_t>(img.rows));
  put(static_cast<std::uint32_t>(img.cols));
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void write_idx(const std::string& path, const IdxImages& img) { write_file_bytes(path, encode_idx(img)); }

// Pixels scaled to [-1, 1] by x / 127.5 - 1; normalization is the identity.
inline Dataset load_idx(const std::string& path) {
  const IdxImages img = decode_idx(read_file_bytes(path));
  if (img.count == 0 || img.rows == 0 || img.cols == 0) throw ParseError("idx: empty image set", 4);
  const std::size_t dim = img.rows * img.cols;
  Dataset ds;
  ds.kind = "idx:" + path;
  ds.rows = img.rows;
  ds.cols = img.cols;
  ds.points = Tensor<float>(Shape{img.count, dim});
  auto d = ds.points.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(img.pixels[i] / 127.5 - 1.0);
  ds.norm = Normalization::identity(dim);
  return ds;
}

// "idx:<path>" loads a file; anything else names a toy distribution.
inline Dataset load_dataset(const std::string& spec, std::size_t n, std::uint64_t seed) {
  if (spec.rfind("idx:", 0) == 0) return load_idx(spec.substr(4));
  return make_toy_dataset(spec, n, seed);
}

// Rows `indices` of a [n, d] tensor.
inline Tensor<float> gather_rows(const Tensor<float>& points, const std::vector<std::size_t>& indices) {
  const std::size_t d = points.dim(1);
  Tensor<float> out(Shape{indices.size(), d});
  auto dst = out.data();
  const auto src = points.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * d), d, dst.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return out;
}

// Epoch-based batch order. With shuffling, epoch e visits a permutation
// determined by (seed, e), so the position (epoch, cursor) fully describes
// the iterator state.
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch, bool shuffle, std::uint64_t seed)
      : n_(n), batch_(batch), shuffle_(shuffle), seed_(seed) {
    if (n == 0 || batch == 0) throw RangeError("batch iterator: n and batch must be positive");
    build_order();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    out.reserve(batch_);
    while (out.size() < batch_) {
      if (cursor_ == n_) {
        ++epoch_;
        cursor_ = 0;
        build_order();
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

  std::uint64_t epoch() const { return epoch_; }
  std::uint64_t cursor() const { return cursor_; }

  void set_position(std::uint64_t epoch, std::uint64_t cursor) {
    if (cursor > n_) throw RangeError("batch iterator: cursor beyond epoch");
    epoch_ = epoch;
    cursor_ = cursor;
    build_order();
  }

 private:
  void build_order() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!shuffle_) return;
    Rng rng(mix_seed(seed_, epoch_));
    for (std::size_t i = n_; i-- > 1;) std::swap(order_[i], order_[rng.index(i + 1)]);
  }

  std::size_t n_, batch_;
  bool shuffle_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::uint64_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

// Header "x,y" for 2-D points, "x0,x1,..." otherwise.
inline void write_points_csv(const std::string& path, const Tensor<float>& points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  const std::size_t n = points.dim(0), d = points.dim(1);
  if (d == 2) {
    out << "x,y\n";
  } else {
    for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << "x" << j;
    out << "\n";
  }
  out << std::setprecision(9);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << points.at(i, j);
    out << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Tensor<float> read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
  const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<float> values;
  std::size_t rows = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ls, cell, ',')) {
      try {
        values.push_back(std::stof(cell));
      } catch (const std::exception&) {
        throw IoError("'" + path + "' line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
      ++cols;
    }
    if (cols != d) throw IoError("'" + path + "' line " + std::to_string(line_no) + ": expected " + std::to_string(d) + " columns");
    ++rows;
  }
  if (rows == 0) throw IoError("'" + path + "' has no data rows");
  return Tensor<float>(Shape{rows, d}, std::move(values));
}

// Binary PGM (P5, maxval 255) tiling `images` ([n, rows*cols] in [-1,1]) on a grid.
inline void write_pgm_grid(const std::string& path, const Tensor<float>& images, std::size_t rows, std::size_t cols) {
  const std::size_t n = images.dim(0);
  if (images.dim(1) != rows * cols) throw ShapeError("write_pgm_grid: image size does not match rows*cols");
  const std::size_t grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t w = grid * cols, h = ((n + grid - 1) / grid) * rows;
  std::vector<std::uint8_t> px(w * h, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t gy = k / grid, gx = k % grid;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = std::clamp((images.at(k, r * cols + c) + 1.0) * 127.5, 0.0, 255.0);
        px[(gy * rows + r) * w + gx * cols + c] = static_cast<std::uint8_t>(std::lround(v));
      }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace spigan
