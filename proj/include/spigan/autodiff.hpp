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

// Reverse-mode automatic differentiation over dense row-major tensors.
//
// A Graph records every op whose inputs require gradients on an
// append-only tape. Backward closures are written in terms of the same
// Graph ops, so a backward sweep run with `create_graph` records its own
// nodes and the resulting gradients are differentiable again (needed by
// gradient penalties).
//
// Storage is `Real` (float for training, double for finite-difference
// shadow evaluation); reductions accumulate in double; matmul runs on Eigen.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "spigan/error.hpp"

namespace spigan {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

enum class OpKind {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatmul,
  kLeakyRelu,
  kSum,
  kSumAxis,
  kMean,
  kSquare,
  kSqrt,
  kExp,
  kLog,
  kSigmoid,
  kSoftplus,
  kClamp,
  kAffine,
  kConcat,
  kSlice,
  kPad,
  kBroadcast,
  kSumTo,
  kReshape,
  kTranspose,
  kLinearCombination,
};

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kSum: return "sum";
    case OpKind::kSumAxis: return "sum_axis";
    case OpKind::kMean: return "mean";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kClamp: return "clamp";
    case OpKind::kAffine: return "affine";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kPad: return "pad";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kSumTo: return "sum_to";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kLinearCombination: return "lincomb";
  }
  return "?";
}

// Negative-side slope of every leaky_relu. The derivative at exactly 0 is 1.
inline constexpr double kLeakySlope = 0.2;

template <class Real>
class Graph;

namespace detail {

// Allocator whose value-less construct() leaves elements uninitialized, so
// op outputs that are fully overwritten are not zeroed first.
template <class T>
struct DefaultInitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  using std::allocator<T>::allocator;
  template <class U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

template <class Real>
using Buffer = std::vector<Real, DefaultInitAllocator<Real>>;

template <class Real>
struct Storage {
  Shape shape;
  Buffer<Real> data;
  std::vector<Real> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::uint64_t graph_id = 0;  // 0 for leaves and constants
  std::size_t node = 0;
};

inline std::uint64_t next_graph_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

inline Shape row_major_strides(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (std::size_t d = shape.size(); d-- > 1;) strides[d - 1] = strides[d] * shape[d];
  return strides;
}

// Calls f(big_index, small_index) for every element of `big`, where `small`
// broadcasts to `big` under numpy rules.
// True when `small` (ignoring leading 1s) equals the trailing dims of `big`,
// so its elements repeat as one contiguous block.
inline bool is_trailing_block(const Shape& big, const Shape& small) {
  std::size_t lead = 0;
  while (lead < small.size() && small[lead] == 1) ++lead;
  const std::size_t rest = small.size() - lead;
  if (rest > big.size() || small.size() > big.size()) return false;
  return std::equal(small.begin() + static_cast<std::ptrdiff_t>(lead), small.end(),
                    big.end() - static_cast<std::ptrdiff_t>(rest));
}

template <class F>
void for_each_broadcast(const Shape& big, const Shape& small, F&& f) {
  if (is_trailing_block(big, small)) {
    const std::size_t total = numel_of(big), block = numel_of(small);
    for (std::size_t o = 0; o < total; o += block)
      for (std::size_t j = 0; j < block; ++j) f(o + j, j);
    return;
  }
  const std::size_t n = big.size();
  const std::size_t offset = n - small.size();
  const Shape small_strides = row_major_strides(small);
  Shape stride(n, 0);
  for (std::size_t d = offset; d < n; ++d) {
    if (small[d - offset] != 1) stride[d] = small_strides[d - offset];
  }
  const std::size_t total = numel_of(big);
  Shape idx(n, 0);
  std::size_t so = 0;
  for (std::size_t bi = 0; bi < total; ++bi) {
    f(bi, so);
    for (std::size_t d = n; d-- > 0;) {
      ++idx[d];
      so += stride[d];
      if (idx[d] < big[d]) break;
      so -= stride[d] * big[d];
      idx[d] = 0;
    }
  }
}

}  // namespace detail

// Handle to a shared dense array. Copies alias the same storage; use
// clone() for an independent copy.
template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real(0)) : s_(std::make_shared<detail::Storage<Real>>()) {
    s_->data.assign(numel_of(shape), fill);
    s_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<Real> values) : s_(std::make_shared<detail::Storage<Real>>()) {
    if (numel_of(shape) != values.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                       std::to_string(numel_of(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    s_->shape = std::move(shape);
    s_->data.assign(values.begin(), values.end());
  }

  // Adopts an already-sized buffer without copying.
  static Tensor from_buffer(Shape shape, detail::Buffer<Real>&& values) {
    Tensor t;
    t.s_ = std::make_shared<detail::Storage<Real>>();
    if (numel_of(shape) != values.size()) throw ShapeError("tensor: buffer size does not match shape " + shape_str(shape));
    t.s_->shape = std::move(shape);
    t.s_->data = std::move(values);
    return t;
  }

  static Tensor scalar(Real v) { return Tensor(Shape{}, std::vector<Real>{v}); }

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t numel() const { return s_->data.size(); }

  std::span<Real> data() { return s_->data; }
  std::span<const Real> data() const { return s_->data; }
  std::vector<Real> values() const { return {s_->data.begin(), s_->data.end()}; }

  Real item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return s_->data[0];
  }
  Real at(std::size_t i) const { return s_->data.at(i); }
  Real at(std::size_t r, std::size_t c) const { return s_->data.at(r * s_->shape.at(1) + c); }

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    s_->requires_grad = on;
    return *this;
  }
  bool is_leaf() const { return s_->graph_id == 0; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const Real> grad() const { return s_->grad; }
  std::span<Real> mutable_grad() {
    if (s_->grad.empty()) s_->grad.assign(numel(), Real(0));
    return s_->grad;
  }
  void zero_grad() { s_->grad.clear(); }

  // Fresh leaf holding a copy of the values.
  Tensor detach() const { return from_buffer(shape(), detail::Buffer<Real>(s_->data)); }

  // Fresh leaf holding copies of values and requires_grad.
  Tensor clone() const {
    Tensor t = from_buffer(shape(), detail::Buffer<Real>(s_->data));
    t.s_->requires_grad = s_->requires_grad;
    return t;
  }

  template <class To>
  Tensor<To> cast() const {
    std::vector<To> v(s_->data.begin(), s_->data.end());
    Tensor<To> t(shape(), std::move(v));
    t.set_requires_grad(requires_grad());
    return t;
  }

  const void* id() const { return s_.get(); }

 private:
  friend class Graph<Real>;
  std::shared_ptr<detail::Storage<Real>> s_;
};

template <class Real>
class Graph {
 public:
  using TensorT = Tensor<Real>;
  using Buffer = detail::Buffer<Real>;

  Graph() : id_(detail::next_graph_id()) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Disables recording for its lifetime (inference, optimizer arithmetic).
  class NoGrad {
   public:
    explicit NoGrad(Graph& g) : g_(g), saved_(g.recording_) { g.recording_ = false; }
    ~NoGrad() { g_.recording_ = saved_; }
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

   private:
    Graph& g_;
    bool saved_;
  };

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  OpKind node_kind(std::size_t i) const { return nodes_.at(i).kind; }

  // Producing-node index of each input of node i; -1 for leaves/constants.
  std::vector<std::ptrdiff_t> node_input_indices(std::size_t i) const {
    std::vector<std::ptrdiff_t> out;
    for (const auto& in : nodes_.at(i).inputs) {
      out.push_back(in.s_->graph_id == id_ ? static_cast<std::ptrdiff_t>(in.s_->node) : -1);
    }
    return out;
  }

  // When enabled, every leaky_relu folds its input sign pattern into a
  // running hash. Finite-difference checks compare hashes to detect a
  // perturbation that crossed a kink.
  void track_activation_pattern(bool on) { track_pattern_ = on; }
  std::uint64_t activation_pattern() const { return pattern_hash_; }

  // ---- elementwise binary (numpy broadcasting) ----

  TensorT add(const TensorT& a, const TensorT& b) {
    auto [x, y, shape] = broadcast_pair(OpKind::kAdd, a, b);
    return record(OpKind::kAdd, shape, zip(x, y, shape, [](Real p, Real q) { return p + q; }), {x, y},
                  [x = x, y = y](Graph& g, const TensorT& go) {
                    return std::vector<TensorT>{g.sum_to(go, x.shape()), g.sum_to(go, y.shape())};
                  });
  }

  TensorT sub(const TensorT& a, const TensorT& b) {
    auto [x, y, shape] = broadcast_pair(OpKind::kSub, a, b);
    return record(OpKind::kSub, shape, zip(x, y, shape, [](Real p, Real q) { return p - q; }), {x, y},
                  [x = x, y = y](Graph& g, const TensorT& go) {
                    return std::vector<TensorT>{g.sum_to(go, x.shape()), g.affine(g.sum_to(go, y.shape()), -1.0, 0.0)};
                  });
  }

  TensorT mul(const TensorT& a, const TensorT& b) {
    auto [x, y, shape] = broadcast_pair(OpKind::kMul, a, b);
    return record(OpKind::kMul, shape, zip(x, y, shape, [](Real p, Real q) { return p * q; }), {x, y},
                  [x = x, y = y](Graph& g, const TensorT& go) {
                    return std::vector<TensorT>{x.requires_grad() ? g.sum_to(g.mul(go, y), x.shape()) : TensorT(),
                                                y.requires_grad() ? g.sum_to(g.mul(go, x), y.shape()) : TensorT()};
                  });
  }

  TensorT div(const TensorT& a, const TensorT& b) {
    auto [x, y, shape] = broadcast_pair(OpKind::kDiv, a, b);
    TensorT out = record(OpKind::kDiv, shape, zip(x, y, shape, [](Real p, Real q) { return p / q; }), {x, y}, nullptr);
    set_backward(out, [x = x, y = y, out_w = weak(out)](Graph& g, const TensorT& go) {
      TensorT gx = x.requires_grad() ? g.sum_to(g.div(go, y), x.shape()) : TensorT();
      TensorT gy;
      if (y.requires_grad()) gy = g.affine(g.sum_to(g.mul(go, g.div(strong(out_w), y)), y.shape()), -1.0, 0.0);
      return std::vector<TensorT>{gx, gy};
    });
    return out;
  }

  // ---- contraction ----

  // op(a) op(b) with op(x) = x or x^T; the flags let backward passes use
  // transposed operands without materializing them.
  TensorT matmul(const TensorT& a, const TensorT& b, bool transpose_a = false, bool transpose_b = false) {
    if (a.rank() != 2 || b.rank() != 2) {
      throw ShapeError(std::string("matmul: expected rank-2 operands, got ") + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    }
    const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
    const std::size_t k = transpose_a ? a.dim(0) : a.dim(1);
    const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
    const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
    if (k != kb) {
      throw ShapeError(std::string("matmul: expected [M,K] x [K,N], got ") + shape_str(a.shape()) +
                       (transpose_a ? "^T" : "") + " x " + shape_str(b.shape()) + (transpose_b ? "^T" : ""));
    }
    Buffer v(m * n);
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto idx = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
    const Eigen::Map<const Mat> ma(a.s_->data.data(), idx(a.dim(0)), idx(a.dim(1)));
    const Eigen::Map<const Mat> mb(b.s_->data.data(), idx(b.dim(0)), idx(b.dim(1)));
    Eigen::Map<Mat> mc(v.data(), idx(m), idx(n));
    if (m * n > 0 && k == 0) {
      mc.setZero();
    } else if (!transpose_a && !transpose_b) {
      mc.noalias() = ma * mb;
    } else if (transpose_a && !transpose_b) {
      mc.noalias() = ma.transpose() * mb;
    } else if (!transpose_a) {
      mc.noalias() = ma * mb.transpose();
    } else {
      mc.noalias() = ma.transpose() * mb.transpose();
    }
    return record(OpKind::kMatmul, Shape{m, n}, std::move(v), {a, b},
                  [a, b, ta = transpose_a, tb = transpose_b](Graph& g, const TensorT& go) {
                    TensorT ga, gb;
                    if (a.requires_grad()) ga = ta ? g.matmul(b, go, tb, true) : g.matmul(go, b, false, !tb);
                    if (b.requires_grad()) gb = tb ? g.matmul(go, a, true, ta) : g.matmul(a, go, !ta, false);
                    return std::vector<TensorT>{ga, gb};
                  });
  }

  TensorT transpose(const TensorT& x) {
    if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(x.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    Buffer v(r * c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) v[j * r + i] = x.s_->data[i * c + j];
    return record(OpKind::kTranspose, Shape{c, r}, std::move(v), {x}, [](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.transpose(go)};
    });
  }

  // ---- elementwise unary ----

  TensorT leaky_relu(const TensorT& x) {
    const std::size_t n = x.numel();
    const Real* xd = x.s_->data.data();
    const Real slope = static_cast<Real>(kLeakySlope);
    Buffer mask(n);
    Buffer v(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = xd[i] >= Real(0) ? Real(1) : slope;
    for (std::size_t i = 0; i < n; ++i) v[i] = xd[i] * mask[i];
    if (track_pattern_) {
      for (std::size_t i = 0; i < n; ++i) pattern_hash_ = pattern_hash_ * 0x100000001b3ULL ^ (mask[i] == Real(1) ? 1u : 2u);
    }
    // The local slope is constant almost everywhere, so the backward pass is
    // a product with a fixed mask and stays differentiable.
    return record(OpKind::kLeakyRelu, x.shape(), std::move(v), {x},
                  [m = TensorT::from_buffer(x.shape(), std::move(mask))](Graph& g, const TensorT& go) {
                    return std::vector<TensorT>{g.mul(go, m)};
                  });
  }

  TensorT square(const TensorT& x) {
    Buffer v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.s_->data[i] * x.s_->data[i];
    return record(OpKind::kSquare, x.shape(), std::move(v), {x}, [x](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.mul(go, g.affine(x, 2.0, 0.0))};
    });
  }

  TensorT sqrt(const TensorT& x) {
    Buffer v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(x.s_->data[i]);
    TensorT out = record(OpKind::kSqrt, x.shape(), std::move(v), {x}, nullptr);
    set_backward(out, [out_w = weak(out)](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.div(g.affine(go, 0.5, 0.0), strong(out_w))};
    });
    return out;
  }

  TensorT exp(const TensorT& x) {
    Buffer v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(x.s_->data[i]);
    TensorT out = record(OpKind::kExp, x.shape(), std::move(v), {x}, nullptr);
    set_backward(out, [out_w = weak(out)](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.mul(go, strong(out_w))};
    });
    return out;
  }

  TensorT log(const TensorT& x) {
    Buffer v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(x.s_->data[i]);
    return record(OpKind::kLog, x.shape(), std::move(v), {x}, [x](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.div(go, x)};
    });
  }

  TensorT sigmoid(const TensorT& x) {
    Buffer v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Real>(stable_sigmoid(x.s_->data[i]));
    TensorT out = record(OpKind::kSigmoid, x.shape(), std::move(v), {x}, nullptr);
    set_backward(out, [out_w = weak(out)](Graph& g, const TensorT& go) {
      TensorT s = strong(out_w);
      return std::vector<TensorT>{g.mul(go, g.mul(s, g.affine(s, -1.0, 1.0)))};
    });
    return out;
  }

  // log(1 + e^x), evaluated without overflow.
  TensorT softplus(const TensorT& x) {
    Buffer v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double e = x.s_->data[i];
      v[i] = static_cast<Real>(std::max(e, 0.0) + std::log1p(std::exp(-std::abs(e))));
    }
    return record(OpKind::kSoftplus, x.shape(), std::move(v), {x}, [x](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.mul(go, g.sigmoid(x))};
    });
  }

  TensorT clamp(const TensorT& x, double lo, double hi) {
    Buffer v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<Real>(std::clamp(static_cast<double>(x.s_->data[i]), lo, hi));
    }
    return record(OpKind::kClamp, x.shape(), std::move(v), {x}, [x, lo, hi](Graph& g, const TensorT& go) {
      Buffer mask(x.numel());
      for (std::size_t i = 0; i < mask.size(); ++i) {
        const double e = x.s_->data[i];
        mask[i] = (e >= lo && e <= hi) ? Real(1) : Real(0);
      }
      return std::vector<TensorT>{g.mul(go, TensorT::from_buffer(x.shape(), std::move(mask)))};
    });
  }

  // scale * x + shift
  TensorT affine(const TensorT& x, double scale, double shift) {
    Buffer v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<Real>(scale * static_cast<double>(x.s_->data[i]) + shift);
    }
    return record(OpKind::kAffine, x.shape(), std::move(v), {x}, [scale](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.affine(go, scale, 0.0)};
    });
  }

  TensorT scale(const TensorT& x, double s) { return affine(x, s, 0.0); }

  // sum_i coeffs[i] * xs[i] over same-shape operands, as a single node.
  TensorT lincomb(const std::vector<TensorT>& xs, const std::vector<double>& coeffs) {
    if (xs.empty() || xs.size() != coeffs.size()) throw ShapeError("lincomb: need one coefficient per operand");
    const Shape& shape = xs.front().shape();
    std::vector<double> acc(numel_of(shape), 0.0);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (xs[k].shape() != shape) {
        throw ShapeError("lincomb: operand shapes differ: " + shape_str(shape) + " vs " + shape_str(xs[k].shape()));
      }
      const auto& d = xs[k].s_->data;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += coeffs[k] * static_cast<double>(d[i]);
    }
    return record(OpKind::kLinearCombination, shape, Buffer(acc.begin(), acc.end()), xs,
                  [coeffs](Graph& g, const TensorT& go) {
                    std::vector<TensorT> out;
                    for (const double c : coeffs) out.push_back(c == 1.0 ? go : g.scale(go, c));
                    return out;
                  });
  }

  // ---- reductions ----

  TensorT sum(const TensorT& x) {
    double acc = 0.0;
    for (const Real e : x.s_->data) acc += e;
    return record(OpKind::kSum, Shape{}, {static_cast<Real>(acc)}, {x}, [x](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.broadcast_to(go, x.shape())};
    });
  }

  // Sum over one axis; the axis is removed from the result shape.
  TensorT sum(const TensorT& x, std::size_t axis) {
    if (axis >= x.rank()) {
      throw ShapeError("sum_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
    }
    const auto [outer, len, inner] = split_at(x.shape(), axis);
    std::vector<double> acc(outer * inner, 0.0);
    const auto& xd = x.s_->data;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t a = 0; a < len; ++a)
        for (std::size_t i = 0; i < inner; ++i) acc[o * inner + i] += xd[(o * len + a) * inner + i];
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    return record(OpKind::kSumAxis, out_shape, Buffer(acc.begin(), acc.end()), {x},
                  [x, axis](Graph& g, const TensorT& go) {
                    Shape keep = x.shape();
                    keep[axis] = 1;
                    return std::vector<TensorT>{g.broadcast_to(g.reshape(go, keep), x.shape())};
                  });
  }

  TensorT mean(const TensorT& x) {
    if (x.numel() == 0) throw ShapeError("mean: empty tensor");
    double acc = 0.0;
    for (const Real e : x.s_->data) acc += e;
    const double n = static_cast<double>(x.numel());
    return record(OpKind::kMean, Shape{}, {static_cast<Real>(acc / n)}, {x},
                  [x, n](Graph& g, const TensorT& go) {
                    return std::vector<TensorT>{g.affine(g.broadcast_to(go, x.shape()), 1.0 / n, 0.0)};
                  });
  }

  // ---- structural ----

  TensorT broadcast_to(const TensorT& x, const Shape& shape) {
    if (x.shape() == shape) return x;
    if (broadcast_shapes(OpKind::kBroadcast, x.shape(), shape) != shape) {
      throw ShapeError(std::string("broadcast: cannot broadcast ") + shape_str(x.shape()) + " to " +
                       shape_str(shape));
    }
    Buffer v(numel_of(shape));
    const auto& xd = x.s_->data;
    detail::for_each_broadcast(shape, x.shape(), [&](std::size_t bi, std::size_t si) { v[bi] = xd[si]; });
    return record(OpKind::kBroadcast, shape, std::move(v), {x}, [x](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.sum_to(go, x.shape())};
    });
  }

  // Reduces a broadcast result back to `shape` (adjoint of broadcast_to).
  TensorT sum_to(const TensorT& x, const Shape& shape) {
    if (x.shape() == shape) return x;
    if (broadcast_shapes(OpKind::kSumTo, shape, x.shape()) != x.shape()) {
      throw ShapeError(std::string("sum_to: cannot reduce ") + shape_str(x.shape()) + " to " +
                       shape_str(shape));
    }
    std::vector<double> acc(numel_of(shape), 0.0);
    const auto& xd = x.s_->data;
    detail::for_each_broadcast(x.shape(), shape, [&](std::size_t bi, std::size_t si) { acc[si] += xd[bi]; });
    return record(OpKind::kSumTo, shape, Buffer(acc.begin(), acc.end()), {x},
                  [x](Graph& g, const TensorT& go) {
                    return std::vector<TensorT>{g.broadcast_to(go, x.shape())};
                  });
  }

  TensorT reshape(const TensorT& x, const Shape& shape) {
    if (numel_of(shape) != x.numel()) {
      throw ShapeError(std::string("reshape: cannot view ") + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    if (x.shape() == shape) return x;
    return record(OpKind::kReshape, shape, x.s_->data, {x}, [x](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.reshape(go, x.shape())};
    });
  }

  TensorT concat(const std::vector<TensorT>& xs, std::size_t axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    Shape out_shape = xs.front().shape();
    if (axis >= out_shape.size()) {
      throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(out_shape));
    }
    out_shape[axis] = 0;
    for (const auto& x : xs) {
      Shape probe = x.shape();
      if (probe.size() != out_shape.size()) {
        throw ShapeError("concat: rank mismatch, expected " + shape_str(xs.front().shape()) + ", got " +
                         shape_str(x.shape()));
      }
      for (std::size_t d = 0; d < probe.size(); ++d) {
        if (d != axis && probe[d] != xs.front().dim(d)) {
          throw ShapeError("concat: expected " + shape_str(xs.front().shape()) + " off axis " +
                           std::to_string(axis) + ", got " + shape_str(x.shape()));
        }
      }
      out_shape[axis] += probe[axis];
    }
    const auto [outer, total, inner] = split_at(out_shape, axis);
    Buffer v(numel_of(out_shape));
    std::size_t begin = 0;
    for (const auto& x : xs) {
      const std::size_t len = x.dim(axis);
      for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(x.s_->data.begin() + static_cast<std::ptrdiff_t>(o * len * inner), len * inner,
                    v.begin() + static_cast<std::ptrdiff_t>((o * total + begin) * inner));
      }
      begin += len;
    }
    return record(OpKind::kConcat, out_shape, std::move(v), xs, [xs, axis](Graph& g, const TensorT& go) {
      std::vector<TensorT> grads;
      std::size_t b = 0;
      for (const auto& x : xs) {
        const std::size_t len = x.dim(axis);
        grads.push_back(x.requires_grad() ? g.slice(go, axis, b, b + len) : TensorT());
        b += len;
      }
      return grads;
    });
  }

  // Elements [begin, end) along `axis`.
  TensorT slice(const TensorT& x, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= x.rank() || begin >= end || end > x.dim(axis)) {
      throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                       std::to_string(axis) + " invalid for " + shape_str(x.shape()));
    }
    const auto [outer, len, inner] = split_at(x.shape(), axis);
    const std::size_t width = end - begin;
    Shape out_shape = x.shape();
    out_shape[axis] = width;
    Buffer v(outer * width * inner);
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(x.s_->data.begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner), width * inner,
                  v.begin() + static_cast<std::ptrdiff_t>(o * width * inner));
    }
    const std::size_t full = x.dim(axis);
    return record(OpKind::kSlice, out_shape, std::move(v), {x}, [axis, begin, full](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.pad(go, axis, begin, full)};
    });
  }

  // Embeds x at offset `begin` of a zero tensor whose `axis` extent is `full`
  // (adjoint of slice).
  TensorT pad(const TensorT& x, std::size_t axis, std::size_t begin, std::size_t full) {
    if (axis >= x.rank() || begin + x.dim(axis) > full) {
      throw ShapeError("pad: cannot place " + shape_str(x.shape()) + " at " + std::to_string(begin) +
                       " within extent " + std::to_string(full));
    }
    const auto [outer, len, inner] = split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = full;
    Buffer v(numel_of(out_shape), Real(0));
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(x.s_->data.begin() + static_cast<std::ptrdiff_t>(o * len * inner), len * inner,
                  v.begin() + static_cast<std::ptrdiff_t>((o * full + begin) * inner));
    }
    return record(OpKind::kPad, out_shape, std::move(v), {x}, [axis, begin, len](Graph& g, const TensorT& go) {
      return std::vector<TensorT>{g.slice(go, axis, begin, begin + len)};
    });
  }

  // ---- differentiation ----

  // Accumulates d(loss)/d(leaf) into every reachable requires_grad leaf.
  void backward(const TensorT& loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw AutodiffError("backward: loss must be a scalar, got shape " +
                          (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    auto grads = sweep(loss, TensorT(loss.shape(), Real(1)), false);
    for (auto& [key, entry] : grads) {
      if (!entry.target.is_leaf() || !entry.target.requires_grad()) continue;
      auto dst = entry.target.mutable_grad();
      const auto src = entry.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }

  // Vector-Jacobian product cotangentᵀ · d(output)/d(input). With
  // create_graph the result is itself recorded and can be differentiated.
  TensorT vjp(const TensorT& output, const TensorT& input, const TensorT& cotangent, bool create_graph = false) {
    return vjp(output, std::vector<TensorT>{input}, cotangent, create_graph).front();
  }

  std::vector<TensorT> vjp(const TensorT& output, const std::vector<TensorT>& inputs, const TensorT& cotangent,
                           bool create_graph = false) {
    if (!cotangent.defined() || cotangent.shape() != output.shape()) {
      throw ShapeError("vjp: cotangent shape " +
                       (cotangent.defined() ? shape_str(cotangent.shape()) : std::string("<undefined>")) +
                       " != output shape " + shape_str(output.shape()));
    }
    auto grads = sweep(output, cotangent, create_graph);
    std::vector<TensorT> out;
    for (const auto& in : inputs) {
      auto it = grads.find(in.id());
      if (it == grads.end()) throw AutodiffError("vjp: input is not reachable from output");
      out.push_back(it->second.grad);
    }
    return out;
  }

 private:
  using BackwardFn = std::function<std::vector<TensorT>(Graph&, const TensorT&)>;

  struct Node {
    OpKind kind;
    std::vector<TensorT> inputs;
    TensorT output;
    BackwardFn backward;
  };

  struct GradEntry {
    TensorT target;
    TensorT grad;
  };

  // Weak self-reference for closures that need the op's own output without
  // forming a node -> closure -> output cycle.
  static std::weak_ptr<detail::Storage<Real>> weak(const TensorT& t) { return t.s_; }
  static TensorT strong(const std::weak_ptr<detail::Storage<Real>>& w) {
    TensorT t;
    t.s_ = w.lock();
    return t;
  }

  static double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  struct Split {
    std::size_t outer, len, inner;
  };
  static Split split_at(const Shape& s, std::size_t axis) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    return {outer, s[axis], inner};
  }

  static Shape broadcast_shapes(OpKind kind, const Shape& a, const Shape& b) {
    const std::size_t n = std::max(a.size(), b.size());
    Shape out(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
      const std::size_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
      if (da != db && da != 1 && db != 1) {
        throw ShapeError(std::string(op_name(kind)) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                         " are not broadcast-compatible");
      }
      out[i] = std::max(da, db);
    }
    return out;
  }

  struct Broadcast {
    TensorT x, y;
    Shape shape;
  };

  // Operands of an elementwise binary op. An operand that repeats as a
  // contiguous trailing block of the result is used as is; anything else is
  // materialized through broadcast_to.
  Broadcast broadcast_pair(OpKind kind, const TensorT& a, const TensorT& b) {
    if (a.shape() == b.shape()) return {a, b, a.shape()};
    const Shape out = broadcast_shapes(kind, a.shape(), b.shape());
    const auto fit = [&](const TensorT& t) {
      return t.shape() == out || detail::is_trailing_block(out, t.shape()) ? t : broadcast_to(t, out);
    };
    TensorT x = fit(a), y = fit(b);
    if (x.numel() != numel_of(out) && y.numel() != numel_of(out)) x = broadcast_to(x, out);
    return {x, y, out};
  }

  // Elementwise f over operands where each is either full-size or a
  // trailing block of the result.
  template <class F>
  static Buffer zip(const TensorT& x, const TensorT& y, const Shape& shape, F f) {
    const std::size_t total = numel_of(shape);
    Buffer v(total);
    const Real* px = x.s_->data.data();
    const Real* py = y.s_->data.data();
    const std::size_t nx = x.numel(), ny = y.numel();
    if (nx == total && ny == total) {
      for (std::size_t i = 0; i < total; ++i) v[i] = f(px[i], py[i]);
    } else if (nx == total) {
      for (std::size_t o = 0; o < total; o += ny)
        for (std::size_t j = 0; j < ny; ++j) v[o + j] = f(px[o + j], py[j]);
    } else {
      for (std::size_t o = 0; o < total; o += nx)
        for (std::size_t j = 0; j < nx; ++j) v[o + j] = f(px[j], py[o + j]);
    }
    return v;
  }

  TensorT record(OpKind kind, Shape shape, Buffer values, std::vector<TensorT> inputs, BackwardFn fn) {
    TensorT out = TensorT::from_buffer(std::move(shape), std::move(values));
    const bool needed =
        recording_ && std::any_of(inputs.begin(), inputs.end(), [](const TensorT& t) { return t.requires_grad(); });
    if (needed) {
      out.s_->requires_grad = true;
      out.s_->graph_id = id_;
      out.s_->node = nodes_.size();
      nodes_.push_back(Node{kind, std::move(inputs), out, std::move(fn)});
    }
    return out;
  }

  void set_backward(const TensorT& out, BackwardFn fn) {
    if (out.s_->graph_id == id_) nodes_[out.s_->node].backward = std::move(fn);
  }

  std::unordered_map<const void*, GradEntry> sweep(const TensorT& root, const TensorT& seed, bool create_graph) {
    if (!root.defined() || root.s_->graph_id != id_) {
      throw AutodiffError("backward: tensor was not produced by ops recorded on this graph");
    }
    std::unordered_map<const void*, GradEntry> grads;
    grads.emplace(root.id(), GradEntry{root, seed});
    const bool saved = recording_;
    recording_ = create_graph;
    try {
      for (std::size_t i = root.s_->node + 1; i-- > 0;) {
        auto it = grads.find(nodes_[i].output.id());
        if (it == grads.end()) continue;
        const TensorT gout = it->second.grad;
        // deque references stay valid while backward appends new nodes.
        Node& node = nodes_[i];
        std::vector<TensorT> in_grads = node.backward(*this, gout);
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const TensorT& in = node.inputs[k];
          if (!in.requires_grad() || k >= in_grads.size() || !in_grads[k].defined()) continue;
          auto [slot, inserted] = grads.try_emplace(in.id(), GradEntry{in, in_grads[k]});
          if (!inserted) slot->second.grad = add(slot->second.grad, in_grads[k]);
        }
      }
    } catch (...) {
      recording_ = saved;
      throw;
    }
    recording_ = saved;
    return grads;
  }

  std::uint64_t id_;
  bool recording_ = true;
  bool track_pattern_ = false;
  std::uint64_t pattern_hash_ = 0xcbf29ce484222325ULL;
  std::deque<Node> nodes_;
};

}  // namespace spigan
