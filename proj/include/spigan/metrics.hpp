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

// Toy-scale sample-quality metrics.
//
// Point sets are [n, d] tensors. All computations run in double on a single
// thread, so results do not depend on scheduling.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spigan/autodiff.hpp"
#include "spigan/diffusion.hpp"
#include "spigan/error.hpp"
#include "spigan/random.hpp"
#include "spigan/spi.hpp"

namespace spigan {

inline constexpr std::size_t kMaxAssignmentSize = 2048;
inline constexpr int kDefaultNeighbors = 5;

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::map<std::string, std::string> params;

  // "name<TAB>value<TAB>k1=v1,k2=v2"
  std::string to_line() const {
    std::ostringstream os;
    os.precision(10);
    os << name << '\t' << value << '\t';
    bool first = true;
    for (const auto& [k, v] : params) {
      os << (first ? "" : ",") << k << '=' << v;
      first = false;
    }
    return os.str();
  }
};

namespace detail {

template <class Real>
void check_points(const char* what, const Tensor<Real>& p) {
  if (p.rank() != 2 || p.dim(0) == 0) {
    throw ShapeError(std::string(what) + ": expected a non-empty [n,d] point set, got " + shape_str(p.shape()));
  }
}

template <class Real>
double sq_dist(const Tensor<Real>& a, std::size_t i, const Tensor<Real>& b, std::size_t j) {
  const std::size_t d = a.dim(1);
  const auto pa = a.data().subspan(i * d, d);
  const auto pb = b.data().subspan(j * d, d);
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = static_cast<double>(pa[k]) - static_cast<double>(pb[k]);
    acc += diff * diff;
  }
  return acc;
}

// Distance from each point to its k-th nearest neighbour within the set,
// excluding the point itself.
template <class Real>
std::vector<double> knn_radii(const Tensor<Real>& pts, std::size_t k) {
  const std::size_t n = pts.dim(0);
  std::vector<double> radii(n);
  std::vector<double> row(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row[c++] = sq_dist(pts, i, pts, j);
    }
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    radii[i] = std::sqrt(row[k - 1]);
  }
  return radii;
}

}  // namespace detail

// Minimum-cost perfect matching on a dense n x n cost matrix given as a
// callable cost(i, j) (Hungarian method with potentials, O(n^3)).
// Returns assignment[i] = column matched to row i.
template <class Cost>
std::vector<std::size_t> solve_assignment(std::size_t n, Cost&& cost) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

// Empirical 2-Wasserstein distance between equal-size point sets:
// sqrt of the minimal mean squared matching cost.
template <class Real>
double wasserstein2(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::check_points("wasserstein2", a);
  detail::check_points("wasserstein2", b);
  if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1)) {
    throw ShapeError("wasserstein2: point sets differ in shape: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0);
  if (n > kMaxAssignmentSize) {
    throw RangeError("wasserstein2: at most " + std::to_string(kMaxAssignmentSize) + " points per set");
  }
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = detail::sq_dist(a, i, b, j);
  const auto match = solve_assignment(n, [&](std::size_t i, std::size_t j) { return cost[i * n + j]; });
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i * n + match[i]];
  return std::sqrt(total / static_cast<double>(n));
}

// Fraction of real points inside the fake manifold: the union of balls
// around fake points with radius = distance to the k-th nearest other fake.
template <class Real>
double knn_recall(const Tensor<Real>& real, const Tensor<Real>& fake, int k = kDefaultNeighbors) {
  detail::check_points("knn_recall", real);
  detail::check_points("knn_recall", fake);
  if (k < 1 || static_cast<std::size_t>(k) >= fake.dim(0)) {
    throw RangeError("knn_recall: need 1 <= k < |fake|, got k=" + std::to_string(k));
  }
  const auto radii = detail::knn_radii(fake, static_cast<std::size_t>(k));
  std::size_t inside = 0;
  for (std::size_t i = 0; i < real.dim(0); ++i) {
    for (std::size_t j = 0; j < fake.dim(0); ++j) {
      if (std::sqrt(detail::sq_dist(real, i, fake, j)) <= radii[j]) {
        ++inside;
        break;
      }
    }
  }
  return static_cast<double>(inside) / static_cast<double>(real.dim(0));
}

// Fraction of real points whose k-NN ball (within the real set) contains at
// least one fake point.
template <class Real>
double knn_coverage(const Tensor<Real>& real, const Tensor<Real>& fake, int k = kDefaultNeighbors) {
  detail::check_points("knn_coverage", real);
  detail::check_points("knn_coverage", fake);
  if (k < 1 || static_cast<std::size_t>(k) >= real.dim(0)) {
    throw RangeError("knn_coverage: need 1 <= k < |real|, got k=" + std::to_string(k));
  }
  const auto radii = detail::knn_radii(real, static_cast<std::size_t>(k));
  std::size_t covered = 0;
  for (std::size_t i = 0; i < real.dim(0); ++i) {
    for (std::size_t j = 0; j < fake.dim(0); ++j) {
      if (std::sqrt(detail::sq_dist(real, i, fake, j)) <= radii[i]) {
        ++covered;
        break;
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(real.dim(0));
}

struct ModeHistogram {
  std::vector<std::size_t> counts;  // per center
  std::size_t unassigned = 0;

  std::size_t total() const {
    std::size_t t = unassigned;
    for (auto c : counts) t += c;
    return t;
  }
  std::size_t assigned() const { return total() - unassigned; }
  std::size_t modes_covered(std::size_t min_count = 1) const {
    return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [&](auto c) { return c >= min_count; }));
  }
};

// Assigns each point to its nearest center when within 3 sigma.
template <class Real>
ModeHistogram mode_coverage(const Tensor<Real>& fake, const std::vector<std::array<double, 2>>& centers, double sigma) {
  if (centers.empty()) throw RangeError("mode_coverage: no centers");
  detail::check_points("mode_coverage", fake);
  if (fake.dim(1) != 2) throw ShapeError("mode_coverage: expected 2-D points, got " + shape_str(fake.shape()));
  ModeHistogram h;
  h.counts.assign(centers.size(), 0);
  for (std::size_t i = 0; i < fake.dim(0); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double dx = fake.at(i, 0) - centers[c][0];
      const double dy = fake.at(i, 1) - centers[c][1];
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    if (best <= 3.0 * sigma) {
      ++h.counts[arg];
    } else {
      ++h.unassigned;
    }
  }
  return h;
}

struct PathBalanceRow {
  double u = 0.0;
  double spi_dist = 0.0;  // mean ||i(u) - x0||
  double sde_dist = 0.0;  // mean ||x_{1-u} - x0|| under the VP kernel
};

// Distance-to-clean profile along the straight path versus the VP-SDE
// marginals, with u = 1 clean and u = 0 at the prior. Each x0 gets one
// noise draw eps shared by both columns and every u, so
// xT = m(1) x0 + s(1) eps and x_t = m(t) x0 + s(t) eps.
template <class Real>
std::vector<PathBalanceRow> path_balance(const Tensor<Real>& x0, const VpSchedule& sched, const std::vector<double>& u_grid,
                                         Rng& rng) {
  detail::check_points("path_balance", x0);
  const std::size_t n = x0.dim(0);
  Tensor<Real> eps(x0.shape());
  rng.fill_normal(eps.data());
  const KernelCoeffs k1 = kernel(1.0, sched);
  Tensor<Real> xT(x0.shape());
  for (std::size_t i = 0; i < xT.numel(); ++i) {
    xT.data()[i] = static_cast<Real>(k1.mean_coef * x0.data()[i] + std::sqrt(k1.var) * eps.data()[i]);
  }
  std::vector<PathBalanceRow> rows;
  for (const double u : u_grid) {
    if (!(u >= 0.0 && u <= 1.0)) throw RangeError("path_balance: u=" + std::to_string(u) + " outside [0,1]");
    const Tensor<Real> iu = interpolate(x0, xT, u);
    const KernelCoeffs kt = kernel(1.0 - u, sched);
    Tensor<Real> xt(x0.shape());
    for (std::size_t i = 0; i < xt.numel(); ++i) {
      xt.data()[i] = static_cast<Real>(kt.mean_coef * x0.data()[i] + std::sqrt(kt.var) * eps.data()[i]);
    }
    double spi = 0.0, sde = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      spi += std::sqrt(detail::sq_dist(iu, i, x0, i));
      sde += std::sqrt(detail::sq_dist(xt, i, x0, i));
    }
    rows.push_back({u, spi / static_cast<double>(n), sde / static_cast<double>(n)});
  }
  return rows;
}

// Largest |value(u) - chord(u)| relative to |value(1) - value(0)|, where the
// chord joins the u = 0 and u = 1 entries of the grid.
inline double max_chord_deviation(const std::vector<PathBalanceRow>& rows, bool spi_column) {
  const auto at = [&](double u) {
    for (const auto& r : rows)
      if (r.u == u) return spi_column ? r.spi_dist : r.sde_dist;
    throw RangeError("max_chord_deviation: grid must include u=0 and u=1");
  };
  const double v0 = at(0.0), v1 = at(1.0);
  const double range = std::abs(v1 - v0);
  double worst = 0.0;
  for (const auto& r : rows) {
    const double chord = v0 + r.u * (v1 - v0);
    worst = std::max(worst, std::abs((spi_column ? r.spi_dist : r.sde_dist) - chord));
  }
  return range > 0.0 ? worst / range : worst;
}

// Coefficient of determination of the least-squares line through (x, y).
inline double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0.0) return 1.0;
  return (sxy * sxy) / (sxx * syy);
}

inline std::vector<double> uniform_grid(std::size_t points) {
  if (points < 2) throw RangeError("uniform_grid: need at least 2 points");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) g[i] = static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

}  // namespace spigan
