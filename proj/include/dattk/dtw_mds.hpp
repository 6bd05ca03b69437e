// Trajectory distances by dynamic time warping and classical (Torgerson)
// multidimensional scaling of the resulting distance matrix.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dattk/core.hpp"
#include "dattk/io.hpp"
#include "dattk/matrix.hpp"

namespace dattk::dtw {

class DtwError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Point {
  double day = 0.0;        // in [0, 1]
  double component = 0.0;  // in [0, 1]

  friend bool operator==(const Point&, const Point&) = default;
};

using TrajectorySeries = std::vector<Point>;

/// Maps each entry (d, c) to (d / (days - 1), c / (components - 1)); an axis
/// of length 1 maps to 0. Entry order is kept.
inline TrajectorySeries dat_to_series(const Dat& dat, const CourseSpec& spec) {
  if (dat.empty()) throw DtwError("empty trajectory for learner '" + dat.learner_id() + "'");
  const int days = spec.duration_days();
  const int comps = spec.n_components(dat.category());
  const double day_scale = days > 1 ? 1.0 / (days - 1) : 0.0;
  const double comp_scale = comps > 1 ? 1.0 / (comps - 1) : 0.0;
  TrajectorySeries s;
  s.reserve(dat.size());
  for (const Entry& e : dat.entries()) s.push_back({e.day * day_scale, e.component * comp_scale});
  return s;
}

inline double point_distance(const Point& a, const Point& b) {
  const double dx = a.day - b.day;
  const double dy = a.component - b.component;
  return std::sqrt(dx * dx + dy * dy);
}

/// DTW with Euclidean point cost and the match / insert / delete step set,
/// no band. The minimum-cost warping path is selected (ties go to the shorter
/// path) and its cost is divided by its number of matched pairs.
inline double dtw_distance(std::span<const Point> a, std::span<const Point> b) {
  if (a.empty() || b.empty()) throw DtwError("dtw_distance: series must be non-empty");
  struct Cell {
    double cost;
    std::int64_t len;
  };
  auto better = [](const Cell& x, const Cell& y) {
    return x.cost < y.cost || (x.cost == y.cost && x.len < y.len);
  };
  const std::size_t m = b.size();
  std::vector<Cell> prev(m), cur(m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      Cell best{0.0, 0};
      if (i == 0 && j == 0) {
        best = {0.0, 0};
      } else {
        bool have = false;
        auto consider = [&](const Cell& c) {
          if (!have || better(c, best)) best = c;
          have = true;
        };
        if (i > 0 && j > 0) consider(prev[j - 1]);
        if (i > 0) consider(prev[j]);
        if (j > 0) consider(cur[j - 1]);
      }
      cur[j] = {best.cost + point_distance(a[i], b[j]), best.len + 1};
    }
    std::swap(prev, cur);
  }
  const Cell& end = prev[m - 1];
  return end.cost / static_cast<double>(end.len);
}

/// Symmetric distance matrix with zero diagonal, stored as the condensed
/// upper triangle in row order: (0,1), (0,2), ..., (0,n-1), (1,2), ...
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), values_(n * (n - (n > 0 ? 1 : 0)) / 2, 0.0) {}

  std::size_t n() const noexcept { return n_; }
  std::span<const double> condensed() const noexcept { return values_; }
  std::span<double> condensed() noexcept { return values_; }

  static std::size_t index(std::size_t n, std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return i * n - i * (i + 1) / 2 + (j - i - 1);
  }

  double operator()(std::size_t i, std::size_t j) const {
    return i == j ? 0.0 : values_[index(n_, i, j)];
  }
  void set(std::size_t i, std::size_t j, double v) { values_[index(n_, i, j)] = v; }

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

/// All pairwise DTW distances. Rows are dealt to `threads` workers; each
/// pair writes its own slot, so every schedule gives the same matrix.
inline DistanceMatrix distance_matrix(std::span<const TrajectorySeries> series,
                                      unsigned threads = 1) {
  const std::size_t n = series.size();
  if (n < 2) throw DtwError("distance_matrix needs at least 2 trajectories");
  for (const auto& s : series)
    if (s.empty()) throw DtwError("distance_matrix: empty trajectory");
  DistanceMatrix dm(n);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride)
      for (std::size_t j = i + 1; j < n; ++j) dm.set(i, j, dtw_distance(series[i], series[j]));
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  return dm;
}

// Binary file: magic "DATDIST1", u64 n, u64 input digest, then the n(n-1)/2
// condensed values as little-endian IEEE-754 doubles.
inline constexpr std::string_view kDistanceMagic = "DATDIST1";

inline std::string serialize_distance_matrix(const DistanceMatrix& dm, std::uint64_t digest) {
  io::BinaryWriter w;
  w.bytes(kDistanceMagic);
  w.integer(static_cast<std::uint64_t>(dm.n()));
  w.integer(digest);
  for (double v : dm.condensed()) w.f64(v);
  return w.data();
}

struct StoredDistanceMatrix {
  DistanceMatrix matrix;
  std::uint64_t digest = 0;
};

inline StoredDistanceMatrix deserialize_distance_matrix(std::string_view data) {
  io::BinaryReader r(data);
  if (r.bytes(kDistanceMagic.size()) != kDistanceMagic)
    throw io::FormatError("not a distance matrix file");
  StoredDistanceMatrix out;
  const auto n = r.integer<std::uint64_t>();
  out.digest = r.integer<std::uint64_t>();
  out.matrix = DistanceMatrix(static_cast<std::size_t>(n));
  for (double& v : out.matrix.condensed()) v = r.f64();
  if (!r.at_end()) throw io::FormatError("trailing bytes after distance matrix");
  return out;
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition

struct Eigen {
  std::vector<double> values;  // descending
  Matrix vectors;              // column k pairs with values[k]
};

/// Eigendecomposition of a symmetric matrix by Householder reduction to
/// tridiagonal form followed by the implicit QL algorithm (the EISPACK
/// tred2 / tql2 pair).
inline Eigen symmetric_eigen(const Matrix& a) {
  if (a.rows != a.cols) throw std::invalid_argument("symmetric_eigen: matrix must be square");
  const std::size_t n = a.rows;
  Eigen out;
  if (n == 0) return out;
  Matrix v = a;
  std::vector<double> d(n), e(n);

  // tred2
  for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);
  for (std::size_t i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (std::size_t k = 0; k < i; ++k) scale += std::fabs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (std::size_t j = 0; j < i; ++j) {
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (std::size_t k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        v(j, i) = f;
        g = e[j] + v(j, j) * f;
        for (std::size_t k = j + 1; k <= i - 1; ++k) {
          g += v(k, j) * d[k];
          e[k] += v(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (std::size_t k = j; k <= i - 1; ++k) v(k, j) -= (f * e[k] + g * d[k]);
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d[i] = h;
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (std::size_t k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
      for (std::size_t j = 0; j <= i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
        for (std::size_t k = 0; k <= i; ++k) v(k, j) -= g * d[k];
      }
    }
    for (std::size_t k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e[0] = 0.0;

  // tql2
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::fabs(d[l]) + std::fabs(e[l]));
    std::size_t m = l;
    while (m < n - 1 && std::fabs(e[m]) > eps * tst1) ++m;
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > 60) throw std::runtime_error("symmetric_eigen: QL iteration did not converge");
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (std::size_t ii = m; ii-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[ii];
          h = c * p;
          r = std::hypot(p, e[ii]);
          e[ii + 1] = s * r;
          s = e[ii] / r;
          c = p / r;
          p = c * d[ii] - s * g;
          d[ii + 1] = h + s * (c * g + s * d[ii]);
          for (std::size_t k = 0; k < n; ++k) {
            h = v(k, ii + 1);
            v(k, ii + 1) = s * v(k, ii) + c * h;
            v(k, ii) = c * v(k, ii) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::fabs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return d[x] > d[y]; });
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = d[order[k]];
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

/// Classical MDS: double-centre the squared distances, keep the top-k
/// eigenpairs and scale eigenvectors by sqrt(eigenvalue). Negative
/// eigenvalues give zero coordinates.
inline Matrix classical_mds(const DistanceMatrix& dm, std::size_t k = 10) {
  const std::size_t n = dm.n();
  if (n <= k)
    throw DtwError("classical_mds needs more points (" + std::to_string(n) +
                   ") than dimensions (" + std::to_string(k) + ")");
  Matrix b(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) b(i, j) = dm(i, j) * dm(i, j);
  std::vector<double> row_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row_mean[i] += b(i, j);
    grand += row_mean[i];
    row_mean[i] /= static_cast<double>(n);
  }
  grand /= static_cast<double>(n) * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      b(i, j) = -0.5 * (b(i, j) - row_mean[i] - row_mean[j] + grand);

  const auto eig = symmetric_eigen(b);
  Matrix coords(n, k);
  for (std::size_t c = 0; c < k; ++c) {
    const double lambda = eig.values[c];
    if (!(lambda > 0.0)) continue;
    const double scale = std::sqrt(lambda);
    for (std::size_t r = 0; r < n; ++r) coords(r, c) = eig.vectors(r, c) * scale;
  }
  return coords;
}

}  // namespace dattk::dtw
