// Exact O(n^2) t-SNE for projecting embeddings to two dimensions.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dattk/matrix.hpp"

namespace dattk::tsne {

class TsneError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch = 250;
  std::uint64_t seed = 0;
  int kl_every = 50;  // record the objective every this many iterations
};

struct KlSample {
  int iteration;
  double kl;
};

struct TsneResult {
  Matrix y;  // n x 2
  std::vector<KlSample> kl_history;
};

/// KL(P || Q) = sum over p > 0 of p log(p / q), with q clipped at 1e-12.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw TsneError("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
  return kl;
}

inline std::vector<double> squared_distances(const Matrix& x) {
  const std::size_t n = x.rows;
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols; ++k) {
        const double diff = x(i, k) - x(j, k);
        s += diff * diff;
      }
      d[i * n + j] = d[j * n + i] = s;
    }
  return d;
}

/// Conditional affinities p_{j|i} with per-point Gaussian precisions found by
/// binary search so that each row's entropy matches log(perplexity)
/// (tolerance 1e-5, at most 50 steps), then symmetrized and normalized to
/// sum to 1.
inline std::vector<double> joint_probabilities(const Matrix& x, double perplexity) {
  const std::size_t n = x.rows;
  const auto d = squared_distances(x);
  std::vector<double> p(n * n, 0.0);
  const double target = std::log(perplexity);
  constexpr double kTol = 1e-5;
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    const double* di = &d[i * n];
    double* pi = &p[i * n];
    // Shift by the nearest-neighbour distance so exp() cannot underflow to 0
    // for every neighbour; the shift cancels in the normalization.
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, di[j]);
    for (int step = 0; step < 50; ++step) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        pi[j] = j == i ? 0.0 : std::exp(-beta * (di[j] - dmin));
        sum += pi[j];
      }
      double h = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        pi[j] /= sum;
        h += beta * (di[j] - dmin) * pi[j];
      }
      h += std::log(sum);
      const double diff = h - target;
      if (std::fabs(diff) < kTol) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
  }
  std::vector<double> joint(n * n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      joint[i * n + j] = p[i * n + j] + p[j * n + i];
      total += joint[i * n + j];
    }
  for (double& v : joint) v /= total;
  return joint;
}

namespace detail {

// Student-t kernel numerators num_ij = 1 / (1 + |y_i - y_j|^2) and Q = num / sum.
inline double student_kernel(const Matrix& y, std::vector<double>& num) {
  const std::size_t n = y.rows;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num[i * n + i] = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y(i, 0) - y(j, 0);
      const double dy = y(i, 1) - y(j, 1);
      const double v = 1.0 / (1.0 + dx * dx + dy * dy);
      num[i * n + j] = num[j * n + i] = v;
      sum += 2.0 * v;
    }
  }
  return sum;
}

}  // namespace detail

inline double current_kl(std::span<const double> p, const Matrix& y) {
  const std::size_t n = y.rows;
  std::vector<double> num(n * n);
  const double sum = detail::student_kernel(y, num);
  for (double& v : num) v /= sum;
  return kl_divergence(p, num);
}

inline void validate(std::size_t n, const TsneConfig& cfg) {
  if (n < 10) throw TsneError("t-SNE needs at least 10 points (got " + std::to_string(n) + ")");
  if (!(cfg.perplexity > 0.0) || !(cfg.perplexity < static_cast<double>(n) / 3.0))
    throw TsneError("perplexity " + std::to_string(cfg.perplexity) + " infeasible for " +
                    std::to_string(n) + " points (must be < n/3)");
  if (cfg.iterations <= 0 || !(cfg.learning_rate > 0.0) || !(cfg.early_exaggeration > 0.0))
    throw TsneError("t-SNE hyperparameters must be positive");
}

/// Gradient descent on KL(P || Q) with momentum, per-parameter gains and an
/// early-exaggeration phase. The embedding is re-centred every iteration.
/// Single-threaded and deterministic for a fixed seed.
inline TsneResult tsne(const Matrix& x, const TsneConfig& cfg = {}) {
  const std::size_t n = x.rows;
  validate(n, cfg);
  for (double v : x.data)
    if (!std::isfinite(v)) throw TsneError("t-SNE input contains non-finite values");

  const auto p = joint_probabilities(x, cfg.perplexity);

  TsneResult out;
  out.y = Matrix(n, 2);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  for (double& v : out.y.data) v = init(rng);

  Matrix update(n, 2);
  Matrix gains(n, 2);
  std::fill(gains.data.begin(), gains.data.end(), 1.0);
  std::vector<double> num(n * n);
  std::vector<double> grad(n * 2);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double exaggeration = iter < cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double momentum = iter < cfg.momentum_switch ? cfg.initial_momentum : cfg.final_momentum;

    const double sum = detail::student_kernel(out.y, num);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = num[i * n + j];
        const double mult = (exaggeration * p[i * n + j] - w / sum) * w;
        grad[i * 2 + 0] += 4.0 * mult * (out.y(i, 0) - out.y(j, 0));
        grad[i * 2 + 1] += 4.0 * mult * (out.y(i, 1) - out.y(j, 1));
      }
    }
    for (std::size_t k = 0; k < n * 2; ++k) {
      double& g = gains.data[k];
      double& u = update.data[k];
      g = (grad[k] > 0.0) != (u > 0.0) ? g + 0.2 : g * 0.8;
      g = std::max(g, 0.01);
      u = momentum * u - cfg.learning_rate * g * grad[k];
      out.y.data[k] += u;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += out.y(i, 0);
      my += out.y(i, 1);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.y(i, 0) -= mx;
      out.y(i, 1) -= my;
    }
    if (cfg.kl_every > 0 && ((iter + 1) % cfg.kl_every == 0 || iter + 1 == cfg.iterations))
      out.kl_history.push_back({iter + 1, current_kl(p, out.y)});
  }
  return out;
}

}  // namespace dattk::tsne
