// Statistical kernels: Welch t-test, two-sample Kolmogorov-Smirnov test and
// normal-approximation proportion intervals. Distribution functions are
// implemented here rather than pulled from a statistics package.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dattk::stats {

class StatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// right: H1 says statistic is large (mean(a) > mean(b) for t-tests).
enum class Tail { left, right, two };

struct TestResult {
  double statistic = 0.0;
  std::optional<double> df;
  double p_value = 1.0;
  Tail tail = Tail::two;
};

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 100000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw StatsError("incomplete_beta: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(T > t) for Student's t with `df` degrees of freedom.
inline double student_t_sf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double x = df / (df + t * t);
  const double half_tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0 ? half_tail : 1.0 - half_tail;
}

inline double student_t_cdf(double t, double df) { return student_t_sf(-t, df); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Inverse of the standard normal CDF, by bisection on erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw StatsError("normal_quantile: p must lie in (0, 1)");
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Kolmogorov distribution survival function Q(lambda) = P(K > lambda).
/// Series are truncated once terms fall below 1e-12.
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  constexpr double kTol = 1e-12;
  if (lambda < 1.18) {
    // Jacobi-theta form, converges quickly for small lambda.
    const double pi = std::acos(-1.0);
    const double y = pi * pi / (8.0 * lambda * lambda);
    double cdf = 0.0;
    for (int k = 1; k < 1000; ++k) {
      const double odd = 2.0 * k - 1.0;
      const double term = std::exp(-odd * odd * y);
      cdf += term;
      if (term < kTol) break;
    }
    cdf *= std::sqrt(2.0 * pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k < 1000; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < kTol) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace detail {

struct Moments {
  double mean;
  double var;  // unbiased
};

inline Moments moments(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, ss / (n - 1.0)};
}

inline double tail_p(double t, double df, Tail tail) {
  switch (tail) {
    case Tail::right: return student_t_sf(t, df);
    case Tail::left: return student_t_cdf(t, df);
    case Tail::two: return std::min(1.0, 2.0 * student_t_sf(std::fabs(t), df));
  }
  return 1.0;
}

}  // namespace detail

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
/// Tail::right tests H1: mean(a) > mean(b).
inline TestResult welch_t(std::span<const double> a, std::span<const double> b, Tail tail) {
  if (a.size() < 2 || b.size() < 2)
    throw StatsError("welch_t: each sample needs at least 2 values (got " +
                     std::to_string(a.size()) + ", " + std::to_string(b.size()) + ")");
  const auto ma = detail::moments(a);
  const auto mb = detail::moments(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = ma.var / na;
  const double vb = mb.var / nb;
  const double se2 = va + vb;

  TestResult r;
  r.tail = tail;
  if (se2 == 0.0) {
    // Both samples constant; the t distribution is not defined.
    r.df = na + nb - 2.0;
    const double diff = ma.mean - mb.mean;
    if (diff == 0.0) {
      r.statistic = 0.0;
      r.p_value = tail == Tail::two ? 1.0 : 0.5;
    } else {
      r.statistic = diff > 0 ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity();
      r.p_value = detail::tail_p(r.statistic, *r.df, tail);
    }
    return r;
  }
  r.statistic = (ma.mean - mb.mean) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p_value = detail::tail_p(r.statistic, *r.df, tail);
  return r;
}

/// p-value of a t statistic with known df, exposed for calibration checks.
inline double t_p_value(double t, double df, Tail tail) { return detail::tail_p(t, df, tail); }

/// Two-sample KS statistic D = sup |F_a - F_b| with right-continuous ECDFs
/// evaluated at every pooled sample point.
inline double ks_statistic(std::span<const double> a, std::span<const double> b) {
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// Two-sample KS test with the asymptotic Kolmogorov p-value. Uses the
/// effective size n = |a||b|/(|a|+|b|) with Stephens' small-sample correction
/// lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) D.
inline TestResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw StatsError("ks_two_sample: each sample needs at least 2 values");
  TestResult r;
  r.tail = Tail::two;
  r.statistic = ks_statistic(a, b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double en = std::sqrt(na * nb / (na + nb));
  r.p_value = kolmogorov_sf((en + 0.12 + 0.11 / en) * r.statistic);
  return r;
}

struct Interval {
  double lo;
  double hi;
};

/// Normal-approximation (Wald) interval for a binomial proportion, clipped to
/// [0, 1].
inline Interval proportion_ci(std::int64_t successes, std::int64_t trials, double level) {
  if (trials < 1) throw StatsError("proportion_ci: trials must be >= 1");
  if (successes < 0 || successes > trials)
    throw StatsError("proportion_ci: successes must lie in [0, trials]");
  if (!(level > 0.0 && level < 1.0)) throw StatsError("proportion_ci: level must lie in (0, 1)");
  const double p = static_cast<double>(successes) / static_cast<double>(trials);
  const double z = normal_quantile(0.5 + 0.5 * level);
  const double half = z * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  return {std::max(0.0, p - half), std::min(1.0, p + half)};
}

}  // namespace dattk::stats
