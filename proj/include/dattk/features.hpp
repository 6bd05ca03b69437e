// Ten handcrafted video-watching features and column standardization.
//
// Definitions (all variances are population variances; statistics over an
// empty interval set are 0):
//   n_unique_videos      distinct videos accessed
//   n_days               active days
//   ave_day_intervals    mean gap between consecutive active days
//   var_days             variance of the active-day indices
//   ave_video_intervals  mean |index difference| between consecutive videos,
//                        videos taken in order of first access
//   var_videos           variance of the distinct video indices
//   rate_videos_repeats  share of distinct videos accessed on >= 2 days
//   n_videos_per_day     entries / active days
//   var_day_intervals    variance of the active-day gaps
//   var_video_intervals  variance of the first-access index gaps
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dattk/core.hpp"
#include "dattk/matrix.hpp"

namespace dattk::features {

inline constexpr std::size_t kFeatureCount = 10;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "n_unique_videos",     "n_days",     "ave_day_intervals",   "var_days",
    "ave_video_intervals", "var_videos", "rate_videos_repeats", "n_videos_per_day",
    "var_day_intervals",   "var_video_intervals"};

struct FeatureVector {
  std::string learner_id;
  std::array<double, kFeatureCount> values{};
};

class FeatureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double pvariance(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size());
}

}  // namespace detail

inline FeatureVector extract_features(const Dat& dat) {
  if (dat.empty()) throw FeatureError("empty trajectory for learner '" + dat.learner_id() + "'");

  const auto days = active_days(dat);
  std::vector<double> day_values(days.begin(), days.end());
  std::vector<double> day_gaps;
  for (std::size_t i = 1; i < days.size(); ++i) day_gaps.push_back(days[i] - days[i - 1]);

  // Entries are (day, component)-sorted, so the first sighting of each video
  // walks them in first-access order.
  std::vector<int> first_order;
  std::vector<int> day_count;
  for (const Entry& e : dat.entries()) {
    const auto v = static_cast<std::size_t>(e.component);
    if (v >= day_count.size()) day_count.resize(v + 1, 0);
    if (day_count[v]++ == 0) first_order.push_back(e.component);
  }
  std::vector<double> video_gaps;
  for (std::size_t i = 1; i < first_order.size(); ++i)
    video_gaps.push_back(std::abs(first_order[i] - first_order[i - 1]));
  std::vector<double> unique_videos;
  std::size_t repeated = 0;
  for (std::size_t v = 0; v < day_count.size(); ++v) {
    if (day_count[v] == 0) continue;
    unique_videos.push_back(static_cast<double>(v));
    if (day_count[v] >= 2) ++repeated;
  }

  const double n_unique = static_cast<double>(unique_videos.size());
  const double n_days = static_cast<double>(days.size());
  FeatureVector f;
  f.learner_id = dat.learner_id();
  f.values = {n_unique,
              n_days,
              detail::mean(day_gaps),
              detail::pvariance(day_values),
              detail::mean(video_gaps),
              detail::pvariance(unique_videos),
              static_cast<double>(repeated) / n_unique,
              static_cast<double>(dat.size()) / n_days,
              detail::pvariance(day_gaps),
              detail::pvariance(video_gaps)};
  return f;
}

inline Matrix to_matrix(std::span<const FeatureVector> fvs) {
  Matrix m(fvs.size(), kFeatureCount);
  for (std::size_t i = 0; i < fvs.size(); ++i)
    for (std::size_t j = 0; j < kFeatureCount; ++j) m(i, j) = fvs[i].values[j];
  return m;
}

/// Per-column z-scores with the population standard deviation. Columns with
/// zero variance become all zeros.
inline Matrix standardize(const Matrix& m) {
  if (m.rows < 2) throw FeatureError("standardize needs at least 2 rows");
  Matrix out(m.rows, m.cols);
  const double n = static_cast<double>(m.rows);
  for (std::size_t j = 0; j < m.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) mean += m(i, j);
    mean /= n;
    double ss = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) ss += (m(i, j) - mean) * (m(i, j) - mean);
    const double sd = std::sqrt(ss / n);
    if (!(sd > 1e-12 * std::max(1.0, std::fabs(mean)))) continue;
    for (std::size_t i = 0; i < m.rows; ++i) out(i, j) = (m(i, j) - mean) / sd;
  }
  return out;
}

}  // namespace dattk::features
