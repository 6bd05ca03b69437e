// Learning-design-pattern analysis for "view the forum shortly after watching
// a video": conditional forum-day probabilities per day offset, the baseline
// forum-day rate, a KS dependence test and the Group Y / Group N grade test.
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dattk/core.hpp"
#include "dattk/ingest.hpp"
#include "dattk/io.hpp"
#include "dattk/stats.hpp"

namespace dattk::ldp {

class LdpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which learners enter the estimators. The analysis is defined over learners
/// that both watch videos and view forums; `all` exists for diagnostics.
enum class Population { video_and_forum, all };

namespace detail {

struct LearnerDays {
  std::string learner_id;
  std::vector<int> video_days;
  std::vector<std::uint8_t> forum_day;  // indexed by course day
  int forum_days = 0;
  const LearnerRecord* record = nullptr;
};

inline std::vector<LearnerDays> collect(const Cohort& cohort, Population pop) {
  const int duration = cohort.spec.duration_days();
  std::vector<LearnerDays> out;
  for (const auto& [id, ld] : cohort.learners) {
    if (pop == Population::video_and_forum && (ld.video.empty() || ld.forum.empty())) continue;
    LearnerDays d;
    d.learner_id = id;
    d.video_days = active_days(ld.video);
    d.forum_day.assign(static_cast<std::size_t>(duration), 0);
    for (int day : active_days(ld.forum)) {
      d.forum_day[static_cast<std::size_t>(day)] = 1;
      ++d.forum_days;
    }
    d.record = &ld.record;
    out.push_back(std::move(d));
  }
  return out;
}

struct LearnerCounts {
  std::int64_t v_days = 0;
  std::int64_t v_f_days = 0;
};

inline LearnerCounts count_offset(const LearnerDays& d, int n, int duration) {
  LearnerCounts c;
  for (int day : d.video_days) {
    const int target = day + n;
    if (target < 0 || target >= duration) continue;
    ++c.v_days;
    if (d.forum_day[static_cast<std::size_t>(target)]) ++c.v_f_days;
  }
  return c;
}

}  // namespace detail

struct ConditionalEstimate {
  int offset = 0;
  std::optional<double> p_hat;  // absent when total_v_days == 0
  std::int64_t total_v_days = 0;
  std::int64_t total_v_f_days = 0;
};

/// P(forum on day d+n | video on day d), estimated as
/// total_v_f_days / total_v_days. Day pairs whose target d+n falls outside
/// the course are dropped from both counts.
inline ConditionalEstimate estimate_conditional(const Cohort& cohort, int n,
                                                Population pop = Population::video_and_forum) {
  const int duration = cohort.spec.duration_days();
  ConditionalEstimate est;
  est.offset = n;
  for (const auto& d : detail::collect(cohort, pop)) {
    const auto c = detail::count_offset(d, n, duration);
    est.total_v_days += c.v_days;
    est.total_v_f_days += c.v_f_days;
  }
  if (est.total_v_days > 0)
    est.p_hat = static_cast<double>(est.total_v_f_days) / static_cast<double>(est.total_v_days);
  return est;
}

struct BaselineEstimate {
  double p_hat = 0.0;
  std::int64_t forum_active = 0;
  std::int64_t n_samples = 0;  // learners x duration_days
};

/// Fraction of (learner, day) pairs on which the learner viewed a forum.
inline BaselineEstimate estimate_baseline(const Cohort& cohort,
                                          Population pop = Population::video_and_forum) {
  const auto learners = detail::collect(cohort, pop);
  if (learners.empty()) throw LdpError("estimate_baseline: no learners in the population");
  BaselineEstimate b;
  for (const auto& d : learners) b.forum_active += d.forum_days;
  b.n_samples = static_cast<std::int64_t>(learners.size()) * cohort.spec.duration_days();
  b.p_hat = static_cast<double>(b.forum_active) / static_cast<double>(b.n_samples);
  return b;
}

struct OffsetRow {
  int offset = 0;
  double p_cond = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::int64_t total_v_days = 0;
  std::int64_t total_v_f_days = 0;
};

struct OffsetSeries {
  std::vector<OffsetRow> rows;
  BaselineEstimate base;
  double level = 0.99;

  /// Offset with the highest conditional probability (first on ties).
  int argmax() const {
    const auto it = std::max_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return a.p_cond < b.p_cond;
    });
    return it == rows.end() ? 0 : it->offset;
  }
};

inline OffsetSeries offset_sweep(const Cohort& cohort, int n_min, int n_max, double level = 0.99,
                                 Population pop = Population::video_and_forum) {
  if (n_min > n_max) throw LdpError("offset_sweep: n_min must not exceed n_max");
  OffsetSeries s;
  s.level = level;
  s.base = estimate_baseline(cohort, pop);
  const int duration = cohort.spec.duration_days();
  const auto learners = detail::collect(cohort, pop);
  for (int n = n_min; n <= n_max; ++n) {
    OffsetRow row;
    row.offset = n;
    for (const auto& d : learners) {
      const auto c = detail::count_offset(d, n, duration);
      row.total_v_days += c.v_days;
      row.total_v_f_days += c.v_f_days;
    }
    if (row.total_v_days == 0)
      throw LdpError("offset_sweep: no video days with an in-course target at offset " +
                     std::to_string(n));
    row.p_cond = static_cast<double>(row.total_v_f_days) / static_cast<double>(row.total_v_days);
    const auto ci = stats::proportion_ci(row.total_v_f_days, row.total_v_days, level);
    row.ci_lo = ci.lo;
    row.ci_hi = ci.hi;
    s.rows.push_back(row);
  }
  return s;
}

struct DependenceTest {
  stats::TestResult ks;
  std::size_t n_conditional = 0;
  std::size_t n_baseline = 0;
};

/// Two-sample KS test between per-learner conditional forum frequencies
/// v_f_days_i / v_days_i and per-learner baseline forum frequencies.
///
/// Each learner's baseline frequency is measured on a matched number of
/// course days drawn without replacement from the days that are not
/// conditional targets (d + n for a video day d). Matching the day count keeps
/// the binomial spread of both samples equal, so under independence the two
/// samples share one distribution. Draws are seeded per learner from
/// (seed, learner_id), which keeps the result independent of learner order.
inline DependenceTest dependence_test(const Cohort& cohort, int n, std::uint64_t seed = 0,
                                      Population pop = Population::video_and_forum) {
  const int duration = cohort.spec.duration_days();
  std::vector<double> conditional;
  std::vector<double> baseline;
  std::vector<int> others;
  std::vector<std::uint8_t> is_target(static_cast<std::size_t>(duration));
  for (const auto& d : detail::collect(cohort, pop)) {
    const auto c = detail::count_offset(d, n, duration);
    if (c.v_days == 0) continue;
    conditional.push_back(static_cast<double>(c.v_f_days) / static_cast<double>(c.v_days));

    std::fill(is_target.begin(), is_target.end(), 0);
    for (int day : d.video_days)
      if (day + n >= 0 && day + n < duration) is_target[static_cast<std::size_t>(day + n)] = 1;
    others.clear();
    for (int day = 0; day < duration; ++day)
      if (!is_target[static_cast<std::size_t>(day)]) others.push_back(day);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(c.v_days), others.size());
    if (k == 0) continue;
    std::mt19937_64 rng(seed ^ io::fnv1a64(d.learner_id));
    int hits = 0;
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, others.size() - 1);
      std::swap(others[i], others[pick(rng)]);
      hits += d.forum_day[static_cast<std::size_t>(others[i])];
    }
    baseline.push_back(static_cast<double>(hits) / static_cast<double>(k));
  }
  if (conditional.size() < 2 || baseline.size() < 2)
    throw LdpError("dependence_test: need at least 2 learners per sample at offset " +
                   std::to_string(n));
  DependenceTest t;
  t.ks = stats::ks_two_sample(conditional, baseline);
  t.n_conditional = conditional.size();
  t.n_baseline = baseline.size();
  return t;
}

struct GroupGradeTest {
  int window_days = 2;
  std::size_t n_group_y = 0;
  std::size_t n_group_n = 0;
  double mean_grade_y = 0.0;
  double mean_grade_n = 0.0;
  stats::TestResult test;  // two-tailed Welch
};

/// True when the learner viewed a forum on some day in [d, d + window] for
/// some video day d.
inline bool follows_pattern(const Dat& video, const Dat& forum, int window_days) {
  const auto forum_days = active_days(forum);
  for (int d : active_days(video)) {
    const auto it = std::lower_bound(forum_days.begin(), forum_days.end(), d);
    if (it != forum_days.end() && *it <= d + window_days) return true;
  }
  return false;
}

/// Two-tailed Welch test of mean grade between learners who follow the
/// pattern (Group Y) and the rest of the population (Group N). Every learner
/// in the population must carry a grade.
inline GroupGradeTest group_grade_test(const Cohort& cohort, int window_days = 2,
                                       Population pop = Population::video_and_forum) {
  if (window_days < 0) throw LdpError("group_grade_test: window must be non-negative");
  std::vector<double> y;
  std::vector<double> n;
  for (const auto& [id, ld] : cohort.learners) {
    if (pop == Population::video_and_forum && (ld.video.empty() || ld.forum.empty())) continue;
    if (!ld.record.grade) throw LdpError("group_grade_test: learner '" + id + "' has no grade");
    (follows_pattern(ld.video, ld.forum, window_days) ? y : n).push_back(*ld.record.grade);
  }
  if (y.size() < 2 || n.size() < 2)
    throw LdpError("group_grade_test: groups too small (Y=" + std::to_string(y.size()) +
                   ", N=" + std::to_string(n.size()) + ")");
  GroupGradeTest g;
  g.window_days = window_days;
  g.n_group_y = y.size();
  g.n_group_n = n.size();
  for (double v : y) g.mean_grade_y += v / static_cast<double>(y.size());
  for (double v : n) g.mean_grade_n += v / static_cast<double>(n.size());
  g.test = stats::welch_t(y, n, stats::Tail::two);
  return g;
}

}  // namespace dattk::ldp
