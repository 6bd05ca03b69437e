// Localized learning-behavior patterns on video trajectories, the grade
// cutoff search and the replay-fluctuation group comparison.
//
// Day resolution only: the "last" video of a day is its highest component
// index and the "first" video is its lowest. "Previous day" means the
// previous active day.
#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dattk/core.hpp"
#include "dattk/stats.hpp"

namespace dattk::lbp {

enum class Pattern { return_recent, return_long, return_skipped };

inline constexpr std::array<Pattern, 3> kAllPatterns{Pattern::return_recent, Pattern::return_long,
                                                     Pattern::return_skipped};

inline std::string_view to_string(Pattern p) {
  switch (p) {
    case Pattern::return_recent: return "return_recent";
    case Pattern::return_long: return "return_long";
    case Pattern::return_skipped: return "return_skipped";
  }
  return "?";
}

inline std::optional<Pattern> parse_pattern(std::string_view s) {
  for (Pattern p : kAllPatterns)
    if (to_string(p) == s) return p;
  return std::nullopt;
}

struct PatternFrequency {
  std::string learner_id;
  Pattern pattern = Pattern::return_recent;
  int count = 0;
};

/// Consecutive active days (p, q) where the last video of p is the first
/// video of q.
inline int count_return_recent(const Dat& dat) {
  const auto days = group_by_day(dat);
  int count = 0;
  for (std::size_t i = 1; i < days.size(); ++i)
    if (days[i - 1].last_component() == days[i].first_component()) ++count;
  return count;
}

/// Re-watches of a video with at least one intervening active day on which the
/// video was not watched.
inline int count_return_long(const Dat& dat) {
  const auto days = group_by_day(dat);
  // Active-day ordinal of each video's most recent access.
  std::vector<int> last_seen;
  int count = 0;
  for (std::size_t ordinal = 0; ordinal < days.size(); ++ordinal) {
    for (const Entry& e : days[ordinal].entries) {
      const auto v = static_cast<std::size_t>(e.component);
      if (v >= last_seen.size()) last_seen.resize(v + 1, -1);
      if (last_seen[v] >= 0 && static_cast<int>(ordinal) - last_seen[v] >= 2) ++count;
      last_seen[v] = static_cast<int>(ordinal);
    }
  }
  return count;
}

/// First accesses of a video made after some later-indexed video was already
/// watched on an earlier day.
inline int count_return_skipped(const Dat& dat) {
  const auto days = group_by_day(dat);
  std::vector<bool> seen;
  int max_before = -1;  // highest component accessed on earlier days
  int count = 0;
  for (const DayGroup& g : days) {
    for (const Entry& e : g.entries) {
      const auto v = static_cast<std::size_t>(e.component);
      if (v >= seen.size()) seen.resize(v + 1, false);
      if (!seen[v] && max_before > e.component) ++count;
    }
    for (const Entry& e : g.entries) seen[static_cast<std::size_t>(e.component)] = true;
    max_before = std::max(max_before, g.last_component());
  }
  return count;
}

inline int count_pattern(const Dat& dat, Pattern p) {
  switch (p) {
    case Pattern::return_recent: return count_return_recent(dat);
    case Pattern::return_long: return count_return_long(dat);
    case Pattern::return_skipped: return count_return_skipped(dat);
  }
  return 0;
}

/// One row of the cutoff audit trail. `p_value` is absent when either side
/// of the split has fewer than two learners.
struct CutoffRow {
  int cutoff = 0;
  std::size_t n_below = 0;
  std::size_t n_above = 0;
  std::optional<double> statistic;
  std::optional<double> p_value;
  std::optional<double> p_bonferroni;
};

struct CutoffResult {
  int cutoff = 0;
  double p_value = 1.0;
  double p_bonferroni = 1.0;
  std::size_t n_below = 0;
  std::size_t n_above = 0;
};

struct CutoffSearch {
  /// Absent when no cutoff splits the learners into two testable groups.
  std::optional<CutoffResult> best;
  std::vector<CutoffRow> audit;
  int max_frequency = 0;

  bool degenerate() const noexcept { return !best.has_value(); }
};

/// Tries every cutoff c in [1, max_freq - 1], splitting learners into
/// freq < c and freq >= c, and runs a one-tailed Welch test of
/// H1: mean grade above > mean grade below. Keeps the minimum p-value
/// (ties go to the larger t statistic).
inline CutoffSearch cutoff_search(std::span<const int> freqs, std::span<const double> grades) {
  if (freqs.size() != grades.size())
    throw std::invalid_argument("cutoff_search: frequency and grade vectors differ in length");
  CutoffSearch out;
  out.max_frequency = freqs.empty() ? 0 : *std::max_element(freqs.begin(), freqs.end());

  std::vector<double> below;
  std::vector<double> above;
  std::size_t n_tested = 0;
  for (int c = 1; c <= out.max_frequency - 1; ++c) {
    below.clear();
    above.clear();
    for (std::size_t i = 0; i < freqs.size(); ++i) (freqs[i] < c ? below : above).push_back(grades[i]);
    CutoffRow row;
    row.cutoff = c;
    row.n_below = below.size();
    row.n_above = above.size();
    if (below.size() >= 2 && above.size() >= 2) {
      const auto t = stats::welch_t(above, below, stats::Tail::right);
      row.statistic = t.statistic;
      row.p_value = t.p_value;
      ++n_tested;
    }
    out.audit.push_back(row);
  }

  const CutoffRow* best = nullptr;
  for (CutoffRow& row : out.audit) {
    if (!row.p_value) continue;
    row.p_bonferroni = std::min(1.0, *row.p_value * static_cast<double>(n_tested));
    if (best == nullptr || *row.p_value < *best->p_value ||
        (*row.p_value == *best->p_value && *row.statistic > *best->statistic))
      best = &row;
  }
  if (best != nullptr)
    out.best = CutoffResult{best->cutoff, *best->p_value, *best->p_bonferroni, best->n_below,
                            best->n_above};
  return out;
}

/// Replays of each video summed over a group: every access day after a
/// learner's first access day of that video counts once.
inline std::vector<double> replay_counts(std::span<const Dat> group, int n_videos) {
  std::vector<double> counts(static_cast<std::size_t>(n_videos), 0.0);
  std::vector<int> days_seen;
  for (const Dat& dat : group) {
    days_seen.assign(static_cast<std::size_t>(n_videos), 0);
    for (const Entry& e : dat.entries())
      if (e.component < n_videos) ++days_seen[static_cast<std::size_t>(e.component)];
    for (std::size_t v = 0; v < days_seen.size(); ++v)
      if (days_seen[v] > 1) counts[v] += days_seen[v] - 1;
  }
  return counts;
}

enum class FluctuationStatus { ok, no_replays, insufficient_data };

struct FluctuationComparison {
  FluctuationStatus status = FluctuationStatus::ok;
  std::vector<double> series_a;  // normalized to unit mass when status is ok
  std::vector<double> series_b;
  std::vector<double> fluctuations_a;
  std::vector<double> fluctuations_b;
  std::optional<stats::TestResult> test;
};

/// Compares how much the normalized per-video replay series of group A
/// fluctuates relative to group B, with a one-tailed Welch test on the
/// absolute first differences (H1: A fluctuates more).
inline FluctuationComparison replay_fluctuation_compare(std::span<const Dat> group_a,
                                                        std::span<const Dat> group_b,
                                                        const CourseSpec& spec) {
  if (group_a.empty() || group_b.empty())
    throw std::invalid_argument("replay_fluctuation_compare: both groups must be non-empty");
  const int n_videos = spec.n_components(Category::video);
  if (n_videos < 2)
    throw std::invalid_argument("replay_fluctuation_compare: need at least 2 videos");

  FluctuationComparison out;
  out.series_a = replay_counts(group_a, n_videos);
  out.series_b = replay_counts(group_b, n_videos);
  for (auto* s : {&out.series_a, &out.series_b}) {
    double total = 0.0;
    for (double x : *s) total += x;
    if (total == 0.0) {
      out.status = FluctuationStatus::no_replays;
      return out;
    }
    for (double& x : *s) x /= total;
  }
  auto diffs = [](const std::vector<double>& s) {
    std::vector<double> d;
    for (std::size_t i = 1; i < s.size(); ++i) d.push_back(std::fabs(s[i] - s[i - 1]));
    return d;
  };
  out.fluctuations_a = diffs(out.series_a);
  out.fluctuations_b = diffs(out.series_b);
  if (out.fluctuations_a.size() < 2) {
    out.status = FluctuationStatus::insufficient_data;
    return out;
  }
  out.test = stats::welch_t(out.fluctuations_a, out.fluctuations_b, stats::Tail::right);
  return out;
}

}  // namespace dattk::lbp
