// Seeded synthetic cohorts with planted behavior patterns, a forum lag model,
// demographics and a grade model.
//
// Each learner is built from a forward-watching baseline: on every active day
// k the learner watches a non-empty block W_k of new videos, all with higher
// indices than anything watched before (videos passed over are "skipped").
// This baseline has zero occurrences of all three patterns. Occurrences are
// then planted so the detectors count them exactly:
//   return_recent   copy max(W_k) onto active day k+1 (that day is then locked)
//   return_long     re-access a video of W_i on an unlocked active day j >= i+2
//   return_skipped  first access of a skipped video on an unlocked active day
//                   after the block that skipped it
//
// Spec file format (key = value, '#' comments):
//
//   n_learners = 1000
//   launch = 2024-01-01T00:00:00Z
//   duration_days = 70
//   n_videos = 40
//   n_problems = 20
//   n_forum_threads = 30
//
//   [archetype steady]
//   proportion = 1.0
//   active_prob = 0.5          daily activity probability
//   min_day_gap = 1            minimum distance between active days
//   start_day = 0
//   end_day = 70               activity only in [start_day, end_day)
//   dropout_hazard = 0         daily probability of leaving for good
//   videos_per_day = 2         mean block size (>= 1)
//   skip_prob = 0.1            chance to pass over each next video
//   problem_prob = 0.3         chance of a problem access per active day
//   return_recent = uniform 0 14      (also: fixed N, poisson MEAN)
//   return_long = poisson 1
//   return_skipped = fixed 0
//   forum_base = 0.075
//   forum_kernel = 0:0.6 1:0.3        P(forum on d+n) given a video day d
//   grade_base = 0.4
//   grade_coef = return_long:0.01     per-count coefficients
//   grade_step = return_recent 7 0.5  add 0.5 when count >= 7
//   grade_group_y = 0                 shift for learners with a forum day
//   group_window = 2                  within group_window days after a video day
//   grade_noise = 0.05
//   certify_threshold = 0.6
//   education = college:0.5 graduate:0.5
//   income = low:1
#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "dattk/core.hpp"
#include "dattk/ingest.hpp"
#include "dattk/io.hpp"
#include "dattk/lbp.hpp"

namespace dattk::synth {

class SynthError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CountModel {
  enum class Kind { fixed, poisson, uniform };
  Kind kind = Kind::fixed;
  double a = 0.0;
  double b = 0.0;

  static CountModel fixed(int n) { return {Kind::fixed, static_cast<double>(n), 0.0}; }
  static CountModel poisson(double mean) { return {Kind::poisson, mean, 0.0}; }
  static CountModel uniform(int lo, int hi) {
    return {Kind::uniform, static_cast<double>(lo), static_cast<double>(hi)};
  }

  template <class Rng>
  int sample(Rng& rng) const {
    switch (kind) {
      case Kind::fixed: return static_cast<int>(a);
      case Kind::poisson:
        return a > 0.0 ? std::poisson_distribution<int>(a)(rng) : 0;
      case Kind::uniform:
        return std::uniform_int_distribution<int>(static_cast<int>(a), static_cast<int>(b))(rng);
    }
    return 0;
  }

  std::string str() const {
    switch (kind) {
      case Kind::fixed: return "fixed " + io::format_double(a);
      case Kind::poisson: return "poisson " + io::format_double(a);
      case Kind::uniform: return "uniform " + io::format_double(a) + " " + io::format_double(b);
    }
    return {};
  }
};

struct GradeStep {
  lbp::Pattern pattern = lbp::Pattern::return_recent;
  int cutoff = 1;
  double shift = 0.0;
};

struct ArchetypeSpec {
  std::string name;
  double proportion = 1.0;

  double active_prob = 0.5;
  int min_day_gap = 1;
  int start_day = 0;
  int end_day = -1;  // -1: course end
  double dropout_hazard = 0.0;
  double videos_per_day = 2.0;
  double skip_prob = 0.0;
  double problem_prob = 0.0;

  std::array<CountModel, 3> planted{};  // indexed by lbp::Pattern

  double forum_base = 0.075;
  std::map<int, double> forum_kernel;

  double grade_base = 0.5;
  std::array<double, 3> grade_coef{};
  std::optional<GradeStep> grade_step;
  double grade_group_y = 0.0;
  int group_window = 2;
  double grade_noise = 0.05;
  double certify_threshold = 0.6;

  std::array<double, 6> education{1, 1, 1, 1, 1, 0};  // by EducationLevel
  std::array<double, 5> income{1, 1, 1, 1, 0};        // by IncomeTier
};

struct SynthConfig {
  int n_learners = 100;
  CourseSpec course;
  std::vector<ArchetypeSpec> archetypes;
};

struct LearnerTruth {
  std::string learner_id;
  std::string archetype;
  std::array<int, 3> counts{};  // planted occurrences by lbp::Pattern
  bool group_y = false;
  int video_days = 0;
  int forum_days = 0;
  LearnerRecord record;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  std::vector<ArchetypeSpec> archetypes;
  std::vector<LearnerTruth> learners;
};

struct SynthOutput {
  std::vector<RawEvent> events;  // sorted by (timestamp, learner, category, component)
  std::vector<LearnerRecord> metadata;
  GroundTruth truth;
};

inline void validate(const ArchetypeSpec& a, const CourseSpec& course) {
  auto fail = [&](const std::string& msg) { throw SynthError("archetype '" + a.name + "': " + msg); };
  auto prob = [&](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) fail(std::string(what) + " must be in [0, 1]");
  };
  if (a.name.empty()) throw SynthError("archetype without a name");
  prob(a.proportion, "proportion");
  prob(a.active_prob, "active_prob");
  prob(a.dropout_hazard, "dropout_hazard");
  prob(a.skip_prob, "skip_prob");
  prob(a.problem_prob, "problem_prob");
  prob(a.forum_base, "forum_base");
  for (const auto& [n, p] : a.forum_kernel) prob(p, "forum_kernel value");
  prob(a.certify_threshold, "certify_threshold");
  if (a.skip_prob >= 1.0) fail("skip_prob must be below 1");
  if (a.min_day_gap < 1) fail("min_day_gap must be >= 1");
  if (!(a.videos_per_day >= 1.0)) fail("videos_per_day must be >= 1");
  const int end = a.end_day < 0 ? course.duration_days() : a.end_day;
  if (a.start_day < 0 || end > course.duration_days() || a.start_day >= end)
    fail("activity window [start_day, end_day) must be a non-empty range inside the course");
  if (!(a.grade_noise >= 0.0)) fail("grade_noise must be non-negative");
  if (a.group_window < 0) fail("group_window must be non-negative");
  for (const auto& c : a.planted) {
    if (c.kind == CountModel::Kind::uniform && !(c.a >= 0 && c.b >= c.a))
      fail("uniform count range must satisfy 0 <= lo <= hi");
    if (c.kind != CountModel::Kind::uniform && !(c.a >= 0)) fail("planted counts must be >= 0");
    if (c.kind == CountModel::Kind::fixed && c.a > course.duration_days())
      fail("planted count exceeds the course length");
  }
  double e = 0, in = 0;
  for (double w : a.education) {
    if (!(w >= 0)) fail("education weights must be non-negative");
    e += w;
  }
  for (double w : a.income) {
    if (!(w >= 0)) fail("income weights must be non-negative");
    in += w;
  }
  if (!(e > 0) || !(in > 0)) fail("education and income weights must not all be zero");
}

inline void validate(const SynthConfig& cfg) {
  if (cfg.n_learners < 1) throw SynthError("n_learners must be >= 1");
  if (cfg.archetypes.empty()) throw SynthError("at least one archetype is required");
  if (cfg.course.n_components(Category::video) < 1 || cfg.course.n_components(Category::forum) < 1)
    throw SynthError("course needs at least one video and one forum thread");
  double total = 0.0;
  std::set<std::string> names;
  for (const auto& a : cfg.archetypes) {
    validate(a, cfg.course);
    if (!names.insert(a.name).second) throw SynthError("duplicate archetype '" + a.name + "'");
    total += a.proportion;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw SynthError("archetype proportions must sum to 1");
}

namespace detail {

struct Plan {
  std::vector<int> days;                     // active days, increasing
  std::vector<std::vector<int>> videos;      // per active day, sorted unique
  std::array<int, 3> counts{};
};

struct SkippedVideo {
  int video;
  std::size_t block;  // ordinal of the block holding the next watched video
};

// One attempt at a learner's video plan; empty optional when the planted
// counts do not fit this baseline.
template <class Rng>
std::optional<Plan> try_plan(const ArchetypeSpec& a, const CourseSpec& course,
                             const std::array<int, 3>& want, Rng& rng) {
  std::bernoulli_distribution coin_active(a.active_prob);
  std::bernoulli_distribution coin_skip(a.skip_prob);
  const int n_videos = course.n_components(Category::video);
  int end = a.end_day < 0 ? course.duration_days() : a.end_day;
  if (a.dropout_hazard > 0.0) {
    const int stay = std::geometric_distribution<int>(a.dropout_hazard)(rng);
    end = std::min(end, a.start_day + 1 + stay);
  }

  Plan plan;
  std::vector<std::vector<int>> blocks;
  std::vector<SkippedVideo> skipped;
  std::vector<int> pending_skips;
  int cursor = 0;
  int last = -a.min_day_gap;
  for (int day = a.start_day; day < end && cursor < n_videos; ++day) {
    if (day - last < a.min_day_gap || !coin_active(rng)) continue;
    const int size =
        1 + (a.videos_per_day > 1.0
                 ? std::poisson_distribution<int>(a.videos_per_day - 1.0)(rng)
                 : 0);
    std::vector<int> block;
    for (int k = 0; k < size; ++k) {
      while (cursor < n_videos && coin_skip(rng)) pending_skips.push_back(cursor++);
      if (cursor >= n_videos) break;
      for (int v : pending_skips) skipped.push_back({v, blocks.size()});
      pending_skips.clear();
      block.push_back(cursor++);
    }
    if (block.empty()) break;
    plan.days.push_back(day);
    blocks.push_back(std::move(block));
    last = day;
  }
  const std::size_t n_days = plan.days.size();
  if (n_days == 0) return std::nullopt;
  plan.videos = blocks;

  // return_recent: pairs (k, k + 1).
  std::vector<std::size_t> pairs;
  for (std::size_t k = 0; k + 1 < n_days; ++k) pairs.push_back(k);
  if (static_cast<std::size_t>(want[0]) > pairs.size()) return std::nullopt;
  std::shuffle(pairs.begin(), pairs.end(), rng);
  std::vector<bool> locked(n_days, false);
  std::set<int> used;
  for (int i = 0; i < want[0]; ++i) {
    const std::size_t k = pairs[static_cast<std::size_t>(i)];
    locked[k + 1] = true;
    plan.videos[k + 1].push_back(blocks[k].back());
    used.insert(blocks[k].back());
  }

  auto unlocked_from = [&](std::size_t first) {
    std::vector<std::size_t> out;
    for (std::size_t j = first; j < n_days; ++j)
      if (!locked[j]) out.push_back(j);
    return out;
  };

  // return_long: a baseline video of block i re-accessed on ordinal >= i + 2.
  std::vector<std::pair<int, std::size_t>> long_candidates;
  for (std::size_t i = 0; i < n_days; ++i)
    for (int v : blocks[i])
      if (!used.contains(v)) long_candidates.push_back({v, i});
  std::shuffle(long_candidates.begin(), long_candidates.end(), rng);
  int planted_long = 0;
  for (const auto& [v, i] : long_candidates) {
    if (planted_long == want[1]) break;
    const auto targets = unlocked_from(i + 2);
    if (targets.empty()) continue;
    const auto j = targets[std::uniform_int_distribution<std::size_t>(0, targets.size() - 1)(rng)];
    plan.videos[j].push_back(v);
    ++planted_long;
  }
  if (planted_long < want[1]) return std::nullopt;

  // return_skipped: first access of a skipped video after its skipping block.
  std::shuffle(skipped.begin(), skipped.end(), rng);
  int planted_skip = 0;
  for (const auto& s : skipped) {
    if (planted_skip == want[2]) break;
    const auto targets = unlocked_from(s.block + 1);
    if (targets.empty()) continue;
    const auto j = targets[std::uniform_int_distribution<std::size_t>(0, targets.size() - 1)(rng)];
    plan.videos[j].push_back(s.video);
    ++planted_skip;
  }
  if (planted_skip < want[2]) return std::nullopt;

  for (auto& vs : plan.videos) std::sort(vs.begin(), vs.end());
  plan.counts = want;
  return plan;
}

template <class Rng>
std::size_t pick_weighted(std::span<const double> weights, Rng& rng) {
  std::discrete_distribution<std::size_t> d(weights.begin(), weights.end());
  return d(rng);
}

inline std::string learner_name(int i, int n) {
  const int width = std::max(5, static_cast<int>(std::to_string(n).size()));
  std::string s = std::to_string(i + 1);
  return "L" + std::string(static_cast<std::size_t>(width) - s.size(), '0') + s;
}

}  // namespace detail

inline constexpr int kMaxAttempts = 200;

/// Generates a cohort. Deterministic for a fixed seed.
inline SynthOutput generate(const std::vector<ArchetypeSpec>& archetypes, int n_learners,
                            const CourseSpec& course, std::uint64_t seed) {
  validate(SynthConfig{n_learners, course, archetypes});
  std::mt19937_64 rng(seed);
  SynthOutput out;
  out.truth.seed = seed;
  out.truth.archetypes = archetypes;

  std::vector<double> proportions;
  for (const auto& a : archetypes) proportions.push_back(a.proportion);
  const int duration = course.duration_days();
  const int n_problems = course.n_components(Category::problem);
  const int n_threads = course.n_components(Category::forum);
  const int n_videos = course.n_components(Category::video);

  for (int li = 0; li < n_learners; ++li) {
    const auto& a = archetypes[detail::pick_weighted(proportions, rng)];
    LearnerTruth t;
    t.learner_id = detail::learner_name(li, n_learners);
    t.archetype = a.name;
    std::array<int, 3> want{};
    for (std::size_t p = 0; p < 3; ++p) want[p] = a.planted[p].sample(rng);

    std::optional<detail::Plan> plan;
    for (int attempt = 0; attempt < kMaxAttempts && !plan; ++attempt)
      plan = detail::try_plan(a, course, want, rng);
    if (!plan)
      throw SynthError("archetype '" + a.name + "': cannot plant " + std::to_string(want[0]) +
                       "/" + std::to_string(want[1]) + "/" + std::to_string(want[2]) +
                       " pattern occurrences for learner " + t.learner_id + " after " +
                       std::to_string(kMaxAttempts) + " attempts");
    t.counts = plan->counts;
    t.video_days = static_cast<int>(plan->days.size());

    auto emit = [&](int day, Category c, int component) {
      const std::int64_t second = std::uniform_int_distribution<std::int64_t>(0, 86399)(rng);
      out.events.push_back({t.learner_id,
                            Timestamp(std::chrono::seconds(course.launch() + day * 86400LL + second)),
                            c, course.catalog(c)[static_cast<std::size_t>(component)]});
    };

    std::vector<std::uint8_t> video_day(static_cast<std::size_t>(duration), 0);
    int max_seen = 0;
    std::bernoulli_distribution coin_problem(a.problem_prob);
    for (std::size_t k = 0; k < plan->days.size(); ++k) {
      const int day = plan->days[k];
      video_day[static_cast<std::size_t>(day)] = 1;
      for (int v : plan->videos[k]) {
        emit(day, Category::video, v);
        max_seen = std::max(max_seen, v);
      }
      if (n_problems > 0 && coin_problem(rng)) {
        const int p = std::min(n_problems - 1, (max_seen * n_problems) / n_videos);
        emit(day, Category::problem, p);
      }
    }

    std::vector<int> forum_days;
    for (int day = 0; day < duration; ++day) {
      double p = a.forum_base;
      for (const auto& [n, q] : a.forum_kernel) {
        const int src = day - n;
        if (src >= 0 && src < duration && video_day[static_cast<std::size_t>(src)]) p = std::max(p, q);
      }
      if (!std::bernoulli_distribution(p)(rng)) continue;
      forum_days.push_back(day);
      const int visits = 1 + std::uniform_int_distribution<int>(0, 1)(rng);
      for (int i = 0; i < visits; ++i)
        emit(day, Category::forum, std::uniform_int_distribution<int>(0, n_threads - 1)(rng));
    }
    t.forum_days = static_cast<int>(forum_days.size());
    for (int d : plan->days) {
      const auto it = std::lower_bound(forum_days.begin(), forum_days.end(), d);
      if (it != forum_days.end() && *it <= d + a.group_window) {
        t.group_y = true;
        break;
      }
    }

    double grade = a.grade_base;
    for (std::size_t p = 0; p < 3; ++p) grade += a.grade_coef[p] * t.counts[p];
    if (a.grade_step && t.counts[static_cast<std::size_t>(a.grade_step->pattern)] >= a.grade_step->cutoff)
      grade += a.grade_step->shift;
    if (t.group_y) grade += a.grade_group_y;
    if (a.grade_noise > 0.0) grade += std::normal_distribution<double>(0.0, a.grade_noise)(rng);
    grade = std::clamp(grade, 0.0, 1.0);

    t.record.learner_id = t.learner_id;
    t.record.grade = grade;
    t.record.certified = grade >= a.certify_threshold;
    t.record.education_level =
        static_cast<EducationLevel>(detail::pick_weighted(a.education, rng));
    t.record.income_tier = static_cast<IncomeTier>(detail::pick_weighted(a.income, rng));
    out.metadata.push_back(t.record);
    out.truth.learners.push_back(std::move(t));
  }

  std::sort(out.events.begin(), out.events.end(), [](const RawEvent& x, const RawEvent& y) {
    return std::tie(x.timestamp, x.learner_id, x.category, x.component_id) <
           std::tie(y.timestamp, y.learner_id, y.category, y.component_id);
  });
  return out;
}

inline SynthOutput generate(const SynthConfig& cfg, std::uint64_t seed) {
  return generate(cfg.archetypes, cfg.n_learners, cfg.course, seed);
}

/// Course with generated ids v000.., p000.., t000.. and the given sizes.
inline CourseSpec make_course(int duration_days, int n_videos, int n_problems, int n_threads,
                              std::int64_t launch = 1704067200 /* 2024-01-01T00:00:00Z */) {
  auto ids = [](char prefix, int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%c%03d", prefix, i);
      v.emplace_back(buf);
    }
    return v;
  };
  return CourseSpec(launch, duration_days, {ids('v', n_videos), ids('p', n_problems), ids('t', n_threads)});
}

/// Archetype used by null_cohort: homogeneous daily video activity and forum
/// rates, no planted patterns, no lag kernel and a grade unrelated to behavior.
inline ArchetypeSpec null_archetype() {
  ArchetypeSpec a;
  a.name = "null";
  a.active_prob = 0.3;
  a.videos_per_day = 2.0;
  a.skip_prob = 0.05;
  a.problem_prob = 0.2;
  a.forum_base = 0.1;
  a.grade_base = 0.6;
  a.grade_noise = 0.15;
  return a;
}

/// Cohort whose video and forum fields are independent and whose grades do
/// not depend on behavior.
inline SynthOutput null_cohort(int n, const CourseSpec& course, std::uint64_t seed) {
  return generate({null_archetype()}, n, course, seed);
}

/// Builds the in-memory cohort directly from generator output.
inline Cohort to_cohort(const SynthOutput& s, const CourseSpec& course) {
  return build_cohort(s.events, s.metadata, course).cohort;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string format_events(std::span<const RawEvent> events) {
  std::string out;
  for (const auto& e : events) {
    out += to_json_line(e);
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json archetype_json(const ArchetypeSpec& a) {
  nlohmann::ordered_json j;
  j["name"] = a.name;
  j["proportion"] = a.proportion;
  j["active_prob"] = a.active_prob;
  j["min_day_gap"] = a.min_day_gap;
  j["start_day"] = a.start_day;
  j["end_day"] = a.end_day;
  j["dropout_hazard"] = a.dropout_hazard;
  j["videos_per_day"] = a.videos_per_day;
  j["skip_prob"] = a.skip_prob;
  j["problem_prob"] = a.problem_prob;
  for (lbp::Pattern p : lbp::kAllPatterns)
    j["planted"][std::string(lbp::to_string(p))] = a.planted[static_cast<std::size_t>(p)].str();
  j["forum_base"] = a.forum_base;
  j["forum_kernel"] = nlohmann::ordered_json::object();
  for (const auto& [n, p] : a.forum_kernel) j["forum_kernel"][std::to_string(n)] = p;
  j["grade_base"] = a.grade_base;
  for (lbp::Pattern p : lbp::kAllPatterns)
    j["grade_coef"][std::string(lbp::to_string(p))] = a.grade_coef[static_cast<std::size_t>(p)];
  if (a.grade_step)
    j["grade_step"] = {{"pattern", lbp::to_string(a.grade_step->pattern)},
                       {"cutoff", a.grade_step->cutoff},
                       {"shift", a.grade_step->shift}};
  j["grade_group_y"] = a.grade_group_y;
  j["group_window"] = a.group_window;
  j["grade_noise"] = a.grade_noise;
  j["certify_threshold"] = a.certify_threshold;
  return j;
}

inline std::string format_ground_truth(const GroundTruth& g) {
  nlohmann::ordered_json j;
  j["seed"] = g.seed;
  j["archetypes"] = nlohmann::ordered_json::array();
  for (const auto& a : g.archetypes) j["archetypes"].push_back(archetype_json(a));
  j["learners"] = nlohmann::ordered_json::array();
  for (const auto& t : g.learners) {
    nlohmann::ordered_json l;
    l["learner_id"] = t.learner_id;
    l["archetype"] = t.archetype;
    for (lbp::Pattern p : lbp::kAllPatterns)
      l[std::string(lbp::to_string(p))] = t.counts[static_cast<std::size_t>(p)];
    l["group_y"] = t.group_y;
    l["video_days"] = t.video_days;
    l["forum_days"] = t.forum_days;
    l["grade"] = *t.record.grade;
    l["certified"] = t.record.certified;
    l["education_level"] = to_string(t.record.education_level);
    l["income_tier"] = to_string(t.record.income_tier);
    j["learners"].push_back(std::move(l));
  }
  return j.dump(2) + "\n";
}

/// Reads learner entries of a groundtruth.json file.
inline std::vector<LearnerTruth> parse_ground_truth(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  std::vector<LearnerTruth> out;
  for (const auto& l : j.at("learners")) {
    LearnerTruth t;
    t.learner_id = l.at("learner_id").get<std::string>();
    t.archetype = l.at("archetype").get<std::string>();
    for (lbp::Pattern p : lbp::kAllPatterns)
      t.counts[static_cast<std::size_t>(p)] = l.at(std::string(lbp::to_string(p))).get<int>();
    t.group_y = l.at("group_y").get<bool>();
    t.video_days = l.at("video_days").get<int>();
    t.forum_days = l.at("forum_days").get<int>();
    t.record.learner_id = t.learner_id;
    t.record.grade = l.at("grade").get<double>();
    t.record.certified = l.at("certified").get<bool>();
    out.push_back(std::move(t));
  }
  return out;
}

namespace detail {

inline double parse_number(std::string_view s, const std::string& where) {
  s = io::trim(s);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty())
    throw SynthError(where + ": expected a number, got '" + std::string(s) + "'");
  return v;
}

inline int parse_int(std::string_view s, const std::string& where) {
  const double v = parse_number(s, where);
  if (v != std::floor(v) || std::fabs(v) > 1e9)
    throw SynthError(where + ": expected an integer, got '" + std::string(io::trim(s)) + "'");
  return static_cast<int>(v);
}

inline std::vector<std::string> words(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::pair<std::string, std::string> split_pair(const std::string& w, const std::string& where) {
  const auto colon = w.find(':');
  if (colon == std::string::npos)
    throw SynthError(where + ": expected name:value, got '" + w + "'");
  return {w.substr(0, colon), w.substr(colon + 1)};
}

inline CountModel parse_count(std::string_view s, const std::string& where) {
  const auto w = words(s);
  if (w.size() == 1) return CountModel::fixed(parse_int(w[0], where));
  if (w.size() == 2 && w[0] == "fixed") return CountModel::fixed(parse_int(w[1], where));
  if (w.size() == 2 && w[0] == "poisson") return CountModel::poisson(parse_number(w[1], where));
  if (w.size() == 3 && w[0] == "uniform")
    return CountModel::uniform(parse_int(w[1], where), parse_int(w[2], where));
  throw SynthError(where + ": expected 'fixed N', 'poisson MEAN' or 'uniform LO HI'");
}

}  // namespace detail

/// Parses a synth spec file (format in the header comment).
inline SynthConfig parse_synth_spec(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  std::map<std::string, std::string> globals;
  SynthConfig cfg;
  ArchetypeSpec* cur = nullptr;
  std::set<std::string> seen_keys;

  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = "synth spec line " + std::to_string(line_no);
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = io::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw SynthError(where + ": unterminated section header");
      const auto w = detail::words(line.substr(1, line.size() - 2));
      if (w.size() != 2 || w[0] != "archetype")
        throw SynthError(where + ": expected [archetype NAME]");
      cfg.archetypes.emplace_back();
      cur = &cfg.archetypes.back();
      cur->name = w[1];
      seen_keys.clear();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw SynthError(where + ": expected key = value");
    const std::string key(io::trim(line.substr(0, eq)));
    const std::string value(io::trim(line.substr(eq + 1)));
    if (!cur) {
      if (!globals.emplace(key, value).second) throw SynthError(where + ": duplicate key '" + key + "'");
      continue;
    }
    if (!seen_keys.insert(key).second) throw SynthError(where + ": duplicate key '" + key + "'");
    ArchetypeSpec& a = *cur;
    auto num = [&] { return detail::parse_number(value, where); };
    auto integer = [&] { return detail::parse_int(value, where); };
    auto pattern_of = [&](const std::string& name) {
      const auto p = lbp::parse_pattern(name);
      if (!p) throw SynthError(where + ": unknown pattern '" + name + "'");
      return static_cast<std::size_t>(*p);
    };
    if (key == "proportion") a.proportion = num();
    else if (key == "active_prob") a.active_prob = num();
    else if (key == "min_day_gap") a.min_day_gap = integer();
    else if (key == "start_day") a.start_day = integer();
    else if (key == "end_day") a.end_day = integer();
    else if (key == "dropout_hazard") a.dropout_hazard = num();
    else if (key == "videos_per_day") a.videos_per_day = num();
    else if (key == "skip_prob") a.skip_prob = num();
    else if (key == "problem_prob") a.problem_prob = num();
    else if (const auto p = lbp::parse_pattern(key)) a.planted[static_cast<std::size_t>(*p)] = detail::parse_count(value, where);
    else if (key == "forum_base") a.forum_base = num();
    else if (key == "forum_kernel") {
      for (const auto& w : detail::words(value)) {
        const auto [n, q] = detail::split_pair(w, where);
        a.forum_kernel[detail::parse_int(n, where)] = detail::parse_number(q, where);
      }
    } else if (key == "grade_base") a.grade_base = num();
    else if (key == "grade_coef") {
      for (const auto& w : detail::words(value)) {
        const auto [n, q] = detail::split_pair(w, where);
        a.grade_coef[pattern_of(n)] = detail::parse_number(q, where);
      }
    } else if (key == "grade_step") {
      const auto w = detail::words(value);
      if (w.size() != 3) throw SynthError(where + ": grade_step expects PATTERN CUTOFF SHIFT");
      a.grade_step = GradeStep{static_cast<lbp::Pattern>(pattern_of(w[0])),
                               detail::parse_int(w[1], where), detail::parse_number(w[2], where)};
    } else if (key == "grade_group_y") a.grade_group_y = num();
    else if (key == "group_window") a.group_window = integer();
    else if (key == "grade_noise") a.grade_noise = num();
    else if (key == "certify_threshold") a.certify_threshold = num();
    else if (key == "education") {
      a.education.fill(0.0);
      for (const auto& w : detail::words(value)) {
        const auto [n, q] = detail::split_pair(w, where);
        const auto e = parse_education(n);
        if (!e || n.empty()) throw SynthError(where + ": unknown education level '" + n + "'");
        a.education[static_cast<std::size_t>(*e)] = detail::parse_number(q, where);
      }
    } else if (key == "income") {
      a.income.fill(0.0);
      for (const auto& w : detail::words(value)) {
        const auto [n, q] = detail::split_pair(w, where);
        const auto t = parse_income(n);
        if (!t || n.empty()) throw SynthError(where + ": unknown income tier '" + n + "'");
        a.income[static_cast<std::size_t>(*t)] = detail::parse_number(q, where);
      }
    } else {
      throw SynthError(where + ": unknown archetype key '" + key + "'");
    }
  }

  auto take = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = globals.find(key);
    if (it == globals.end()) return std::nullopt;
    std::string v = it->second;
    globals.erase(it);
    return v;
  };
  auto int_or = [&](const std::string& key, int def) {
    const auto v = take(key);
    return v ? detail::parse_int(*v, "synth spec key '" + key + "'") : def;
  };
  cfg.n_learners = int_or("n_learners", 100);
  std::int64_t launch = 1704067200;
  if (const auto v = take("launch")) {
    const auto t = parse_timestamp(*v);
    if (!t) throw SynthError("synth spec: bad launch timestamp '" + *v + "'");
    launch = t->time_since_epoch().count();
  }
  const int duration = int_or("duration_days", 70);
  const int n_videos = int_or("n_videos", 40);
  const int n_problems = int_or("n_problems", 20);
  const int n_threads = int_or("n_forum_threads", 30);
  if (!globals.empty()) throw SynthError("synth spec: unknown key '" + globals.begin()->first + "'");
  if (duration < 1 || n_videos < 1 || n_problems < 0 || n_threads < 1)
    throw SynthError("synth spec: course sizes must be positive");
  cfg.course = make_course(duration, n_videos, n_problems, n_threads, launch);
  validate(cfg);
  return cfg;
}

}  // namespace dattk::synth
