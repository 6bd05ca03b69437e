#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "dattk/ingest.hpp"
#include "dattk/synth.hpp"

using namespace dattk;

namespace {

constexpr std::int64_t kLaunch = 1704067200;  // 2024-01-01T00:00:00Z

CourseSpec small_course() {
  using V = std::vector<std::string>;
  return CourseSpec(kLaunch, 10, {V{"v0", "v1", "v2"}, V{"p0", "p1"}, V{"t0"}});
}

RawEvent ev(std::string learner, std::int64_t offset, Category c, std::string comp) {
  return {std::move(learner), Timestamp(std::chrono::seconds(kLaunch + offset)), c, std::move(comp)};
}

std::string line(std::string_view learner, std::string_view ts, std::string_view cat,
                 std::string_view comp) {
  return "{\"learner_id\":\"" + std::string(learner) + "\",\"timestamp\":\"" + std::string(ts) +
         "\",\"category\":\"" + std::string(cat) + "\",\"component_id\":\"" + std::string(comp) +
         "\"}\n";
}

}  // namespace

TEST(Timestamp, ParsesOffsetsAndFractions) {
  const auto z = parse_timestamp("2024-01-01T00:00:00Z");
  ASSERT_TRUE(z);
  EXPECT_EQ(z->time_since_epoch().count(), kLaunch);
  EXPECT_EQ(parse_timestamp("2024-01-01T02:00:00+02:00"), z);
  EXPECT_EQ(parse_timestamp("2023-12-31T23:30:00-00:30"), z);
  EXPECT_EQ(parse_timestamp("2024-01-01 00:00:00.999"), z);
  EXPECT_FALSE(parse_timestamp("2024-13-01T00:00:00Z"));
  EXPECT_FALSE(parse_timestamp("yesterday"));
  EXPECT_EQ(format_timestamp(*z), "2024-01-01T00:00:00Z");
}

TEST(ParseEvents, WellFormed) {
  const std::string text = line("a", "2024-01-01T00:00:00Z", "video", "v0") +
                           line("a", "2024-01-02T00:00:00Z", "problem", "p1") +
                           line("b", "2024-01-03T00:00:00Z", "forum", "t0");
  const auto parsed = parse_events(text);
  ASSERT_EQ(parsed.events.size(), 3u);
  EXPECT_TRUE(parsed.malformed.empty());
  EXPECT_EQ(parsed.events[1].category, Category::problem);
  EXPECT_EQ(parsed.events[2].learner_id, "b");
}

TEST(ParseEvents, EmptyFile) {
  const auto parsed = parse_events(std::string_view{});
  EXPECT_TRUE(parsed.events.empty());
  EXPECT_TRUE(parsed.malformed.empty());
}

TEST(ParseEvents, ReportsMalformedLineNumbers) {
  std::string text;
  for (int i = 0; i < 10; ++i)
    text += i == 6 ? std::string("{\"learner_id\": \"x\"}\n")
                   : line("a", "2024-01-01T00:00:00Z", "video", "v0");
  const auto parsed = parse_events(text);
  EXPECT_EQ(parsed.events.size(), 9u);
  ASSERT_EQ(parsed.malformed.size(), 1u);
  EXPECT_EQ(parsed.malformed[0].line, 7u);
}

TEST(ParseEvents, TooManyMalformedFails) {
  const std::string text = "garbage\n{}\n" + line("a", "2024-01-01T00:00:00Z", "video", "v0");
  EXPECT_THROW(parse_events(text, 0.5), IngestError);
  EXPECT_NO_THROW(parse_events(text, 0.9));
}

TEST(ParseEvents, RoundTripsThroughJsonLine) {
  const auto e = ev("learner,1", 3600, Category::forum, "t0");
  const auto parsed = parse_events(to_json_line(e));
  ASSERT_EQ(parsed.events.size(), 1u);
  EXPECT_EQ(parsed.events[0], e);
}

TEST(DayIndex, Boundaries) {
  const auto spec = small_course();
  auto at = [&](std::int64_t off) { return day_index(Timestamp(std::chrono::seconds(kLaunch + off)), spec); };
  EXPECT_EQ(at(0), 0);
  EXPECT_EQ(at(86399), 0);
  EXPECT_EQ(at(86400), 1);
  EXPECT_FALSE(at(-1));
  EXPECT_EQ(at(10 * 86400 - 1), 9);
  EXPECT_FALSE(at(10 * 86400));
}

TEST(CourseSpecFile, RoundTrip) {
  const auto spec = small_course();
  EXPECT_EQ(parse_course_spec(format_course_spec(spec)), spec);
  EXPECT_THROW(parse_course_spec("duration_days = 3\n"), IngestError);
  EXPECT_THROW(parse_course_spec("launch = 2024-01-01T00:00:00Z\nduration_days = 3\nfoo = 1\n"),
               IngestError);
  EXPECT_THROW(parse_course_spec("launch = 2024-01-01T00:00:00Z\nduration_days = 3\n[video]\na\na\n"),
               IngestError);
}

TEST(Metadata, RoundTripAndErrors) {
  std::vector<LearnerRecord> recs(2);
  recs[0] = {"a", 0.75, true, EducationLevel::college, IncomeTier::low};
  recs[1] = {"b", std::nullopt, false, EducationLevel::unknown, IncomeTier::unknown};
  EXPECT_EQ(parse_metadata(format_metadata(recs)), recs);
  EXPECT_THROW(parse_metadata("learner_id,grade\n"), IngestError);
  EXPECT_THROW(parse_metadata(std::string(kMetadataHeader) + "\na,1.5,true,college,low\n"), IngestError);
  EXPECT_THROW(parse_metadata(std::string(kMetadataHeader) + "\na,0.5,maybe,college,low\n"), IngestError);
  // Column order comes from the header.
  const auto shuffled = parse_metadata("grade,income_tier,learner_id,certified,education_level\n0.5,high,z,1,graduate\n");
  ASSERT_EQ(shuffled.size(), 1u);
  EXPECT_EQ(shuffled[0].learner_id, "z");
  EXPECT_EQ(shuffled[0].income_tier, IncomeTier::high);
}

TEST(BuildCohort, CollapsesSameDaySameVideo) {
  const std::vector<RawEvent> events{ev("a", 10, Category::video, "v1"), ev("a", 500, Category::video, "v1")};
  const auto b = build_cohort(events, {}, small_course());
  ASSERT_EQ(b.cohort.learners.size(), 1u);
  EXPECT_EQ(b.cohort.learners.at("a").video.size(), 1u);
  EXPECT_EQ(b.drops.synthesized_records, 1u);
  EXPECT_EQ(b.cohort.learners.at("a").record.education_level, EducationLevel::unknown);
}

TEST(BuildCohort, ForumOnlyLearner) {
  const std::vector<RawEvent> events{ev("f", 10, Category::forum, "t0")};
  const auto& ld = build_cohort(events, {}, small_course()).cohort.learners.at("f");
  EXPECT_TRUE(ld.video.empty());
  EXPECT_TRUE(ld.problem.empty());
  EXPECT_EQ(ld.forum.size(), 1u);
}

TEST(BuildCohort, DropsAndReports) {
  const std::vector<RawEvent> events{ev("a", -5, Category::video, "v0"),
                                     ev("a", 20 * 86400, Category::video, "v0"),
                                     ev("a", 5, Category::video, "nope"),
                                     ev("a", 5, Category::video, "v2")};
  std::vector<LearnerRecord> meta{{"a", 0.5, false, {}, {}}, {"ghost", 0.1, false, {}, {}}};
  const auto b = build_cohort(events, meta, small_course());
  EXPECT_EQ(b.drops.events_total, 4u);
  EXPECT_EQ(b.drops.out_of_range, 2u);
  EXPECT_EQ(b.drops.unknown_component, 1u);
  EXPECT_TRUE(b.drops.unknown_component_ids.contains("video:nope"));
  EXPECT_EQ(b.drops.metadata_without_events, 1u);
  EXPECT_EQ(b.cohort.learners.size(), 1u);
  EXPECT_EQ(b.cohort.learners.at("a").record.grade, 0.5);
}

TEST(BuildCohort, DuplicateMetadataFails) {
  std::vector<LearnerRecord> meta{{"a", 0.5, false, {}, {}}, {"a", 0.1, false, {}, {}}};
  EXPECT_THROW(build_cohort({}, meta, small_course()), IngestError);
}

TEST(BuildCohort, EntryCountsMatchGroupByOracle) {
  const auto spec = synth::make_course(20, 8, 4, 3);
  std::mt19937_64 rng(17);
  std::vector<RawEvent> events;
  std::uniform_int_distribution<std::int64_t> when(-86400, 21 * 86400);
  std::uniform_int_distribution<int> who(0, 2), cat(0, 2), comp(0, 9);
  for (int i = 0; i < 600; ++i) {
    const auto c = static_cast<Category>(cat(rng));
    const int k = comp(rng);
    const std::string id = k < spec.n_components(c) ? spec.catalog(c)[k] : "unknown";
    events.push_back({"L" + std::to_string(who(rng)), Timestamp(std::chrono::seconds(spec.launch() + when(rng))), c, id});
  }
  // Oracle: distinct (learner, category, day, component) among usable events.
  std::map<std::pair<std::string, int>, std::set<std::pair<std::int64_t, std::string>>> expect;
  for (const auto& e : events) {
    const auto off = e.timestamp.time_since_epoch().count() - spec.launch();
    if (off < 0 || off >= 20 * 86400 || e.component_id == "unknown") continue;
    expect[{e.learner_id, static_cast<int>(e.category)}].insert({off / 86400, e.component_id});
  }
  const auto cohort = build_cohort(events, {}, spec).cohort;
  for (const auto& [id, ld] : cohort.learners)
    for (Category c : kAllCategories)
      EXPECT_EQ(ld.dat(c).size(), (expect[{id, static_cast<int>(c)}].size())) << id;

  // Order-insensitive.
  auto shuffled = events;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_EQ(build_cohort(shuffled, {}, spec).cohort, cohort);

  std::size_t entries = 0, usable = 0;
  for (const auto& [id, ld] : cohort.learners)
    for (Category c : kAllCategories) entries += ld.dat(c).size();
  for (const auto& [k, v] : expect) usable += v.size();
  EXPECT_LE(entries, events.size());
  EXPECT_EQ(entries, usable);
}

TEST(Filter, CertifiedAndEducation) {
  const auto course = synth::make_course(30, 10, 3, 3);
  synth::ArchetypeSpec a;
  a.name = "a";
  a.education = {1, 1, 1, 1, 1, 1};
  a.income = {1, 1, 1, 1, 1};
  a.grade_noise = 0.3;
  const auto gen = synth::generate({a}, 200, course, 3);
  const auto cohort = synth::to_cohort(gen, course);

  const auto cert = filter_cohort(cohort, Predicate::parse("certified=true"));
  EXPECT_GT(cert.learners.size(), 0u);
  EXPECT_LT(cert.learners.size(), cohort.learners.size());
  for (const auto& [id, ld] : cert.learners) EXPECT_TRUE(ld.record.certified);

  const auto low_edu = filter_cohort(cohort, Predicate::parse("education_level=primary,junior_high"));
  for (const auto& [id, ld] : low_edu.learners)
    EXPECT_TRUE(ld.record.education_level == EducationLevel::primary ||
                ld.record.education_level == EducationLevel::junior_high);

  std::size_t truth_low = 0;
  for (const auto& t : gen.truth.learners) truth_low += t.record.income_tier == IncomeTier::low;
  EXPECT_EQ(filter_cohort(cohort, Predicate::parse("income_tier=low")).learners.size(), truth_low);

  const auto both = filter_cohort(cohort, Predicate::parse("certified=true; grade=0.7..1"));
  for (const auto& [id, ld] : both.learners) EXPECT_GE(*ld.record.grade, 0.7);

  EXPECT_THROW(Predicate::parse("height=3"), FilterError);
  EXPECT_THROW(Predicate::parse("income_tier=rich"), FilterError);
}

TEST(Filter, CommutesWithBuild) {
  const auto course = synth::make_course(30, 10, 3, 3);
  synth::ArchetypeSpec a;
  a.name = "a";
  a.grade_noise = 0.3;
  const auto gen = synth::generate({a}, 120, course, 5);
  const auto pred = Predicate::parse("certified=true");
  const auto filtered_after = filter_cohort(synth::to_cohort(gen, course), pred);

  std::set<std::string> keep;
  std::vector<LearnerRecord> meta;
  for (const auto& r : gen.metadata)
    if (pred(r)) {
      keep.insert(r.learner_id);
      meta.push_back(r);
    }
  std::vector<RawEvent> events;
  for (const auto& e : gen.events)
    if (keep.contains(e.learner_id)) events.push_back(e);
  EXPECT_EQ(build_cohort(events, meta, course).cohort, filtered_after);
}

TEST(Archive, RoundTripAndCorruption) {
  const auto course = synth::make_course(30, 10, 3, 3);
  synth::ArchetypeSpec a;
  a.name = "a";
  a.problem_prob = 0.5;
  const auto cohort = synth::to_cohort(synth::generate({a}, 50, course, 1), course);
  const auto bytes = serialize_cohort(cohort);
  EXPECT_EQ(deserialize_cohort(bytes), cohort);
  EXPECT_EQ(serialize_cohort(deserialize_cohort(bytes)), bytes);
  EXPECT_THROW(deserialize_cohort(bytes.substr(0, bytes.size() - 3)), io::FormatError);
  EXPECT_THROW(deserialize_cohort("NOTACOHORT"), io::FormatError);
  EXPECT_THROW(deserialize_cohort(bytes + "x"), io::FormatError);
}
