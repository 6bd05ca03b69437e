// Event-log ingestion: JSON-lines access events, a learner metadata CSV and a
// course.spec description are turned into a Cohort of per-learner trajectories.
//
// course.spec format (UTF-8 text, '#' starts a comment):
//
//   launch = 2017-01-10T00:00:00Z
//   duration_days = 70
//   [video]
//   lecture-1-intro
//   lecture-1-part-2
//   [problem]
//   ps1
//   [forum]
//   thread-welcome
//
// Component ids are listed one per line in instructional order. Forum threads
// are listed in creation order.
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dattk/core.hpp"
#include "dattk/io.hpp"

namespace dattk {

using Timestamp = std::chrono::sys_seconds;

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses "YYYY-MM-DD[T ]hh:mm:ss[.fff][Z|+hh:mm|-hh:mm]" (offset defaults to
/// UTC). Fractional seconds are truncated toward the earlier second.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  auto digits = [&](std::size_t pos, std::size_t n) -> std::optional<int> {
    if (pos + n > s.size()) return std::nullopt;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':')
    return std::nullopt;
  const auto y = digits(0, 4), mo = digits(5, 2), d = digits(8, 2);
  const auto h = digits(11, 2), mi = digits(14, 2), se = digits(17, 2);
  if (!y || !mo || !d || !h || !mi || !se) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{unsigned(*mo)},
                                        std::chrono::day{unsigned(*d)}};
  if (!ymd.ok() || *h > 23 || *mi > 59 || *se > 60) return std::nullopt;

  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    const std::size_t start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == start) return std::nullopt;
  }
  int offset_minutes = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z' || s[pos] == 'z') {
      ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
      const int sign = s[pos] == '+' ? 1 : -1;
      const auto oh = digits(pos + 1, 2);
      if (!oh || pos + 3 >= s.size() || s[pos + 3] != ':') return std::nullopt;
      const auto om = digits(pos + 4, 2);
      if (!om) return std::nullopt;
      offset_minutes = sign * (*oh * 60 + *om);
      pos += 6;
    } else {
      return std::nullopt;
    }
  }
  if (pos != s.size()) return std::nullopt;
  using namespace std::chrono;
  return sys_days{ymd} + hours{*h} + minutes{*mi} + seconds{*se} - minutes{offset_minutes};
}

inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto secs = (t - day).count();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), static_cast<long long>(secs / 3600),
                static_cast<long long>(secs / 60 % 60), static_cast<long long>(secs % 60));
  return buf;
}

struct RawEvent {
  std::string learner_id;
  Timestamp timestamp;
  Category category = Category::video;
  std::string component_id;

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

struct MalformedLine {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct ParsedEvents {
  std::vector<RawEvent> events;
  std::vector<MalformedLine> malformed;
};

inline RawEvent parse_event_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  if (!j.is_object()) throw IngestError("record is not a JSON object");
  auto field = [&](const char* name) -> std::string {
    const auto it = j.find(name);
    if (it == j.end()) throw IngestError(std::string("missing field '") + name + "'");
    if (!it->is_string()) throw IngestError(std::string("field '") + name + "' is not a string");
    return it->get<std::string>();
  };
  RawEvent ev;
  ev.learner_id = field("learner_id");
  const auto ts = field("timestamp");
  const auto parsed = parse_timestamp(ts);
  if (!parsed) throw IngestError("unparseable timestamp '" + ts + "'");
  ev.timestamp = *parsed;
  const auto cat = field("category");
  const auto c = parse_category(cat);
  if (!c) throw IngestError("unknown category '" + cat + "'");
  ev.category = *c;
  ev.component_id = field("component_id");
  if (ev.learner_id.empty()) throw IngestError("empty learner_id");
  return ev;
}

inline std::string to_json_line(const RawEvent& ev) {
  nlohmann::ordered_json j;
  j["learner_id"] = ev.learner_id;
  j["timestamp"] = format_timestamp(ev.timestamp);
  j["category"] = std::string(to_string(ev.category));
  j["component_id"] = ev.component_id;
  return j.dump();
}

/// Reads one JSON event per line. Blank lines are skipped. Malformed lines
/// are reported with their line numbers; if more than
/// `max_malformed_fraction` of the non-blank lines are malformed the whole
/// parse fails.
inline ParsedEvents parse_events(std::istream& in, double max_malformed_fraction = 0.5) {
  if (!in) throw IngestError("event stream is not readable");
  ParsedEvents out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t non_blank = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    ++non_blank;
    try {
      out.events.push_back(parse_event_json(line));
    } catch (const std::exception& e) {
      out.malformed.push_back({line_no, e.what()});
    }
  }
  if (in.bad()) throw IngestError("I/O error while reading event stream");
  if (non_blank > 0 && static_cast<double>(out.malformed.size()) >
                           max_malformed_fraction * static_cast<double>(non_blank))
    throw IngestError(std::to_string(out.malformed.size()) + " of " + std::to_string(non_blank) +
                      " event lines are malformed (first at line " +
                      std::to_string(out.malformed.front().line) +
                      ": " + out.malformed.front().message + ")");
  return out;
}

inline ParsedEvents parse_events(std::string_view text, double max_malformed_fraction = 0.5) {
  std::istringstream in{std::string(text)};
  return parse_events(in, max_malformed_fraction);
}

/// 0-based course day of `t`, or nullopt before launch / after the last day.
inline std::optional<int> day_index(Timestamp t, const CourseSpec& spec) {
  const std::int64_t delta = t.time_since_epoch().count() - spec.launch();
  if (delta < 0) return std::nullopt;
  const std::int64_t day = delta / 86400;
  if (day >= spec.duration_days()) return std::nullopt;
  return static_cast<int>(day);
}

// ---------------------------------------------------------------------------
// course.spec

inline CourseSpec parse_course_spec(std::string_view text) {
  std::optional<std::int64_t> launch;
  std::optional<int> duration;
  std::array<std::vector<std::string>, 3> catalogs;
  std::optional<Category> section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  auto fail = [&](const std::string& msg) {
    throw IngestError("course.spec line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = io::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      const auto c = parse_category(io::trim(line.substr(1, line.size() - 2)));
      if (!c) fail("unknown section '" + std::string(line) + "'");
      section = c;
      continue;
    }
    if (section) {
      catalogs[static_cast<std::size_t>(*section)].emplace_back(line);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected key = value");
    const auto key = io::trim(line.substr(0, eq));
    const auto value = io::trim(line.substr(eq + 1));
    if (key == "launch") {
      const auto t = parse_timestamp(value);
      if (!t) fail("bad launch timestamp '" + std::string(value) + "'");
      launch = t->time_since_epoch().count();
    } else if (key == "duration_days") {
      int v = 0;
      const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
      if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        fail("bad duration_days '" + std::string(value) + "'");
      duration = v;
    } else {
      fail("unknown key '" + std::string(key) + "'");
    }
  }
  if (!launch) throw IngestError("course.spec: missing launch");
  if (!duration) throw IngestError("course.spec: missing duration_days");
  try {
    return CourseSpec(*launch, *duration, std::move(catalogs));
  } catch (const SpecError& e) {
    throw IngestError(std::string("course.spec: ") + e.what());
  }
}

inline std::string format_course_spec(const CourseSpec& spec) {
  std::string out;
  out += "launch = " + format_timestamp(Timestamp{std::chrono::seconds{spec.launch()}}) + "\n";
  out += "duration_days = " + std::to_string(spec.duration_days()) + "\n";
  for (Category c : kAllCategories) {
    out += "[" + std::string(to_string(c)) + "]\n";
    for (const auto& id : spec.catalog(c)) out += id + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Learner metadata

enum class EducationLevel : std::uint8_t {
  primary,
  junior_high,
  senior_high,
  college,
  graduate,
  unknown
};
enum class IncomeTier : std::uint8_t { low, lower_middle, upper_middle, high, unknown };

inline constexpr std::array<std::string_view, 6> kEducationNames{
    "primary", "junior_high", "senior_high", "college", "graduate", "unknown"};
inline constexpr std::array<std::string_view, 5> kIncomeNames{"low", "lower_middle",
                                                              "upper_middle", "high", "unknown"};

inline std::string_view to_string(EducationLevel e) { return kEducationNames[std::size_t(e)]; }
inline std::string_view to_string(IncomeTier t) { return kIncomeNames[std::size_t(t)]; }

inline std::optional<EducationLevel> parse_education(std::string_view s) {
  if (s.empty()) return EducationLevel::unknown;
  for (std::size_t i = 0; i < kEducationNames.size(); ++i)
    if (kEducationNames[i] == s) return static_cast<EducationLevel>(i);
  return std::nullopt;
}

inline std::optional<IncomeTier> parse_income(std::string_view s) {
  if (s.empty()) return IncomeTier::unknown;
  for (std::size_t i = 0; i < kIncomeNames.size(); ++i)
    if (kIncomeNames[i] == s) return static_cast<IncomeTier>(i);
  return std::nullopt;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no" || s.empty()) return false;
  return std::nullopt;
}

struct LearnerRecord {
  std::string learner_id;
  std::optional<double> grade;  // in [0, 1]
  bool certified = false;
  EducationLevel education_level = EducationLevel::unknown;
  IncomeTier income_tier = IncomeTier::unknown;

  friend bool operator==(const LearnerRecord&, const LearnerRecord&) = default;
};

inline constexpr std::string_view kMetadataHeader =
    "learner_id,grade,certified,education_level,income_tier";

/// Parses metadata CSV. Columns are located by header name.
inline std::vector<LearnerRecord> parse_metadata(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (!io::trim(line).empty()) header = io::split_csv_line(io::trim(line));
  }
  if (header.empty()) return {};
  std::array<std::optional<std::size_t>, 5> col;
  const std::array<std::string_view, 5> names{"learner_id", "grade", "certified",
                                              "education_level", "income_tier"};
  for (std::size_t i = 0; i < header.size(); ++i)
    for (std::size_t k = 0; k < names.size(); ++k)
      if (io::trim(header[i]) == names[k]) col[k] = i;
  for (std::size_t k = 0; k < names.size(); ++k)
    if (!col[k]) throw IngestError("metadata: missing column '" + std::string(names[k]) + "'");

  std::vector<LearnerRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    const auto fields = io::split_csv_line(line);
    auto get = [&](std::size_t k) -> std::string_view {
      if (*col[k] >= fields.size())
        throw IngestError("metadata line " + std::to_string(line_no) + ": too few fields");
      return io::trim(fields[*col[k]]);
    };
    auto fail = [&](const std::string& msg) {
      throw IngestError("metadata line " + std::to_string(line_no) + ": " + msg);
    };
    LearnerRecord r;
    r.learner_id = std::string(get(0));
    if (r.learner_id.empty()) fail("empty learner_id");
    if (const auto g = get(1); !g.empty()) {
      double v = 0;
      const auto res = std::from_chars(g.data(), g.data() + g.size(), v);
      if (res.ec != std::errc{} || res.ptr != g.data() + g.size()) fail("bad grade");
      if (!(v >= 0.0 && v <= 1.0)) fail("grade outside [0, 1]");
      r.grade = v;
    }
    const auto cert = parse_bool(get(2));
    if (!cert) fail("bad certified flag");
    r.certified = *cert;
    const auto edu = parse_education(get(3));
    if (!edu) fail("unknown education_level '" + std::string(get(3)) + "'");
    r.education_level = *edu;
    const auto inc = parse_income(get(4));
    if (!inc) fail("unknown income_tier '" + std::string(get(4)) + "'");
    r.income_tier = *inc;
    records.push_back(std::move(r));
  }
  return records;
}

inline std::string format_metadata(std::span<const LearnerRecord> records) {
  std::string out(kMetadataHeader);
  out += "\n";
  for (const auto& r : records) {
    out += io::csv_escape(r.learner_id) + ",";
    if (r.grade) out += io::format_double(*r.grade);
    out += r.certified ? ",true," : ",false,";
    out += std::string(to_string(r.education_level)) + "," + std::string(to_string(r.income_tier)) +
           "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cohort

struct LearnerData {
  Dat video;
  Dat problem;
  Dat forum;
  LearnerRecord record;

  const Dat& dat(Category c) const {
    switch (c) {
      case Category::video: return video;
      case Category::problem: return problem;
      case Category::forum: return forum;
    }
    return video;
  }

  friend bool operator==(const LearnerData&, const LearnerData&) = default;
};

struct Cohort {
  CourseSpec spec;
  std::map<std::string, LearnerData> learners;  // ordered by learner_id

  friend bool operator==(const Cohort&, const Cohort&) = default;
};

struct DropReport {
  std::size_t events_total = 0;
  std::size_t out_of_range = 0;
  std::size_t unknown_component = 0;
  std::set<std::string> unknown_component_ids;  // "category:id"
  std::size_t synthesized_records = 0;          // learners without a metadata row
  std::size_t metadata_without_events = 0;
};

struct CohortBuild {
  Cohort cohort;
  DropReport drops;
};

/// Groups events by learner and category. Learners with at least one usable
/// (in-range, known component) event form the cohort; learners missing from
/// the metadata get a record of unknowns.
inline CohortBuild build_cohort(std::span<const RawEvent> events,
                                std::span<const LearnerRecord> metadata, const CourseSpec& spec) {
  std::map<std::string, const LearnerRecord*> by_id;
  for (const auto& r : metadata)
    if (!by_id.emplace(r.learner_id, &r).second)
      throw IngestError("metadata: duplicate learner_id '" + r.learner_id + "'");

  CohortBuild out;
  out.drops.events_total = events.size();
  std::map<std::string, std::array<std::vector<Entry>, 3>> accesses;
  for (const RawEvent& ev : events) {
    const auto day = day_index(ev.timestamp, spec);
    if (!day) {
      ++out.drops.out_of_range;
      continue;
    }
    const auto comp = spec.component_index(ev.category, ev.component_id);
    if (!comp) {
      ++out.drops.unknown_component;
      out.drops.unknown_component_ids.insert(std::string(to_string(ev.category)) + ":" +
                                             ev.component_id);
      continue;
    }
    accesses[ev.learner_id][static_cast<std::size_t>(ev.category)].push_back({*day, *comp});
  }

  out.cohort.spec = spec;
  for (auto& [id, per_cat] : accesses) {
    LearnerData ld;
    ld.video = dat_from_accesses(per_cat[0], spec, Category::video, id);
    ld.problem = dat_from_accesses(per_cat[1], spec, Category::problem, id);
    ld.forum = dat_from_accesses(per_cat[2], spec, Category::forum, id);
    if (const auto it = by_id.find(id); it != by_id.end()) {
      ld.record = *it->second;
    } else {
      ld.record.learner_id = id;
      ++out.drops.synthesized_records;
    }
    out.cohort.learners.emplace(id, std::move(ld));
  }
  for (const auto& [id, _] : by_id)
    if (!out.cohort.learners.contains(id)) ++out.drops.metadata_without_events;
  return out;
}

// ---------------------------------------------------------------------------
// Cohort filters
//
// A predicate is a ';'-separated conjunction of clauses:
//   certified=true
//   education_level=primary,junior_high
//   income_tier=low
//   grade=0.6..1.0          (inclusive; learners without a grade never match)
//   has_grade=true

class FilterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Predicate {
 public:
  static Predicate parse(std::string_view expr) {
    Predicate p;
    std::size_t start = 0;
    while (start <= expr.size()) {
      auto end = expr.find(';', start);
      if (end == std::string_view::npos) end = expr.size();
      const auto clause = io::trim(expr.substr(start, end - start));
      if (!clause.empty()) p.clauses_.push_back(parse_clause(clause));
      start = end + 1;
    }
    return p;
  }

  bool operator()(const LearnerRecord& r) const {
    return std::all_of(clauses_.begin(), clauses_.end(),
                       [&](const Clause& c) { return c.matches(r); });
  }

  std::size_t size() const noexcept { return clauses_.size(); }

 private:
  enum class Field { certified, education_level, income_tier, grade, has_grade };

  struct Clause {
    Field field;
    std::vector<std::uint8_t> allowed;  // enum / bool values
    double lo = 0.0;
    double hi = 1.0;

    bool matches(const LearnerRecord& r) const {
      auto in = [&](std::uint8_t v) {
        return std::find(allowed.begin(), allowed.end(), v) != allowed.end();
      };
      switch (field) {
        case Field::certified: return in(r.certified ? 1 : 0);
        case Field::has_grade: return in(r.grade ? 1 : 0);
        case Field::education_level: return in(static_cast<std::uint8_t>(r.education_level));
        case Field::income_tier: return in(static_cast<std::uint8_t>(r.income_tier));
        case Field::grade: return r.grade && *r.grade >= lo && *r.grade <= hi;
      }
      return false;
    }
  };

  static std::vector<std::string_view> split_values(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= s.size()) {
      auto end = s.find(',', start);
      if (end == std::string_view::npos) end = s.size();
      out.push_back(io::trim(s.substr(start, end - start)));
      start = end + 1;
    }
    return out;
  }

  static Clause parse_clause(std::string_view clause) {
    const auto eq = clause.find('=');
    if (eq == std::string_view::npos)
      throw FilterError("filter clause '" + std::string(clause) + "' has no '='");
    const auto name = io::trim(clause.substr(0, eq));
    const auto value = io::trim(clause.substr(eq + 1));
    Clause c{};
    auto bad_value = [&](std::string_view v) {
      return FilterError("filter: invalid value '" + std::string(v) + "' for field '" +
                         std::string(name) + "'");
    };
    if (name == "certified" || name == "has_grade") {
      c.field = name == "certified" ? Field::certified : Field::has_grade;
      for (auto v : split_values(value)) {
        const auto b = v.empty() ? std::nullopt : parse_bool(v);
        if (!b) throw bad_value(v);
        c.allowed.push_back(*b ? 1 : 0);
      }
    } else if (name == "education_level") {
      c.field = Field::education_level;
      for (auto v : split_values(value)) {
        const auto e = v.empty() ? std::nullopt : parse_education(v);
        if (!e) throw bad_value(v);
        c.allowed.push_back(static_cast<std::uint8_t>(*e));
      }
    } else if (name == "income_tier") {
      c.field = Field::income_tier;
      for (auto v : split_values(value)) {
        const auto t = v.empty() ? std::nullopt : parse_income(v);
        if (!t) throw bad_value(v);
        c.allowed.push_back(static_cast<std::uint8_t>(*t));
      }
    } else if (name == "grade") {
      c.field = Field::grade;
      const auto dots = value.find("..");
      if (dots == std::string_view::npos) throw bad_value(value);
      auto num = [&](std::string_view s) {
        s = io::trim(s);
        double v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw bad_value(value);
        return v;
      };
      c.lo = num(value.substr(0, dots));
      c.hi = num(value.substr(dots + 2));
      if (c.lo > c.hi) throw bad_value(value);
    } else {
      throw FilterError("filter: unknown field '" + std::string(name) + "'");
    }
    return c;
  }

  std::vector<Clause> clauses_;
};

inline Cohort filter_cohort(const Cohort& cohort, const Predicate& pred) {
  Cohort out;
  out.spec = cohort.spec;
  for (const auto& [id, ld] : cohort.learners)
    if (pred(ld.record)) out.learners.emplace(id, ld);
  return out;
}

// ---------------------------------------------------------------------------
// Binary cohort archive
//
//   magic "DATCOHRT", u32 version (1), i64 launch, i32 duration_days,
//   3 x (u32 count, count x string)              catalogs video/problem/forum
//   u64 n_learners, then per learner in id order:
//     string id, u8 has_grade, f64 grade, u8 certified, u8 education, u8 income,
//     3 x (u32 n_entries, n_entries x (i32 day, i32 component))
//
// All integers little-endian; strings are u32 length + bytes.

inline constexpr std::string_view kCohortMagic = "DATCOHRT";
inline constexpr std::uint32_t kCohortVersion = 1;

inline std::string serialize_cohort(const Cohort& cohort) {
  io::BinaryWriter w;
  w.bytes(kCohortMagic);
  w.integer(kCohortVersion);
  w.integer(cohort.spec.launch());
  w.integer(static_cast<std::int32_t>(cohort.spec.duration_days()));
  for (Category c : kAllCategories) {
    const auto& cat = cohort.spec.catalog(c);
    w.integer(static_cast<std::uint32_t>(cat.size()));
    for (const auto& id : cat) w.string(id);
  }
  w.integer(static_cast<std::uint64_t>(cohort.learners.size()));
  for (const auto& [id, ld] : cohort.learners) {
    w.string(id);
    w.integer(static_cast<std::uint8_t>(ld.record.grade ? 1 : 0));
    w.f64(ld.record.grade.value_or(0.0));
    w.integer(static_cast<std::uint8_t>(ld.record.certified ? 1 : 0));
    w.integer(static_cast<std::uint8_t>(ld.record.education_level));
    w.integer(static_cast<std::uint8_t>(ld.record.income_tier));
    for (Category c : kAllCategories) {
      const auto entries = ld.dat(c).entries();
      w.integer(static_cast<std::uint32_t>(entries.size()));
      for (const Entry& e : entries) {
        w.integer(static_cast<std::int32_t>(e.day));
        w.integer(static_cast<std::int32_t>(e.component));
      }
    }
  }
  return w.data();
}

inline Cohort deserialize_cohort(std::string_view data) {
  io::BinaryReader r(data);
  if (r.bytes(kCohortMagic.size()) != kCohortMagic) throw io::FormatError("not a cohort archive");
  if (const auto v = r.integer<std::uint32_t>(); v != kCohortVersion)
    throw io::FormatError("unsupported cohort archive version " + std::to_string(v));
  const auto launch = r.integer<std::int64_t>();
  const auto duration = r.integer<std::int32_t>();
  std::array<std::vector<std::string>, 3> catalogs;
  for (auto& cat : catalogs) {
    const auto n = r.integer<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) cat.push_back(r.string());
  }
  Cohort cohort;
  cohort.spec = CourseSpec(launch, duration, std::move(catalogs));
  const auto n_learners = r.integer<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_learners; ++i) {
    LearnerData ld;
    const auto id = r.string();
    ld.record.learner_id = id;
    const bool has_grade = r.integer<std::uint8_t>() != 0;
    const double grade = r.f64();
    if (has_grade) ld.record.grade = grade;
    ld.record.certified = r.integer<std::uint8_t>() != 0;
    const auto edu = r.integer<std::uint8_t>();
    const auto inc = r.integer<std::uint8_t>();
    if (edu >= kEducationNames.size() || inc >= kIncomeNames.size())
      throw io::FormatError("corrupt learner record for '" + id + "'");
    ld.record.education_level = static_cast<EducationLevel>(edu);
    ld.record.income_tier = static_cast<IncomeTier>(inc);
    for (Category c : kAllCategories) {
      const auto n = r.integer<std::uint32_t>();
      std::vector<Entry> entries(n);
      for (auto& e : entries) {
        e.day = r.integer<std::int32_t>();
        e.component = r.integer<std::int32_t>();
      }
      // Re-validate through the normal constructor path.
      Dat d = dat_from_accesses(entries, cohort.spec, c, id);
      if (d.size() != entries.size()) throw io::FormatError("duplicate entries in archive");
      (c == Category::video ? ld.video : c == Category::problem ? ld.problem : ld.forum) =
          std::move(d);
    }
    cohort.learners.emplace(id, std::move(ld));
  }
  if (!r.at_end()) throw io::FormatError("trailing bytes after cohort archive");
  return cohort;
}

}  // namespace dattk
