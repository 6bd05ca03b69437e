// Detailed access trajectories: a learner's sparse binary (day x component)
// record of accesses for one component category.
#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace dattk {

enum class Category : std::uint8_t { video = 0, problem = 1, forum = 2 };

inline constexpr std::array<Category, 3> kAllCategories{Category::video, Category::problem,
                                                        Category::forum};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::video: return "video";
    case Category::problem: return "problem";
    case Category::forum: return "forum";
  }
  return "?";
}

inline std::optional<Category> parse_category(std::string_view s) {
  if (s == "video") return Category::video;
  if (s == "problem") return Category::problem;
  if (s == "forum") return Category::forum;
  return std::nullopt;
}

/// Thrown when an access lies outside the course grid.
class BoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Thrown when a CourseSpec violates its invariants.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One cell of the trajectory grid. Both indices are 0-based.
struct Entry {
  int day = 0;
  int component = 0;

  friend auto operator<=>(const Entry&, const Entry&) = default;
};

/// Course geometry: launch instant, length in days and the ordered component
/// catalog of each category (position in the catalog = instructional order).
class CourseSpec {
 public:
  CourseSpec() = default;

  CourseSpec(std::int64_t launch_unix_seconds, int duration_days,
             std::array<std::vector<std::string>, 3> catalogs)
      : launch_(launch_unix_seconds), duration_days_(duration_days), catalogs_(std::move(catalogs)) {
    validate();
  }

  std::int64_t launch() const noexcept { return launch_; }
  int duration_days() const noexcept { return duration_days_; }

  const std::vector<std::string>& catalog(Category c) const noexcept {
    return catalogs_[static_cast<std::size_t>(c)];
  }
  int n_components(Category c) const noexcept { return static_cast<int>(catalog(c).size()); }

  std::optional<int> component_index(Category c, std::string_view id) const {
    const auto& index = index_[static_cast<std::size_t>(c)];
    if (auto it = index.find(std::string(id)); it != index.end()) return it->second;
    return std::nullopt;
  }

  friend bool operator==(const CourseSpec& a, const CourseSpec& b) {
    return a.launch_ == b.launch_ && a.duration_days_ == b.duration_days_ &&
           a.catalogs_ == b.catalogs_;
  }

 private:
  void validate() {
    if (duration_days_ < 1) throw SpecError("duration_days must be >= 1");
    for (Category c : kAllCategories) {
      auto& index = index_[static_cast<std::size_t>(c)];
      const auto& cat = catalog(c);
      for (std::size_t i = 0; i < cat.size(); ++i) {
        if (cat[i].empty())
          throw SpecError("empty component id in " + std::string(to_string(c)) + " catalog");
        if (!index.emplace(cat[i], static_cast<int>(i)).second)
          throw SpecError("duplicate component id '" + cat[i] + "' in " +
                          std::string(to_string(c)) + " catalog");
      }
    }
  }

  std::int64_t launch_ = 0;
  int duration_days_ = 1;
  std::array<std::vector<std::string>, 3> catalogs_;
  std::array<std::unordered_map<std::string, int>, 3> index_;
};

/// Sparse trajectory. Entries are sorted by (day, component) and unique;
/// instances are immutable once built.
class Dat {
 public:
  Dat() = default;

  const std::string& learner_id() const noexcept { return learner_id_; }
  Category category() const noexcept { return category_; }
  std::span<const Entry> entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  friend bool operator==(const Dat&, const Dat&) = default;

 private:
  friend Dat dat_from_accesses(std::span<const Entry>, const CourseSpec&, Category, std::string);
  friend Dat dat_from_sorted_unchecked(std::vector<Entry>, Category, std::string);

  std::string learner_id_;
  Category category_ = Category::video;
  std::vector<Entry> entries_;
};

/// Builds a Dat from raw accesses. Repeated (day, component) pairs collapse to
/// one entry.
inline Dat dat_from_accesses(std::span<const Entry> accesses, const CourseSpec& spec,
                             Category category, std::string learner_id = {}) {
  const int n_comp = spec.n_components(category);
  for (const Entry& e : accesses) {
    if (e.day < 0 || e.day >= spec.duration_days() || e.component < 0 || e.component >= n_comp) {
      throw BoundsError("access (day=" + std::to_string(e.day) +
                        ", component=" + std::to_string(e.component) + ") outside " +
                        std::to_string(spec.duration_days()) + " days x " +
                        std::to_string(n_comp) + " " + std::string(to_string(category)) +
                        " components");
    }
  }
  Dat d;
  d.learner_id_ = std::move(learner_id);
  d.category_ = category;
  d.entries_.assign(accesses.begin(), accesses.end());
  std::sort(d.entries_.begin(), d.entries_.end());
  d.entries_.erase(std::unique(d.entries_.begin(), d.entries_.end()), d.entries_.end());
  return d;
}

/// For deserializers that have already validated ordering and bounds.
inline Dat dat_from_sorted_unchecked(std::vector<Entry> entries, Category category,
                                     std::string learner_id) {
  Dat d;
  d.learner_id_ = std::move(learner_id);
  d.category_ = category;
  d.entries_ = std::move(entries);
  return d;
}

/// Dense days x components binary matrix, row-major.
struct DenseDat {
  int days = 0;
  int components = 0;
  std::vector<std::uint8_t> cells;

  std::uint8_t at(int day, int component) const {
    return cells[static_cast<std::size_t>(day) * static_cast<std::size_t>(components) +
                 static_cast<std::size_t>(component)];
  }

  friend bool operator==(const DenseDat&, const DenseDat&) = default;
};

inline DenseDat to_dense(const Dat& dat, const CourseSpec& spec) {
  DenseDat m;
  m.days = spec.duration_days();
  m.components = spec.n_components(dat.category());
  m.cells.assign(static_cast<std::size_t>(m.days) * static_cast<std::size_t>(m.components), 0);
  for (const Entry& e : dat.entries())
    m.cells[static_cast<std::size_t>(e.day) * static_cast<std::size_t>(m.components) +
            static_cast<std::size_t>(e.component)] = 1;
  return m;
}

inline Dat from_dense(const DenseDat& m, Category category, std::string learner_id = {}) {
  std::vector<Entry> entries;
  for (int d = 0; d < m.days; ++d)
    for (int c = 0; c < m.components; ++c)
      if (m.at(d, c)) entries.push_back({d, c});
  return dat_from_sorted_unchecked(std::move(entries), category, std::move(learner_id));
}

inline std::vector<int> active_days(const Dat& dat) {
  std::vector<int> days;
  for (const Entry& e : dat.entries())
    if (days.empty() || days.back() != e.day) days.push_back(e.day);
  return days;
}

inline std::vector<int> components_on_day(const Dat& dat, int day) {
  auto entries = dat.entries();
  auto lo = std::lower_bound(entries.begin(), entries.end(), Entry{day, 0});
  std::vector<int> out;
  for (auto it = lo; it != entries.end() && it->day == day; ++it) out.push_back(it->component);
  return out;
}

/// Entries grouped by active day, in day order. Cheaper than repeated
/// components_on_day calls when walking a whole trajectory.
struct DayGroup {
  int day;
  std::span<const Entry> entries;  // all on `day`, ascending component

  int first_component() const { return entries.front().component; }
  int last_component() const { return entries.back().component; }
  bool contains(int component) const {
    return std::binary_search(entries.begin(), entries.end(), Entry{day, component});
  }
};

inline std::vector<DayGroup> group_by_day(const Dat& dat) {
  std::vector<DayGroup> groups;
  auto entries = dat.entries();
  std::size_t i = 0;
  while (i < entries.size()) {
    std::size_t j = i;
    while (j < entries.size() && entries[j].day == entries[i].day) ++j;
    groups.push_back({entries[i].day, entries.subspan(i, j - i)});
    i = j;
  }
  return groups;
}

}  // namespace dattk
