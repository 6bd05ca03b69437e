// dattk command-line tool: ingest, patterns, ldp, embed, project, synth.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dattk/cnn_ae.hpp"
#include "dattk/core.hpp"
#include "dattk/dtw_mds.hpp"
#include "dattk/features.hpp"
#include "dattk/ingest.hpp"
#include "dattk/io.hpp"
#include "dattk/lbp.hpp"
#include "dattk/ldp.hpp"
#include "dattk/matrix.hpp"
#include "dattk/synth.hpp"
#include "dattk/tsne.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace dattk;

namespace {

constexpr std::string_view kVersion = "0.1.0";

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::vector<std::string> argv;
};

std::string now_utc() {
  const auto t = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  return format_timestamp(Timestamp(t.time_since_epoch()));
}

std::string digest_of(std::string_view bytes) { return io::hex64(io::fnv1a64(bytes)); }

/// Records what a command read and wrote; saved as <out>/<command>.manifest.json.
class Manifest {
 public:
  Manifest(std::string command, const Globals& g, std::string out_dir)
      : command_(std::move(command)), out_dir_(std::move(out_dir)), globals_(g), started_(now_utc()) {
    if (out_dir_.empty()) throw UsageError("--out is required");
  }

  std::string read(const std::string& path) {
    if (!fs::is_regular_file(path)) throw UsageError("input file not found: " + path);
    std::string bytes = io::read_file(path);
    inputs_.push_back({{"path", path}, {"digest", digest_of(bytes)}, {"bytes", bytes.size()}});
    return bytes;
  }

  std::string path(const std::string& name) const { return (fs::path(out_dir_) / name).string(); }

  void write(const std::string& name, std::string_view content) {
    const auto p = path(name);
    fs::create_directories(out_dir_);
    io::write_file(p, content);
    outputs_.push_back({{"path", p}, {"digest", digest_of(content)}, {"bytes", content.size()}});
  }

  ordered_json& notes() { return notes_; }

  void finish() {
    ordered_json m;
    m["command"] = command_;
    m["arguments"] = globals_.argv;
    m["seed"] = globals_.seed;
    m["threads"] = globals_.threads;
    m["tool_version"] = kVersion;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    if (!notes_.empty()) m["notes"] = notes_;
    m["started_at"] = started_;
    m["finished_at"] = now_utc();
    fs::create_directories(out_dir_);
    io::write_file(path(command_ + ".manifest.json"), m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string out_dir_;
  const Globals& globals_;
  std::string started_;
  ordered_json inputs_ = ordered_json::array();
  ordered_json outputs_ = ordered_json::array();
  ordered_json notes_ = ordered_json::object();
};

ordered_json json_number(std::optional<double> v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json test_json(const stats::TestResult& t) {
  return {{"statistic", std::isfinite(t.statistic) ? ordered_json(t.statistic) : ordered_json(std::to_string(t.statistic))},
          {"df", json_number(t.df)},
          {"p_value", t.p_value}};
}

Cohort load_cohort(Manifest& m, const std::string& path, const std::string& filter) {
  Cohort c = deserialize_cohort(m.read(path));
  if (!filter.empty()) {
    c = filter_cohort(c, Predicate::parse(filter));
    m.notes()["filter"] = filter;
    m.notes()["learners_after_filter"] = c.learners.size();
  }
  return c;
}

std::string grade_field(const LearnerRecord& r) { return r.grade ? io::format_double(*r.grade) : ""; }

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string spec, out;
};

void cmd_synth(const SynthArgs& a, const Globals& g) {
  Manifest m("synth", g, a.out);
  const auto cfg = synth::parse_synth_spec(m.read(a.spec));
  const auto out = synth::generate(cfg, g.seed);
  m.write("events.jsonl", synth::format_events(out.events));
  m.write("metadata.csv", format_metadata(out.metadata));
  m.write("groundtruth.json", synth::format_ground_truth(out.truth));
  m.write("course.spec", format_course_spec(cfg.course));
  m.notes()["learners"] = out.truth.learners.size();
  m.notes()["events"] = out.events.size();
  m.finish();
}

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
  std::string events, metadata, course, out;
  double max_malformed = 0.5;
};

void cmd_ingest(const IngestArgs& a, const Globals& g) {
  Manifest m("ingest", g, a.out);
  const auto spec = parse_course_spec(m.read(a.course));
  const auto records = parse_metadata(m.read(a.metadata));
  const auto parsed = parse_events(std::string_view(m.read(a.events)), a.max_malformed);
  for (const auto& bad : parsed.malformed)
    std::cerr << a.events << ":" << bad.line << ": skipped: " << bad.message << "\n";
  const auto built = build_cohort(parsed.events, records, spec);
  if (built.cohort.learners.empty()) throw IngestError("no learner has an in-range event");

  m.write("cohort.dat", serialize_cohort(built.cohort));
  ordered_json report;
  report["learners"] = built.cohort.learners.size();
  report["events_total"] = built.drops.events_total;
  report["malformed_lines"] = parsed.malformed.size();
  report["out_of_range"] = built.drops.out_of_range;
  report["unknown_component"] = built.drops.unknown_component;
  report["unknown_component_ids"] = built.drops.unknown_component_ids;
  report["learners_without_metadata"] = built.drops.synthesized_records;
  report["metadata_without_events"] = built.drops.metadata_without_events;
  ordered_json lines = ordered_json::array();
  for (const auto& bad : parsed.malformed) lines.push_back({{"line", bad.line}, {"reason", bad.message}});
  report["malformed"] = lines;
  m.write("drops.json", report.dump(2) + "\n");
  m.notes()["learners"] = built.cohort.learners.size();
  m.finish();
}

// ---------------------------------------------------------------------------
// patterns

struct PatternArgs {
  std::string cohort, pattern = "all", filter, out;
  bool grades = false;
};

void cmd_patterns(const PatternArgs& a, const Globals& g) {
  std::vector<lbp::Pattern> patterns;
  if (a.pattern == "all") {
    patterns.assign(lbp::kAllPatterns.begin(), lbp::kAllPatterns.end());
  } else if (const auto p = lbp::parse_pattern(a.pattern)) {
    patterns.push_back(*p);
  } else {
    throw UsageError("unknown pattern '" + a.pattern +
                     "' (expected return_recent, return_long, return_skipped or all)");
  }
  Manifest m("patterns", g, a.out);
  const Cohort cohort = load_cohort(m, a.cohort, a.filter);

  std::string csv = "learner_id,pattern,count,grade\n";
  ordered_json cutoffs = ordered_json::array();
  for (lbp::Pattern p : patterns) {
    std::vector<int> freqs;
    std::vector<double> grades;
    for (const auto& [id, ld] : cohort.learners) {
      const int count = lbp::count_pattern(ld.video, p);
      csv += io::csv_escape(id) + "," + std::string(lbp::to_string(p)) + "," + std::to_string(count) +
             "," + grade_field(ld.record) + "\n";
      if (ld.record.grade) {
        freqs.push_back(count);
        grades.push_back(*ld.record.grade);
      }
    }
    if (!a.grades) continue;
    if (freqs.size() < 4) throw UsageError("--grades: fewer than 4 learners carry a grade");
    const auto search = lbp::cutoff_search(freqs, grades);
    ordered_json j;
    j["pattern"] = lbp::to_string(p);
    j["n_learners"] = freqs.size();
    j["max_frequency"] = search.max_frequency;
    if (search.best) {
      j["best"] = {{"cutoff", search.best->cutoff},
                   {"p_value", search.best->p_value},
                   {"p_bonferroni", search.best->p_bonferroni},
                   {"n_below", search.best->n_below},
                   {"n_above", search.best->n_above}};
    } else {
      j["best"] = nullptr;
    }
    ordered_json audit = ordered_json::array();
    for (const auto& row : search.audit)
      audit.push_back({{"cutoff", row.cutoff},
                       {"n_below", row.n_below},
                       {"n_above", row.n_above},
                       {"statistic", json_number(row.statistic)},
                       {"p_value", json_number(row.p_value)},
                       {"p_bonferroni", json_number(row.p_bonferroni)}});
    j["audit"] = audit;
    cutoffs.push_back(j);
  }
  m.write("patterns.csv", csv);
  if (a.grades) m.write("cutoff.json", cutoffs.dump(2) + "\n");
  m.finish();
}

// ---------------------------------------------------------------------------
// ldp

struct LdpArgs {
  std::string cohort, filter, out, population = "video_and_forum";
  int n_min = -5, n_max = 5, window = 2;
  double level = 0.99;
  bool certified_only = false, group_test = false;
};

void cmd_ldp(const LdpArgs& a, const Globals& g) {
  ldp::Population pop;
  if (a.population == "video_and_forum") pop = ldp::Population::video_and_forum;
  else if (a.population == "all") pop = ldp::Population::all;
  else throw UsageError("--population must be video_and_forum or all");

  Manifest m("ldp", g, a.out);
  Cohort cohort = load_cohort(m, a.cohort, a.filter);
  if (a.certified_only) {
    cohort = filter_cohort(cohort, Predicate::parse("certified=true"));
    m.notes()["certified_only"] = true;
  }
  const auto sweep = ldp::offset_sweep(cohort, a.n_min, a.n_max, a.level, pop);
  std::string csv = "offset,p_cond,ci_lo,ci_hi,total_v_days,total_v_f_days,p_base\n";
  for (const auto& r : sweep.rows)
    csv += std::to_string(r.offset) + "," + io::format_double(r.p_cond) + "," + io::format_double(r.ci_lo) +
           "," + io::format_double(r.ci_hi) + "," + std::to_string(r.total_v_days) + "," +
           std::to_string(r.total_v_f_days) + "," + io::format_double(sweep.base.p_hat) + "\n";

  ordered_json report;
  report["population"] = a.population;
  report["learners"] = cohort.learners.size();
  report["level"] = a.level;
  report["baseline"] = {{"p_hat", sweep.base.p_hat},
                        {"forum_active", sweep.base.forum_active},
                        {"n_samples", sweep.base.n_samples}};
  report["argmax_offset"] = sweep.argmax();
  const auto dep = ldp::dependence_test(cohort, sweep.argmax(), g.seed, pop);
  report["dependence_test"] = {{"offset", sweep.argmax()},
                               {"ks", test_json(dep.ks)},
                               {"n_conditional", dep.n_conditional},
                               {"n_baseline", dep.n_baseline}};
  if (a.group_test) {
    for (const auto& [id, ld] : cohort.learners) {
      const bool tested = pop == ldp::Population::all || (!ld.video.empty() && !ld.forum.empty());
      if (tested && !ld.record.grade)
        throw UsageError("--group-test needs a grade for every tested learner; '" + id + "' has none");
    }
    const auto gt = ldp::group_grade_test(cohort, a.window, pop);
    report["group_grade_test"] = {{"window_days", gt.window_days},
                                  {"n_group_y", gt.n_group_y},
                                  {"n_group_n", gt.n_group_n},
                                  {"mean_grade_y", gt.mean_grade_y},
                                  {"mean_grade_n", gt.mean_grade_n},
                                  {"welch", test_json(gt.test)}};
  }
  m.write("offsets.csv", csv);
  m.write("ldp.json", report.dump(2) + "\n");
  m.finish();
}

// ---------------------------------------------------------------------------
// embed

struct EmbedArgs {
  std::string cohort, pipeline, filter, out, loss = "bce";
  int epochs = 50, batch_size = 64;
  double learning_rate = 1e-3;
  std::int64_t max_steps = 0;
  bool no_cache = false;
};

std::uint64_t series_digest(const std::vector<std::string>& ids,
                            const std::vector<dtw::TrajectorySeries>& series) {
  io::BinaryWriter w;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    w.string(ids[i]);
    w.integer(static_cast<std::uint64_t>(series[i].size()));
    for (const auto& p : series[i]) {
      w.f64(p.day);
      w.f64(p.component);
    }
  }
  return io::fnv1a64(w.data());
}

void cmd_embed(const EmbedArgs& a, const Globals& g) {
  if (a.pipeline != "features" && a.pipeline != "dtw-mds" && a.pipeline != "cnn-ae")
    throw UsageError("--pipeline must be features, dtw-mds or cnn-ae");
  Manifest m("embed", g, a.out);
  const Cohort cohort = load_cohort(m, a.cohort, a.filter);

  std::vector<const LearnerData*> learners;
  ordered_json excluded = ordered_json::array();
  for (const auto& [id, ld] : cohort.learners) {
    if (ld.video.empty()) excluded.push_back(id);
    else learners.push_back(&ld);
  }
  if (!excluded.empty())
    std::cerr << "embed: " << excluded.size() << " learner(s) without video accesses excluded\n";
  m.notes()["excluded_empty_video"] = excluded;

  EmbeddingMatrix e;
  e.pipeline = a.pipeline;
  e.seed = g.seed;
  for (const auto* ld : learners) e.learner_ids.push_back(ld->record.learner_id);

  if (a.pipeline == "features") {
    if (learners.size() < 2) throw UsageError("features pipeline needs at least 2 learners");
    std::vector<features::FeatureVector> fvs;
    for (const auto* ld : learners) fvs.push_back(features::extract_features(ld->video));
    std::string raw = "learner_id";
    for (auto name : features::kFeatureNames) raw += "," + std::string(name);
    raw += "\n";
    for (const auto& f : fvs) {
      raw += io::csv_escape(f.learner_id);
      for (double v : f.values) raw += "," + io::format_double(v);
      raw += "\n";
    }
    m.write("features.csv", raw);
    e.values = features::standardize(features::to_matrix(fvs));
  } else if (a.pipeline == "dtw-mds") {
    if (learners.size() <= 10) throw UsageError("dtw-mds pipeline needs more than 10 learners");
    std::vector<dtw::TrajectorySeries> series;
    for (const auto* ld : learners) series.push_back(dtw::dat_to_series(ld->video, cohort.spec));
    const auto digest = series_digest(e.learner_ids, series);
    const auto cache = m.path("distances.bin");
    std::optional<dtw::DistanceMatrix> dm;
    if (!a.no_cache && fs::is_regular_file(cache)) {
      try {
        auto stored = dtw::deserialize_distance_matrix(io::read_file(cache));
        if (stored.digest == digest && stored.matrix.n() == series.size()) dm = std::move(stored.matrix);
      } catch (const io::FormatError&) {
      }
    }
    m.notes()["distance_cache_hit"] = dm.has_value();
    m.notes()["series_digest"] = io::hex64(digest);
    if (!dm) dm = dtw::distance_matrix(series, g.threads);
    m.write("distances.bin", dtw::serialize_distance_matrix(*dm, digest));
    e.values = dtw::classical_mds(*dm, 10);
  } else {
    std::vector<cnn::Tensor> images;
    std::size_t dropped = 0;
    for (const auto* ld : learners) {
      auto img = cnn::dat_to_image(ld->video);
      dropped += img.dropped_entries;
      images.push_back(std::move(img.pixels));
    }
    if (images.empty()) throw UsageError("cnn-ae pipeline needs at least 1 learner");
    m.notes()["entries_beyond_day_64"] = dropped;
    cnn::TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.learning_rate = a.learning_rate;
    cfg.max_steps = a.max_steps;
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    if (a.loss == "bce") cfg.loss = cnn::Loss::bce;
    else if (a.loss == "mse") cfg.loss = cnn::Loss::mse;
    else throw UsageError("--loss must be bce or mse");
    const auto result = cnn::train(images, cfg);
    std::string curve = "epoch,loss\n";
    for (std::size_t i = 0; i < result.epoch_loss.size(); ++i)
      curve += std::to_string(i + 1) + "," + io::format_double(result.epoch_loss[i]) + "\n";
    m.write("loss.csv", curve);
    m.write("model.ckpt", cnn::serialize_model(result.model));
    m.notes()["steps"] = result.steps;
    e.values = Matrix(images.size(), cnn::kCodeSize);
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto code = result.model.encode(images[i]);
      std::copy(code.begin(), code.end(), e.values.row(i).begin());
    }
  }
  m.write("embedding.csv", format_embedding_csv(e));
  m.finish();
}

// ---------------------------------------------------------------------------
// project

struct ProjectArgs {
  std::string embedding, metadata, cohort, out;
  double perplexity = 30, learning_rate = 200;
  int iterations = 1000;
};

// Grade colour ramp: 0 -> #3b4cc0 (blue), 0.5 -> #dddddd (grey), 1 -> #b40426
// (red), linear in RGB between stops. Learners without a grade are drawn as
// hollow grey circles.
std::string ramp(double g) {
  struct Rgb {
    double r, g, b;
  };
  constexpr Rgb lo{59, 76, 192}, mid{221, 221, 221}, hi{180, 4, 38};
  g = std::clamp(g, 0.0, 1.0);
  const Rgb& a = g < 0.5 ? lo : mid;
  const Rgb& b = g < 0.5 ? mid : hi;
  const double t = g < 0.5 ? g / 0.5 : (g - 0.5) / 0.5;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(a.r + t * (b.r - a.r))),
                static_cast<int>(std::lround(a.g + t * (b.g - a.g))),
                static_cast<int>(std::lround(a.b + t * (b.b - a.b))));
  return buf;
}

std::string scatter_svg(const EmbeddingMatrix& e, const Matrix& y,
                        const std::vector<std::optional<double>>& grades) {
  constexpr double size = 640, pad = 40;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  for (std::size_t i = 0; i < y.rows; ++i) {
    x0 = i ? std::min(x0, y(i, 0)) : y(i, 0);
    x1 = i ? std::max(x1, y(i, 0)) : y(i, 0);
    y0 = i ? std::min(y0, y(i, 1)) : y(i, 1);
    y1 = i ? std::max(y1, y(i, 1)) : y(i, 1);
  }
  const double span = std::max({x1 - x0, y1 - y0, 1e-12});
  auto sx = [&](double v) { return pad + (v - x0) / span * (size - 2 * pad); };
  auto sy = [&](double v) { return size - pad - (v - y0) / span * (size - 2 * pad); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + 30
    << "\" viewBox=\"0 0 " << size << " " << size + 30 << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << pad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">t-SNE of "
    << e.pipeline << " embedding, colour = grade</text>\n";
  for (std::size_t i = 0; i < y.rows; ++i) {
    s << "<circle cx=\"" << io::format_double(sx(y(i, 0))) << "\" cy=\"" << io::format_double(sy(y(i, 1)) + 30)
      << "\" r=\"3\" ";
    if (grades[i]) s << "fill=\"" << ramp(*grades[i]) << "\"";
    else s << "fill=\"none\" stroke=\"#888888\"";
    s << "><title>" << e.learner_ids[i] << "</title></circle>\n";
  }
  for (int k = 0; k <= 10; ++k)
    s << "<rect x=\"" << size - pad - 110 + 10 * k << "\" y=\"10\" width=\"10\" height=\"10\" fill=\""
      << ramp(k / 10.0) << "\"/>\n";
  s << "</svg>\n";
  return s.str();
}

void cmd_project(const ProjectArgs& a, const Globals& g) {
  Manifest m("project", g, a.out);
  const auto e = parse_embedding_csv(m.read(a.embedding));
  std::map<std::string, std::optional<double>> grade_of;
  if (!a.metadata.empty())
    for (const auto& r : parse_metadata(m.read(a.metadata))) grade_of[r.learner_id] = r.grade;
  if (!a.cohort.empty())
    for (const auto& [id, ld] : deserialize_cohort(m.read(a.cohort)).learners) grade_of[id] = ld.record.grade;

  tsne::TsneConfig cfg;
  cfg.perplexity = a.perplexity;
  cfg.iterations = a.iterations;
  cfg.learning_rate = a.learning_rate;
  cfg.seed = g.seed;
  const auto r = tsne::tsne(e.values, cfg);

  std::vector<std::optional<double>> grades;
  std::string csv = "learner_id,x,y,grade\n";
  for (std::size_t i = 0; i < r.y.rows; ++i) {
    const auto it = grade_of.find(e.learner_ids[i]);
    grades.push_back(it == grade_of.end() ? std::nullopt : it->second);
    csv += io::csv_escape(e.learner_ids[i]) + "," + io::format_double(r.y(i, 0)) + "," +
           io::format_double(r.y(i, 1)) + "," + (grades.back() ? io::format_double(*grades.back()) : "") + "\n";
  }
  m.write("scatter.csv", csv);
  m.write("scatter.svg", scatter_svg(e, r.y, grades));
  m.notes()["final_kl"] = r.kl_history.empty() ? 0.0 : r.kl_history.back().kl;
  m.finish();
}

constexpr const char* kFormats = R"(File formats
  events.jsonl     one JSON object per line: {"learner_id", "timestamp" (ISO-8601,
                   UTC unless an offset is given), "category" (video|problem|forum),
                   "component_id"}
  metadata.csv     header learner_id,grade,certified,education_level,income_tier;
                   grade in [0,1] or empty, certified true|false, education one of
                   primary junior_high senior_high college graduate unknown,
                   income one of low lower_middle upper_middle high unknown
  course.spec      "launch = ISO-8601" and "duration_days = N" lines, then
                   [video], [problem] and [forum] sections listing one
                   component id per line in course order
  cohort.dat       binary cohort archive (magic DATCOHRT, version 1)
  patterns.csv     learner_id,pattern,count,grade
  cutoff.json      per pattern: best cutoff and the full (cutoff, p) audit trail
  offsets.csv      offset,p_cond,ci_lo,ci_hi,total_v_days,total_v_f_days,p_base
  ldp.json         baseline, argmax offset, KS dependence test, group grade test
  embedding.csv    "# pipeline=NAME seed=N" line, header learner_id,d0..d9
  features.csv     learner_id and the ten raw features
  distances.bin    magic DATDIST1, u64 n, u64 input digest, condensed
                   little-endian doubles; reused when the digest matches
  model.ckpt       magic DATCNNAE, u32 version, per layer name + f64 values
  loss.csv         epoch,loss
  scatter.csv      learner_id,x,y,grade
  scatter.svg      grade colour ramp 0 #3b4cc0 -> 0.5 #dddddd -> 1 #b40426,
                   hollow grey circles for learners without a grade
  synth spec       see the README (globals, then [archetype NAME] sections)
  *.manifest.json  command, arguments, seed, threads, input and output digests,
                   tool version, start and finish times

Exit codes: 0 success, 1 runtime failure, 2 input or validation error.)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dattk: detailed access trajectory toolkit"};
  app.footer(kFormats);
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));
  Globals g;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (dtw-mds distances, cnn-ae training)")
      ->capture_default_str()
      ->check(CLI::Range(1u, 1024u));

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic cohort from a spec file");
  synth_cmd->add_option("--spec", sa.spec, "Synth spec file")->required();
  synth_cmd->add_option("-o,--out", sa.out, "Output directory")->required();

  IngestArgs ia;
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a cohort archive from raw files");
  ingest_cmd->add_option("--events", ia.events, "events.jsonl")->required();
  ingest_cmd->add_option("--metadata", ia.metadata, "metadata.csv")->required();
  ingest_cmd->add_option("--course", ia.course, "course.spec")->required();
  ingest_cmd->add_option("--max-malformed", ia.max_malformed, "Largest tolerated fraction of malformed lines")
      ->capture_default_str();
  ingest_cmd->add_option("-o,--out", ia.out, "Output directory")->required();

  PatternArgs pa;
  auto* patterns_cmd = app.add_subcommand("patterns", "Count behavior patterns and search grade cutoffs");
  patterns_cmd->add_option("--cohort", pa.cohort, "cohort.dat")->required();
  patterns_cmd->add_option("--pattern", pa.pattern, "return_recent, return_long, return_skipped or all")
      ->capture_default_str();
  patterns_cmd->add_flag("--grades", pa.grades, "Run the cutoff search against grades");
  patterns_cmd->add_option("--filter", pa.filter, "Cohort filter, e.g. 'certified=true;grade=0.5..1'");
  patterns_cmd->add_option("-o,--out", pa.out, "Output directory")->required();

  LdpArgs la;
  auto* ldp_cmd = app.add_subcommand("ldp", "Forum/video offset sweep and grade test");
  ldp_cmd->add_option("--cohort", la.cohort, "cohort.dat")->required();
  ldp_cmd->add_option("--n-min", la.n_min, "Smallest offset")->capture_default_str();
  ldp_cmd->add_option("--n-max", la.n_max, "Largest offset")->capture_default_str();
  ldp_cmd->add_option("--window", la.window, "Group Y window in days")->capture_default_str();
  ldp_cmd->add_option("--level", la.level, "Confidence level of the intervals")->capture_default_str();
  ldp_cmd->add_option("--population", la.population, "video_and_forum or all")->capture_default_str();
  ldp_cmd->add_flag("--certified-only", la.certified_only, "Keep certified learners only");
  ldp_cmd->add_flag("--group-test", la.group_test, "Run the Group Y / Group N grade test");
  ldp_cmd->add_option("--filter", la.filter, "Cohort filter");
  ldp_cmd->add_option("-o,--out", la.out, "Output directory")->required();

  EmbedArgs ea;
  auto* embed_cmd = app.add_subcommand("embed", "Embed video trajectories into 10 dimensions");
  embed_cmd->add_option("--cohort", ea.cohort, "cohort.dat")->required();
  embed_cmd->add_option("--pipeline", ea.pipeline, "features, dtw-mds or cnn-ae")->required();
  embed_cmd->add_option("--filter", ea.filter, "Cohort filter");
  embed_cmd->add_option("--epochs", ea.epochs, "cnn-ae epochs")->capture_default_str();
  embed_cmd->add_option("--batch-size", ea.batch_size, "cnn-ae batch size")->capture_default_str();
  embed_cmd->add_option("--lr", ea.learning_rate, "cnn-ae Adam learning rate")->capture_default_str();
  embed_cmd->add_option("--max-steps", ea.max_steps, "cnn-ae step cap (0 = none)")->capture_default_str();
  embed_cmd->add_option("--loss", ea.loss, "cnn-ae loss: bce or mse")->capture_default_str();
  embed_cmd->add_flag("--no-cache", ea.no_cache, "Recompute the dtw-mds distance matrix");
  embed_cmd->add_option("-o,--out", ea.out, "Output directory")->required();

  ProjectArgs pr;
  auto* project_cmd = app.add_subcommand("project", "t-SNE projection to 2D with grade colouring");
  project_cmd->add_option("--embedding", pr.embedding, "embedding.csv")->required();
  project_cmd->add_option("--metadata", pr.metadata, "metadata.csv supplying grades");
  project_cmd->add_option("--cohort", pr.cohort, "cohort.dat supplying grades");
  project_cmd->add_option("--perplexity", pr.perplexity, "t-SNE perplexity")->capture_default_str();
  project_cmd->add_option("--iterations", pr.iterations, "t-SNE iterations")->capture_default_str();
  project_cmd->add_option("--lr", pr.learning_rate, "t-SNE learning rate")->capture_default_str();
  project_cmd->add_option("-o,--out", pr.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth_cmd) cmd_synth(sa, g);
    else if (*ingest_cmd) cmd_ingest(ia, g);
    else if (*patterns_cmd) cmd_patterns(pa, g);
    else if (*ldp_cmd) cmd_ldp(la, g);
    else if (*embed_cmd) cmd_embed(ea, g);
    else if (*project_cmd) cmd_project(pr, g);
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const io::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IngestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
