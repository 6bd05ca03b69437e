// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit status is 0 only when all criteria pass within their time budgets.
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dattk/cnn_ae.hpp"
#include "dattk/dtw_mds.hpp"
#include "dattk/features.hpp"
#include "dattk/ingest.hpp"
#include "dattk/lbp.hpp"
#include "dattk/ldp.hpp"
#include "dattk/stats.hpp"
#include "dattk/synth.hpp"
#include "dattk/tsne.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace dattk;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome detectors_match_oracles() {
  Outcome o;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> days(1, 70), comps(1, 81);
  std::uniform_real_distribution<double> density(0.0, 0.2);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const int nd = days(rng), nc = comps(rng);
    const auto d = oracle::random_dat(rng, nd, nc, density(rng));
    const auto g = oracle::grid_of(d, nd, nc);
    mismatches += lbp::count_return_recent(d) != oracle::return_recent(g);
    mismatches += lbp::count_return_long(d) != oracle::return_long(g);
    mismatches += lbp::count_return_skipped(d) != oracle::return_skipped(g);
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " detector mismatches");
  o.note("1000 random Dats, 3000 detector comparisons, " + std::to_string(mismatches) + " mismatches");
  return o;
}

Outcome planted_closure() {
  Outcome o;
  const auto course = synth::make_course(70, 43, 10, 10);
  synth::ArchetypeSpec a;
  a.name = "planted";
  a.active_prob = 0.5;
  a.videos_per_day = 2;
  a.skip_prob = 0.1;
  a.planted = {synth::CountModel::uniform(0, 14), synth::CountModel::poisson(1.5),
               synth::CountModel::poisson(1.0)};
  a.grade_base = 0.4;
  a.grade_noise = 0.05;
  a.grade_step = synth::GradeStep{lbp::Pattern::return_recent, 7, 0.4};
  const auto out = synth::generate({a}, 1000, course, 2);

  // Round trip through the on-disk formats.
  const auto spec = parse_course_spec(format_course_spec(course));
  const auto events = parse_events(std::string_view(synth::format_events(out.events))).events;
  const auto meta = parse_metadata(format_metadata(out.metadata));
  const auto cohort = build_cohort(events, meta, spec).cohort;

  std::size_t matched = 0;
  std::vector<int> freqs;
  std::vector<double> grades;
  for (const auto& t : out.truth.learners) {
    const auto it = cohort.learners.find(t.learner_id);
    if (it == cohort.learners.end()) continue;
    bool ok = true;
    for (auto p : lbp::kAllPatterns)
      ok &= lbp::count_pattern(it->second.video, p) == t.counts[static_cast<std::size_t>(p)];
    matched += ok;
    freqs.push_back(lbp::count_return_recent(it->second.video));
    grades.push_back(it->second.record.grade.value_or(0.0));
  }
  o.check(matched == out.truth.learners.size(), "closure");
  o.note("closure " + std::to_string(matched) + "/" + std::to_string(out.truth.learners.size()));
  const auto r = lbp::cutoff_search(freqs, grades);
  o.check(r.best && r.best->cutoff == 7, "cutoff");
  o.check(r.best && r.best->p_value < 1e-6, "cutoff p-value");
  if (r.best) o.note("cutoff " + std::to_string(r.best->cutoff) + " p=" + fmt(r.best->p_value, 3));
  return o;
}

Outcome ldp_fidelity() {
  Outcome o;
  const auto course = synth::make_course(70, 40, 5, 5);
  synth::ArchetypeSpec a;
  a.name = "lag";
  a.active_prob = 1.0;
  a.min_day_gap = 7;
  a.videos_per_day = 1.0;
  a.forum_base = 0.075;
  a.forum_kernel = {{0, 0.6}};
  const auto cohort = synth::to_cohort(synth::generate({a}, 1200, course, 3), course);
  const auto s = ldp::offset_sweep(cohort, -5, 5);
  o.check(s.rows.size() == 11, "11 offsets");
  o.check(s.argmax() == 0, "argmax at 0");
  std::int64_t fewest = std::numeric_limits<std::int64_t>::max();
  double worst_flank = 0;
  for (const auto& r : s.rows) {
    fewest = std::min(fewest, r.total_v_days);
    if (r.offset == 0) {
      o.check(std::fabs(r.p_cond - 0.6) <= 0.02, "p(0) = " + fmt(r.p_cond));
      o.note("p(0)=" + fmt(r.p_cond));
    } else {
      worst_flank = std::max(worst_flank, std::fabs(r.p_cond - 0.075));
    }
  }
  o.check(worst_flank <= 0.02, "flanks");
  o.check(fewest >= 10000, "sample size");
  o.note("argmax " + std::to_string(s.argmax()) + ", max |flank - 0.075|=" + fmt(worst_flank, 3) +
         ", min video days per offset " + std::to_string(fewest));
  return o;
}

Outcome calibration() {
  Outcome o;
  const auto course = synth::make_course(70, 40, 5, 5);
  auto sparse_forum = synth::null_archetype();
  sparse_forum.forum_base = 0.015;
  int reject_dep = 0, reject_group = 0;
  for (int s = 0; s < 100; ++s) {
    const auto null = synth::to_cohort(synth::null_cohort(500, course, static_cast<std::uint64_t>(s)), course);
    reject_dep += ldp::dependence_test(null, 0, static_cast<std::uint64_t>(s)).ks.p_value < 0.05;
    const auto graded =
        synth::to_cohort(synth::generate({sparse_forum}, 500, course, 1000 + static_cast<std::uint64_t>(s)), course);
    reject_group += ldp::group_grade_test(graded).test.p_value < 0.05;
  }
  o.check(reject_dep >= 1 && reject_dep <= 9, "dependence_test rejection rate");
  o.check(reject_group >= 1 && reject_group <= 9, "group_grade_test rejection rate");
  const double pw = stats::t_p_value(1.96, 1e6, stats::Tail::two);
  o.check(std::fabs(pw - 0.05) <= 0.001, "welch p at 1.96");
  const std::vector<double> x{0.2, 0.5, 0.5, 0.9, 1.3};
  const auto ks = stats::ks_two_sample(x, x);
  o.check(ks.statistic == 0.0 && ks.p_value == 1.0, "KS identical samples");
  o.note("dependence_test rejects " + std::to_string(reject_dep) + "/100, group_grade_test rejects " +
         std::to_string(reject_group) + "/100, welch p(1.96)=" + fmt(pw, 6) + ", KS same D=" +
         fmt(ks.statistic) + " p=" + fmt(ks.p_value));
  return o;
}

dtw::TrajectorySeries random_series(std::mt19937_64& rng, std::size_t len) {
  std::uniform_real_distribution<double> u(0, 1);
  dtw::TrajectorySeries s(len);
  for (auto& p : s) p = {u(rng), u(rng)};
  return s;
}

Outcome dtw_correctness() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> short_len(1, 6), long_len(1, 40);
  int exact = 0;
  for (int i = 0; i < 200; ++i) {
    const auto a = random_series(rng, short_len(rng));
    const auto b = random_series(rng, short_len(rng));
    exact += dtw::dtw_distance(a, b) == oracle::dtw_bruteforce(a, b);
  }
  int symmetric = 0, self_zero = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_series(rng, long_len(rng));
    const auto b = random_series(rng, long_len(rng));
    symmetric += dtw::dtw_distance(a, b) == dtw::dtw_distance(b, a);
    self_zero += dtw::dtw_distance(a, a) == 0.0;
  }
  o.check(exact == 200, "exhaustive alignment");
  o.check(symmetric == 1000, "symmetry");
  o.check(self_zero == 1000, "self distance");
  o.note("exact " + std::to_string(exact) + "/200, symmetric " + std::to_string(symmetric) +
         "/1000, zero self-distance " + std::to_string(self_zero) + "/1000");
  return o;
}

double euclid(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Outcome mds_exactness() {
  Outcome o;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0, 1);
    Matrix pts(50, 10);
    for (double& v : pts.data) v = n(rng);
    dtw::DistanceMatrix dm(50);
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t j = i + 1; j < 50; ++j) dm.set(i, j, euclid(pts.row(i), pts.row(j)));
    const auto x = dtw::classical_mds(dm, 10);
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t j = i + 1; j < 50; ++j)
        worst = std::max(worst, std::fabs(euclid(x.row(i), x.row(j)) - dm(i, j)) / dm(i, j));
  }
  o.check(worst < 1e-6, "relative error");
  o.note("5 configurations, max relative error " + fmt(worst, 3));
  return o;
}

Outcome cnn_structure_and_gradients() {
  using namespace dattk::cnn;
  Outcome o;
  const std::vector<Shape> table{{22, 32, 16}, {11, 16, 32}, {5, 8, 64},   {2, 4, 128}, {1, 1, 10},
                                 {2, 4, 128},  {5, 8, 64},   {11, 16, 32}, {22, 32, 16}, {44, 64, 1}};
  const auto layers = network_spec();
  const auto chain = shape_chain(layers, Shape{kImageRows, kImageCols, 1});
  o.check(chain == table, "shape chain");

  Shape in{kImageRows, kImageCols, 1};
  double worst = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const double e = std::visit(
        [&](const auto& layer) { return oracle::layer_gradient_error(layer, in, 100 + l, 300); },
        layers[l].layer);
    worst = std::max(worst, e);
    o.check(e < 1e-4, layers[l].name() + " gradient");
    in = chain[l];
  }
  std::mt19937_64 rng(3);
  const Tensor z = oracle::random_tensor(rng, Shape{8, 8, 4});
  const Tensor r = oracle::random_tensor(rng, Shape{8, 8, 4});
  const Tensor gs = sigmoid_backward(sigmoid(z), r);
  const Tensor gr = relu_backward(z, r);
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    const double eps = 1e-4;
    const double fs = (sigmoid(z.data[i] + eps) - sigmoid(z.data[i] - eps)) / (2 * eps);
    const double fr = (std::max(0.0, z.data[i] + eps) - std::max(0.0, z.data[i] - eps)) / (2 * eps);
    worst = std::max(worst, oracle::rel_err(gs.data[i], r.data[i] * fs));
    if (std::fabs(z.data[i]) > eps) worst = std::max(worst, oracle::rel_err(gr.data[i], r.data[i] * fr));
  }
  o.check(worst < 1e-4, "activation gradients");
  o.note("shape chain exact, worst gradient relative error " + fmt(worst, 3));

  const auto course = synth::make_course(70, 43, 1, 1);
  const auto out = synth::null_cohort(40, course, 7);
  const auto cohort = synth::to_cohort(out, course);
  std::vector<Tensor> images;
  for (const auto& [id, ld] : cohort.learners) {
    if (images.size() == 32) break;
    images.push_back(dat_to_image(ld.video).pixels);
  }
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 1000;
  cfg.max_steps = 2000;
  cfg.seed = 0;
  cfg.threads = 1;
  const double before = mean_loss(Autoencoder::he_initialized(cfg.seed), images);
  const auto trained = train(images, cfg);
  const double after = mean_loss(trained.model, images);
  const double reduction = 1.0 - after / before;
  o.check(images.size() == 32, "32 images");
  o.check(trained.steps <= 2000, "step budget");
  o.check(reduction >= 0.9, "overfit reduction");
  o.note("overfit BCE " + fmt(before) + " -> " + fmt(after) + " (" + fmt(100 * reduction, 5) + "% lower) in " +
         std::to_string(trained.steps) + " steps");
  return o;
}

Outcome embedding_separability() {
  Outcome o;
  const auto course = synth::make_course(64, 40, 5, 5);
  synth::ArchetypeSpec early, sparse, late;
  early.name = "early";
  early.end_day = 21;
  early.active_prob = 0.8;
  early.videos_per_day = 3;
  sparse.name = "sparse";
  sparse.active_prob = 0.15;
  sparse.videos_per_day = 1;
  sparse.skip_prob = 0.3;
  late.name = "late";
  late.start_day = 35;
  late.active_prob = 0.7;
  late.videos_per_day = 2;
  late.planted = {synth::CountModel::fixed(3), synth::CountModel::poisson(2), synth::CountModel::fixed(0)};
  for (auto* a : {&early, &sparse, &late}) a->proportion = 1.0 / 3.0;
  const auto out = synth::generate({early, sparse, late}, 300, course, 8);
  const auto cohort = synth::to_cohort(out, course);

  std::vector<const LearnerData*> learners;
  std::vector<std::string> labels;
  for (const auto& t : out.truth.learners) {
    const auto it = cohort.learners.find(t.learner_id);
    if (it == cohort.learners.end() || it->second.video.empty()) continue;
    learners.push_back(&it->second);
    labels.push_back(t.archetype);
  }
  o.note(std::to_string(learners.size()) + " learners");

  auto score = [&](const std::string& name, const Matrix& embedding) {
    tsne::TsneConfig cfg;
    cfg.seed = 0;
    const auto projected = tsne::tsne(embedding, cfg);
    const auto clusters = oracle::kmeans(projected.y, 3, 0);
    const double purity = oracle::purity<std::string>(clusters, labels);
    o.check(purity >= 0.8, name + " purity");
    o.note(name + " purity " + fmt(purity, 3));
  };

  std::vector<features::FeatureVector> fvs;
  for (const auto* ld : learners) fvs.push_back(features::extract_features(ld->video));
  score("features", features::standardize(features::to_matrix(fvs)));

  std::vector<dtw::TrajectorySeries> series;
  for (const auto* ld : learners) series.push_back(dtw::dat_to_series(ld->video, course));
  score("dtw-mds", dtw::classical_mds(dtw::distance_matrix(series, 1), 10));

  std::vector<cnn::Tensor> images;
  for (const auto* ld : learners) images.push_back(cnn::dat_to_image(ld->video).pixels);
  cnn::TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  cfg.seed = 0;
  const auto trained = cnn::train(images, cfg);
  Matrix codes(images.size(), cnn::kCodeSize);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto code = trained.model.encode(images[i]);
    std::copy(code.begin(), code.end(), codes.row(i).begin());
  }
  score("cnn-ae", codes);
  return o;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DATTK_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end_determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / ("dattk_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string spec = std::string(DATTK_SOURCE_DIR) + "/tests/data/demo.synth";
  for (const char* run : {"a", "b"}) {
    const std::string d = (root / run).string();
    const std::vector<std::string> steps{
        "synth --spec " + spec + " --seed 11 -o " + d + "/synth",
        "ingest --events " + d + "/synth/events.jsonl --metadata " + d + "/synth/metadata.csv --course " + d +
            "/synth/course.spec -o " + d + "/ingest",
        "patterns --cohort " + d + "/ingest/cohort.dat --grades -o " + d + "/patterns",
        "ldp --cohort " + d + "/ingest/cohort.dat --group-test --seed 11 -o " + d + "/ldp",
        "embed --cohort " + d + "/ingest/cohort.dat --pipeline features -o " + d + "/embed",
        "project --embedding " + d + "/embed/embedding.csv --cohort " + d + "/ingest/cohort.dat --seed 11 -o " +
            d + "/project"};
    for (const auto& s : steps) o.check(run_cli(s) == 0, "exit status of: " + s.substr(0, s.find(' ')));
  }
  std::size_t compared = 0, identical = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().string().ends_with(".manifest.json")) continue;
    const auto other = root / "b" / fs::relative(entry.path(), root / "a");
    ++compared;
    identical += fs::exists(other) && io::read_file(entry.path().string()) == io::read_file(other.string());
  }
  o.check(compared >= 12, "output count");
  o.check(identical == compared, "byte identity");
  o.note(std::to_string(identical) + "/" + std::to_string(compared) + " output files byte-identical");
  fs::remove_all(root);
  return o;
}

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "detector-oracle equivalence", 30, detectors_match_oracles},
      {2, "planted-pattern closure", 120, planted_closure},
      {3, "LDP estimator fidelity", 60, ldp_fidelity},
      {4, "statistical calibration", 300, calibration},
      {5, "DTW correctness", 60, dtw_correctness},
      {6, "MDS exactness", 10, mds_exactness},
      {7, "CNN-AE structure and gradients", 600, cnn_structure_and_gradients},
      {8, "embedding separability", 900, embedding_separability},
      {9, "end-to-end determinism", 120, end_to_end_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) o.check(false, "time budget");
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1fs, budget %.0fs]\n", o.pass ? "PASS" : "FAIL", c.id,
                c.name.c_str(), o.detail.c_str(), secs, c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
