#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dattk/ingest.hpp"
#include "dattk/io.hpp"
#include "dattk/lbp.hpp"
#include "dattk/matrix.hpp"
#include "dattk/synth.hpp"

namespace fs = std::filesystem;
using namespace dattk;

namespace {

const std::string kSpec = std::string(DATTK_SOURCE_DIR) + "/tests/data/demo.synth";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("dattk_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(run("synth --spec " + kSpec + " --seed 3 -o " + dir("synth")), 0);
    ASSERT_EQ(run("ingest --events " + dir("synth") + "/events.jsonl --metadata " + dir("synth") +
                  "/metadata.csv --course " + dir("synth") + "/course.spec -o " + dir("ingest")),
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string dir(const std::string& name) { return (root_ / name).string(); }
  static std::string cohort() { return dir("ingest") + "/cohort.dat"; }

  static int run(const std::string& args) {
    const std::string cmd = std::string(DATTK_CLI_PATH) + " " + args + " 2>" + (root_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  static std::string last_stderr() { return io::read_file((root_ / "stderr.txt").string()); }

  static inline fs::path root_;
};

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') rows.push_back(io::split_csv_line(line));
  return rows;
}

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("patterns --cohort " + cohort() + " --pattern zigzag -o " + dir("bad")), 2);
  EXPECT_NE(last_stderr().find("zigzag"), std::string::npos);
  EXPECT_EQ(run("embed --cohort " + cohort() + " --pipeline umap -o " + dir("bad")), 2);
  EXPECT_EQ(run("ingest --events /nonexistent --metadata x --course y -o " + dir("bad")), 2);
}

TEST_F(Cli, SynthIsDeterministicAndValidates) {
  ASSERT_EQ(run("synth --spec " + kSpec + " --seed 3 -o " + dir("synth2")), 0);
  for (const char* f : {"events.jsonl", "metadata.csv", "groundtruth.json", "course.spec"})
    EXPECT_EQ(io::read_file(dir("synth") + "/" + f), io::read_file(dir("synth2") + "/" + f)) << f;
  EXPECT_TRUE(fs::exists(dir("synth") + "/synth.manifest.json"));

  io::write_file(dir("bad.synth"), "n_learners = 10\n[archetype a]\nproportion = 0.3\n");
  EXPECT_EQ(run("synth --spec " + dir("bad.synth") + " -o " + dir("bad")), 2);
}

TEST_F(Cli, IngestCountsAndErrors) {
  const auto meta = parse_metadata(io::read_file(dir("synth") + "/metadata.csv"));
  const auto spec = parse_course_spec(io::read_file(dir("synth") + "/course.spec"));
  const auto events = parse_events(std::string_view(io::read_file(dir("synth") + "/events.jsonl"))).events;
  std::set<std::string> with_event;
  for (const auto& e : events)
    if (day_index(e.timestamp, spec)) with_event.insert(e.learner_id);
  std::size_t expect = 0;
  for (const auto& r : meta) expect += with_event.contains(r.learner_id);
  const auto archive = deserialize_cohort(io::read_file(cohort()));
  EXPECT_EQ(archive.learners.size(), expect);

  ASSERT_EQ(run("ingest --events " + dir("synth") + "/events.jsonl --metadata " + dir("synth") +
                "/metadata.csv --course " + dir("synth") + "/course.spec -o " + dir("ingest2")),
            0);
  EXPECT_EQ(io::read_file(cohort()), io::read_file(dir("ingest2") + "/cohort.dat"));

  io::write_file(dir("empty.jsonl"), "");
  EXPECT_EQ(run("ingest --events " + dir("empty.jsonl") + " --metadata " + dir("synth") +
                "/metadata.csv --course " + dir("synth") + "/course.spec -o " + dir("bad")),
            2);
  EXPECT_NE(last_stderr().find("no learner has an in-range event"), std::string::npos);
}

TEST_F(Cli, PatternsMatchLibraryAndGroundTruth) {
  ASSERT_EQ(run("patterns --cohort " + cohort() + " --grades -o " + dir("patterns")), 0);
  const auto rows = csv_rows(io::read_file(dir("patterns") + "/patterns.csv"));
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0], (std::vector<std::string>{"learner_id", "pattern", "count", "grade"}));

  const auto c = deserialize_cohort(io::read_file(cohort()));
  std::map<std::pair<std::string, std::string>, int> counts;
  for (std::size_t i = 1; i < rows.size(); ++i) counts[{rows[i][0], rows[i][1]}] = std::stoi(rows[i][2]);
  EXPECT_EQ(counts.size(), 3 * c.learners.size());
  for (const auto& [id, ld] : c.learners)
    for (auto p : lbp::kAllPatterns)
      EXPECT_EQ((counts[{id, std::string(lbp::to_string(p))}]), lbp::count_pattern(ld.video, p));

  for (const auto& t : synth::parse_ground_truth(io::read_file(dir("synth") + "/groundtruth.json")))
    for (auto p : lbp::kAllPatterns)
      EXPECT_EQ((counts[{t.learner_id, std::string(lbp::to_string(p))}]), t.counts[static_cast<std::size_t>(p)]);

  const auto j = nlohmann::json::parse(io::read_file(dir("patterns") + "/cutoff.json"));
  ASSERT_EQ(j.size(), 3u);
  EXPECT_EQ(j[0]["pattern"], "return_recent");
  EXPECT_EQ(j[0]["best"]["cutoff"], 7);
  EXPECT_EQ(j[0]["audit"].size(), static_cast<std::size_t>(j[0]["max_frequency"].get<int>() - 1));
}

TEST_F(Cli, LdpSweep) {
  ASSERT_EQ(run("ldp --cohort " + cohort() + " --group-test -o " + dir("ldp")), 0);
  const auto rows = csv_rows(io::read_file(dir("ldp") + "/offsets.csv"));
  EXPECT_EQ(rows.size(), 12u);
  const auto j = nlohmann::json::parse(io::read_file(dir("ldp") + "/ldp.json"));
  EXPECT_EQ(j["argmax_offset"], 0);
  EXPECT_TRUE(j.contains("group_grade_test"));

  ASSERT_EQ(run("ldp --cohort " + cohort() + " --certified-only -o " + dir("ldp_cert")), 0);
  const auto jc = nlohmann::json::parse(io::read_file(dir("ldp_cert") + "/ldp.json"));
  EXPECT_LT(jc["learners"].get<int>(), j["learners"].get<int>());

  // A cohort without grades cannot run the group test.
  auto c = deserialize_cohort(io::read_file(cohort()));
  for (auto& [id, ld] : c.learners) ld.record.grade.reset();
  io::write_file(dir("nogrades.dat"), serialize_cohort(c));
  EXPECT_EQ(run("ldp --cohort " + dir("nogrades.dat") + " --group-test -o " + dir("bad")), 2);
}

TEST_F(Cli, EmbedAndProject) {
  ASSERT_EQ(run("embed --cohort " + cohort() + " --pipeline features -o " + dir("emb")), 0);
  const auto e = parse_embedding_csv(io::read_file(dir("emb") + "/embedding.csv"));
  const auto c = deserialize_cohort(io::read_file(cohort()));
  EXPECT_EQ(e.values.rows, c.learners.size());
  EXPECT_EQ(e.values.cols, 10u);

  ASSERT_EQ(run("project --embedding " + dir("emb") + "/embedding.csv --cohort " + cohort() +
                " --seed 4 -o " + dir("proj")),
            0);
  ASSERT_EQ(run("project --embedding " + dir("emb") + "/embedding.csv --cohort " + cohort() +
                " --seed 4 -o " + dir("proj2")),
            0);
  const auto scatter = io::read_file(dir("proj") + "/scatter.csv");
  EXPECT_EQ(scatter, io::read_file(dir("proj2") + "/scatter.csv"));
  EXPECT_EQ(csv_rows(scatter).size(), e.values.rows + 1);
  EXPECT_NE(io::read_file(dir("proj") + "/scatter.svg").find("<svg"), std::string::npos);
  EXPECT_EQ(run("project --embedding " + dir("emb") + "/embedding.csv --perplexity 100 -o " + dir("bad")), 2);
}

TEST_F(Cli, DistanceMatrixCache) {
  ASSERT_EQ(run("embed --cohort " + cohort() + " --pipeline dtw-mds --threads 2 -o " + dir("dtw")), 0);
  auto m = nlohmann::json::parse(io::read_file(dir("dtw") + "/embed.manifest.json"));
  EXPECT_FALSE(m["notes"]["distance_cache_hit"].get<bool>());
  const auto first = io::read_file(dir("dtw") + "/embedding.csv");
  ASSERT_EQ(run("embed --cohort " + cohort() + " --pipeline dtw-mds -o " + dir("dtw")), 0);
  m = nlohmann::json::parse(io::read_file(dir("dtw") + "/embed.manifest.json"));
  EXPECT_TRUE(m["notes"]["distance_cache_hit"].get<bool>());
  EXPECT_EQ(io::read_file(dir("dtw") + "/embedding.csv"), first);
  EXPECT_EQ(m["command"], "embed");
  EXPECT_EQ(m["inputs"][0]["path"], cohort());
}

TEST_F(Cli, CnnLossCurveFinite) {
  ASSERT_EQ(run("embed --cohort " + cohort() + " --pipeline cnn-ae --epochs 3 --batch-size 32 -o " + dir("cnn")), 0);
  const auto rows = csv_rows(io::read_file(dir("cnn") + "/loss.csv"));
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_TRUE(std::isfinite(std::stod(rows[i][1])));
  EXPECT_TRUE(fs::exists(dir("cnn") + "/model.ckpt"));
  EXPECT_EQ(parse_embedding_csv(io::read_file(dir("cnn") + "/embedding.csv")).values.cols, 10u);
}
