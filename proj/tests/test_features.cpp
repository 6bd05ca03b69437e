#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dattk/features.hpp"
#include "support/oracles.hpp"

using namespace dattk;
using namespace dattk::features;

namespace {

CourseSpec course() {
  std::vector<std::string> v;
  for (int i = 0; i < 30; ++i) v.push_back("v" + std::to_string(i));
  return CourseSpec(0, 40, {v, {}, {}});
}

FeatureVector of(std::vector<Entry> e) {
  return extract_features(dat_from_accesses(e, course(), Category::video, "x"));
}

}  // namespace

TEST(Features, Singleton) {
  const auto f = of({{0, 0}});
  const std::array<double, 10> expect{1, 1, 0, 0, 0, 0, 0, 1, 0, 0};
  EXPECT_EQ(f.values, expect);
  EXPECT_EQ(f.learner_id, "x");
}

TEST(Features, ThreeDaysForward) {
  const auto f = of({{0, 0}, {1, 1}, {2, 2}});
  EXPECT_DOUBLE_EQ(f.values[0], 3);
  EXPECT_DOUBLE_EQ(f.values[1], 3);
  EXPECT_DOUBLE_EQ(f.values[2], 1);
  EXPECT_DOUBLE_EQ(f.values[3], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(f.values[4], 1);
  EXPECT_DOUBLE_EQ(f.values[5], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(f.values[6], 0);
  EXPECT_DOUBLE_EQ(f.values[7], 1);
  EXPECT_DOUBLE_EQ(f.values[8], 0);
  EXPECT_DOUBLE_EQ(f.values[9], 0);
}

TEST(Features, RepeatRate) {
  EXPECT_DOUBLE_EQ(of({{0, 0}, {2, 0}}).values[6], 1.0);
  EXPECT_DOUBLE_EQ(of({{0, 0}, {0, 1}, {3, 0}}).values[6], 0.5);
}

TEST(Features, VideoIntervalsFollowFirstAccess) {
  // First-access order 4, 1, 7: gaps 3 and 6.
  const auto f = of({{0, 4}, {1, 1}, {1, 4}, {2, 7}});
  EXPECT_DOUBLE_EQ(f.values[4], 4.5);
  EXPECT_DOUBLE_EQ(f.values[9], 2.25);
  EXPECT_DOUBLE_EQ(f.values[7], 4.0 / 3.0);
}

TEST(Features, EmptyThrows) { EXPECT_THROW(extract_features(Dat{}), FeatureError); }

TEST(Features, PropertiesOnRandomDats) {
  std::mt19937_64 rng(17);
  const auto spec = course();
  for (int i = 0; i < 300; ++i) {
    const auto d = oracle::random_dat(rng, 40, 30, 0.05);
    if (d.empty()) continue;
    const auto f = extract_features(d);
    for (double v : f.values) EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(f.values[6], 0.0);
    EXPECT_LE(f.values[6], 1.0);
    EXPECT_GE(f.values[7] * f.values[1] + 1e-9, f.values[0]);

    std::vector<Entry> doubled(d.entries().begin(), d.entries().end());
    doubled.insert(doubled.end(), d.entries().begin(), d.entries().end());
    std::shuffle(doubled.begin(), doubled.end(), rng);
    EXPECT_EQ(extract_features(dat_from_accesses(doubled, spec, Category::video)).values, f.values);
  }
}

TEST(Standardize, Columns) {
  Matrix m(2, 2);
  m(0, 0) = 0;
  m(1, 0) = 2;
  m(0, 1) = m(1, 1) = 7;
  const auto z = standardize(m);
  EXPECT_DOUBLE_EQ(z(0, 0), -1);
  EXPECT_DOUBLE_EQ(z(1, 0), 1);
  EXPECT_EQ(z(0, 1), 0);
  EXPECT_EQ(z(1, 1), 0);
  EXPECT_THROW(standardize(Matrix(1, 10)), FeatureError);
}

TEST(Standardize, MomentsAndIdempotence) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(5, 3);
  Matrix m(100, 10);
  for (double& x : m.data) x = n(rng);
  const auto z = standardize(m);
  for (std::size_t j = 0; j < 10; ++j) {
    double mean = 0, ss = 0;
    for (std::size_t i = 0; i < 100; ++i) mean += z(i, j);
    mean /= 100;
    for (std::size_t i = 0; i < 100; ++i) ss += (z(i, j) - mean) * (z(i, j) - mean);
    EXPECT_LT(std::fabs(mean), 1e-12);
    EXPECT_NEAR(std::sqrt(ss / 100), 1.0, 1e-12);
  }
  const auto zz = standardize(z);
  for (std::size_t k = 0; k < z.data.size(); ++k) EXPECT_NEAR(zz.data[k], z.data[k], 1e-12);
}
