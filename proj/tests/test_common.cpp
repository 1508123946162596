#include "viralbench/common.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace viralbench;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, BelowCoversRange) {
  Rng r(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto x = r.below(7);
    ASSERT_LT(x, 7u);
    seen.insert(x);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, NormalMoments) {
  Rng r(9);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    ss += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(5);
  std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  r.shuffle(v);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 10u);
}

TEST(MixSeed, DistinctTagsDistinctSeeds) {
  std::set<std::uint64_t> s;
  for (std::uint64_t t = 0; t < 1000; ++t) s.insert(mix_seed(7, t));
  EXPECT_EQ(s.size(), 1000u);
  EXPECT_EQ(mix_seed(7, 3), mix_seed(7, 3));
}

TEST(Fnv1a, KnownDigest) {
  Fnv1a h;
  h.update("a", 1);
  EXPECT_EQ(h.digest(), 0xAF63DC4C8601EC8CULL);
  EXPECT_EQ(h.hex().size(), 16u);
}

TEST(FormatDouble, RoundTripsExactly) {
  Rng r(11);
  for (int i = 0; i < 1000; ++i) {
    const double v = r.normal() * std::pow(10.0, r.uniform(-20, 20));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(std::stod(format_double(0.1)), 0.1);
}

TEST(ExitCodes, Contract) {
  EXPECT_EQ(exit_code_for(ErrorKind::config), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::parse), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::validation), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::integrity), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::lookup), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::run), 4);
}
