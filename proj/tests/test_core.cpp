#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "drfer/common.hpp"
#include "drfer/core/params.hpp"
#include "drfer/core/tape.hpp"
#include "drfer/rng.hpp"

using namespace drfer;

TEST(Fnv1a, KnownVectors) {
  Fnv1a h;
  EXPECT_EQ(h.digest(), 0xcbf29ce484222325ULL);
  h.update(std::string("abc"));
  EXPECT_EQ(h.digest(), 0xe71fa2190541574bULL);
}

TEST(Fnv1a, HexIsLowercase16Chars) {
  Fnv1a h;
  h.update(std::string("abc"));
  EXPECT_EQ(h.hex(), "e71fa2190541574b");
}

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.bits(), b.bits());
}

TEST(Rng, UniformRange) {
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, UniformIntBounds) {
  Rng r(7);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 5000; ++i) {
    auto k = r.uniform_int(5);
    ASSERT_LT(k, 5u);
    hits[k]++;
  }
  for (int h : hits) EXPECT_GT(h, 700);  // roughly uniform
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  const int n = 20000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(3);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto orig = v;
  r.shuffle(v);
  EXPECT_NE(v, orig);
  std::sort(v.begin(), v.end());
  EXPECT_EQ(v, orig);
}

TEST(Rng, DeriveIgnoresDrawState) {
  Rng a(42), b(42);
  for (int i = 0; i < 17; ++i) a.uniform();  // advance one copy only
  EXPECT_EQ(a.derive(5).bits(), b.derive(5).bits());
  EXPECT_NE(a.derive(5).bits(), b.derive(6).bits());
}

TEST(ParamStore, DuplicateNameThrows) {
  ParamStore<double> ps;
  ps.add("w", 2, 2);
  EXPECT_THROW(ps.add("w", 3, 3), ConfigError);
}

TEST(ParamStore, FindAndCount) {
  ParamStore<double> ps;
  int a = ps.add("a", 2, 3);
  int b = ps.add("b", 4, 1);
  EXPECT_EQ(ps.find("a"), a);
  EXPECT_EQ(ps.find("b"), b);
  EXPECT_EQ(ps.find("c"), -1);
  EXPECT_EQ(ps.scalar_count(), 10);
  EXPECT_EQ(ps.name(a), "a");
}

TEST(GradSink, AccumulateMergeScale) {
  ParamStore<double> ps;
  int a = ps.add("a", 2, 2);
  GradSink<double> s1(ps), s2(ps);
  Matd g = Matd::Ones(2, 2);
  s1.accumulate(a, g);
  s2.accumulate(a, 2 * g);
  s1.merge(s2);
  EXPECT_TRUE(s1.used(a));
  EXPECT_DOUBLE_EQ(s1.grad(a)(0, 0), 3.0);
  s1.scale(0.5);
  EXPECT_DOUBLE_EQ(s1.grad(a)(1, 1), 1.5);
  s1.reset();
  EXPECT_FALSE(s1.used(a));
}

TEST(Tape, ParamWithoutStoreThrows) {
  Tape<double> t;
  EXPECT_THROW(t.param(0), ConfigError);
}

TEST(Tape, NonRecordingTapeStoresValuesOnly) {
  Tape<double> t(nullptr, /*recording=*/false);
  Var x = t.leaf(Matd::Ones(2, 2), /*requires_grad=*/true);
  EXPECT_FALSE(t.needs_grad(x));
  t.backward({{x, Matd::Ones(2, 2)}}, nullptr);
  EXPECT_FALSE(t.has_grad(x));
}
