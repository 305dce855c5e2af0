#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "drfer/geometry/cloud.hpp"
#include "drfer/geometry/kernels.hpp"
#include "drfer/geometry/registration.hpp"
#include "drfer/rng.hpp"

using namespace drfer;

namespace {

PointCloud random_cloud(Rng& rng, int n, double lo = 0.0, double hi = 100.0) {
  PointCloud c;
  c.points.resize(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) c.points(i, j) = rng.uniform(lo, hi);
  return c;
}

PointCloud line_cloud() {
  PointCloud c;
  c.points.resize(4, 3);
  c.points << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
  return c;
}

}  // namespace

TEST(Fps, CollinearEndpoint) {
  EXPECT_EQ(fps_sample(line_cloud(), 2, 0), (std::vector<int>{0, 3}));
}

TEST(Fps, CollinearTieBreaksLow) {
  // After {0,3}, indices 1 and 2 both sit at min-distance 1; lowest wins.
  EXPECT_EQ(fps_sample(line_cloud(), 3, 0), (std::vector<int>{0, 3, 1}));
}

TEST(Fps, FullExhaustionIsPermutation) {
  Rng r(1);
  PointCloud c = random_cloud(r, 17);
  auto idx = fps_sample(c, 17, 5);
  std::set<int> s(idx.begin(), idx.end());
  EXPECT_EQ(s.size(), 17u);
  EXPECT_EQ(*s.begin(), 0);
  EXPECT_EQ(idx[0], 5);
}

TEST(Fps, SecondPickIsFarthestFromStart) {
  Rng r(2);
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud c = random_cloud(r, 40);
    auto idx = fps_sample(c, 2, 3);
    double best = -1;
    int want = -1;
    for (int i = 0; i < 40; ++i) {
      double d = (c.points.row(i) - c.points.row(3)).squaredNorm();
      if (d > best) {
        best = d;
        want = i;
      }
    }
    EXPECT_EQ(idx[1], want);
  }
}

TEST(Fps, NoDuplicates) {
  Rng r(3);
  PointCloud c = random_cloud(r, 64);
  auto idx = fps_sample(c, 32, 0);
  std::set<int> s(idx.begin(), idx.end());
  EXPECT_EQ(s.size(), 32u);
}

TEST(Fps, Errors) {
  PointCloud c = line_cloud();
  EXPECT_THROW(fps_sample(c, 5, 0), InvalidArgument);
  EXPECT_THROW(fps_sample(c, 0, 0), InvalidArgument);
  EXPECT_THROW(fps_sample(c, 2, 4), InvalidArgument);
  PointCloud empty;
  empty.points.resize(0, 3);
  EXPECT_THROW(fps_sample(empty, 1, 0), InvalidArgument);
}

TEST(BallQuery, TinyRadiusGivesCenterOnly) {
  Rng r(4);
  PointCloud c = random_cloud(r, 20);
  auto lists = ball_query(c, {0, 7, 13}, 1e-9, 8);
  ASSERT_EQ(lists.size(), 3u);
  EXPECT_EQ(lists[0], (std::vector<int>{0}));
  EXPECT_EQ(lists[1], (std::vector<int>{7}));
  EXPECT_EQ(lists[2], (std::vector<int>{13}));
}

TEST(BallQuery, GridCornerAxisNeighbors) {
  // 2x2x2 unit grid; from the origin corner, radius 1 reaches exactly the
  // three axis neighbors.
  PointCloud c;
  c.points.resize(8, 3);
  int k = 0;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y)
      for (int z = 0; z < 2; ++z) c.points.row(k++) << x, y, z;
  // index: x*4 + y*2 + z; origin = 0; axis neighbors: 4 (x), 2 (y), 1 (z)
  auto lists = ball_query(c, {0}, 1.0, 8);
  EXPECT_EQ(lists[0], (std::vector<int>{0, 1, 2, 4}));
}

TEST(BallQuery, CapOneIsCenterOnly) {
  Rng r(5);
  PointCloud c = random_cloud(r, 30);
  for (auto& list : ball_query(c, {2, 9}, 1e6, 1)) {
    EXPECT_EQ(list.size(), 1u);
  }
}

TEST(BallQuery, NearestFirstOrdering) {
  Rng r(6);
  PointCloud c = random_cloud(r, 50);
  auto lists = ball_query(c, {10}, 80.0, 16);
  const auto& l = lists[0];
  EXPECT_EQ(l[0], 10);
  for (std::size_t i = 2; i < l.size(); ++i) {
    double a = (c.points.row(l[i - 1]) - c.points.row(10)).squaredNorm();
    double b = (c.points.row(l[i]) - c.points.row(10)).squaredNorm();
    EXPECT_LE(a, b);
  }
  EXPECT_LE(l.size(), 16u);
}

TEST(BallQuery, Errors) {
  Rng r(7);
  PointCloud c = random_cloud(r, 5);
  EXPECT_THROW(ball_query(c, {0}, 0.0, 4), InvalidArgument);
  EXPECT_THROW(ball_query(c, {0}, -1.0, 4), InvalidArgument);
  EXPECT_THROW(ball_query(c, {0}, 1.0, 0), InvalidArgument);
  EXPECT_TRUE(ball_query(c, {}, 1.0, 4).empty());
}

TEST(Chamfer, IdenticalIsZero) {
  Rng r(8);
  PointCloud c = random_cloud(r, 33);
  EXPECT_DOUBLE_EQ(chamfer_distance(c, c), 0.0);
}

TEST(Chamfer, HandExamples) {
  PointCloud a, b;
  a.points.resize(1, 3);
  a.points << 0, 0, 0;
  b.points.resize(1, 3);
  b.points << 1, 0, 0;
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b), 2.0);

  PointCloud a2;
  a2.points.resize(2, 3);
  a2.points << 0, 0, 0, 2, 0, 0;
  EXPECT_DOUBLE_EQ(chamfer_distance(a2, b), 2.0);
}

TEST(Chamfer, MatchesBruteForceAndSymmetric) {
  Rng r(9);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 1 + static_cast<int>(r.uniform_int(64));
    int m = 1 + static_cast<int>(r.uniform_int(64));
    PointCloud a = random_cloud(r, n), b = random_cloud(r, m);
    double sa = 0, sb = 0;
    for (int i = 0; i < n; ++i) {
      double best = 1e300;
      for (int j = 0; j < m; ++j)
        best = std::min(best, (a.points.row(i) - b.points.row(j)).squaredNorm());
      sa += best;
    }
    for (int j = 0; j < m; ++j) {
      double best = 1e300;
      for (int i = 0; i < n; ++i)
        best = std::min(best, (a.points.row(i) - b.points.row(j)).squaredNorm());
      sb += best;
    }
    double oracle = sa / n + sb / m;
    EXPECT_NEAR(chamfer_distance(a, b), oracle, 1e-9);
    EXPECT_NEAR(chamfer_distance(a, b), chamfer_distance(b, a), 1e-12);
    EXPECT_GE(chamfer_distance(a, b), 0.0);
  }
}

TEST(Chamfer, EmptyThrows) {
  PointCloud a, empty;
  a.points.resize(1, 3);
  a.points << 0, 0, 0;
  empty.points.resize(0, 3);
  EXPECT_THROW(chamfer_distance(a, empty), InvalidArgument);
}

TEST(Rotate, ZeroAnglesIdentity) {
  Rng r(10);
  PointCloud c = random_cloud(r, 12);
  PointCloud out = rotate_cloud(c, 0, 0);
  EXPECT_LT((out.points - c.points).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rotate, Yaw180FlipsX) {
  PointCloud c;
  c.points.resize(2, 3);
  c.points << 1, 0, 0, -1, 0, 0;  // centroid at origin
  PointCloud out = rotate_cloud(c, 0, 180);
  EXPECT_NEAR(out.points(0, 0), -1.0, 1e-12);
  EXPECT_NEAR(out.points(1, 0), 1.0, 1e-12);
}

TEST(Rotate, PitchInverse) {
  Rng r(11);
  PointCloud c = random_cloud(r, 25);
  PointCloud back = rotate_cloud(rotate_cloud(c, 90, 0), -90, 0);
  EXPECT_LT((back.points - c.points).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Rotate, PreservesPairwiseDistances) {
  Rng r(12);
  PointCloud c = random_cloud(r, 20);
  PointCloud out = rotate_cloud(c, 33.0, -71.0);
  for (int i = 0; i < 20; ++i)
    for (int j = i + 1; j < 20; ++j) {
      double d0 = (c.points.row(i) - c.points.row(j)).norm();
      double d1 = (out.points.row(i) - out.points.row(j)).norm();
      EXPECT_NEAR(d0, d1, 1e-9);
    }
}

TEST(Augment, DropoutZeroIsIdentity) {
  Rng r(13);
  PointCloud c = random_cloud(r, 10);
  c.canonical = true;
  PointCloud out = augment(c, AugmentMode::dropout, 7, {.dropout_rate = 0.0});
  EXPECT_TRUE(out.canonical);
  EXPECT_EQ(out.points, c.points);
}

TEST(Augment, DropoutReplacesWithFirstSurvivor) {
  PointCloud c;
  c.points.resize(2, 3);
  c.points << 1, 2, 3, 4, 5, 6;
  c.canonical = true;
  // Scan seeds until one drops point 1 and keeps point 0; the replacement
  // rule then forces row 1 == row 0.
  bool found = false;
  for (std::uint64_t seed = 0; seed < 300 && !found; ++seed) {
    PointCloud out = augment(c, AugmentMode::dropout, seed, {.dropout_rate = 0.5});
    ASSERT_EQ(out.points.rows(), 2);
    if (out.points.row(1) == c.points.row(0)) {
      EXPECT_EQ(out.points.row(0), c.points.row(0));
      EXPECT_FALSE(out.canonical);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Augment, DropoutDeterministicPerSeed) {
  Rng r(14);
  PointCloud c = random_cloud(r, 100);
  PointCloud a = augment(c, AugmentMode::dropout, 42, {.dropout_rate = 0.5});
  PointCloud b = augment(c, AugmentMode::dropout, 42, {.dropout_rate = 0.5});
  EXPECT_EQ(a.points, b.points);
  PointCloud d = augment(c, AugmentMode::dropout, 43, {.dropout_rate = 0.5});
  EXPECT_NE(a.points, d.points);
}

TEST(Augment, ScaleAboutCentroid) {
  PointCloud c;
  c.points.resize(2, 3);
  c.points << 0, 0, 0, 2, 0, 0;  // centroid (1,0,0)
  PointCloud out =
      augment(c, AugmentMode::scale, 1, {.scale_lo = 1.25, .scale_hi = 1.25});
  EXPECT_NEAR(out.points(0, 0), -0.25, 1e-12);
  EXPECT_NEAR(out.points(1, 0), 2.25, 1e-12);
}

TEST(Augment, ScaleFactorOneIsIdentity) {
  Rng r(15);
  PointCloud c = random_cloud(r, 9);
  PointCloud out =
      augment(c, AugmentMode::scale, 5, {.scale_lo = 1.0, .scale_hi = 1.0});
  EXPECT_LT((out.points - c.points).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Augment, RangeValidation) {
  Rng r(16);
  PointCloud c = random_cloud(r, 5);
  EXPECT_THROW(augment(c, AugmentMode::dropout, 1, {.dropout_rate = 0.9}),
               InvalidArgument);
  EXPECT_THROW(augment(c, AugmentMode::dropout, 1, {.dropout_rate = -0.1}),
               InvalidArgument);
  EXPECT_THROW(
      augment(c, AugmentMode::scale, 1, {.scale_lo = 0.7, .scale_hi = 1.0}),
      InvalidArgument);
  EXPECT_THROW(
      augment(c, AugmentMode::scale, 1, {.scale_lo = 0.9, .scale_hi = 1.3}),
      InvalidArgument);
  EXPECT_THROW(
      augment(c, AugmentMode::scale, 1, {.scale_lo = 1.2, .scale_hi = 0.9}),
      InvalidArgument);
}

TEST(Register, IdentityOnSelf) {
  Rng r(17);
  PointCloud c = random_cloud(r, 60);
  auto [t, residual] = rigid_register(c, c);
  EXPECT_LT(residual, 1e-12);
  EXPECT_LT((t.rotation - Eigen::Matrix3d::Identity()).norm(), 1e-9);
  EXPECT_LT(t.translation.norm(), 1e-9);
}

TEST(Register, RecoversKnownTransform) {
  Rng r(18);
  PointCloud tmpl = random_cloud(r, 200);
  const double a = 10.0 * std::numbers::pi / 180.0;
  RigidTransform fwd;
  fwd.rotation << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  fwd.translation << 5, 0, 0;
  PointCloud source = fwd.apply(tmpl);

  auto [t, residual] = rigid_register(source, tmpl, 100, 1e-12);
  EXPECT_LT(residual, 1e-6);
  RigidTransform inv = fwd.inverse();
  EXPECT_LT((t.rotation - inv.rotation).norm(), 1e-4);
  EXPECT_LT((t.translation - inv.translation).norm(), 1e-4);
  Points realigned = t.apply(source.points);
  double rms = std::sqrt((realigned - tmpl.points).rowwise().squaredNorm().mean());
  EXPECT_LT(rms, 1e-6);
}

TEST(Register, TransformIsRigid) {
  Rng r(19);
  PointCloud tmpl = random_cloud(r, 80);
  PointCloud source = rotate_cloud(tmpl, 4.0, -6.0);
  auto [t, residual] = rigid_register(source, tmpl);
  EXPECT_LT((t.rotation.transpose() * t.rotation - Eigen::Matrix3d::Identity())
                .cwiseAbs()
                .maxCoeff(),
            1e-9);
  EXPECT_NEAR(t.rotation.determinant(), 1.0, 1e-9);
  RigidTransform round = t.then(t.inverse());
  EXPECT_LT((round.rotation - Eigen::Matrix3d::Identity()).norm(), 1e-9);
  EXPECT_LT(round.translation.norm(), 1e-9);
}

TEST(Register, ResidualMonotoneInIterations) {
  Rng r(20);
  PointCloud tmpl = random_cloud(r, 120);
  PointCloud source = tmpl;
  for (int i = 0; i < 120; ++i)
    for (int j = 0; j < 3; ++j) source.points(i, j) += r.normal(0.0, 0.1);
  source = rotate_cloud(source, 3.0, 5.0);

  double prev = 1e300;
  for (int iters = 1; iters <= 6; ++iters) {
    auto [t, residual] = rigid_register(source, tmpl, iters, 0.0);
    EXPECT_LE(residual, prev + 1e-12);
    prev = residual;
  }
}

TEST(Register, CollinearSourceThrows) {
  PointCloud tmpl;
  tmpl.points.resize(4, 3);
  tmpl.points << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  EXPECT_THROW(rigid_register(line_cloud(), tmpl), DegenerateGeometry);
  PointCloud dup;
  dup.points = Points::Zero(5, 3);
  EXPECT_THROW(rigid_register(dup, tmpl), DegenerateGeometry);
}

TEST(Register, PlanarSourceIsAccepted) {
  // Rank-2 geometry still pins down the fit thanks to the det correction.
  PointCloud tmpl;
  tmpl.points.resize(4, 3);
  tmpl.points << 0, 0, 0, 10, 0, 0, 0, 10, 0, 10, 10, 0;
  auto [t, residual] = rigid_register(tmpl, tmpl);
  EXPECT_LT(residual, 1e-12);
}

TEST(Resample, TemplateOntoItself) {
  Rng r(21);
  PointCloud tmpl = random_cloud(r, 40);
  PointCloud out = canonical_resample(tmpl, tmpl);
  EXPECT_TRUE(out.canonical);
  EXPECT_EQ(out.points, tmpl.points);
}

TEST(Resample, PerturbedPointOnlyChangesItsSlot) {
  Rng r(22);
  PointCloud tmpl = random_cloud(r, 30);
  PointCloud cloud = tmpl;
  cloud.points(7, 0) += 0.01;
  PointCloud out = canonical_resample(cloud, tmpl);
  for (int i = 0; i < 30; ++i) {
    EXPECT_EQ(out.points.row(i), cloud.points.row(i));
  }
}

TEST(Resample, PigeonholeSmallCloud) {
  Rng r(23);
  PointCloud tmpl = random_cloud(r, 8);
  PointCloud cloud = random_cloud(r, 3);
  PointCloud out = canonical_resample(cloud, tmpl);
  ASSERT_EQ(out.points.rows(), 8);
  for (int i = 0; i < 8; ++i) {
    bool member = false;
    for (int j = 0; j < 3; ++j)
      member = member || out.points.row(i) == cloud.points.row(j);
    EXPECT_TRUE(member);
  }
}

TEST(CloudIo, Drf1Roundtrip) {
  Rng r(24);
  PointCloud c = random_cloud(r, 50);
  c.canonical = true;
  const std::string path = "/tmp/drfer_test_roundtrip.drf1";
  save_drf1(c, path);
  PointCloud back = load_drf1(path);
  EXPECT_TRUE(back.canonical);
  ASSERT_EQ(back.points.rows(), 50);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 3; ++j)
      EXPECT_EQ(static_cast<float>(back.points(i, j)),
                static_cast<float>(c.points(i, j)));
  std::remove(path.c_str());
}

TEST(CloudIo, BadMagicThrows) {
  const std::string path = "/tmp/drfer_test_badmagic.drf1";
  std::ofstream(path) << "NOPE garbage";
  EXPECT_THROW(load_drf1(path), IoError);
  std::remove(path.c_str());
}

TEST(CloudIo, TruncatedThrows) {
  Rng r(25);
  PointCloud c = random_cloud(r, 10);
  const std::string path = "/tmp/drfer_test_trunc.drf1";
  save_drf1(c, path);
  // chop the last 6 bytes
  std::ifstream in(path, std::ios::binary);
  std::string buf((std::istreambuf_iterator<char>(in)), {});
  in.close();
  std::ofstream(path, std::ios::binary) << buf.substr(0, buf.size() - 6);
  EXPECT_THROW(load_drf1(path), IoError);
  std::remove(path.c_str());
}

TEST(CloudIo, XyzImport) {
  const std::string path = "/tmp/drfer_test_pts.xyz";
  std::ofstream(path) << "1 2 3\n\n4.5 -5 6e1\n";
  PointCloud c = load_xyz(path);
  ASSERT_EQ(c.points.rows(), 2);
  EXPECT_FALSE(c.canonical);
  EXPECT_DOUBLE_EQ(c.points(1, 2), 60.0);
  std::ofstream(path) << "1 2\n";
  EXPECT_THROW(load_xyz(path), IoError);
  std::remove(path.c_str());
}

TEST(CloudIo, HashTracksContent) {
  Rng r(26);
  PointCloud a = random_cloud(r, 20);
  PointCloud b = a;
  EXPECT_EQ(cloud_hash(a), cloud_hash(b));
  b.points(3, 1) += 1.0;
  EXPECT_NE(cloud_hash(a), cloud_hash(b));
  b = a;
  b.canonical = true;
  EXPECT_NE(cloud_hash(a), cloud_hash(b));
}
