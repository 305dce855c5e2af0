#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "drfer/geometry/cloud.hpp"
#include "drfer/rng.hpp"

namespace drfer {

// Farthest point sampling. Greedy: each pick maximizes the minimum squared
// distance to the points already selected; ties go to the lowest index.
inline std::vector<int> fps_sample(const PointCloud& cloud, int k, int start = 0) {
  validate_cloud(cloud, "fps_sample");
  const Eigen::Index n = cloud.size();
  require(k >= 1 && k <= n, "fps_sample: k must be in [1, N]");
  require(start >= 0 && start < n, "fps_sample: start out of range");

  std::vector<int> picked;
  picked.reserve(k);
  picked.push_back(start);
  Vecd mind = (cloud.points.rowwise() - cloud.points.row(start))
                  .rowwise()
                  .squaredNorm();
  for (int s = 1; s < k; ++s) {
    int best = 0;
    double bestd = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mind(i) > bestd) {
        bestd = mind(i);
        best = static_cast<int>(i);
      }
    }
    picked.push_back(best);
    mind = mind.cwiseMin(
        (cloud.points.rowwise() - cloud.points.row(best)).rowwise().squaredNorm());
  }
  return picked;
}

// Neighborhood search around each center: indices within `radius`, up to
// `cap` entries, nearest-first with ties by lowest index. The center itself
// is always the first entry.
inline std::vector<std::vector<int>> ball_query(const PointCloud& cloud,
                                                const std::vector<int>& centers,
                                                double radius, int cap) {
  validate_cloud(cloud, "ball_query");
  require(radius > 0.0, "ball_query: radius must be positive");
  require(cap >= 1, "ball_query: cap must be at least 1");
  const double r2 = radius * radius;
  std::vector<std::vector<int>> out;
  out.reserve(centers.size());
  for (int c : centers) {
    require(c >= 0 && c < cloud.size(), "ball_query: center index out of range");
    Vecd d2 = (cloud.points.rowwise() - cloud.points.row(c)).rowwise().squaredNorm();
    std::vector<std::pair<double, int>> cand;
    for (Eigen::Index i = 0; i < cloud.size(); ++i)
      if (i != c && d2(i) <= r2) cand.emplace_back(d2(i), static_cast<int>(i));
    std::sort(cand.begin(), cand.end());
    std::vector<int> list;
    list.reserve(std::min<std::size_t>(cap, cand.size() + 1));
    list.push_back(c);
    for (const auto& [d, i] : cand) {
      if (static_cast<int>(list.size()) >= cap) break;
      list.push_back(i);
    }
    out.push_back(std::move(list));
  }
  return out;
}

// d_CD(A,B): mean over A of squared distance to the nearest point of B,
// plus the same with the roles swapped.
inline double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  validate_cloud(a, "chamfer_distance");
  validate_cloud(b, "chamfer_distance");
  const Points& pa = a.points;
  const Points& pb = b.points;
  // The quadratic form locates each nearest neighbor; the distance itself is
  // recomputed directly so coinciding sets give exactly zero.
  Vecd na = pa.rowwise().squaredNorm();
  Vecd nb = pb.rowwise().squaredNorm();
  Matd d = (-2.0 * (pa * pb.transpose())).eval();
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  double sa = 0.0, sb = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    Eigen::Index j = 0;
    d.row(i).minCoeff(&j);
    sa += (pa.row(i) - pb.row(j)).squaredNorm();
  }
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    Eigen::Index i = 0;
    d.col(j).minCoeff(&i);
    sb += (pa.row(i) - pb.row(j)).squaredNorm();
  }
  return sa / static_cast<double>(pa.rows()) + sb / static_cast<double>(pb.rows());
}

// Rotation about the cloud centroid: R = R_yaw(y axis) * R_pitch(x axis).
inline PointCloud rotate_cloud(const PointCloud& cloud, double pitch_deg,
                               double yaw_deg) {
  validate_cloud(cloud, "rotate_cloud");
  const double p = pitch_deg * std::numbers::pi / 180.0;
  const double y = yaw_deg * std::numbers::pi / 180.0;
  Eigen::Matrix3d rp, ry;
  rp << 1, 0, 0, 0, std::cos(p), -std::sin(p), 0, std::sin(p), std::cos(p);
  ry << std::cos(y), 0, std::sin(y), 0, 1, 0, -std::sin(y), 0, std::cos(y);
  const Eigen::Matrix3d r = ry * rp;
  const Eigen::RowVector3d c = cloud.centroid();
  PointCloud out;
  out.canonical = cloud.canonical;
  out.points = (cloud.points.rowwise() - c) * r.transpose();
  out.points.rowwise() += c;
  return out;
}

enum class AugmentMode { dropout, scale };

struct AugmentParams {
  double dropout_rate = 0.0;  // dropout mode
  double scale_lo = 1.0;      // scale mode
  double scale_hi = 1.0;
};

// Training-time augmentation, bit-reproducible for a fixed seed.
// Dropout keeps cardinality by copying the first surviving point into the
// dropped slots (and clears the canonical flag, since index correspondence
// is gone). Scale draws one factor and applies it to centroid-relative
// coordinates.
inline PointCloud augment(const PointCloud& cloud, AugmentMode mode,
                          std::uint64_t seed, const AugmentParams& params) {
  validate_cloud(cloud, "augment");
  Rng rng(seed);
  if (mode == AugmentMode::dropout) {
    const double rate = params.dropout_rate;
    require(rate >= 0.0 && rate <= 0.875, "augment: dropout rate outside [0, 0.875]");
    if (rate == 0.0) return cloud;
    const Eigen::Index n = cloud.size();
    std::vector<char> dropped(n, 0);
    int first_kept = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      dropped[i] = rng.uniform() < rate ? 1 : 0;
      if (!dropped[i] && first_kept < 0) first_kept = static_cast<int>(i);
    }
    if (first_kept < 0) return cloud;  // nothing survived; leave unchanged
    PointCloud out;
    out.canonical = false;
    out.points = cloud.points;
    for (Eigen::Index i = 0; i < n; ++i)
      if (dropped[i]) out.points.row(i) = cloud.points.row(first_kept);
    return out;
  }
  const double lo = params.scale_lo, hi = params.scale_hi;
  require(lo >= 0.8 && hi <= 1.25 && lo <= hi,
          "augment: scale range must lie within [0.8, 1.25]");
  const double factor = rng.uniform(lo, hi);
  const Eigen::RowVector3d c = cloud.centroid();
  PointCloud out;
  out.canonical = cloud.canonical;
  out.points = (cloud.points.rowwise() - c) * factor;
  out.points.rowwise() += c;
  return out;
}

}  // namespace drfer
