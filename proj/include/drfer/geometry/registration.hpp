#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/SVD>

#include "drfer/geometry/cloud.hpp"

namespace drfer {

namespace detail {

// Index of the nearest row of `pts` to `q`, lowest index on ties.
inline int nearest_row(const Points& pts, const Eigen::RowVector3d& q) {
  Eigen::Index best = 0;
  (pts.rowwise() - q).rowwise().squaredNorm().minCoeff(&best);
  return static_cast<int>(best);
}

// Least-squares rigid fit (Kabsch with det correction) mapping src -> dst,
// row-matched pairs.
inline RigidTransform kabsch(const Points& src, const Points& dst) {
  const Eigen::RowVector3d cs = src.colwise().mean();
  const Eigen::RowVector3d cd = dst.colwise().mean();
  const Eigen::Matrix3d h =
      (src.rowwise() - cs).transpose() * (dst.rowwise() - cd);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  t.translation = cd.transpose() - t.rotation * cs.transpose();
  return t;
}

}  // namespace detail

// Iterative closest point: alternate nearest-neighbor correspondence against
// the template and a closed-form rigid fit, until the RMS residual stops
// improving by more than `tol` or `max_iters` is reached. The residual is
// monotonically non-increasing across iterations.
inline std::pair<RigidTransform, double> rigid_register(const PointCloud& source,
                                                        const PointCloud& tmpl,
                                                        int max_iters = 50,
                                                        double tol = 1e-10) {
  validate_cloud(source, "rigid_register");
  validate_cloud(tmpl, "rigid_register");
  require(source.size() >= 3 && tmpl.size() >= 3,
          "rigid_register: both clouds need at least 3 points");
  require(max_iters >= 1, "rigid_register: max_iters must be positive");

  // A source whose centered rank is below 2 (all points collinear or
  // coincident) cannot pin down a rotation.
  {
    const Points centered = source.points.rowwise() - source.points.colwise().mean();
    Eigen::JacobiSVD<Points> svd(centered);
    const auto& s = svd.singularValues();
    if (s(1) <= 1e-9 * std::max(s(0), 1e-300))
      throw DegenerateGeometry("rigid_register: source points are collinear");
  }

  RigidTransform t;
  double prev = std::numeric_limits<double>::infinity();
  double residual = prev;
  for (int it = 0; it < max_iters; ++it) {
    const Points moved = t.apply(source.points);
    Points corr(source.size(), 3);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < moved.rows(); ++i) {
      corr.row(i) = tmpl.points.row(detail::nearest_row(tmpl.points, moved.row(i)));
      sq += (moved.row(i) - corr.row(i)).squaredNorm();
    }
    residual = std::sqrt(sq / static_cast<double>(source.size()));
    if (prev - residual < tol) break;
    prev = residual;
    t = detail::kabsch(source.points, corr);
  }
  return {t, residual};
}

// Resamples a registered cloud onto the template's index space: output
// point i is the cloud point nearest to template point i. This is what
// gives every face in a dataset the same length and index correspondence.
inline PointCloud canonical_resample(const PointCloud& cloud, const PointCloud& tmpl) {
  validate_cloud(cloud, "canonical_resample");
  validate_cloud(tmpl, "canonical_resample");
  PointCloud out;
  out.canonical = true;
  out.points.resize(tmpl.size(), 3);
  for (Eigen::Index i = 0; i < tmpl.size(); ++i)
    out.points.row(i) =
        cloud.points.row(detail::nearest_row(cloud.points, tmpl.points.row(i)));
  return out;
}

}  // namespace drfer
