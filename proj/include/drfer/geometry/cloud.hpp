#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "drfer/common.hpp"
#include "drfer/core/tensor.hpp"

namespace drfer {

// Ordered 3D point set in millimeters. `canonical` marks clouds whose index
// i corresponds across faces (the product of canonical_resample); most
// kernels preserve it, dropout augmentation clears it.
struct PointCloud {
  Points points;  // N x 3
  bool canonical = false;

  Eigen::Index size() const { return points.rows(); }

  Eigen::RowVector3d centroid() const {
    require(points.rows() > 0, "centroid of empty cloud");
    return points.colwise().mean();
  }
};

inline void validate_cloud(const PointCloud& c, const std::string& who) {
  require(c.points.rows() >= 1, who + ": cloud must have at least one point");
  require(c.points.allFinite(), who + ": cloud has non-finite coordinates");
}

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  Points apply(const Points& pts) const {
    Points out = pts * rotation.transpose();
    out.rowwise() += translation.transpose();
    return out;
  }

  PointCloud apply(const PointCloud& c) const {
    return PointCloud{apply(c.points), c.canonical};
  }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }

  RigidTransform then(const RigidTransform& outer) const {
    // outer ∘ this
    RigidTransform r;
    r.rotation = outer.rotation * rotation;
    r.translation = outer.rotation * translation + outer.translation;
    return r;
  }
};

// --- binary container -------------------------------------------------
// magic "DRF1", little-endian, u32 point count, u8 canonical flag,
// then N x 3 float32 rows.

static_assert(std::endian::native == std::endian::little,
              "DRF1 io assumes a little-endian host");

inline void save_drf1(const PointCloud& c, const std::string& path) {
  validate_cloud(c, "save_drf1");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write("DRF1", 4);
  const std::uint32_t n = static_cast<std::uint32_t>(c.points.rows());
  f.write(reinterpret_cast<const char*>(&n), 4);
  const std::uint8_t flag = c.canonical ? 1 : 0;
  f.write(reinterpret_cast<const char*>(&flag), 1);
  for (Eigen::Index i = 0; i < c.points.rows(); ++i) {
    float row[3] = {static_cast<float>(c.points(i, 0)),
                    static_cast<float>(c.points(i, 1)),
                    static_cast<float>(c.points(i, 2))};
    f.write(reinterpret_cast<const char*>(row), sizeof(row));
  }
  if (!f) throw IoError("write failed: " + path);
}

inline PointCloud load_drf1(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "DRF1")
    throw IoError("bad magic, not a DRF1 file: " + path);
  std::uint32_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 4);
  std::uint8_t flag = 0;
  f.read(reinterpret_cast<char*>(&flag), 1);
  if (!f || n == 0) throw IoError("bad header in " + path);
  PointCloud c;
  c.canonical = flag != 0;
  c.points.resize(n, 3);
  for (std::uint32_t i = 0; i < n; ++i) {
    float row[3];
    f.read(reinterpret_cast<char*>(row), sizeof(row));
    if (!f) throw IoError("truncated DRF1 file: " + path);
    c.points(i, 0) = row[0];
    c.points(i, 1) = row[1];
    c.points(i, 2) = row[2];
  }
  return c;
}

// ASCII import: one "x y z" per line, blank lines skipped.
inline PointCloud load_xyz(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<Eigen::RowVector3d> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x >> y >> z))
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 'x y z'");
    rows.emplace_back(x, y, z);
  }
  if (rows.empty()) throw IoError("no points in " + path);
  PointCloud c;
  c.points.resize(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i)
    c.points.row(static_cast<Eigen::Index>(i)) = rows[i];
  return c;
}

// Content hash over the serialized form (count, flag, float32 coords).
inline std::uint64_t cloud_hash(const PointCloud& c) {
  Fnv1a h;
  h.update_pod(static_cast<std::uint32_t>(c.points.rows()));
  h.update_pod(static_cast<std::uint8_t>(c.canonical ? 1 : 0));
  for (Eigen::Index i = 0; i < c.points.rows(); ++i)
    for (int j = 0; j < 3; ++j) h.update_pod(static_cast<float>(c.points(i, j)));
  return h.digest();
}

}  // namespace drfer
