#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "drfer/geometry/cloud.hpp"

namespace drfer {

namespace detail {

// 2D monotone chain on projected coordinates; returns original indices of
// strict hull vertices.
inline std::vector<int> hull2d_vertices(const std::vector<std::array<double, 2>>& p,
                                        const std::vector<int>& ids, double eps) {
  std::vector<int> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (p[a][0] != p[b][0]) return p[a][0] < p[b][0];
    if (p[a][1] != p[b][1]) return p[a][1] < p[b][1];
    return ids[a] < ids[b];
  });
  auto cross = [&](int o, int a, int b) {
    return (p[a][0] - p[o][0]) * (p[b][1] - p[o][1]) -
           (p[a][1] - p[o][1]) * (p[b][0] - p[o][0]);
  };
  double span = 0.0;
  for (const auto& q : p) span = std::max({span, std::abs(q[0]), std::abs(q[1])});
  const double area_eps = eps * std::max(span, 1e-12);
  std::vector<int> h;
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t lower_size = h.size();
    auto run = order;
    if (pass == 1) std::reverse(run.begin(), run.end());
    for (int i : run) {
      while (h.size() >= lower_size + 2 &&
             cross(h[h.size() - 2], h[h.size() - 1], i) <= area_eps)
        h.pop_back();
      h.push_back(i);
    }
    h.pop_back();  // endpoint repeats as the start of the next chain
  }
  std::vector<int> out;
  out.reserve(h.size());
  for (int i : h) out.push_back(ids[i]);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Incremental quickhull over double coordinates. Returns the sorted indices
// of points that are hull vertices; degenerate inputs (coincident, collinear,
// coplanar) fall back to the hull of the corresponding lower dimension.
class QuickHull {
 public:
  explicit QuickHull(const Points& pts) : pts_(pts) {
    scale_ = std::max(1e-12, pts.cwiseAbs().maxCoeff());
    eps_ = 1e-9 * scale_;
  }

  std::vector<int> vertices() {
    const Eigen::Index n = pts_.rows();
    if (n == 1) return {0};

    // Extreme pair across the axis extremes.
    std::array<int, 6> ext{};
    for (int a = 0; a < 3; ++a) {
      Eigen::Index lo = 0, hi = 0;
      pts_.col(a).minCoeff(&lo);
      pts_.col(a).maxCoeff(&hi);
      ext[2 * a] = static_cast<int>(lo);
      ext[2 * a + 1] = static_cast<int>(hi);
    }
    int i0 = 0, i1 = 0;
    double best = -1.0;
    for (int a : ext)
      for (int b : ext) {
        const double d = (pts_.row(a) - pts_.row(b)).squaredNorm();
        if (d > best) {
          best = d;
          i0 = a;
          i1 = b;
        }
      }
    if (std::sqrt(best) <= eps_) {  // all points coincide
      std::vector<int> all(n);
      std::iota(all.begin(), all.end(), 0);
      return all;
    }

    const Eigen::RowVector3d dir = (pts_.row(i1) - pts_.row(i0)).normalized();
    int i2 = -1;
    double bestline = eps_;
    Vecd proj(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::RowVector3d rel = pts_.row(i) - pts_.row(i0);
      proj(i) = rel.dot(dir);
      const double d = (rel - proj(i) * dir).norm();
      if (d > bestline) {
        bestline = d;
        i2 = static_cast<int>(i);
      }
    }
    if (i2 < 0) {  // collinear: keep both extremes of the projection
      const double lo = proj.minCoeff(), hi = proj.maxCoeff();
      std::vector<int> out;
      for (Eigen::Index i = 0; i < n; ++i)
        if (proj(i) <= lo + eps_ || proj(i) >= hi - eps_)
          out.push_back(static_cast<int>(i));
      return out;
    }

    Eigen::RowVector3d n0 =
        dir.cross(Eigen::RowVector3d(pts_.row(i2) - pts_.row(i0))).normalized();
    int i3 = -1;
    double bestplane = eps_;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = std::abs(n0.dot(pts_.row(i) - pts_.row(i0)));
      if (d > bestplane) {
        bestplane = d;
        i3 = static_cast<int>(i);
      }
    }
    if (i3 < 0) {  // coplanar: 2D hull in the plane basis
      const Eigen::RowVector3d u = dir;
      const Eigen::RowVector3d v = n0.cross(dir).normalized();
      std::vector<std::array<double, 2>> flat(n);
      std::vector<int> ids(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVector3d rel = pts_.row(i) - pts_.row(i0);
        flat[i] = {rel.dot(u), rel.dot(v)};
        ids[i] = static_cast<int>(i);
      }
      return hull2d_vertices(flat, ids, eps_);
    }

    interior_ = 0.25 * (pts_.row(i0) + pts_.row(i1) + pts_.row(i2) + pts_.row(i3));
    make_face(i0, i1, i2);
    make_face(i0, i1, i3);
    make_face(i0, i2, i3);
    make_face(i1, i2, i3);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == i0 || i == i1 || i == i2 || i == i3) continue;
      assign_to_some_face(static_cast<int>(i));
    }
    expand();

    std::vector<int> out;
    for (const Face& f : faces_)
      if (f.alive) out.insert(out.end(), f.v.begin(), f.v.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  struct Face {
    std::array<int, 3> v;
    Eigen::Vector3d n;
    double d = 0.0;
    std::vector<int> outside;
    bool alive = true;
  };

  double dist(const Face& f, Eigen::Index p) const {
    return f.n.dot(pts_.row(p).transpose()) - f.d;
  }

  void make_face(int a, int b, int c) {
    Face f;
    f.v = {a, b, c};
    Eigen::RowVector3d n =
        Eigen::RowVector3d(pts_.row(b) - pts_.row(a))
            .cross(Eigen::RowVector3d(pts_.row(c) - pts_.row(a)));
    f.n = n.normalized().transpose();
    f.d = f.n.dot(pts_.row(a).transpose());
    if (f.n.dot(interior_.transpose()) - f.d > 0) {  // flip outward
      std::swap(f.v[1], f.v[2]);
      f.n = -f.n;
      f.d = -f.d;
    }
    faces_.push_back(std::move(f));
  }

  void assign_to_some_face(int p) {
    for (Face& f : faces_) {
      if (!f.alive) continue;
      if (dist(f, p) > eps_) {
        f.outside.push_back(p);
        return;
      }
    }
  }

  static std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
  }

  void expand() {
    while (true) {
      int fi = -1;
      for (std::size_t i = 0; i < faces_.size(); ++i)
        if (faces_[i].alive && !faces_[i].outside.empty()) {
          fi = static_cast<int>(i);
          break;
        }
      if (fi < 0) return;

      const Face& f0 = faces_[fi];
      int p = f0.outside[0];
      double bestd = dist(f0, p);
      for (int q : f0.outside) {
        const double d = dist(f0, q);
        if (d > bestd) {
          bestd = d;
          p = q;
        }
      }

      // Adjacency over alive faces, then BFS for the visible region so the
      // horizon stays a closed loop even when far faces are numerically
      // borderline.
      struct Slot {
        int f[2] = {-1, -1};
      };
      std::unordered_map<std::uint64_t, Slot> edges;
      for (std::size_t i = 0; i < faces_.size(); ++i) {
        const Face& f = faces_[i];
        if (!f.alive) continue;
        for (int e = 0; e < 3; ++e) {
          Slot& slot = edges[edge_key(f.v[e], f.v[(e + 1) % 3])];
          (slot.f[0] < 0 ? slot.f[0] : slot.f[1]) = static_cast<int>(i);
        }
      }
      auto neighbor = [&](int face, int a, int b) {
        const Slot& slot = edges.at(edge_key(a, b));
        return slot.f[0] == face ? slot.f[1] : slot.f[0];
      };

      std::vector<char> visible(faces_.size(), 0);
      std::deque<int> queue{fi};
      visible[fi] = 1;
      while (!queue.empty()) {
        const int cur = queue.front();
        queue.pop_front();
        const Face& f = faces_[cur];
        for (int e = 0; e < 3; ++e) {
          const int nb = neighbor(cur, f.v[e], f.v[(e + 1) % 3]);
          if (nb < 0 || visible[nb]) continue;
          if (dist(faces_[nb], p) > eps_) {
            visible[nb] = 1;
            queue.push_back(nb);
          }
        }
      }

      std::vector<std::array<int, 2>> horizon;
      std::vector<int> orphans;
      for (std::size_t i = 0; i < faces_.size(); ++i) {
        if (!visible[i]) continue;
        Face& f = faces_[i];
        for (int e = 0; e < 3; ++e) {
          const int a = f.v[e], b = f.v[(e + 1) % 3];
          const int nb = neighbor(static_cast<int>(i), a, b);
          if (nb < 0 || !visible[nb]) horizon.push_back({a, b});
        }
        for (int q : f.outside)
          if (q != p) orphans.push_back(q);
        f.alive = false;
        f.outside.clear();
      }

      const std::size_t first_new = faces_.size();
      for (const auto& [a, b] : horizon) make_face(a, b, p);
      for (int q : orphans) {
        for (std::size_t i = first_new; i < faces_.size(); ++i) {
          if (dist(faces_[i], q) > eps_) {
            faces_[i].outside.push_back(q);
            break;
          }
        }
      }
    }
  }

  const Points& pts_;
  double scale_;
  double eps_;
  Eigen::RowVector3d interior_;
  std::vector<Face> faces_;
};

inline std::vector<int> convex_hull_vertices(const Points& pts) {
  require(pts.rows() >= 1, "convex_hull_vertices: empty input");
  return QuickHull(pts).vertices();
}

}  // namespace detail

// Conventional viewpoint for the self-occlusion benchmark: on the +z axis
// above the centroid, at five times the bounding radius.
inline Eigen::Vector3d hpr_default_viewpoint(const PointCloud& cloud) {
  validate_cloud(cloud, "hpr_default_viewpoint");
  const Eigen::RowVector3d c = cloud.centroid();
  const double r = (cloud.points.rowwise() - c).rowwise().norm().maxCoeff();
  return c.transpose() + Eigen::Vector3d(0, 0, 5.0 * std::max(r, 1e-9));
}

// Spherical-flip hidden point removal: reflect every point about a sphere
// of radius gamma * max-norm centered on the viewpoint, then keep the points
// whose reflections lie on the convex hull of the reflected set plus the
// viewpoint itself. Returns sorted visible indices.
inline std::vector<int> remove_hidden_points(const PointCloud& cloud,
                                             const Eigen::Vector3d& viewpoint,
                                             double gamma = 3.0) {
  validate_cloud(cloud, "remove_hidden_points");
  require(gamma >= 1.0, "remove_hidden_points: gamma must be at least 1");
  const Eigen::RowVector3d c = cloud.centroid();
  const double bound = (cloud.points.rowwise() - c).rowwise().norm().maxCoeff();
  require((viewpoint.transpose() - c).norm() > bound,
          "remove_hidden_points: viewpoint inside the cloud's bounding sphere");

  const Eigen::Index n = cloud.size();
  Points work(n + 1, 3);
  Points rel = cloud.points.rowwise() - viewpoint.transpose();
  const Vecd norms = rel.rowwise().norm();
  const double rf = gamma * norms.maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i)
    work.row(i) = rel.row(i) * (2.0 * rf / norms(i) - 1.0);
  work.row(n).setZero();  // the viewpoint itself

  std::vector<int> hull = detail::convex_hull_vertices(work);
  std::vector<int> visible;
  visible.reserve(hull.size());
  for (int i : hull)
    if (i < n) visible.push_back(i);
  return visible;
}

}  // namespace drfer
