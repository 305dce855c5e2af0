#pragma once

#include <limits>
#include <string>
#include <vector>

#include "drfer/geometry/kernels.hpp"
#include "drfer/net/config.hpp"
#include "drfer/net/layers.hpp"

namespace drfer {

// Input frame captured during normalization, needed to map decoder output
// back into the original coordinate frame.
struct FrameVars {
  Var center;  // 1x3
  Var radius;  // 1x1
};

template <class S>
struct EncodeOut {
  Var global;               // 1 x kFeatureDim
  std::vector<Var> pooled;  // one 1 x width vector per level, for skip taps
  FrameVars frame;
};

// Hierarchical point-set encoder. Each level samples centroids (FPS anchored
// at the point nearest the centroid so inference ignores input order), groups
// neighbors by radius, runs a shared two-layer MLP per neighbor, and
// max-pools per group. Sampling and grouping decisions are made on values;
// gradients flow through the gathered coordinates and features.
template <class S>
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParamStore<S>& store, const std::string& prefix, const NetConfig& cfg,
          Rng& rng)
      : input_points_(cfg.input_points), levels_(cfg.levels) {
    int in = 3;
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const std::string base = prefix + ".l" + std::to_string(l);
      mlp_.emplace_back(store, base + ".f0", in, levels_[l].hidden, rng);
      mlp_.emplace_back(store, base + ".f1", levels_[l].hidden, levels_[l].width,
                        rng);
      in = levels_[l].width + 3;  // next level sees pooled features + coords
    }
  }

  EncodeOut<S> forward(Tape<S>& t, Var cloud) const {
    const Mat<S>& v = t.val(cloud);
    require(v.rows() == input_points_ && v.cols() == 3,
            InvalidArgument("encoder: expected " +
                            std::to_string(input_points_) + "x3 cloud, got " +
                            std::to_string(v.rows()) + "x" +
                            std::to_string(v.cols())));

    // Normalize to zero centroid / unit bounding radius inside the graph so
    // reconstruction losses can push back through the frame.
    Var center = ops::col_mean(t, cloud);
    Var centered = ops::sub_rowvec(t, cloud, center);
    Var r2 = ops::max_all(t, ops::row_sqnorm(t, centered));
    Var radius = ops::sqrt_op(t, ops::clamp_min(t, r2, S(1e-12)));
    Var pos = ops::mul_scalar(t, centered, ops::recip(t, radius));

    EncodeOut<S> out;
    out.frame = {center, radius};
    Var feat;  // unset at the first level: coordinates are the only feature
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const LevelConfig& lc = levels_[l];
      PointCloud pc;
      pc.points = t.val(pos).template cast<double>();

      int anchor = 0;
      {
        const Eigen::RowVector3d c = pc.points.colwise().mean();
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < pc.points.rows(); ++i) {
          const double d = (pc.points.row(i) - c).squaredNorm();
          if (d < best) {
            best = d;
            anchor = static_cast<int>(i);
          }
        }
      }
      const std::vector<int> idx = fps_sample(pc, lc.centroids, anchor);
      auto groups = ball_query(pc, idx, lc.radius, lc.cap);

      std::vector<int> flat(static_cast<std::size_t>(lc.centroids) * lc.cap);
      std::vector<int> center_of(flat.size());
      for (int g = 0; g < lc.centroids; ++g) {
        const auto& grp = groups[g];
        for (int j = 0; j < lc.cap; ++j) {
          // short groups repeat the center row; duplicates cannot change a max
          flat[g * lc.cap + j] =
              j < static_cast<int>(grp.size()) ? grp[j] : grp[0];
          center_of[g * lc.cap + j] = idx[g];
        }
      }

      Var local = ops::sub(t, ops::gather_rows(t, pos, flat),
                           ops::gather_rows(t, pos, center_of));
      Var mlp_in = l == 0 ? local
                          : ops::concat_cols(
                                t, {local, ops::gather_rows(t, feat, flat)});
      Var h = mlp_[2 * l].forward_relu(t, mlp_in);
      h = mlp_[2 * l + 1].forward_relu(t, h);
      Var grouped = ops::group_max(t, h, lc.cap);  // centroids x width
      out.pooled.push_back(
          lc.centroids == 1 ? grouped : ops::group_max(t, grouped, lc.centroids));
      pos = ops::gather_rows(t, pos, idx);
      feat = grouped;
    }
    out.global = out.pooled.back();
    return out;
  }

  int input_points() const { return input_points_; }

 private:
  int input_points_ = 0;
  std::vector<LevelConfig> levels_;
  std::vector<Dense<S>> mlp_;
};

}  // namespace drfer
