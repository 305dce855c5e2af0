#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "drfer/common.hpp"

namespace drfer {

// One set-abstraction level: sample `centroids` anchors, group neighbors
// within `radius` (normalized coordinates, post unit-sphere scaling), encode
// each neighborhood with a shared two-layer pointwise MLP and max-pool.
struct LevelConfig {
  int centroids = 0;
  double radius = 0.0;
  int cap = 0;     // max neighbors per group (short groups pad with the center)
  int hidden = 0;  // width of the first shared-MLP layer
  int width = 0;   // pooled feature width the level emits
};

inline constexpr int kFeatureDim = 1024;

struct NetConfig {
  int input_points = 2048;
  std::vector<LevelConfig> levels = {
      {512, 0.2, 32, 64, 128},
      {128, 0.4, 64, 128, 256},
      {1, 1e9, 128, 512, kFeatureDim},
  };
  std::vector<int> decoder_hidden = {1024, 2048};
  int n_out = 2048;
  std::vector<int> trunk_widths = {1024, 512, 256};
  std::vector<int> head_hidden = {512, 256};
  double head_dropout = 0.4;
  int num_expressions = 6;
  int num_subjects = 30;
};

inline void validate(const NetConfig& c) {
  require(c.input_points > 0, InvalidArgument("input_points must be positive"));
  require(c.levels.size() >= 1, InvalidArgument("need at least one level"));
  for (std::size_t i = 0; i < c.levels.size(); ++i) {
    const LevelConfig& l = c.levels[i];
    require(l.centroids > 0 && l.cap > 0 && l.hidden > 0 && l.width > 0 &&
                l.radius > 0,
            InvalidArgument("level fields must be positive"));
    if (i > 0)
      require(l.centroids < c.levels[i - 1].centroids,
              InvalidArgument("centroid counts must strictly decrease"));
  }
  require(c.levels.front().centroids <= c.input_points,
          InvalidArgument("more centroids than input points"));
  require(c.levels.back().width == kFeatureDim,
          InvalidArgument("final encoder width must be 1024"));
  require(c.n_out > 0, InvalidArgument("n_out must be positive"));
  require(c.trunk_widths.size() == c.levels.size(),
          InvalidArgument("trunk depth must match level count for skip taps"));
  require(c.head_dropout >= 0 && c.head_dropout < 1,
          InvalidArgument("head_dropout must be in [0,1)"));
  require(c.num_expressions > 1 && c.num_subjects > 1,
          InvalidArgument("need at least two classes"));
}

inline void to_json(nlohmann::json& j, const LevelConfig& l) {
  j = {{"centroids", l.centroids}, {"radius", l.radius},   {"cap", l.cap},
       {"hidden", l.hidden},       {"width", l.width}};
}

inline void from_json(const nlohmann::json& j, LevelConfig& l) {
  j.at("centroids").get_to(l.centroids);
  j.at("radius").get_to(l.radius);
  j.at("cap").get_to(l.cap);
  j.at("hidden").get_to(l.hidden);
  j.at("width").get_to(l.width);
}

inline void to_json(nlohmann::json& j, const NetConfig& c) {
  j = {{"input_points", c.input_points},
       {"levels", c.levels},
       {"decoder_hidden", c.decoder_hidden},
       {"n_out", c.n_out},
       {"trunk_widths", c.trunk_widths},
       {"head_hidden", c.head_hidden},
       {"head_dropout", c.head_dropout},
       {"num_expressions", c.num_expressions},
       {"num_subjects", c.num_subjects}};
}

inline void from_json(const nlohmann::json& j, NetConfig& c) {
  j.at("input_points").get_to(c.input_points);
  j.at("levels").get_to(c.levels);
  j.at("decoder_hidden").get_to(c.decoder_hidden);
  j.at("n_out").get_to(c.n_out);
  j.at("trunk_widths").get_to(c.trunk_widths);
  j.at("head_hidden").get_to(c.head_hidden);
  j.at("head_dropout").get_to(c.head_dropout);
  j.at("num_expressions").get_to(c.num_expressions);
  j.at("num_subjects").get_to(c.num_subjects);
}

}  // namespace drfer
