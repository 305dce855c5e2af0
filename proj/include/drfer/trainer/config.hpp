#pragma once

#include <array>
#include <string>

#include <json.hpp>

#include "drfer/losses/losses.hpp"

namespace drfer {

struct AugmentConfig {
  bool enabled = true;
  double dropout_rate = 0.2;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
};

struct TrainConfig {
  std::array<double, 3> stage_lr = {1e-3, 1e-4, 1e-5};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::array<int, 3> stage_batch = {24, 24, 16};
  std::array<int, 3> stage_epochs = {40, 40, 20};
  std::uint64_t seed = 42;
  losses::LossConfig loss;
  AugmentConfig augment;
  // dataset/fold references, resolved by the command-line layer
  std::string dataset;
  int folds = 5;
  int fold = 0;
};

inline void validate(const TrainConfig& c) {
  require(c.stage_lr[0] > c.stage_lr[1] && c.stage_lr[1] > c.stage_lr[2] &&
              c.stage_lr[2] > 0,
          InvalidArgument("stage learning rates must strictly decrease"));
  for (int b : c.stage_batch)
    require(b > 0, InvalidArgument("batch sizes must be positive"));
  for (int e : c.stage_epochs)
    require(e >= 1, InvalidArgument("epoch counts must be at least 1"));
  require(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1,
          InvalidArgument("betas must lie in [0,1)"));
  require(c.adam_eps > 0, InvalidArgument("adam_eps must be positive"));
  if (c.augment.enabled) {
    require(c.augment.dropout_rate >= 0 && c.augment.dropout_rate <= 0.875,
            InvalidArgument("augment dropout_rate out of range"));
    require(c.augment.scale_lo >= 0.8 && c.augment.scale_hi <= 1.25 &&
                c.augment.scale_lo <= c.augment.scale_hi,
            InvalidArgument("augment scale range out of range"));
  }
  losses::validate(c.loss);
}

namespace losses {

inline void to_json(nlohmann::json& j, const LossConfig& c) {
  j = {{"margin", c.margin},
       {"lambda", c.lambda},
       {"use_triplet", c.use_triplet},
       {"use_cls", c.use_cls},
       {"use_kl", c.use_kl},
       {"use_js", c.use_js},
       {"mining", c.mining == Mining::batch_hard ? "batch_hard" : "batch_all"}};
}

inline void from_json(const nlohmann::json& j, LossConfig& c) {
  c = LossConfig{};
  if (j.contains("margin")) j.at("margin").get_to(c.margin);
  if (j.contains("lambda")) j.at("lambda").get_to(c.lambda);
  if (j.contains("use_triplet")) j.at("use_triplet").get_to(c.use_triplet);
  if (j.contains("use_cls")) j.at("use_cls").get_to(c.use_cls);
  if (j.contains("use_kl")) j.at("use_kl").get_to(c.use_kl);
  if (j.contains("use_js")) j.at("use_js").get_to(c.use_js);
  if (j.contains("mining")) {
    const std::string m = j.at("mining").get<std::string>();
    require(m == "batch_hard" || m == "batch_all",
            ConfigError("unknown mining mode: " + m));
    c.mining = m == "batch_hard" ? Mining::batch_hard : Mining::batch_all;
  }
}

}  // namespace losses

inline void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = {{"enabled", c.enabled},
       {"dropout_rate", c.dropout_rate},
       {"scale_lo", c.scale_lo},
       {"scale_hi", c.scale_hi}};
}

inline void from_json(const nlohmann::json& j, AugmentConfig& c) {
  c = AugmentConfig{};
  if (j.contains("enabled")) j.at("enabled").get_to(c.enabled);
  if (j.contains("dropout_rate")) j.at("dropout_rate").get_to(c.dropout_rate);
  if (j.contains("scale_lo")) j.at("scale_lo").get_to(c.scale_lo);
  if (j.contains("scale_hi")) j.at("scale_hi").get_to(c.scale_hi);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"stage_lr", c.stage_lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"stage_batch", c.stage_batch},
       {"stage_epochs", c.stage_epochs},
       {"seed", c.seed},
       {"loss", c.loss},
       {"augment", c.augment},
       {"dataset", c.dataset},
       {"folds", c.folds},
       {"fold", c.fold}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("stage_lr")) j.at("stage_lr").get_to(c.stage_lr);
  if (j.contains("beta1")) j.at("beta1").get_to(c.beta1);
  if (j.contains("beta2")) j.at("beta2").get_to(c.beta2);
  if (j.contains("adam_eps")) j.at("adam_eps").get_to(c.adam_eps);
  if (j.contains("stage_batch")) j.at("stage_batch").get_to(c.stage_batch);
  if (j.contains("stage_epochs")) j.at("stage_epochs").get_to(c.stage_epochs);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("loss")) j.at("loss").get_to(c.loss);
  if (j.contains("augment")) j.at("augment").get_to(c.augment);
  if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
  if (j.contains("folds")) j.at("folds").get_to(c.folds);
  if (j.contains("fold")) j.at("fold").get_to(c.fold);
}

}  // namespace drfer
