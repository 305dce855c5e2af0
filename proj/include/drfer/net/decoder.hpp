#pragma once

#include <string>
#include <vector>

#include "drfer/net/config.hpp"
#include "drfer/net/encoder.hpp"
#include "drfer/net/layers.hpp"

namespace drfer {

// Fully-connected decoder from the global feature to an n_out x 3 cloud.
// With a frame it undoes the encoder's normalization, otherwise it emits
// normalized coordinates as-is.
template <class S>
class Decoder {
 public:
  Decoder() = default;
  Decoder(ParamStore<S>& store, const std::string& prefix, const NetConfig& cfg,
          Rng& rng)
      : n_out_(cfg.n_out) {
    int in = kFeatureDim;
    for (std::size_t i = 0; i < cfg.decoder_hidden.size(); ++i) {
      layers_.emplace_back(store, prefix + ".h" + std::to_string(i), in,
                           cfg.decoder_hidden[i], rng);
      in = cfg.decoder_hidden[i];
    }
    out_ = Dense<S>(store, prefix + ".out", in, cfg.n_out * 3, rng);
  }

  Var forward(Tape<S>& t, Var feature, const FrameVars* frame = nullptr) const {
    require(t.val(feature).rows() == 1 && t.val(feature).cols() == kFeatureDim,
            InvalidArgument("decoder: feature must be 1x" +
                            std::to_string(kFeatureDim)));
    Var x = feature;
    for (const auto& l : layers_) x = l.forward_relu(t, x);
    Var pts = ops::rows_to_points(t, out_.forward(t, x), n_out_);
    if (frame)
      pts = ops::add_rowvec(t, ops::mul_scalar(t, pts, frame->radius),
                            frame->center);
    return pts;
  }

  // Stage-II starts its decoders from scratch.
  void reinit(ParamStore<S>& store, Rng& rng) {
    for (const auto& l : layers_) {
      store.init_kaiming(l.w, rng);
      store.value(l.b).setZero();
    }
    store.init_kaiming(out_.w, rng);
    store.value(out_.b).setZero();
  }

  int n_out() const { return n_out_; }

 private:
  int n_out_ = 0;
  std::vector<Dense<S>> layers_;
  Dense<S> out_;
};

// Expression/identity classifier head: FC stack with dropout between hidden
// layers during training (pass an rng), plain at eval (pass nullptr).
template <class S>
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(ParamStore<S>& store, const std::string& prefix, int classes,
                 const NetConfig& cfg, Rng& rng)
      : drop_(cfg.head_dropout) {
    int in = kFeatureDim;
    for (std::size_t i = 0; i < cfg.head_hidden.size(); ++i) {
      layers_.emplace_back(store, prefix + ".h" + std::to_string(i), in,
                           cfg.head_hidden[i], rng);
      in = cfg.head_hidden[i];
    }
    out_ = Dense<S>(store, prefix + ".out", in, classes, rng);
  }

  Var forward(Tape<S>& t, Var feature, Rng* dropout_rng) const {
    require(t.val(feature).cols() == kFeatureDim,
            InvalidArgument("classifier: feature must be 1x" +
                            std::to_string(kFeatureDim)));
    Var x = feature;
    for (const auto& l : layers_) {
      x = l.forward_relu(t, x);
      if (dropout_rng && drop_ > 0) {
        const S keep = static_cast<S>(1.0 - drop_);
        Mat<S> mask(1, t.val(x).cols());
        for (Eigen::Index c = 0; c < mask.cols(); ++c)
          mask(0, c) = dropout_rng->uniform() < 1.0 - drop_ ? S(1) : S(0);
        x = ops::dropout(t, x, mask, keep);
      }
    }
    return out_.forward(t, x);
  }

 private:
  double drop_ = 0.0;
  std::vector<Dense<S>> layers_;
  Dense<S> out_;
};

}  // namespace drfer
