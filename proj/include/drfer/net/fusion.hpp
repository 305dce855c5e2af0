#pragma once

#include <string>
#include <vector>

#include "drfer/net/decoder.hpp"
#include "drfer/net/encoder.hpp"

namespace drfer {

// Fusion module: one stem per role (expression donor / identity donor), a
// fully-connected trunk over the concatenated globals, and per-level skip
// taps feeding each trunk depth with both stems' pooled features.
template <class S>
class Fusion {
 public:
  Fusion() = default;
  Fusion(ParamStore<S>& store, const std::string& prefix, const NetConfig& cfg,
         Rng& rng)
      : n_out_(cfg.n_out),
        stem_exp_(store, prefix + ".exp", cfg, rng),
        stem_id_(store, prefix + ".id", cfg, rng) {
    int in = 2 * kFeatureDim;
    for (std::size_t i = 0; i < cfg.trunk_widths.size(); ++i) {
      in += 2 * cfg.levels[i].width;  // skip tap at matching depth
      trunk_.emplace_back(store, prefix + ".t" + std::to_string(i), in,
                          cfg.trunk_widths[i], rng);
      in = cfg.trunk_widths[i];
    }
    out_ = Dense<S>(store, prefix + ".out", in, cfg.n_out * 3, rng);
  }

  Var forward(Tape<S>& t, Var face_exp, Var face_id) const {
    EncodeOut<S> e = stem_exp_.forward(t, face_exp);
    EncodeOut<S> i = stem_id_.forward(t, face_id);
    Var x = ops::concat_cols(t, {e.global, i.global});
    for (std::size_t l = 0; l < trunk_.size(); ++l) {
      x = ops::concat_cols(t, {x, e.pooled[l], i.pooled[l]});
      x = trunk_[l].forward_relu(t, x);
    }
    Var pts = ops::rows_to_points(t, out_.forward(t, x), n_out_);
    // The identity donor defines the output frame: the fused face should sit
    // where that subject's geometry does.
    return ops::add_rowvec(t, ops::mul_scalar(t, pts, i.frame.radius),
                           i.frame.center);
  }

 private:
  int n_out_ = 0;
  Encoder<S> stem_exp_, stem_id_;
  std::vector<Dense<S>> trunk_;
  Dense<S> out_;
};

}  // namespace drfer
