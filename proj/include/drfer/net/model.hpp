#pragma once

#include <string>
#include <utility>
#include <vector>

#include "drfer/net/fusion.hpp"

namespace drfer {

enum class Branch { expression, identity };

template <class S>
struct BranchOut {
  Var feature;  // 1 x kFeatureDim
  Var recon;    // n_out x 3, in the input cloud's frame
};

// The whole model: two encoder/decoder branches, two classifier heads, and
// the fusion module, all over one parameter store. Component parameter-id
// ranges are tracked so the trainer can freeze/update/reinit per stage.
template <class S>
class DrferModel {
 public:
  explicit DrferModel(NetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    validate(cfg_);
    Rng root(seed);
    auto track = [this](std::vector<int>& group, auto build) {
      const int first = store_.size();
      build();
      for (int i = first; i < store_.size(); ++i) group.push_back(i);
    };
    Rng r_ee = root.derive(1), r_ed = root.derive(2), r_ie = root.derive(3),
        r_id = root.derive(4), r_he = root.derive(5), r_hi = root.derive(6),
        r_fu = root.derive(7);
    track(g_exp_enc_, [&] { exp_enc_ = Encoder<S>(store_, "exp.enc", cfg_, r_ee); });
    track(g_exp_dec_, [&] { exp_dec_ = Decoder<S>(store_, "exp.dec", cfg_, r_ed); });
    track(g_id_enc_, [&] { id_enc_ = Encoder<S>(store_, "id.enc", cfg_, r_ie); });
    track(g_id_dec_, [&] { id_dec_ = Decoder<S>(store_, "id.dec", cfg_, r_id); });
    track(g_exp_head_,
          [&] { exp_head_ = ClassifierHead<S>(store_, "exp.head",
                                              cfg_.num_expressions, cfg_, r_he); });
    track(g_id_head_,
          [&] { id_head_ = ClassifierHead<S>(store_, "id.head",
                                             cfg_.num_subjects, cfg_, r_hi); });
    track(g_fusion_, [&] { fusion_ = Fusion<S>(store_, "fusion", cfg_, r_fu); });
  }

  const NetConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }

  EncodeOut<S> encode(Tape<S>& t, Branch br, Var cloud) const {
    return enc(br).forward(t, cloud);
  }

  Var decode(Tape<S>& t, Branch br, Var feature,
             const FrameVars* frame = nullptr) const {
    return dec(br).forward(t, feature, frame);
  }

  BranchOut<S> branch_forward(Tape<S>& t, Branch br, Var cloud) const {
    EncodeOut<S> e = enc(br).forward(t, cloud);
    return {e.global, dec(br).forward(t, e.global, &e.frame)};
  }

  // Feeds an already-reconstructed face through the *other* branch; the
  // composition of two of these is the cross-over path.
  Var reencode_through(Tape<S>& t, Branch br, Var face) const {
    EncodeOut<S> e = enc(br).forward(t, face);
    return dec(br).forward(t, e.global, &e.frame);
  }

  // F_exp_id = Phi_id(Phi_exp(cloud)), F_id_exp = Phi_exp(Phi_id(cloud)).
  std::pair<Var, Var> crossover_forward(Tape<S>& t, Var cloud) const {
    require(cfg_.n_out == cfg_.input_points,
            ConfigError("crossover needs decoder output size == encoder input "
                        "size"));
    BranchOut<S> e = branch_forward(t, Branch::expression, cloud);
    BranchOut<S> i = branch_forward(t, Branch::identity, cloud);
    return {reencode_through(t, Branch::identity, e.recon),
            reencode_through(t, Branch::expression, i.recon)};
  }

  Var fuse(Tape<S>& t, Var face_exp, Var face_id) const {
    return fusion_.forward(t, face_exp, face_id);
  }

  Var classify(Tape<S>& t, Branch br, Var feature, Rng* dropout_rng) const {
    return (br == Branch::expression ? exp_head_ : id_head_)
        .forward(t, feature, dropout_rng);
  }

  void reinit_decoders(Rng& rng) {
    Rng re = rng.derive(1), ri = rng.derive(2);
    exp_dec_.reinit(store_, re);
    id_dec_.reinit(store_, ri);
  }

  // Parameter groups for staged optimization.
  std::vector<int> group_branch(Branch br) const {
    std::vector<int> ids = br == Branch::expression ? g_exp_enc_ : g_id_enc_;
    const auto& d = br == Branch::expression ? g_exp_dec_ : g_id_dec_;
    ids.insert(ids.end(), d.begin(), d.end());
    return ids;
  }
  std::vector<int> group_encoder(Branch br) const {
    return br == Branch::expression ? g_exp_enc_ : g_id_enc_;
  }
  std::vector<int> group_head(Branch br) const {
    return br == Branch::expression ? g_exp_head_ : g_id_head_;
  }
  std::vector<int> group_fusion() const { return g_fusion_; }
  std::vector<int> group_all() const {
    std::vector<int> ids(static_cast<std::size_t>(store_.size()));
    for (int i = 0; i < store_.size(); ++i) ids[static_cast<std::size_t>(i)] = i;
    return ids;
  }

 private:
  const Encoder<S>& enc(Branch br) const {
    return br == Branch::expression ? exp_enc_ : id_enc_;
  }
  const Decoder<S>& dec(Branch br) const {
    return br == Branch::expression ? exp_dec_ : id_dec_;
  }

  NetConfig cfg_;
  ParamStore<S> store_;
  Encoder<S> exp_enc_, id_enc_;
  Decoder<S> exp_dec_, id_dec_;
  ClassifierHead<S> exp_head_, id_head_;
  Fusion<S> fusion_;
  std::vector<int> g_exp_enc_, g_exp_dec_, g_id_enc_, g_id_dec_, g_exp_head_,
      g_id_head_, g_fusion_;
};

}  // namespace drfer
