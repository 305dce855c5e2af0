#pragma once

#include <vector>

#include "drfer/core/params.hpp"

namespace drfer {

// Adam over a subset of a parameter store (one stage's trainable group).
// Moments are kept per managed tensor; step() only touches tensors whose
// gradient actually arrived.
template <class S>
class Adam {
 public:
  Adam(ParamStore<S>& store, std::vector<int> ids, double lr, double beta1,
       double beta2, double eps)
      : store_(&store),
        ids_(std::move(ids)),
        lr_(lr),
        b1_(beta1),
        b2_(beta2),
        eps_(eps) {
    m_.reserve(ids_.size());
    v_.reserve(ids_.size());
    for (int id : ids_) {
      const Mat<S>& p = store.value(id);
      m_.push_back(Mat<S>::Zero(p.rows(), p.cols()));
      v_.push_back(Mat<S>::Zero(p.rows(), p.cols()));
    }
  }

  void step(const GradSink<S>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t k = 0; k < ids_.size(); ++k) {
      const int id = ids_[k];
      if (!grads.used(id)) continue;
      const Mat<S>& g = grads.grad(id);
      m_[k] = static_cast<S>(b1_) * m_[k] + static_cast<S>(1.0 - b1_) * g;
      v_[k] = static_cast<S>(b2_) * v_[k] +
              static_cast<S>(1.0 - b2_) * g.cwiseProduct(g);
      Mat<S> mhat = m_[k] / static_cast<S>(bc1);
      Mat<S> vhat = v_[k] / static_cast<S>(bc2);
      store_->value(id).array() -=
          static_cast<S>(lr_) * mhat.array() /
          (vhat.array().sqrt() + static_cast<S>(eps_));
    }
  }

  const std::vector<int>& ids() const { return ids_; }

 private:
  ParamStore<S>* store_;
  std::vector<int> ids_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

}  // namespace drfer
