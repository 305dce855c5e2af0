#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "drfer/common.hpp"
#include "drfer/core/params.hpp"
#include "drfer/core/tensor.hpp"

namespace drfer {

// Handle into a Tape. Only meaningful for the tape that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape over dense matrices.
//
// One tape holds the computation for one sample (or one batch-level loss).
// Parameters live in a ParamStore shared across tapes; a backward pass
// deposits their gradients into a GradSink so concurrent workers never
// touch shared state. With recording off the tape only stores values,
// which is the inference path.
template <class S>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape<S>&, const Mat<S>&)>;

  explicit Tape(const ParamStore<S>* store = nullptr, bool recording = true)
      : store_(store), recording_(recording) {
    nodes_.reserve(128);
  }

  bool recording() const { return recording_; }

  Var leaf(Mat<S> value, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = recording_ && requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var param(int param_id) {
    if (!store_) throw ConfigError("tape has no parameter store");
    Node n;
    n.external = &store_->value(param_id);
    n.param = param_id;
    n.requires_grad = recording_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  // Registers a computed node. `fn` receives the upstream gradient and is
  // responsible for calling accum() on the parents it was built over.
  Var make(Mat<S> value, bool parents_need_grad, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    if (recording_ && parents_need_grad) {
      n.requires_grad = true;
      n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Mat<S>& val(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }

  S scalar(Var v) const { return val(v)(0, 0); }

  bool needs_grad(Var v) const { return nodes_[v.id].requires_grad; }

  void accum(Var v, const Mat<S>& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  // Runs reverse accumulation from the given seeds. Parameter gradients are
  // deposited into `sink` (if non-null); input-leaf gradients stay on the
  // tape and can be read back with grad().
  void backward(const std::vector<std::pair<Var, Mat<S>>>& seeds,
                GradSink<S>* sink) {
    for (const auto& [v, g] : seeds) accum(v, g);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
    if (sink) {
      for (const auto& n : nodes_) {
        if (n.param >= 0 && n.has_grad) sink->accumulate(n.param, n.grad);
      }
    }
  }

  // Gradient of a leaf (or any node) after backward; empty if untouched.
  const Mat<S>& grad(Var v) const { return nodes_[v.id].grad; }
  bool has_grad(Var v) const { return nodes_[v.id].has_grad; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<S> value;
    const Mat<S>* external = nullptr;
    Mat<S> grad;
    BackwardFn backward;
    int param = -1;
    bool requires_grad = false;
    bool has_grad = false;
  };

  const ParamStore<S>* store_;
  std::vector<Node> nodes_;
  bool recording_;
};

}  // namespace drfer
