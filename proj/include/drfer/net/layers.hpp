#pragma once

#include <string>

#include "drfer/core/ops.hpp"
#include "drfer/core/params.hpp"
#include "drfer/core/tape.hpp"

namespace drfer {

// Fully-connected layer; owns two ids in the shared store. Weights are
// Kaiming-initialized, biases start at zero.
template <class S>
struct Dense {
  int w = -1;
  int b = -1;
  int in = 0;
  int out = 0;

  Dense() = default;
  Dense(ParamStore<S>& store, const std::string& name, int in_dim, int out_dim,
        Rng& rng)
      : in(in_dim), out(out_dim) {
    w = store.add(name + ".w", in_dim, out_dim);
    b = store.add(name + ".b", 1, out_dim);
    store.init_kaiming(w, rng);
  }

  Var forward(Tape<S>& t, Var x) const {
    return ops::add_rowvec(t, ops::matmul(t, x, t.param(w)), t.param(b));
  }

  Var forward_relu(Tape<S>& t, Var x) const {
    return ops::relu(t, forward(t, x));
  }
};

}  // namespace drfer
