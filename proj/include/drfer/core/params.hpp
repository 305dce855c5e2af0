#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "drfer/common.hpp"
#include "drfer/core/tensor.hpp"
#include "drfer/rng.hpp"

namespace drfer {

// Named parameter tensors for one model. Registration order is the identity
// of a parameter (checkpoints also carry names); ids are dense indices so
// gradient sinks and optimizer state can be plain vectors.
template <class S>
class ParamStore {
 public:
  int add(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    values_.emplace_back(Mat<S>::Zero(rows, cols));
    return static_cast<int>(names_.size()) - 1;
  }

  int size() const { return static_cast<int>(values_.size()); }
  Mat<S>& value(int id) { return values_[id]; }
  const Mat<S>& value(int id) const { return values_[id]; }
  const std::string& name(int id) const { return names_[id]; }
  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  // He-style fan-in init for weight matrices feeding a rectifier.
  void init_kaiming(int id, Rng& rng) {
    Mat<S>& w = values_[id];
    const double s = std::sqrt(2.0 / static_cast<double>(w.rows()));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        w(i, j) = static_cast<S>(rng.normal() * s);
  }

  void init_uniform(int id, Rng& rng, double lo, double hi) {
    Mat<S>& w = values_[id];
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        w(i, j) = static_cast<S>(rng.uniform(lo, hi));
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat<S>> values_;
  std::unordered_map<std::string, int> index_;
};

// Gradient accumulator aligned with a ParamStore. Trainer workers own one
// sink each; sinks are merged in slot order so results do not depend on
// thread scheduling.
template <class S>
class GradSink {
 public:
  explicit GradSink(const ParamStore<S>& store) : store_(&store) {
    grads_.resize(store.size());
    used_.assign(store.size(), 0);
  }

  void accumulate(int id, const Mat<S>& g) {
    if (!used_[id]) {
      grads_[id] = g;
      used_[id] = 1;
    } else {
      grads_[id] += g;
    }
  }

  void merge(const GradSink& other) {
    for (std::size_t i = 0; i < grads_.size(); ++i) {
      if (!other.used_[i]) continue;
      accumulate(static_cast<int>(i), other.grads_[i]);
    }
  }

  void scale(S factor) {
    for (std::size_t i = 0; i < grads_.size(); ++i)
      if (used_[i]) grads_[i] *= factor;
  }

  void reset() {
    used_.assign(grads_.size(), 0);
    for (auto& g : grads_) g.resize(0, 0);
  }

  bool used(int id) const { return used_[id] != 0; }
  const Mat<S>& grad(int id) const { return grads_[id]; }
  int size() const { return static_cast<int>(grads_.size()); }

 private:
  const ParamStore<S>* store_;
  std::vector<Mat<S>> grads_;
  std::vector<char> used_;
};

}  // namespace drfer
