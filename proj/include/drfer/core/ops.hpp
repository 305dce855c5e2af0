#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "drfer/core/tape.hpp"

// Differentiable op library. Every op computes its value eagerly and, when
// the tape is recording and some parent needs gradients, registers a
// closure implementing the vector-Jacobian product.

namespace drfer::ops {

template <class S>
Var matmul(Tape<S>& t, Var a, Var b) {
  Mat<S> y = t.val(a) * t.val(b);
  bool need = t.needs_grad(a) || t.needs_grad(b);
  return t.make(std::move(y), need, [a, b](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(a)) t.accum(a, g * t.val(b).transpose());
    if (t.needs_grad(b)) t.accum(b, t.val(a).transpose() * g);
  });
}

template <class S>
Var add(Tape<S>& t, Var a, Var b) {
  Mat<S> y = t.val(a) + t.val(b);
  bool need = t.needs_grad(a) || t.needs_grad(b);
  return t.make(std::move(y), need, [a, b](Tape<S>& t, const Mat<S>& g) {
    t.accum(a, g);
    t.accum(b, g);
  });
}

template <class S>
Var sub(Tape<S>& t, Var a, Var b) {
  Mat<S> y = t.val(a) - t.val(b);
  bool need = t.needs_grad(a) || t.needs_grad(b);
  return t.make(std::move(y), need, [a, b](Tape<S>& t, const Mat<S>& g) {
    t.accum(a, g);
    if (t.needs_grad(b)) t.accum(b, (-g).eval());
  });
}

template <class S>
Var cmul(Tape<S>& t, Var a, Var b) {
  Mat<S> y = t.val(a).cwiseProduct(t.val(b));
  bool need = t.needs_grad(a) || t.needs_grad(b);
  return t.make(std::move(y), need, [a, b](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(a)) t.accum(a, g.cwiseProduct(t.val(b)));
    if (t.needs_grad(b)) t.accum(b, g.cwiseProduct(t.val(a)));
  });
}

template <class S>
Var scale(Tape<S>& t, Var a, S c) {
  Mat<S> y = t.val(a) * c;
  return t.make(std::move(y), t.needs_grad(a), [a, c](Tape<S>& t, const Mat<S>& g) {
    t.accum(a, (g * c).eval());
  });
}

template <class S>
Var add_const(Tape<S>& t, Var a, S c) {
  Mat<S> y = (t.val(a).array() + c).matrix();
  return t.make(std::move(y), t.needs_grad(a),
                [a](Tape<S>& t, const Mat<S>& g) { t.accum(a, g); });
}

// y = x.rowwise() + bias, bias is 1 x C.
template <class S>
Var add_rowvec(Tape<S>& t, Var x, Var bias) {
  Mat<S> y = t.val(x);
  y.rowwise() += t.val(bias).row(0);
  bool need = t.needs_grad(x) || t.needs_grad(bias);
  return t.make(std::move(y), need, [x, bias](Tape<S>& t, const Mat<S>& g) {
    t.accum(x, g);
    if (t.needs_grad(bias)) t.accum(bias, g.colwise().sum().eval());
  });
}

template <class S>
Var sub_rowvec(Tape<S>& t, Var x, Var row) {
  Mat<S> y = t.val(x);
  y.rowwise() -= t.val(row).row(0);
  bool need = t.needs_grad(x) || t.needs_grad(row);
  return t.make(std::move(y), need, [x, row](Tape<S>& t, const Mat<S>& g) {
    t.accum(x, g);
    if (t.needs_grad(row)) t.accum(row, (-g.colwise().sum()).eval());
  });
}

template <class S>
Var relu(Tape<S>& t, Var x) {
  Mat<S> y = t.val(x).cwiseMax(S(0));
  return t.make(std::move(y), t.needs_grad(x), [x](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gx = g.cwiseProduct(
        (t.val(x).array() > S(0)).template cast<S>().matrix());
    t.accum(x, gx);
  });
}

template <class S>
Var tanh_act(Tape<S>& t, Var x) {
  Mat<S> y = t.val(x).array().tanh().matrix();
  // Recomputing tanh in the closure avoids holding a second copy.
  return t.make(std::move(y), t.needs_grad(x), [x](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gx = (g.array() * (1 - t.val(x).array().tanh().square())).matrix();
    t.accum(x, gx);
  });
}

template <class S>
Var square(Tape<S>& t, Var x) {
  Mat<S> y = t.val(x).array().square().matrix();
  return t.make(std::move(y), t.needs_grad(x), [x](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gx = (g.array() * 2 * t.val(x).array()).matrix();
    t.accum(x, gx);
  });
}

template <class S>
Var sqrt_op(Tape<S>& t, Var x) {
  Mat<S> y = t.val(x).array().sqrt().matrix();
  return t.make(std::move(y), t.needs_grad(x), [x](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gx = (g.array() * S(0.5) / t.val(x).array().sqrt()).matrix();
    t.accum(x, gx);
  });
}

template <class S>
Var log_op(Tape<S>& t, Var x) {
  Mat<S> y = t.val(x).array().log().matrix();
  return t.make(std::move(y), t.needs_grad(x), [x](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gx = (g.array() / t.val(x).array()).matrix();
    t.accum(x, gx);
  });
}

template <class S>
Var recip(Tape<S>& t, Var x) {
  Mat<S> y = t.val(x).array().inverse().matrix();
  return t.make(std::move(y), t.needs_grad(x), [x](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gx = (-g.array() / t.val(x).array().square()).matrix();
    t.accum(x, gx);
  });
}

// max(x, c) elementwise; gradient flows only where x > c.
template <class S>
Var clamp_min(Tape<S>& t, Var x, S c) {
  Mat<S> y = t.val(x).cwiseMax(c);
  return t.make(std::move(y), t.needs_grad(x), [x, c](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gx = g.cwiseProduct(
        (t.val(x).array() > c).template cast<S>().matrix());
    t.accum(x, gx);
  });
}

template <class S>
Var concat_cols(Tape<S>& t, const std::vector<Var>& parts) {
  Eigen::Index rows = t.val(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) cols += t.val(p).cols();
  Mat<S> y(rows, cols);
  Eigen::Index at = 0;
  bool need = false;
  for (Var p : parts) {
    y.middleCols(at, t.val(p).cols()) = t.val(p);
    at += t.val(p).cols();
    need = need || t.needs_grad(p);
  }
  return t.make(std::move(y), need, [parts](Tape<S>& t, const Mat<S>& g) {
    Eigen::Index at = 0;
    for (Var p : parts) {
      Eigen::Index w = t.val(p).cols();
      if (t.needs_grad(p)) t.accum(p, g.middleCols(at, w).eval());
      at += w;
    }
  });
}

template <class S>
Var concat_rows(Tape<S>& t, const std::vector<Var>& parts) {
  Eigen::Index cols = t.val(parts[0]).cols();
  Eigen::Index rows = 0;
  for (Var p : parts) rows += t.val(p).rows();
  Mat<S> y(rows, cols);
  Eigen::Index at = 0;
  bool need = false;
  for (Var p : parts) {
    y.middleRows(at, t.val(p).rows()) = t.val(p);
    at += t.val(p).rows();
    need = need || t.needs_grad(p);
  }
  return t.make(std::move(y), need, [parts](Tape<S>& t, const Mat<S>& g) {
    Eigen::Index at = 0;
    for (Var p : parts) {
      Eigen::Index h = t.val(p).rows();
      if (t.needs_grad(p)) t.accum(p, g.middleRows(at, h).eval());
      at += h;
    }
  });
}

template <class S>
Var gather_rows(Tape<S>& t, Var x, std::vector<int> idx) {
  const Mat<S>& v = t.val(x);
  Mat<S> y(static_cast<Eigen::Index>(idx.size()), v.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) y.row(i) = v.row(idx[i]);
  return t.make(std::move(y), t.needs_grad(x),
                [x, idx = std::move(idx)](Tape<S>& t, const Mat<S>& g) {
                  Mat<S> gx = Mat<S>::Zero(t.val(x).rows(), t.val(x).cols());
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    gx.row(idx[i]) += g.row(i);
                  t.accum(x, gx);
                });
}

// Each input row repeated `times` consecutive output rows.
template <class S>
Var repeat_rows(Tape<S>& t, Var x, int times) {
  const Mat<S>& v = t.val(x);
  Mat<S> y(v.rows() * times, v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (int k = 0; k < times; ++k) y.row(i * times + k) = v.row(i);
  return t.make(std::move(y), t.needs_grad(x),
                [x, times](Tape<S>& t, const Mat<S>& g) {
                  const Mat<S>& v = t.val(x);
                  Mat<S> gx = Mat<S>::Zero(v.rows(), v.cols());
                  for (Eigen::Index i = 0; i < v.rows(); ++i)
                    for (int k = 0; k < times; ++k) gx.row(i) += g.row(i * times + k);
                  t.accum(x, gx);
                });
}

// Max over consecutive row groups of equal size. Ties go to the earliest
// row, which keeps the backward pass deterministic.
template <class S>
Var group_max(Tape<S>& t, Var x, int group_size) {
  const Mat<S>& v = t.val(x);
  const Eigen::Index groups = v.rows() / group_size;
  Mat<S> y(groups, v.cols());
  std::vector<int> arg(static_cast<std::size_t>(groups * v.cols()));
  for (Eigen::Index gi = 0; gi < groups; ++gi) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      S best = v(gi * group_size, c);
      int bi = 0;
      for (int r = 1; r < group_size; ++r) {
        S cur = v(gi * group_size + r, c);
        if (cur > best) {
          best = cur;
          bi = r;
        }
      }
      y(gi, c) = best;
      arg[gi * v.cols() + c] = bi;
    }
  }
  return t.make(std::move(y), t.needs_grad(x),
                [x, group_size, arg = std::move(arg)](Tape<S>& t, const Mat<S>& g) {
                  const Mat<S>& v = t.val(x);
                  Mat<S> gx = Mat<S>::Zero(v.rows(), v.cols());
                  for (Eigen::Index gi = 0; gi < g.rows(); ++gi)
                    for (Eigen::Index c = 0; c < g.cols(); ++c)
                      gx(gi * group_size + arg[gi * g.cols() + c], c) += g(gi, c);
                  t.accum(x, gx);
                });
}

template <class S>
Var col_mean(Tape<S>& t, Var x) {
  const Mat<S>& v = t.val(x);
  Mat<S> y = v.colwise().mean();
  const S inv = S(1) / static_cast<S>(v.rows());
  return t.make(std::move(y), t.needs_grad(x),
                [x, inv](Tape<S>& t, const Mat<S>& g) {
                  const Mat<S>& v = t.val(x);
                  Mat<S> gx(v.rows(), v.cols());
                  gx = (g * inv).replicate(v.rows(), 1);
                  t.accum(x, gx);
                });
}

template <class S>
Var sum_all(Tape<S>& t, Var x) {
  Mat<S> y(1, 1);
  y(0, 0) = t.val(x).sum();
  return t.make(std::move(y), t.needs_grad(x), [x](Tape<S>& t, const Mat<S>& g) {
    t.accum(x, Mat<S>::Constant(t.val(x).rows(), t.val(x).cols(), g(0, 0)));
  });
}

template <class S>
Var mean_all(Tape<S>& t, Var x) {
  const Mat<S>& v = t.val(x);
  Mat<S> y(1, 1);
  y(0, 0) = v.sum() / static_cast<S>(v.size());
  return t.make(std::move(y), t.needs_grad(x), [x](Tape<S>& t, const Mat<S>& g) {
    const Mat<S>& v = t.val(x);
    t.accum(x, Mat<S>::Constant(v.rows(), v.cols(),
                                g(0, 0) / static_cast<S>(v.size())));
  });
}

template <class S>
Var max_all(Tape<S>& t, Var x) {
  const Mat<S>& v = t.val(x);
  Eigen::Index r = 0, c = 0;
  S m = v.maxCoeff(&r, &c);
  Mat<S> y(1, 1);
  y(0, 0) = m;
  return t.make(std::move(y), t.needs_grad(x), [x, r, c](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gx = Mat<S>::Zero(t.val(x).rows(), t.val(x).cols());
    gx(r, c) = g(0, 0);
    t.accum(x, gx);
  });
}

template <class S>
Var row_sqnorm(Tape<S>& t, Var x) {
  Mat<S> y = t.val(x).rowwise().squaredNorm();
  return t.make(std::move(y), t.needs_grad(x), [x](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gx = 2 * t.val(x);
    gx.array().colwise() *= g.col(0).array();
    t.accum(x, gx);
  });
}

// y = x * s where s is a 1x1 node.
template <class S>
Var mul_scalar(Tape<S>& t, Var x, Var s) {
  Mat<S> y = t.val(x) * t.val(s)(0, 0);
  bool need = t.needs_grad(x) || t.needs_grad(s);
  return t.make(std::move(y), need, [x, s](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(x)) t.accum(x, (g * t.val(s)(0, 0)).eval());
    if (t.needs_grad(s)) {
      Mat<S> gs(1, 1);
      gs(0, 0) = g.cwiseProduct(t.val(x)).sum();
      t.accum(s, gs);
    }
  });
}

// Numerically stable -log softmax(logits)[label]; logits is 1 x C.
template <class S>
Var softmax_ce(Tape<S>& t, Var logits, int label) {
  const Mat<S>& z = t.val(logits);
  const S zmax = z.maxCoeff();
  const S lse = zmax + std::log((z.array() - zmax).exp().sum());
  Mat<S> y(1, 1);
  y(0, 0) = lse - z(0, label);
  return t.make(std::move(y), t.needs_grad(logits),
                [logits, label, lse](Tape<S>& t, const Mat<S>& g) {
                  Mat<S> p = (t.val(logits).array() - lse).exp().matrix();
                  p(0, label) -= S(1);
                  t.accum(logits, (p * g(0, 0)).eval());
                });
}

// All pairwise squared Euclidean distances between rows of f (B x D).
template <class S>
Var pairwise_sqdist(Tape<S>& t, Var f) {
  const Mat<S>& v = t.val(f);
  Vec<S> n = v.rowwise().squaredNorm();
  Mat<S> d = (-2 * (v * v.transpose())).eval();
  d.colwise() += n;
  d.rowwise() += n.transpose();
  d = d.cwiseMax(S(0));
  return t.make(std::move(d), t.needs_grad(f), [f](Tape<S>& t, const Mat<S>& g) {
    const Mat<S>& v = t.val(f);
    Mat<S> m = g + g.transpose();
    Vec<S> rowsum = m.rowwise().sum();
    Mat<S> gx = 2 * (rowsum.asDiagonal() * v - m * v);
    t.accum(f, gx);
  });
}

// Picks entries (r, c) of a matrix into a k x 1 column.
template <class S>
Var select_coeffs(Tape<S>& t, Var m, std::vector<std::pair<int, int>> at) {
  const Mat<S>& v = t.val(m);
  Mat<S> y(static_cast<Eigen::Index>(at.size()), 1);
  for (std::size_t i = 0; i < at.size(); ++i) y(i, 0) = v(at[i].first, at[i].second);
  return t.make(std::move(y), t.needs_grad(m),
                [m, at = std::move(at)](Tape<S>& t, const Mat<S>& g) {
                  Mat<S> gx = Mat<S>::Zero(t.val(m).rows(), t.val(m).cols());
                  for (std::size_t i = 0; i < at.size(); ++i)
                    gx(at[i].first, at[i].second) += g(i, 0);
                  t.accum(m, gx);
                });
}

// Symmetric Chamfer distance between two point sets (rows are points):
// mean over a of min_b |a-b|^2 plus mean over b of min_a |b-a|^2.
// Nearest-neighbor ties resolve to the lowest index.
template <class S>
Var chamfer(Tape<S>& t, Var a, Var b) {
  const Mat<S>& pa = t.val(a);
  const Mat<S>& pb = t.val(b);
  const Eigen::Index n = pa.rows(), m = pb.rows();
  Vec<S> na = pa.rowwise().squaredNorm();
  Vec<S> nb = pb.rowwise().squaredNorm();
  Mat<S> d = (-2 * (pa * pb.transpose())).eval();
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  // The quadratic form only locates neighbors; distances are recomputed
  // directly so coinciding sets give exactly zero.
  std::vector<int> nn_a(n), nn_b(m);
  S sum_a = 0, sum_b = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index j = 0;
    S best = d(i, 0);
    for (Eigen::Index k = 1; k < m; ++k)
      if (d(i, k) < best) {
        best = d(i, k);
        j = k;
      }
    nn_a[i] = static_cast<int>(j);
    sum_a += (pa.row(i) - pb.row(j)).squaredNorm();
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index i = 0;
    S best = d(0, j);
    for (Eigen::Index k = 1; k < n; ++k)
      if (d(k, j) < best) {
        best = d(k, j);
        i = k;
      }
    nn_b[j] = static_cast<int>(i);
    sum_b += (pa.row(nn_b[j]) - pb.row(j)).squaredNorm();
  }
  Mat<S> y(1, 1);
  y(0, 0) = sum_a / static_cast<S>(n) + sum_b / static_cast<S>(m);
  bool need = t.needs_grad(a) || t.needs_grad(b);
  return t.make(
      std::move(y), need,
      [a, b, nn_a = std::move(nn_a), nn_b = std::move(nn_b)](Tape<S>& t,
                                                             const Mat<S>& g) {
        const Mat<S>& pa = t.val(a);
        const Mat<S>& pb = t.val(b);
        const S gs = g(0, 0);
        const S wa = gs * S(2) / static_cast<S>(pa.rows());
        const S wb = gs * S(2) / static_cast<S>(pb.rows());
        if (t.needs_grad(a)) {
          Mat<S> ga = Mat<S>::Zero(pa.rows(), pa.cols());
          for (Eigen::Index i = 0; i < pa.rows(); ++i)
            ga.row(i) += wa * (pa.row(i) - pb.row(nn_a[i]));
          for (Eigen::Index j = 0; j < pb.rows(); ++j)
            ga.row(nn_b[j]) += wb * (pa.row(nn_b[j]) - pb.row(j));
          t.accum(a, ga);
        }
        if (t.needs_grad(b)) {
          Mat<S> gb = Mat<S>::Zero(pb.rows(), pb.cols());
          for (Eigen::Index i = 0; i < pa.rows(); ++i)
            gb.row(nn_a[i]) += wa * (pb.row(nn_a[i]) - pa.row(i));
          for (Eigen::Index j = 0; j < pb.rows(); ++j)
            gb.row(j) += wb * (pb.row(j) - pa.row(nn_b[j]));
          t.accum(b, gb);
        }
      });
}

// Inverted dropout with a caller-supplied keep mask (1 = keep). Identity at
// eval time is the caller's responsibility (simply skip the op).
template <class S>
Var dropout(Tape<S>& t, Var x, const Mat<S>& keep_mask, S keep_prob) {
  const S inv = S(1) / keep_prob;
  Mat<S> y = t.val(x).cwiseProduct(keep_mask) * inv;
  return t.make(std::move(y), t.needs_grad(x),
                [x, keep_mask, inv](Tape<S>& t, const Mat<S>& g) {
                  t.accum(x, (g.cwiseProduct(keep_mask) * inv).eval());
                });
}

// Reinterprets a 1 x 3N row as an N x 3 point matrix (x, y, z interleaved).
template <class S>
Var rows_to_points(Tape<S>& t, Var x, int n_points) {
  const Mat<S>& v = t.val(x);
  Mat<S> y(n_points, 3);
  for (int i = 0; i < n_points; ++i)
    for (int c = 0; c < 3; ++c) y(i, c) = v(0, 3 * i + c);
  return t.make(std::move(y), t.needs_grad(x),
                [x, n_points](Tape<S>& t, const Mat<S>& g) {
                  Mat<S> gx(1, 3 * n_points);
                  for (int i = 0; i < n_points; ++i)
                    for (int c = 0; c < 3; ++c) gx(0, 3 * i + c) = g(i, c);
                  t.accum(x, gx);
                });
}

}  // namespace drfer::ops
