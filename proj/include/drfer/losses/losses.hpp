#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "drfer/core/ops.hpp"
#include "drfer/data/dataset.hpp"
#include "drfer/geometry/kernels.hpp"

namespace drfer::losses {

enum class Mining { batch_hard, batch_all };

struct LossConfig {
  double margin = 0.3;
  double lambda = 0.1;
  bool use_triplet = true;
  bool use_cls = true;
  bool use_kl = false;
  bool use_js = false;
  Mining mining = Mining::batch_hard;
};

inline void validate(const LossConfig& c) {
  require(c.margin > 0, InvalidArgument("margin must be positive"));
  require(c.lambda >= 0, InvalidArgument("lambda must be nonnegative"));
  require(!(c.use_kl && c.use_js),
          InvalidArgument("kl and js losses are mutually exclusive"));
  require(!((c.use_kl || c.use_js) && c.use_triplet),
          InvalidArgument("kl/js replace the triplet term; disable use_triplet"));
}

// --------------------------------------------------------------------------
// Plain-double forms, used by evaluation and as oracles for the tape forms.

inline double cross_entropy(const Eigen::RowVectorXd& logits, int label) {
  require(label >= 0 && label < logits.cols(),
          InvalidArgument("cross_entropy: label out of range"));
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(label);
}

inline double triplet_loss(const Eigen::RowVectorXd& a,
                           const Eigen::RowVectorXd& p,
                           const Eigen::RowVectorXd& n, double alpha) {
  require(a.cols() == p.cols() && a.cols() == n.cols(),
          InvalidArgument("triplet_loss: width mismatch"));
  const double v = (a - p).squaredNorm() - (a - n).squaredNorm() + alpha;
  return v > 0 ? v : 0;
}

struct BatchTripletResult {
  double value = 0;
  bool degenerate = false;  // no anchor had both a positive and a negative
};

inline BatchTripletResult batch_triplet(const Matd& features,
                                        const std::vector<int>& labels,
                                        double alpha, Mining mode) {
  const int b = static_cast<int>(features.rows());
  require(b == static_cast<int>(labels.size()),
          InvalidArgument("batch_triplet: label count mismatch"));
  Matd d2(b, b);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      d2(i, j) = (features.row(i) - features.row(j)).squaredNorm();

  double sum = 0;
  int active = 0;
  if (mode == Mining::batch_hard) {
    for (int i = 0; i < b; ++i) {
      double hardest_pos = -1, hardest_neg = -1;
      for (int j = 0; j < b; ++j) {
        if (j == i) continue;
        if (labels[j] == labels[i])
          hardest_pos = std::max(hardest_pos, d2(i, j));
        else
          hardest_neg = hardest_neg < 0 ? d2(i, j) : std::min(hardest_neg, d2(i, j));
      }
      if (hardest_pos < 0 || hardest_neg < 0) continue;
      ++active;
      const double v = hardest_pos - hardest_neg + alpha;
      if (v > 0) sum += v;
    }
    if (active == 0) return {0.0, true};
    return {sum / active, false};
  }
  // batch_all: average over margin-violating triplets
  bool any_triplet = false;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      if (j == i || labels[j] != labels[i]) continue;
      for (int k = 0; k < b; ++k) {
        if (labels[k] == labels[i]) continue;
        any_triplet = true;
        const double v = d2(i, j) - d2(i, k) + alpha;
        if (v > 0) {
          sum += v;
          ++active;
        }
      }
    }
  if (!any_triplet) return {0.0, true};
  return {active ? sum / active : 0.0, false};
}

enum class ReconKind { exp, id, dis, ori };

// Target resolution for recon_loss; which fields matter depends on the kind.
struct ReconTargets {
  const MeanFaceTable* table = nullptr;  // exp, id, dis
  std::vector<int> expressions;          // exp: class of each output
  std::vector<int> identities;           // id: subject of each output
  std::vector<PointCloud> second;        // dis: the second cross-over stream
  std::vector<PointCloud> originals;     // ori: ground-truth scans
};

inline double recon_loss(ReconKind kind, const std::vector<PointCloud>& outputs,
                         const ReconTargets& t) {
  require(!outputs.empty(), InvalidArgument("recon_loss: empty batch"));
  const std::size_t n = outputs.size();
  auto mean_entry = [&](const std::map<int, PointCloud>& m, int key,
                        const char* what) -> const PointCloud& {
    auto it = m.find(key);
    if (it == m.end())
      throw IncompleteData(std::string("recon_loss: no mean face for ") + what +
                           " " + std::to_string(key));
    return it->second;
  };
  double sum = 0;
  switch (kind) {
    case ReconKind::exp:
      require(t.table && t.expressions.size() == n,
              InvalidArgument("recon_loss(exp): needs table + expressions"));
      for (std::size_t i = 0; i < n; ++i)
        sum += chamfer_distance(
            outputs[i],
            mean_entry(t.table->per_expression, t.expressions[i], "expression"));
      break;
    case ReconKind::id:
      require(t.table && t.identities.size() == n,
              InvalidArgument("recon_loss(id): needs table + identities"));
      for (std::size_t i = 0; i < n; ++i)
        sum += chamfer_distance(outputs[i],
                                mean_entry(t.table->per_identity_neutral,
                                           t.identities[i], "subject"));
      break;
    case ReconKind::dis:
      require(t.table && t.second.size() == n,
              InvalidArgument("recon_loss(dis): needs table + second stream"));
      for (std::size_t i = 0; i < n; ++i)
        sum += chamfer_distance(outputs[i], t.table->mean_neutral) +
               chamfer_distance(t.second[i], t.table->mean_neutral);
      break;
    case ReconKind::ori:
      require(t.originals.size() == n,
              InvalidArgument("recon_loss(ori): needs originals"));
      for (std::size_t i = 0; i < n; ++i)
        sum += chamfer_distance(outputs[i], t.originals[i]);
      break;
  }
  return sum / static_cast<double>(n);
}

enum class Stage { s1exp, s1id, s1fus, s2exp, s2id, s3 };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::s1exp: return "1exp";
    case Stage::s1id: return "1id";
    case Stage::s1fus: return "1fus";
    case Stage::s2exp: return "2exp";
    case Stage::s2id: return "2id";
    case Stage::s3: return "3";
  }
  return "?";
}

struct StageLoss {
  double total = 0;
  std::vector<std::pair<std::string, double>> terms;  // raw part values
};

// Combines already-computed named parts into a stage total. The metric-
// learning slot is the triplet term by default; kl/js substitute for it when
// toggled. rec_ori enters stage 3 scaled by lambda.
inline StageLoss stage_loss(Stage stage,
                            const std::map<std::string, double>& parts,
                            const LossConfig& cfg) {
  validate(cfg);
  StageLoss out;
  auto take = [&](const std::string& name, double weight) {
    auto it = parts.find(name);
    require(it != parts.end(),
            InvalidArgument("stage_loss: missing part '" + name + "' for stage " +
                            stage_name(stage)));
    out.terms.emplace_back(name, it->second);
    out.total += weight * it->second;
  };
  auto take_metric = [&] {
    if (cfg.use_kl)
      take("kl", 1);
    else if (cfg.use_js)
      take("js", 1);
    else if (cfg.use_triplet)
      take("tri", 1);
  };
  switch (stage) {
    // Stage-1 classifier losses are the whole objective there, so the
    // use_cls toggle (an ablation of the *auxiliary* terms) leaves them alone.
    case Stage::s1exp:
      take("cls_exp", 1);
      break;
    case Stage::s1id:
      take("cls_id", 1);
      break;
    case Stage::s1fus:
      take("rec_ori", 1);
      break;
    case Stage::s2exp:
      take("rec_exp", 1);
      take_metric();
      if (cfg.use_cls) take("cls_exp", 1);
      break;
    case Stage::s2id:
      take("rec_id", 1);
      break;
    case Stage::s3:
      if (cfg.use_cls) take("cls_exp", 1);
      take_metric();
      take("rec_exp", 1);
      take("rec_id", 1);
      take("rec_dis", 1);
      take("rec_ori", cfg.lambda);
      break;
  }
  return out;
}

struct DistLoss {
  double value = 0;
  bool floored = false;  // some dimension's variance hit the epsilon floor
};

enum class DistKind { kl, js };

inline constexpr double kVarFloor = 1e-8;

// Divergence between the batch's per-dimension Gaussian fit (biased moments)
// and the standard normal. js is the symmetrized KL (Jeffreys/2); the true
// Jensen-Shannon divergence has no closed form for Gaussians.
inline DistLoss distribution_loss(DistKind kind, const Matd& batch) {
  require(batch.rows() >= 2, InvalidArgument("distribution_loss: batch < 2"));
  DistLoss out;
  const Eigen::RowVectorXd mu = batch.colwise().mean();
  Eigen::RowVectorXd var =
      (batch.rowwise() - mu).array().square().colwise().mean();
  for (Eigen::Index j = 0; j < var.cols(); ++j)
    if (var(j) < kVarFloor) {
      var(j) = kVarFloor;
      out.floored = true;
    }
  for (Eigen::Index j = 0; j < var.cols(); ++j) {
    const double v = var(j), m2 = mu(j) * mu(j);
    const double kl_pq = 0.5 * (v + m2 - 1.0 - std::log(v));
    if (kind == DistKind::kl) {
      out.value += kl_pq;
    } else {
      const double kl_qp = 0.5 * (std::log(v) + (1.0 + m2) / v - 1.0);
      out.value += 0.5 * (kl_pq + kl_qp);
    }
  }
  return out;
}

// --------------------------------------------------------------------------
// Tape forms for training. Mining/selection decisions are made on values;
// gradients flow through the selected distances (standard subgradient).

template <class S>
Var triplet(Tape<S>& t, Var a, Var p, Var n, double alpha) {
  require(t.val(a).cols() == t.val(p).cols() &&
              t.val(a).cols() == t.val(n).cols(),
          InvalidArgument("triplet: width mismatch"));
  Var dap = ops::sum_all(t, ops::square(t, ops::sub(t, a, p)));
  Var dan = ops::sum_all(t, ops::square(t, ops::sub(t, a, n)));
  return ops::relu(t, ops::add_const(t, ops::sub(t, dap, dan), S(alpha)));
}

template <class S>
struct BatchTripletVar {
  Var loss;
  bool degenerate = false;
};

template <class S>
BatchTripletVar<S> batch_triplet(Tape<S>& t, const std::vector<Var>& features,
                                 const std::vector<int>& labels, double alpha,
                                 Mining mode) {
  const int b = static_cast<int>(features.size());
  require(b == static_cast<int>(labels.size()),
          InvalidArgument("batch_triplet: label count mismatch"));
  Var stacked = ops::concat_rows(t, features);
  Var d2 = ops::pairwise_sqdist(t, stacked);
  const Mat<S>& dv = t.val(d2);

  std::vector<std::pair<int, int>> pos_at, neg_at;
  if (mode == Mining::batch_hard) {
    for (int i = 0; i < b; ++i) {
      int jp = -1, jn = -1;
      for (int j = 0; j < b; ++j) {
        if (j == i) continue;
        if (labels[j] == labels[i]) {
          if (jp < 0 || dv(i, j) > dv(i, jp)) jp = j;
        } else {
          if (jn < 0 || dv(i, j) < dv(i, jn)) jn = j;
        }
      }
      if (jp < 0 || jn < 0) continue;
      pos_at.emplace_back(i, jp);
      neg_at.emplace_back(i, jn);
    }
  } else {
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) {
        if (j == i || labels[j] != labels[i]) continue;
        for (int k = 0; k < b; ++k) {
          if (labels[k] == labels[i]) continue;
          if (dv(i, j) - dv(i, k) + static_cast<S>(alpha) > 0) {
            pos_at.emplace_back(i, j);
            neg_at.emplace_back(i, k);
          }
        }
      }
  }
  if (pos_at.empty()) return {t.leaf(Mat<S>::Zero(1, 1)), true};

  Var dp = ops::select_coeffs(t, d2, pos_at);
  Var dn = ops::select_coeffs(t, d2, neg_at);
  Var hinge =
      ops::relu(t, ops::add_const(t, ops::sub(t, dp, dn), S(alpha)));
  return {ops::mean_all(t, hinge), false};
}

template <class S>
Var distribution(Tape<S>& t, DistKind kind, const std::vector<Var>& features,
                 bool* floored = nullptr) {
  require(features.size() >= 2, InvalidArgument("distribution: batch < 2"));
  Var x = ops::concat_rows(t, features);
  Var mu = ops::col_mean(t, x);
  Var var = ops::col_mean(t, ops::square(t, ops::sub_rowvec(t, x, mu)));
  if (floored)
    *floored = t.val(var).minCoeff() < static_cast<S>(kVarFloor);
  Var v = ops::clamp_min(t, var, static_cast<S>(kVarFloor));
  Var m2 = ops::square(t, mu);
  // KL(fit || standard): 0.5 * sum(v + mu^2 - 1 - log v)
  Var kl_pq = ops::scale(
      t,
      ops::sum_all(t, ops::sub(t, ops::add_const(t, ops::add(t, v, m2), S(-1)),
                               ops::log_op(t, v))),
      S(0.5));
  if (kind == DistKind::kl) return kl_pq;
  // KL(standard || fit): 0.5 * sum(log v + (1 + mu^2)/v - 1)
  Var kl_qp = ops::scale(
      t,
      ops::sum_all(
          t, ops::add_const(
                 t,
                 ops::add(t, ops::log_op(t, v),
                          ops::cmul(t, ops::add_const(t, m2, S(1)),
                                    ops::recip(t, v))),
                 S(-1))),
      S(0.5));
  return ops::scale(t, ops::add(t, kl_pq, kl_qp), S(0.5));
}

}  // namespace drfer::losses
