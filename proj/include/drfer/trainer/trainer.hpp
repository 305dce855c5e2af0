#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>
#include <utility>

#include "drfer/net/checkpoint.hpp"
#include "drfer/trainer/adam.hpp"
#include "drfer/trainer/config.hpp"

namespace drfer {

inline int worker_threads() {
  if (const char* env = std::getenv("DRFER_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

struct EpochRecord {
  int epoch = 0;
  std::map<std::string, double> terms;
  double train_acc = -1;  // -1 where the stage has no classifier
  double val_acc = -1;    // -1 when not tracked or no validation split
};

struct StageReport {
  std::string stage;
  std::vector<EpochRecord> epochs;
  std::string checkpoint_id;
  double wall_seconds = 0;
  std::map<std::string, double> extra;
};

inline void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},
       {"terms", r.terms},
       {"train_acc", r.train_acc},
       {"val_acc", r.val_acc}};
}

inline void to_json(nlohmann::json& j, const StageReport& r) {
  j = {{"stage", r.stage},
       {"epochs", r.epochs},
       {"checkpoint_id", r.checkpoint_id},
       {"wall_seconds", r.wall_seconds},
       {"extra", r.extra}};
}

// Training inputs for one run. The mean-face table must come from the
// training subjects only; validation samples are for metrics, never batched.
struct TrainData {
  std::vector<FaceSample> train;
  std::vector<FaceSample> val;
  MeanFaceTable table;
};

template <class S>
double expression_accuracy(const DrferModel<S>& model,
                           const std::vector<FaceSample>& samples) {
  if (samples.empty()) return -1;
  int correct = 0;
  for (const auto& s : samples) {
    Tape<S> t(&model.params(), false);
    Var in = t.leaf(s.cloud.points.template cast<S>());
    EncodeOut<S> e = model.encode(t, Branch::expression, in);
    const Mat<S> logits =
        t.val(model.classify(t, Branch::expression, e.global, nullptr));
    int pred = 0;
    logits.row(0).maxCoeff(&pred);
    if (pred == s.expression) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// Three-stage trainer. Owns the schedule, batching, augmentation draws and
// stage-tag bookkeeping; the model and its parameters are borrowed.
template <class S>
class Trainer {
 public:
  Trainer(DrferModel<S>& model, TrainConfig cfg, TrainData data,
          std::ostream* step_log = nullptr)
      : model_(model), cfg_(std::move(cfg)), data_(std::move(data)), log_(step_log) {
    validate(cfg_);
    require(!data_.train.empty(), InvalidArgument("no training samples"));
    for (int e = 0; e < kNumExpressions; ++e)
      require(data_.table.per_expression.count(e),
              IncompleteData("mean-face table lacks expression " +
                             std::to_string(e)));
    require(data_.table.mean_neutral.size() > 0,
            IncompleteData("mean-face table lacks the mean neutral face"));
    for (const auto& s : data_.train)
      require(data_.table.per_identity_neutral.count(s.identity),
              IncompleteData("mean-face table lacks the neutral of subject " +
                             std::to_string(s.identity)));
  }

  int completed_stage() const { return completed_stage_; }

  void load(const std::string& path) {
    const CheckpointInfo info = load_checkpoint(path, model_);
    completed_stage_ = info.stage;
  }

  CheckpointInfo save(const std::string& path) const {
    require(completed_stage_ >= 1,
            ConfigError("nothing to checkpoint: no stage completed"));
    return save_checkpoint(path, model_, completed_stage_);
  }

  std::array<StageReport, 3> run_stage1() {
    require(completed_stage_ == 0,
            ConfigError("stage order: stage 1 needs a fresh model, have stage " +
                        std::to_string(completed_stage_) + " loaded"));
    std::array<StageReport, 3> out = {
        run_epochs("1exp", losses::Stage::s1exp,
                   classifier_program(Branch::expression), Metric::none,
                   join(model_.group_encoder(Branch::expression),
                        model_.group_head(Branch::expression)),
                   0, true),
        run_epochs("1id", losses::Stage::s1id,
                   classifier_program(Branch::identity), Metric::none,
                   join(model_.group_encoder(Branch::identity),
                        model_.group_head(Branch::identity)),
                   0, false),
        run_epochs("1fus", losses::Stage::s1fus, fusion_program(),
                   Metric::none, model_.group_fusion(), 0, false)};
    completed_stage_ = 1;
    return out;
  }

  std::array<StageReport, 2> run_stage2() {
    require(completed_stage_ == 1,
            ConfigError("stage order: stage 2 needs a stage-1 checkpoint, have "
                        "stage " + std::to_string(completed_stage_)));
    Rng fresh = Rng(cfg_.seed).derive(0x2DEC);
    model_.reinit_decoders(fresh);
    std::vector<int> exp_group = model_.group_branch(Branch::expression);
    if (cfg_.loss.use_cls)
      exp_group = join(exp_group, model_.group_head(Branch::expression));
    std::array<StageReport, 2> out = {
        run_epochs("2exp", losses::Stage::s2exp, branch2_exp_program(),
                   stage_metric(), exp_group, 1, true),
        run_epochs("2id", losses::Stage::s2id, branch2_id_program(),
                   Metric::none, model_.group_branch(Branch::identity), 1,
                   false)};
    completed_stage_ = 2;
    return out;
  }

  StageReport run_stage3() {
    require(completed_stage_ == 2,
            ConfigError("stage order: stage 3 needs a stage-2 checkpoint, have "
                        "stage " + std::to_string(completed_stage_)));
    require(model_.config().n_out == model_.config().input_points,
            ConfigError("stage 3 cross-over needs n_out == input_points"));
    const std::vector<FaceSample>& probe =
        data_.val.empty() ? data_.train : data_.val;
    const auto [dis_ei0, dis_ie0] = crossover_chamfers(probe);
    StageReport rep = run_epochs("3", losses::Stage::s3, stage3_program(),
                                 stage_metric(), model_.group_all(), 2, true);
    const auto [dis_ei1, dis_ie1] = crossover_chamfers(probe);
    rep.extra["dis_exp_id_start"] = dis_ei0;
    rep.extra["dis_id_exp_start"] = dis_ie0;
    rep.extra["dis_exp_id_end"] = dis_ei1;
    rep.extra["dis_id_exp_end"] = dis_ie1;
    completed_stage_ = 3;
    return rep;
  }

  // Mean chamfer of the two cross-over streams against the mean neutral
  // face, evaluated without augmentation or dropout.
  std::pair<double, double> crossover_chamfers(
      const std::vector<FaceSample>& samples) const {
    require(!samples.empty(), InvalidArgument("crossover_chamfers: empty set"));
    double ei = 0, ie = 0;
    for (const auto& s : samples) {
      Tape<S> t(&model_.params(), false);
      Var in = t.leaf(s.cloud.points.template cast<S>());
      auto [exp_id, id_exp] = model_.crossover_forward(t, in);
      PointCloud a, b;
      a.points = t.val(exp_id).template cast<double>();
      b.points = t.val(id_exp).template cast<double>();
      ei += chamfer_distance(a, data_.table.mean_neutral);
      ie += chamfer_distance(b, data_.table.mean_neutral);
    }
    const double n = static_cast<double>(samples.size());
    return {ei / n, ie / n};
  }

 private:
  enum class Metric { none, tri, dist };

  struct SampleOut {
    std::unique_ptr<Tape<S>> tape;
    Var feature{};
    Var total{};
    bool has_feature = false;
    bool has_total = false;
    std::map<std::string, double> terms;
    int pred = -1;
    int label = -1;
  };

  using Program = std::function<void(Tape<S>&, const FaceSample&, const Matd&,
                                     std::uint64_t, SampleOut&)>;

  Metric stage_metric() const {
    if (cfg_.loss.use_kl || cfg_.loss.use_js) return Metric::dist;
    return cfg_.loss.use_triplet ? Metric::tri : Metric::none;
  }

  static std::vector<int> join(std::vector<int> a, const std::vector<int>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  const char* metric_term() const {
    if (cfg_.loss.use_kl) return "kl";
    if (cfg_.loss.use_js) return "js";
    return "tri";
  }

  Matd augmented_points(const FaceSample& s, std::uint64_t key) const {
    if (!cfg_.augment.enabled) return s.cloud.points;
    Rng pick(hash_combine(key, 0xA6A6ull));
    const double u = pick.uniform();
    if (u < 1.0 / 3.0) return s.cloud.points;
    AugmentParams ap;
    ap.dropout_rate = cfg_.augment.dropout_rate;
    ap.scale_lo = cfg_.augment.scale_lo;
    ap.scale_hi = cfg_.augment.scale_hi;
    const AugmentMode mode =
        u < 2.0 / 3.0 ? AugmentMode::dropout : AugmentMode::scale;
    return augment(s.cloud, mode, pick.bits(), ap).points;
  }

  template <class Fn>
  static void parallel_slots(int slots, int threads, const Fn& fn) {
    if (threads <= 1) {
      for (int s = 0; s < slots; ++s) fn(s);
      return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        try {
          for (int s; (s = next.fetch_add(1)) < slots;) fn(s);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  struct StepOut {
    std::map<std::string, double> terms;
    double total = 0;
    int correct = 0;
    int considered = 0;
    bool degenerate = false;
  };

  StepOut run_step(const std::vector<int>& order, std::size_t begin,
                   std::size_t end, const Program& program, Metric metric,
                   losses::Stage stage_id, Adam<S>& opt,
                   std::uint64_t step_key) {
    const int bsz = static_cast<int>(end - begin);
    // Slot count depends only on the batch, so gradients are identical for
    // any worker count: each slot accumulates its own samples in order and
    // slots merge in index order.
    const int slots = std::min(8, bsz);
    const int threads = std::min(slots, worker_threads());
    std::vector<SampleOut> outs(static_cast<std::size_t>(bsz));
    std::vector<GradSink<S>> sinks;
    sinks.reserve(static_cast<std::size_t>(slots));
    for (int s = 0; s < slots; ++s) sinks.emplace_back(model_.params());

    parallel_slots(slots, threads, [&](int slot) {
      for (int i = slot; i < bsz; i += slots) {
        const FaceSample& smp = data_.train[static_cast<std::size_t>(
            order[begin + static_cast<std::size_t>(i)])];
        const std::uint64_t key =
            hash_combine(step_key, static_cast<std::uint64_t>(i));
        const Matd cloud = augmented_points(smp, key);
        auto& out = outs[static_cast<std::size_t>(i)];
        out.tape = std::make_unique<Tape<S>>(&model_.params());
        program(*out.tape, smp, cloud, key, out);
      }
    });

    std::vector<Mat<S>> cotangents(static_cast<std::size_t>(bsz));
    double metric_value = 0;
    bool have_metric = false, degenerate = false;
    if (metric != Metric::none) {
      Tape<S> bridge;
      std::vector<Var> leaves;
      std::vector<int> labels;
      std::vector<int> who;
      for (int i = 0; i < bsz; ++i) {
        if (!outs[static_cast<std::size_t>(i)].has_feature) continue;
        leaves.push_back(bridge.leaf(
            outs[static_cast<std::size_t>(i)].tape->val(
                outs[static_cast<std::size_t>(i)].feature),
            true));
        labels.push_back(outs[static_cast<std::size_t>(i)].label);
        who.push_back(i);
      }
      if (leaves.size() >= 2) {
        Var mloss{};
        if (metric == Metric::tri) {
          auto r = losses::batch_triplet(bridge, leaves, labels,
                                         cfg_.loss.margin, cfg_.loss.mining);
          mloss = r.loss;
          degenerate = r.degenerate;
        } else {
          mloss = losses::distribution(
              bridge, cfg_.loss.use_kl ? losses::DistKind::kl
                                       : losses::DistKind::js,
              leaves);
        }
        metric_value = static_cast<double>(bridge.scalar(mloss));
        bridge.backward({{mloss, Mat<S>::Ones(1, 1)}}, nullptr);
        for (std::size_t k = 0; k < leaves.size(); ++k)
          if (bridge.has_grad(leaves[k]))
            cotangents[static_cast<std::size_t>(who[k])] =
                bridge.grad(leaves[k]);
        have_metric = true;
      } else {
        degenerate = true;
        have_metric = true;  // log the term as zero
      }
    }

    const S inv_b = S(1) / static_cast<S>(bsz);
    parallel_slots(slots, threads, [&](int slot) {
      for (int i = slot; i < bsz; i += slots) {
        auto& out = outs[static_cast<std::size_t>(i)];
        std::vector<std::pair<Var, Mat<S>>> seeds;
        if (out.has_total)
          seeds.emplace_back(out.total, Mat<S>::Constant(1, 1, inv_b));
        if (out.has_feature &&
            cotangents[static_cast<std::size_t>(i)].size() > 0)
          seeds.emplace_back(out.feature,
                             cotangents[static_cast<std::size_t>(i)]);
        if (!seeds.empty()) out.tape->backward(seeds, &sinks[slot]);
      }
    });

    for (int s = 1; s < slots; ++s) sinks[0].merge(sinks[static_cast<std::size_t>(s)]);
    opt.step(sinks[0]);

    StepOut st;
    st.degenerate = degenerate;
    for (const auto& out : outs) {
      for (const auto& [k, v] : out.terms)
        st.terms[k] += v / static_cast<double>(bsz);
      if (out.pred >= 0) {
        ++st.considered;
        if (out.pred == out.label) ++st.correct;
      }
    }
    if (have_metric) st.terms[metric_term()] = metric_value;
    const losses::StageLoss sl = losses::stage_loss(stage_id, st.terms, cfg_.loss);
    st.total = sl.total;
    require(std::isfinite(st.total),
            Error("non-finite loss in stage " +
                  std::string(losses::stage_name(stage_id))));
    return st;
  }

  StageReport run_epochs(const std::string& name, losses::Stage stage_id,
                         const Program& program, Metric metric,
                         const std::vector<int>& group, int schedule_slot,
                         bool track_val_acc) {
    const auto t0 = std::chrono::steady_clock::now();
    StageReport rep;
    rep.stage = name;
    Adam<S> opt(model_.params(), group, cfg_.stage_lr[schedule_slot],
                cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
    const int batch = cfg_.stage_batch[schedule_slot];
    const int epochs = cfg_.stage_epochs[schedule_slot];
    const std::uint64_t stage_tag = fnv1a(name);
    Rng stage_rng = Rng(cfg_.seed).derive(stage_tag);

    std::vector<int> order(data_.train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < epochs; ++e) {
      Rng er = stage_rng.derive(static_cast<std::uint64_t>(e));
      er.shuffle(order);
      EpochRecord rec;
      rec.epoch = e;
      int correct = 0, considered = 0, steps = 0;
      for (std::size_t at = 0; at < order.size();
           at += static_cast<std::size_t>(batch)) {
        const std::size_t hi =
            std::min(at + static_cast<std::size_t>(batch), order.size());
        const std::uint64_t step_key = hash_combine(
            hash_combine(cfg_.seed, stage_tag),
            static_cast<std::uint64_t>(e) * 1000003ull +
                static_cast<std::uint64_t>(steps));
        StepOut st =
            run_step(order, at, hi, program, metric, stage_id, opt, step_key);
        ++steps;
        for (const auto& [k, v] : st.terms) rec.terms[k] += v;
        correct += st.correct;
        considered += st.considered;
        if (log_) {
          nlohmann::json line = {{"stage", name},
                                 {"epoch", e},
                                 {"step", steps - 1},
                                 {"total", st.total},
                                 {"terms", st.terms}};
          if (st.degenerate) line["degenerate_batch"] = true;
          (*log_) << line.dump() << "\n";
        }
      }
      for (auto& [k, v] : rec.terms) v /= static_cast<double>(steps);
      rec.train_acc =
          considered ? static_cast<double>(correct) / considered : -1;
      if (track_val_acc && !data_.val.empty())
        rec.val_acc = expression_accuracy(model_, data_.val);
      rep.epochs.push_back(std::move(rec));
    }
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return rep;
  }

  Program classifier_program(Branch br) {
    return [this, br](Tape<S>& t, const FaceSample& smp, const Matd& cloud,
                      std::uint64_t key, SampleOut& out) {
      Var in = t.leaf(cloud.template cast<S>());
      EncodeOut<S> e = model_.encode(t, br, in);
      Rng drng(hash_combine(key, 0xD120ull));
      Var logits = model_.classify(t, br, e.global, &drng);
      const int label = br == Branch::expression ? smp.expression : smp.identity;
      Var ce = ops::softmax_ce(t, logits, label);
      out.terms[br == Branch::expression ? "cls_exp" : "cls_id"] =
          static_cast<double>(t.scalar(ce));
      out.total = ce;
      out.has_total = true;
      out.feature = e.global;
      out.has_feature = true;
      out.label = label;
      int pred = 0;
      t.val(logits).row(0).maxCoeff(&pred);
      out.pred = pred;
    };
  }

  Program fusion_program() {
    return [this](Tape<S>& t, const FaceSample& smp, const Matd&,
                  std::uint64_t, SampleOut& out) {
      const PointCloud& me = data_.table.per_expression.at(smp.expression);
      const PointCloud& mn = data_.table.per_identity_neutral.at(smp.identity);
      Var fused = t.leaf(Mat<S>());  // placeholder to scope the temporaries
      fused = model_.fuse(t, t.leaf(me.points.template cast<S>()),
                          t.leaf(mn.points.template cast<S>()));
      Var ori =
          ops::chamfer(t, fused, t.leaf(smp.cloud.points.template cast<S>()));
      out.terms["rec_ori"] = static_cast<double>(t.scalar(ori));
      out.total = ori;
      out.has_total = true;
    };
  }

  Program branch2_exp_program() {
    return [this](Tape<S>& t, const FaceSample& smp, const Matd& cloud,
                  std::uint64_t key, SampleOut& out) {
      Var in = t.leaf(cloud.template cast<S>());
      EncodeOut<S> e = model_.encode(t, Branch::expression, in);
      Var recon = model_.decode(t, Branch::expression, e.global, &e.frame);
      const PointCloud& target = data_.table.per_expression.at(smp.expression);
      Var rec = ops::chamfer(t, recon, t.leaf(target.points.template cast<S>()));
      out.terms["rec_exp"] = static_cast<double>(t.scalar(rec));
      Var total = rec;
      if (cfg_.loss.use_cls) {
        Rng drng(hash_combine(key, 0xD120ull));
        Var logits = model_.classify(t, Branch::expression, e.global, &drng);
        Var ce = ops::softmax_ce(t, logits, smp.expression);
        out.terms["cls_exp"] = static_cast<double>(t.scalar(ce));
        total = ops::add(t, total, ce);
        int pred = 0;
        t.val(logits).row(0).maxCoeff(&pred);
        out.pred = pred;
      }
      out.total = total;
      out.has_total = true;
      out.feature = e.global;
      out.has_feature = true;
      out.label = smp.expression;
    };
  }

  Program branch2_id_program() {
    return [this](Tape<S>& t, const FaceSample& smp, const Matd& cloud,
                  std::uint64_t, SampleOut& out) {
      Var in = t.leaf(cloud.template cast<S>());
      EncodeOut<S> e = model_.encode(t, Branch::identity, in);
      Var recon = model_.decode(t, Branch::identity, e.global, &e.frame);
      const PointCloud& target =
          data_.table.per_identity_neutral.at(smp.identity);
      Var rec = ops::chamfer(t, recon, t.leaf(target.points.template cast<S>()));
      out.terms["rec_id"] = static_cast<double>(t.scalar(rec));
      out.total = rec;
      out.has_total = true;
    };
  }

  Program stage3_program() {
    return [this](Tape<S>& t, const FaceSample& smp, const Matd& cloud,
                  std::uint64_t key, SampleOut& out) {
      Var in = t.leaf(cloud.template cast<S>());
      EncodeOut<S> eo = model_.encode(t, Branch::expression, in);
      Var rexp = model_.decode(t, Branch::expression, eo.global, &eo.frame);
      EncodeOut<S> io = model_.encode(t, Branch::identity, in);
      Var rid = model_.decode(t, Branch::identity, io.global, &io.frame);
      Var exp_id = model_.reencode_through(t, Branch::identity, rexp);
      Var id_exp = model_.reencode_through(t, Branch::expression, rid);
      Var fused = model_.fuse(t, rexp, rid);

      Var mean_neu =
          t.leaf(data_.table.mean_neutral.points.template cast<S>());
      const PointCloud& mexp = data_.table.per_expression.at(smp.expression);
      const PointCloud& mneu =
          data_.table.per_identity_neutral.at(smp.identity);

      Var rec_exp =
          ops::chamfer(t, rexp, t.leaf(mexp.points.template cast<S>()));
      Var rec_id =
          ops::chamfer(t, rid, t.leaf(mneu.points.template cast<S>()));
      Var rec_dis = ops::add(t, ops::chamfer(t, exp_id, mean_neu),
                             ops::chamfer(t, id_exp, mean_neu));
      Var rec_ori =
          ops::chamfer(t, fused, t.leaf(smp.cloud.points.template cast<S>()));

      out.terms["rec_exp"] = static_cast<double>(t.scalar(rec_exp));
      out.terms["rec_id"] = static_cast<double>(t.scalar(rec_id));
      out.terms["rec_dis"] = static_cast<double>(t.scalar(rec_dis));
      out.terms["rec_ori"] = static_cast<double>(t.scalar(rec_ori));

      Var total = ops::add(t, ops::add(t, rec_exp, rec_id),
                           ops::add(t, rec_dis,
                                    ops::scale(t, rec_ori,
                                               static_cast<S>(cfg_.loss.lambda))));
      if (cfg_.loss.use_cls) {
        Rng drng(hash_combine(key, 0xD120ull));
        Var logits = model_.classify(t, Branch::expression, eo.global, &drng);
        Var ce = ops::softmax_ce(t, logits, smp.expression);
        out.terms["cls_exp"] = static_cast<double>(t.scalar(ce));
        total = ops::add(t, total, ce);
        int pred = 0;
        t.val(logits).row(0).maxCoeff(&pred);
        out.pred = pred;
      }
      out.total = total;
      out.has_total = true;
      out.feature = eo.global;
      out.has_feature = true;
      out.label = smp.expression;
    };
  }

  DrferModel<S>& model_;
  TrainConfig cfg_;
  TrainData data_;
  std::ostream* log_ = nullptr;
  int completed_stage_ = 0;
};

}  // namespace drfer
