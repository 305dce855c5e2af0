#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "drfer/net/checkpoint.hpp"
#include "drfer/net/model.hpp"

using namespace drfer;

namespace {

NetConfig tiny_net() {
  NetConfig c;
  c.input_points = 64;
  c.levels = {{16, 0.4, 8, 16, 32}, {4, 0.9, 8, 32, 64}, {1, 1e9, 4, 64, 1024}};
  c.decoder_hidden = {64};
  c.n_out = 64;
  c.trunk_widths = {32, 32, 16};
  c.head_hidden = {32, 16};
  c.num_subjects = 5;
  return c;
}

Matd random_cloud(int n, Rng& rng, double scale = 80.0) {
  Matd m(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

std::int64_t group_scalars(const ParamStore<double>& p,
                           const std::vector<int>& ids) {
  std::int64_t n = 0;
  for (int id : ids) n += p.value(id).size();
  return n;
}

double sink_norm(const GradSink<double>& sink, const std::vector<int>& ids) {
  double n = 0;
  for (int id : ids)
    if (sink.used(id)) n += sink.grad(id).squaredNorm();
  return std::sqrt(n);
}

}  // namespace

TEST(Net, BranchParameterCountsEqual) {
  DrferModel<double> m(tiny_net(), 1);
  EXPECT_EQ(group_scalars(m.params(), m.group_branch(Branch::expression)),
            group_scalars(m.params(), m.group_branch(Branch::identity)));
  EXPECT_GT(m.params().scalar_count(), 0);
}

TEST(Net, EncodeShapes) {
  DrferModel<double> m(tiny_net(), 2);
  Rng rng(3);
  Tape<double> t(&m.params());
  Var cloud = t.leaf(random_cloud(64, rng));
  EncodeOut<double> e = m.encode(t, Branch::expression, cloud);
  EXPECT_EQ(t.val(e.global).rows(), 1);
  EXPECT_EQ(t.val(e.global).cols(), 1024);
  ASSERT_EQ(e.pooled.size(), 3u);
  EXPECT_EQ(t.val(e.pooled[0]).cols(), 32);
  EXPECT_EQ(t.val(e.pooled[1]).cols(), 64);
  EXPECT_EQ(t.val(e.pooled[2]).cols(), 1024);
  EXPECT_TRUE(t.val(e.global).allFinite());
}

TEST(Net, EncodeRejectsWrongSize) {
  DrferModel<double> m(tiny_net(), 2);
  Rng rng(3);
  Tape<double> t(&m.params());
  Var small = t.leaf(random_cloud(32, rng));
  EXPECT_THROW(m.encode(t, Branch::expression, small), InvalidArgument);
}

TEST(Net, EncodePermutationInvariant) {
  DrferModel<double> m(tiny_net(), 4);
  Rng rng(5);
  Matd cloud = random_cloud(64, rng);
  std::vector<int> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Matd shuffled(64, 3);
  for (int i = 0; i < 64; ++i) shuffled.row(i) = cloud.row(perm[i]);

  Tape<double> t(&m.params());
  Vecd a = t.val(m.encode(t, Branch::expression, t.leaf(cloud)).global)
               .row(0)
               .transpose();
  Vecd b = t.val(m.encode(t, Branch::expression, t.leaf(shuffled)).global)
               .row(0)
               .transpose();
  const double rel = (a - b).norm() / std::max(1.0, a.norm());
  EXPECT_LT(rel, 1e-4);
}

TEST(Net, DuplicatePointCloudStaysFinite) {
  DrferModel<double> m(tiny_net(), 6);
  Matd cloud = Matd::Ones(64, 3) * 7.5;
  Tape<double> t(&m.params());
  BranchOut<double> out = m.branch_forward(t, Branch::expression, t.leaf(cloud));
  EXPECT_TRUE(t.val(out.feature).allFinite());
  EXPECT_TRUE(t.val(out.recon).allFinite());
}

TEST(Net, BranchesDifferAtInit) {
  DrferModel<double> m(tiny_net(), 7);
  Rng rng(8);
  Matd cloud = random_cloud(64, rng);
  Tape<double> t(&m.params());
  Var leaf = t.leaf(cloud);
  BranchOut<double> e = m.branch_forward(t, Branch::expression, leaf);
  BranchOut<double> i = m.branch_forward(t, Branch::identity, leaf);
  EXPECT_GT((t.val(e.feature) - t.val(i.feature)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(t.val(e.recon).rows(), 64);
  EXPECT_EQ(t.val(e.recon).cols(), 3);
}

TEST(Net, DecoderZeroFeatureIsFixedCloud) {
  DrferModel<double> m(tiny_net(), 9);
  Tape<double> t(&m.params());
  Var z1 = m.decode(t, Branch::expression, t.leaf(Matd::Zero(1, 1024)));
  Var z2 = m.decode(t, Branch::expression, t.leaf(Matd::Zero(1, 1024)));
  EXPECT_EQ((t.val(z1) - t.val(z2)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(t.val(z1).allFinite());
  EXPECT_THROW(m.decode(t, Branch::expression, t.leaf(Matd::Zero(1, 512))),
               InvalidArgument);
}

TEST(Net, DecodeChamferGradMatchesFiniteDifferences) {
  DrferModel<double> m(tiny_net(), 10);
  Rng rng(11);
  Matd f0(1, 1024);
  for (int j = 0; j < 1024; ++j) f0(0, j) = rng.normal();
  Matd target = random_cloud(64, rng, 1.0);

  Tape<double> t(&m.params());
  Var f = t.leaf(f0, true);
  Var loss = ops::chamfer(t, m.decode(t, Branch::expression, f), t.leaf(target));
  t.backward({{loss, Matd::Ones(1, 1)}}, nullptr);
  ASSERT_TRUE(t.has_grad(f));
  Matd an = t.grad(f);

  auto eval = [&](const Matd& fv) {
    Tape<double> s(&m.params(), false);
    return s.scalar(
        ops::chamfer(s, m.decode(s, Branch::expression, s.leaf(fv)), s.leaf(target)));
  };
  const double h = 1e-5;
  for (int trial = 0; trial < 40; ++trial) {
    const int j = static_cast<int>(rng.uniform_int(1024));
    Matd fp = f0, fm = f0;
    fp(0, j) += h;
    fm(0, j) -= h;
    const double fd = (eval(fp) - eval(fm)) / (2 * h);
    EXPECT_NEAR(an(0, j), fd, 1e-4 * std::max({1.0, std::abs(fd), std::abs(an(0, j))}))
        << "coordinate " << j;
  }
}

TEST(Net, CrossoverShapesAndGradientsReachBothBranches) {
  DrferModel<double> m(tiny_net(), 12);
  Rng rng(13);
  Tape<double> t(&m.params());
  Var cloud = t.leaf(random_cloud(64, rng));
  auto [exp_id, id_exp] = m.crossover_forward(t, cloud);
  EXPECT_EQ(t.val(exp_id).rows(), 64);
  EXPECT_EQ(t.val(id_exp).rows(), 64);

  Var loss = ops::chamfer(t, exp_id, t.leaf(random_cloud(64, rng)));
  GradSink<double> sink(m.params());
  t.backward({{loss, Matd::Ones(1, 1)}}, &sink);
  EXPECT_GT(sink_norm(sink, m.group_encoder(Branch::expression)), 0.0);
  EXPECT_GT(sink_norm(sink, m.group_encoder(Branch::identity)), 0.0);
}

TEST(Net, CrossoverNeedsMatchingSizes) {
  NetConfig c = tiny_net();
  c.n_out = 32;
  DrferModel<double> m(c, 14);
  Rng rng(15);
  Tape<double> t(&m.params());
  EXPECT_THROW(m.crossover_forward(t, t.leaf(random_cloud(64, rng))),
               ConfigError);
}

TEST(Net, FusionShapeAndAsymmetry) {
  DrferModel<double> m(tiny_net(), 16);
  Rng rng(17);
  Matd a = random_cloud(64, rng);
  Matd b = random_cloud(64, rng);
  Tape<double> t(&m.params());
  Var ab = m.fuse(t, t.leaf(a), t.leaf(b));
  Var ba = m.fuse(t, t.leaf(b), t.leaf(a));
  EXPECT_EQ(t.val(ab).rows(), 64);
  EXPECT_EQ(t.val(ab).cols(), 3);
  EXPECT_GT((t.val(ab) - t.val(ba)).cwiseAbs().maxCoeff(), 1e-8);

  GradSink<double> sink(m.params());
  Var loss = ops::chamfer(t, ab, t.leaf(random_cloud(64, rng)));
  t.backward({{loss, Matd::Ones(1, 1)}}, &sink);
  EXPECT_GT(sink_norm(sink, m.group_fusion()), 0.0);
}

TEST(Net, ClassifierShapesAndEvalDeterminism) {
  NetConfig c = tiny_net();
  DrferModel<double> m(c, 18);
  Rng rng(19);
  Matd f(1, 1024);
  for (int j = 0; j < 1024; ++j) f(0, j) = rng.normal();
  Tape<double> t(&m.params());
  Var l1 = m.classify(t, Branch::expression, t.leaf(f), nullptr);
  Var l2 = m.classify(t, Branch::expression, t.leaf(f), nullptr);
  EXPECT_EQ(t.val(l1).cols(), 6);
  EXPECT_EQ((t.val(l1) - t.val(l2)).cwiseAbs().maxCoeff(), 0.0);
  Var li = m.classify(t, Branch::identity, t.leaf(f), nullptr);
  EXPECT_EQ(t.val(li).cols(), c.num_subjects);
}

TEST(Net, RandomHeadIsChanceLevel) {
  DrferModel<double> m(tiny_net(), 20);
  Rng rng(21);
  int hits = 0;
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    Matd f(1, 1024);
    for (int j = 0; j < 1024; ++j) f(0, j) = rng.normal();
    Tape<double> t(&m.params(), false);
    const Matd logits = t.val(m.classify(t, Branch::expression, t.leaf(f), nullptr));
    int pred = 0;
    logits.row(0).maxCoeff(&pred);
    if (pred == static_cast<int>(rng.uniform_int(6))) ++hits;
  }
  const double acc = static_cast<double>(hits) / draws;
  EXPECT_NEAR(acc, 1.0 / 6.0, 0.05);
}

TEST(Checkpoint, RoundTripBitIdentical) {
  const std::string path = "/tmp/drfer_test_ckpt.drck";
  DrferModel<double> m(tiny_net(), 22);
  CheckpointInfo saved = save_checkpoint(path, m, 1);
  EXPECT_EQ(saved.stage, 1);

  std::vector<Matd> orig;
  for (int i = 0; i < m.params().size(); ++i) orig.push_back(m.params().value(i));
  Rng rng(23);
  for (int i = 0; i < m.params().size(); ++i)
    m.params().value(i).setConstant(rng.normal());

  CheckpointInfo loaded = load_checkpoint(path, m);
  EXPECT_EQ(loaded.stage, 1);
  EXPECT_EQ(loaded.id, saved.id);
  for (int i = 0; i < m.params().size(); ++i)
    EXPECT_EQ((m.params().value(i) - orig[static_cast<std::size_t>(i)])
                  .cwiseAbs()
                  .maxCoeff(),
              0.0)
        << m.params().name(i);
}

TEST(Checkpoint, IdenticalStatesIdenticalIds) {
  DrferModel<double> m(tiny_net(), 24);
  CheckpointInfo a = save_checkpoint("/tmp/drfer_test_ckpt_a.drck", m, 2);
  CheckpointInfo b = save_checkpoint("/tmp/drfer_test_ckpt_b.drck", m, 2);
  EXPECT_EQ(a.id, b.id);
  m.params().value(0)(0, 0) += 1.0;
  CheckpointInfo c = save_checkpoint("/tmp/drfer_test_ckpt_c.drck", m, 2);
  EXPECT_NE(c.id, a.id);
}

TEST(Checkpoint, RejectsArchitectureMismatch) {
  const std::string path = "/tmp/drfer_test_ckpt_arch.drck";
  DrferModel<double> m(tiny_net(), 25);
  save_checkpoint(path, m, 1);
  NetConfig other = tiny_net();
  other.decoder_hidden = {48};
  DrferModel<double> m2(other, 25);
  EXPECT_THROW(load_checkpoint(path, m2), ConfigError);
  EXPECT_THROW(load_checkpoint("/tmp/does_not_exist.drck", m), IoError);
}

TEST(Checkpoint, FreshDecodersChangeOnlyDecoderParams) {
  DrferModel<double> m(tiny_net(), 26);
  std::vector<Matd> before;
  for (int i = 0; i < m.params().size(); ++i) before.push_back(m.params().value(i));
  Rng rng(27);
  m.reinit_decoders(rng);
  std::vector<int> dec = m.group_branch(Branch::expression);
  std::vector<int> enc = m.group_encoder(Branch::expression);
  // branch group minus encoder group = decoder ids
  std::set<int> enc_set(enc.begin(), enc.end());
  bool decoder_changed = false;
  for (int id : dec) {
    const bool changed =
        (m.params().value(id) - before[static_cast<std::size_t>(id)])
            .cwiseAbs()
            .maxCoeff() > 0;
    if (enc_set.count(id)) {
      EXPECT_FALSE(changed) << m.params().name(id);
    } else if (changed) {
      decoder_changed = true;
    }
  }
  EXPECT_TRUE(decoder_changed);
}
