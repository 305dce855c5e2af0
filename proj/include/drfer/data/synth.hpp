#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "drfer/data/dataset.hpp"
#include "drfer/geometry/kernels.hpp"

namespace drfer {

// Synthetic face model with ground-truth factors: a fixed template plus
// orthogonal identity and expression deformation bases. Stands in for
// licensed scan corpora while keeping the factor structure (who vs. what)
// fully known, which is what the disentanglement benchmarks need.
struct SynthModel {
  PointCloud tmpl;                     // canonical template, N x 3 (mm)
  std::vector<Matd> identity_basis;    // K_id fields, each N x 3, unit-RMS
  std::vector<Matd> expression_basis;  // K_exp fields, each N x 3, unit-RMS
  Matd subject_coeffs;                 // S x K_id (mm of RMS displacement)
  Matd expression_coeffs;              // 7 x K_exp; neutral row exactly zero
  double noise_sigma = 0.0;            // mm, per coordinate
};

struct SynthConfig {
  int template_points = 4096;
  int subjects = 30;
  int k_id = 8;
  int k_exp = 6;
  double identity_amp = 6.0;    // mm RMS per drawn unit coefficient
  double expression_amp = 3.0;  // mm RMS at intensity 1
  double noise_sigma = 0.15;    // mm
};

namespace detail {

// Face-like dome: golden-spiral sampling of an ellipsoid cap (taller than
// wide, so pitch rotations occlude more than yaw), with a nose ridge and two
// brow bumps pushed out along +z. Millimeter scale. Fully deterministic.
inline PointCloud make_face_template(int n) {
  require(n >= 8, "make_face_template: template too small");
  PointCloud c;
  c.canonical = true;
  c.points.resize(n, 3);
  const double golden = std::numbers::pi * (1.0 + std::sqrt(5.0));
  const double zmin = 0.25;  // cap height on the unit sphere
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) / n;
    const double cz = zmin + (1.0 - zmin) * t;
    const double r = std::sqrt(std::max(0.0, 1.0 - cz * cz));
    const double theta = golden * (i + 0.5);
    double x = 55.0 * r * std::cos(theta);   // width
    double y = 80.0 * r * std::sin(theta);   // height
    double z = 45.0 * cz;                    // depth
    const double nose = 12.0 * std::exp(-((x * x) + (y + 8) * (y + 8)) / (2 * 9 * 9));
    const double browl =
        4.0 * std::exp(-((x + 20) * (x + 20) + (y - 24) * (y - 24)) / (2 * 7 * 7));
    const double browr =
        4.0 * std::exp(-((x - 20) * (x - 20) + (y - 24) * (y - 24)) / (2 * 7 * 7));
    z += nose + browl + browr;
    c.points.row(i) << x, y, z;
  }
  return c;
}

// Smooth random deformation field: a handful of Gaussian blobs, each pushing
// a neighborhood along its own direction.
inline Matd make_blob_field(const PointCloud& tmpl, Rng& rng, int blobs) {
  const Eigen::Index n = tmpl.size();
  Matd field = Matd::Zero(n, 3);
  for (int b = 0; b < blobs; ++b) {
    const Eigen::Index center = static_cast<Eigen::Index>(rng.uniform_int(n));
    Eigen::RowVector3d dir(rng.normal(), rng.normal(), rng.normal());
    dir.normalize();
    const double sigma = rng.uniform(12.0, 30.0);
    const double amp = rng.uniform(0.5, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    const Vecd sq =
        (tmpl.points.rowwise() - tmpl.points.row(center)).rowwise().squaredNorm();
    const Vecd w = (-sq / (2.0 * sigma * sigma)).array().exp();
    field += amp * (w * dir);
  }
  return field;
}

}  // namespace detail

// Builds the generator model: template, jointly orthogonalized bases
// (identity and expression fields mutually orthogonal as flattened vectors),
// per-subject coefficients, and one-hot expression prototypes with the
// neutral row exactly zero.
inline SynthModel make_synth_model(const SynthConfig& cfg, std::uint64_t seed) {
  require(cfg.subjects >= 2, "make_synth_model: need at least 2 subjects");
  require(cfg.k_exp >= kNumExpressions,
          "make_synth_model: k_exp must cover the 6 expression classes");
  require(cfg.k_id >= 1, "make_synth_model: k_id must be positive");
  SynthModel m;
  m.tmpl = detail::make_face_template(cfg.template_points);
  m.noise_sigma = cfg.noise_sigma;
  const Eigen::Index n = m.tmpl.size();

  Rng root(seed);
  std::vector<Matd> fields;
  for (int k = 0; k < cfg.k_id + cfg.k_exp; ++k) {
    Rng r = root.derive(0xf1e1d, k);
    fields.push_back(detail::make_blob_field(m.tmpl, r, 5));
  }
  // Two passes of Gram-Schmidt over the flattened fields, then scale each to
  // unit RMS point displacement (Frobenius norm sqrt(N)).
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const double d = (fields[i].array() * fields[j].array()).sum() /
                         (fields[j].array() * fields[j].array()).sum();
        fields[i] -= d * fields[j];
      }
    }
  }
  for (auto& f : fields) {
    const double norm = std::sqrt((f.array() * f.array()).sum());
    require(norm > 1e-9, "make_synth_model: degenerate deformation field");
    f *= std::sqrt(static_cast<double>(n)) / norm;
  }
  m.identity_basis.assign(fields.begin(), fields.begin() + cfg.k_id);
  m.expression_basis.assign(fields.begin() + cfg.k_id, fields.end());

  Rng rs = root.derive(0x5c0ef);
  m.subject_coeffs.resize(cfg.subjects, cfg.k_id);
  for (int s = 0; s < cfg.subjects; ++s)
    for (int k = 0; k < cfg.k_id; ++k)
      m.subject_coeffs(s, k) = rs.normal(0.0, cfg.identity_amp);

  m.expression_coeffs = Matd::Zero(kNeutralId + 1, cfg.k_exp);
  for (int e = 0; e < kNumExpressions; ++e)
    m.expression_coeffs(e, e) = cfg.expression_amp;
  return m;
}

struct SynthOutput {
  std::vector<FaceSample> samples;   // expression 0..5
  std::vector<FaceSample> neutrals;  // expression 6, intensity 0
};

namespace detail {

inline Points deformed_face(const SynthModel& m, int subject, int expression,
                            double intensity, Rng& noise_rng) {
  Points pts = m.tmpl.points;
  for (int k = 0; k < m.subject_coeffs.cols(); ++k)
    pts += m.subject_coeffs(subject, k) * m.identity_basis[k];
  for (int k = 0; k < m.expression_coeffs.cols(); ++k) {
    const double c = intensity * m.expression_coeffs(expression, k);
    if (c != 0.0) pts += c * m.expression_basis[k];
  }
  if (m.noise_sigma > 0.0)
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      for (int j = 0; j < 3; ++j) pts(i, j) += noise_rng.normal(0.0, m.noise_sigma);
  return pts;
}

}  // namespace detail

// Generates the dataset: every (subject, expression, intensity) face plus
// one neutral face per subject. Each cloud is the deformed template gathered
// at a single FPS index set computed once on the template, so index i means
// the same surface location on every face (canonical correspondence).
inline SynthOutput synth_generate(const SynthModel& m, int subjects,
                                  int expressions,
                                  const std::vector<double>& intensities,
                                  int points, std::uint64_t seed) {
  require(subjects >= 2, "synth_generate: need at least 2 subjects");
  require(subjects <= m.subject_coeffs.rows(),
          "synth_generate: model holds fewer subjects");
  require(expressions >= 1 && expressions <= kNumExpressions,
          "synth_generate: expressions must be in [1, 6]");
  require(!intensities.empty(), "synth_generate: no intensities");
  require(points >= 1 && points <= m.tmpl.size(),
          "synth_generate: points must not exceed template size");

  const std::vector<int> keep = fps_sample(m.tmpl, points, 0);
  Rng root(seed);
  SynthOutput out;
  out.samples.reserve(static_cast<std::size_t>(subjects) * expressions *
                      intensities.size());
  auto gather = [&](const Points& pts) {
    PointCloud c;
    c.canonical = true;
    c.points.resize(points, 3);
    for (int i = 0; i < points; ++i) c.points.row(i) = pts.row(keep[i]);
    return c;
  };
  for (int s = 0; s < subjects; ++s) {
    for (int e = 0; e < expressions; ++e) {
      for (std::size_t ti = 0; ti < intensities.size(); ++ti) {
        Rng nr = root.derive(static_cast<std::uint64_t>(s) * 64 + e, ti);
        FaceSample sample;
        sample.cloud = gather(detail::deformed_face(m, s, e, intensities[ti], nr));
        sample.expression = e;
        sample.identity = s;
        sample.intensity = intensities[ti];
        out.samples.push_back(std::move(sample));
      }
    }
    Rng nr = root.derive(static_cast<std::uint64_t>(s) * 64 + kNeutralId, 0xfeed);
    FaceSample neutral;
    neutral.cloud = gather(detail::deformed_face(m, s, kNeutralId, 0.0, nr));
    neutral.expression = kNeutralId;
    neutral.identity = s;
    neutral.intensity = 0.0;
    out.neutrals.push_back(std::move(neutral));
  }
  return out;
}

}  // namespace drfer
