#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "drfer/geometry/cloud.hpp"
#include "drfer/rng.hpp"

namespace drfer {

// Expression class ids 0..5 are the six classifiable expressions; id 6 is
// the neutral scan, which exists only to build mean-face tables.
inline constexpr int kNumExpressions = 6;
inline constexpr int kNeutralId = 6;

struct FaceSample {
  PointCloud cloud;
  int expression = 0;
  int identity = 0;
  double intensity = 1.0;
  std::array<double, 2> pose{0.0, 0.0};  // (pitch_deg, yaw_deg)
};

struct MeanFaceTable {
  std::map<int, PointCloud> per_expression;        // F^{mean_C}
  std::map<int, PointCloud> per_identity_neutral;  // F^{P_neu}
  PointCloud mean_neutral;                         // F^{mean_neu}
};

namespace detail {

inline void check_canonical_equal_n(const std::vector<FaceSample>& samples,
                                    const std::string& who) {
  Eigen::Index n = -1;
  for (const auto& s : samples) {
    require(s.cloud.canonical, who + ": all clouds must be canonical");
    if (n < 0) n = s.cloud.size();
    if (s.cloud.size() != n)
      throw IncompleteData(who + ": clouds disagree on point count");
  }
}

}  // namespace detail

// Index-wise mean faces. per_expression averages every sample of a class
// (all intensities); per_identity_neutral averages a subject's neutral
// scans; mean_neutral is the mean of the per-identity entries, so the two
// are consistent by construction.
inline MeanFaceTable compute_mean_faces(const std::vector<FaceSample>& samples,
                                        const std::vector<FaceSample>& neutrals) {
  require(!samples.empty() && !neutrals.empty(),
          "compute_mean_faces: empty inputs");
  detail::check_canonical_equal_n(samples, "compute_mean_faces");
  detail::check_canonical_equal_n(neutrals, "compute_mean_faces");
  if (samples[0].cloud.size() != neutrals[0].cloud.size())
    throw IncompleteData("compute_mean_faces: samples and neutrals disagree on N");
  const Eigen::Index n = samples[0].cloud.size();

  MeanFaceTable table;
  std::map<int, int> expr_counts;
  for (const auto& s : samples) {
    require(s.expression >= 0 && s.expression < kNumExpressions,
            "compute_mean_faces: sample expression id out of range");
    auto [it, fresh] = table.per_expression.try_emplace(s.expression);
    if (fresh) {
      it->second.canonical = true;
      it->second.points = Points::Zero(n, 3);
    }
    it->second.points += s.cloud.points;
    expr_counts[s.expression]++;
  }
  for (int e = 0; e < kNumExpressions; ++e)
    if (!expr_counts.count(e))
      throw IncompleteData("compute_mean_faces: no samples for expression class " +
                           std::to_string(e));
  for (auto& [e, cloud] : table.per_expression)
    cloud.points /= static_cast<double>(expr_counts[e]);

  std::map<int, int> neutral_counts;
  for (const auto& s : neutrals) {
    auto [it, fresh] = table.per_identity_neutral.try_emplace(s.identity);
    if (fresh) {
      it->second.canonical = true;
      it->second.points = Points::Zero(n, 3);
    }
    it->second.points += s.cloud.points;
    neutral_counts[s.identity]++;
  }
  for (auto& [p, cloud] : table.per_identity_neutral)
    cloud.points /= static_cast<double>(neutral_counts[p]);

  std::set<int> subjects;
  for (const auto& s : samples) subjects.insert(s.identity);
  for (int p : subjects)
    if (!table.per_identity_neutral.count(p))
      throw IncompleteData("compute_mean_faces: subject " + std::to_string(p) +
                           " has no neutral scan");

  table.mean_neutral.canonical = true;
  table.mean_neutral.points = Points::Zero(n, 3);
  for (const auto& [p, cloud] : table.per_identity_neutral)
    table.mean_neutral.points += cloud.points;
  table.mean_neutral.points /=
      static_cast<double>(table.per_identity_neutral.size());
  return table;
}

// Subject-disjoint fold assignment: shuffle then deal round-robin, so fold
// sizes differ by at most one. Deterministic per seed.
inline std::map<int, int> make_folds(const std::vector<int>& subject_ids,
                                     int folds, std::uint64_t seed) {
  require(folds >= 2, "make_folds: need at least 2 folds");
  require(static_cast<std::size_t>(folds) <= subject_ids.size(),
          "make_folds: more folds than subjects");
  std::set<int> unique(subject_ids.begin(), subject_ids.end());
  require(unique.size() == subject_ids.size(), "make_folds: duplicate subject id");
  std::vector<int> order(subject_ids);
  Rng rng(seed);
  rng.shuffle(order);
  std::map<int, int> assignment;
  for (std::size_t i = 0; i < order.size(); ++i)
    assignment[order[i]] = static_cast<int>(i % folds);
  return assignment;
}

// --- dataset manifest ---------------------------------------------------
// A dataset on disk is a directory of DRF1 clouds plus a JSON manifest
// listing {cloud_file, expression, identity, intensity, pose}. The manifest
// header records a content hash over labels and cloud bytes; the mean-face
// cache is keyed by the same hash.

struct Dataset {
  std::vector<FaceSample> samples;
  std::vector<FaceSample> neutrals;
  MeanFaceTable table;
  std::uint64_t content_hash = 0;
  bool mean_cache_hit = false;
};

namespace detail {

inline nlohmann::json sample_record(const FaceSample& s, const std::string& file) {
  return {{"cloud_file", file},
          {"expression", s.expression},
          {"identity", s.identity},
          {"intensity", s.intensity},
          {"pose", {s.pose[0], s.pose[1]}}};
}

inline std::uint64_t dataset_content_hash(const std::vector<FaceSample>& samples,
                                          const std::vector<FaceSample>& neutrals) {
  Fnv1a h;
  h.update_pod(static_cast<std::uint32_t>(samples.size()));
  h.update_pod(static_cast<std::uint32_t>(neutrals.size()));
  for (const auto* group : {&samples, &neutrals}) {
    for (const auto& s : *group) {
      h.update_pod(s.expression);
      h.update_pod(s.identity);
      h.update_pod(s.intensity);
      h.update_pod(s.pose[0]);
      h.update_pod(s.pose[1]);
      h.update_pod(cloud_hash(s.cloud));
    }
  }
  return h.digest();
}

inline FaceSample load_sample_record(const nlohmann::json& rec,
                                     const std::filesystem::path& dir) {
  FaceSample s;
  const std::string file = rec.at("cloud_file").get<std::string>();
  const std::filesystem::path path = dir / file;
  if (!std::filesystem::exists(path))
    throw IoError("dataset: missing cloud file " + path.string());
  s.cloud = load_drf1(path.string());
  s.expression = rec.at("expression").get<int>();
  s.identity = rec.at("identity").get<int>();
  s.intensity = rec.at("intensity").get<double>();
  const auto& pose = rec.at("pose");
  s.pose = {pose.at(0).get<double>(), pose.at(1).get<double>()};
  if (s.expression < 0 || s.expression > kNeutralId)
    throw IoError("dataset: expression label out of range in " + file);
  return s;
}

}  // namespace detail

// Writes clouds and manifest under `dir`; returns the manifest path.
inline std::string save_dataset(const std::string& dir,
                                const std::vector<FaceSample>& samples,
                                const std::vector<FaceSample>& neutrals) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "drfer-dataset-v1";
  auto dump_group = [&](const std::vector<FaceSample>& group,
                        const std::string& prefix) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < group.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%04zu.drf1", prefix.c_str(), i);
      save_drf1(group[i].cloud, (fs::path(dir) / name).string());
      arr.push_back(detail::sample_record(group[i], name));
    }
    return arr;
  };
  manifest["samples"] = dump_group(samples, "sample");
  manifest["neutrals"] = dump_group(neutrals, "neutral");

  // cloud_hash digests float32 coordinates, i.e. the on-disk form, so a
  // reload recomputes the same value.
  manifest["content_hash"] = hex64(detail::dataset_content_hash(samples, neutrals));

  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write " + manifest_path);
  out << manifest.dump(2) << "\n";
  return manifest_path;
}

// Loads a dataset and its mean-face table. The table is cached on disk next
// to the manifest (DRF1 entries plus an index), keyed by the dataset content
// hash; a valid cache skips recomputation, and mean_neutral is always
// rebuilt from the per-identity entries so the table invariant holds even
// through float32 serialization.
inline Dataset load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest JSON in " + manifest_path + ": " + e.what());
  }
  if (manifest.value("format", "") != "drfer-dataset-v1")
    throw IoError("unrecognized manifest format in " + manifest_path);

  const fs::path dir = fs::path(manifest_path).parent_path();
  Dataset ds;
  for (const auto& rec : manifest.at("samples")) {
    FaceSample s = detail::load_sample_record(rec, dir);
    if (s.expression >= kNumExpressions)
      throw IoError("dataset: sample with neutral/invalid class in " +
                    rec.at("cloud_file").get<std::string>());
    ds.samples.push_back(std::move(s));
  }
  for (const auto& rec : manifest.at("neutrals")) {
    FaceSample s = detail::load_sample_record(rec, dir);
    if (s.expression != kNeutralId)
      throw IoError("dataset: neutral with non-neutral class in " +
                    rec.at("cloud_file").get<std::string>());
    ds.neutrals.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw IncompleteData("dataset: no samples");

  Eigen::Index n = ds.samples[0].cloud.size();
  for (const auto* group : {&ds.samples, &ds.neutrals})
    for (std::size_t i = 0; i < group->size(); ++i)
      if ((*group)[i].cloud.size() != n) {
        const auto& recs =
            manifest.at(group == &ds.samples ? "samples" : "neutrals");
        throw IncompleteData("dataset: mismatched point count in " +
                             recs.at(i).at("cloud_file").get<std::string>());
      }

  ds.content_hash = detail::dataset_content_hash(ds.samples, ds.neutrals);

  const fs::path cache_dir = dir / "mean_cache";
  const fs::path cache_index = cache_dir / "index.json";
  bool cache_ok = false;
  if (fs::exists(cache_index)) {
    try {
      nlohmann::json idx;
      std::ifstream(cache_index) >> idx;
      cache_ok = idx.value("content_hash", "") == hex64(ds.content_hash);
      if (cache_ok) {
        for (const auto& [key, file] : idx.at("expressions").items())
          ds.table.per_expression[std::stoi(key)] =
              load_drf1((cache_dir / file.get<std::string>()).string());
        for (const auto& [key, file] : idx.at("neutrals").items())
          ds.table.per_identity_neutral[std::stoi(key)] =
              load_drf1((cache_dir / file.get<std::string>()).string());
      }
    } catch (const std::exception&) {
      cache_ok = false;  // stale or corrupt cache: fall through to recompute
      ds.table = {};
    }
  }
  if (cache_ok) {
    ds.mean_cache_hit = true;
    // Rebuild the global mean from the loaded entries (float32 storage would
    // otherwise break the exact-mean invariant).
    ds.table.mean_neutral.canonical = true;
    ds.table.mean_neutral.points = Points::Zero(n, 3);
    for (const auto& [p, cloud] : ds.table.per_identity_neutral)
      ds.table.mean_neutral.points += cloud.points;
    ds.table.mean_neutral.points /=
        static_cast<double>(ds.table.per_identity_neutral.size());
  } else {
    ds.table = compute_mean_faces(ds.samples, ds.neutrals);
    fs::create_directories(cache_dir);
    nlohmann::json idx;
    idx["content_hash"] = hex64(ds.content_hash);
    nlohmann::json ex = nlohmann::json::object(), nu = nlohmann::json::object();
    for (const auto& [e, cloud] : ds.table.per_expression) {
      const std::string file = "expr_" + std::to_string(e) + ".drf1";
      save_drf1(cloud, (cache_dir / file).string());
      ex[std::to_string(e)] = file;
    }
    for (const auto& [p, cloud] : ds.table.per_identity_neutral) {
      const std::string file = "neutral_" + std::to_string(p) + ".drf1";
      save_drf1(cloud, (cache_dir / file).string());
      nu[std::to_string(p)] = file;
    }
    idx["expressions"] = ex;
    idx["neutrals"] = nu;
    std::ofstream out(cache_index);
    if (!out) throw IoError("cannot write mean-face cache index");
    out << idx.dump(2) << "\n";
  }
  return ds;
}

}  // namespace drfer
