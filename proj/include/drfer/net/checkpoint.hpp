#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "drfer/net/model.hpp"

namespace drfer {

struct CheckpointInfo {
  int stage = 0;
  std::string id;  // content hash over header + tensor bytes
};

// Container layout: "DRCK" magic, u32 header length, JSON header (format tag,
// stage, architecture config, tensor directory), then row-major float64 data
// for every tensor in directory order. Everything little-endian.
namespace detail {

inline constexpr char kCkptMagic[4] = {'D', 'R', 'C', 'K'};

template <class S>
nlohmann::json checkpoint_header(const DrferModel<S>& model, int stage) {
  nlohmann::json dir = nlohmann::json::array();
  const ParamStore<S>& p = model.params();
  for (int i = 0; i < p.size(); ++i)
    dir.push_back({{"name", p.name(i)},
                   {"rows", p.value(i).rows()},
                   {"cols", p.value(i).cols()}});
  return {{"format", "drfer-checkpoint-v1"},
          {"stage", stage},
          {"dtype", "f8"},
          {"config", model.config()},
          {"tensors", dir}};
}

}  // namespace detail

template <class S>
CheckpointInfo save_checkpoint(const std::string& path,
                               const DrferModel<S>& model, int stage) {
  require(stage >= 1 && stage <= 3, InvalidArgument("stage must be 1..3"));
  const std::string header = detail::checkpoint_header(model, stage).dump();
  const std::uint32_t header_len = static_cast<std::uint32_t>(header.size());

  Fnv1a h;
  h.update(header.data(), header.size());

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(detail::kCkptMagic, 4);
  f.write(reinterpret_cast<const char*>(&header_len), 4);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));

  const ParamStore<S>& p = model.params();
  std::vector<double> buf;
  for (int i = 0; i < p.size(); ++i) {
    const Mat<S>& m = p.value(i);
    buf.resize(static_cast<std::size_t>(m.size()));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        buf[k++] = static_cast<double>(m(r, c));
    const char* bytes = reinterpret_cast<const char*>(buf.data());
    const std::size_t nbytes = buf.size() * sizeof(double);
    h.update(bytes, nbytes);
    f.write(bytes, static_cast<std::streamsize>(nbytes));
  }
  if (!f) throw IoError("short write on checkpoint: " + path);
  return {stage, hex64(h.digest())};
}

template <class S>
CheckpointInfo load_checkpoint(const std::string& path, DrferModel<S>& model) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  std::uint32_t header_len = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&header_len), 4);
  if (!f || std::memcmp(magic, detail::kCkptMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  std::string header(header_len, '\0');
  f.read(header.data(), header_len);
  if (!f) throw IoError("truncated checkpoint header: " + path);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint header in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "drfer-checkpoint-v1")
    throw IoError("unsupported checkpoint format in " + path);

  const nlohmann::json stored_cfg = j.at("config");
  const nlohmann::json own_cfg = model.config();
  if (stored_cfg != own_cfg)
    throw ConfigError("checkpoint architecture does not match the model: " +
                      path);

  Fnv1a h;
  h.update(header.data(), header.size());

  ParamStore<S>& p = model.params();
  const auto& dir = j.at("tensors");
  require(static_cast<int>(dir.size()) == p.size(),
          ConfigError("checkpoint tensor count mismatch: " + path));
  std::vector<double> buf;
  for (int i = 0; i < p.size(); ++i) {
    const auto& entry = dir[static_cast<std::size_t>(i)];
    Mat<S>& m = p.value(i);
    if (entry.at("name").get<std::string>() != p.name(i) ||
        entry.at("rows").get<Eigen::Index>() != m.rows() ||
        entry.at("cols").get<Eigen::Index>() != m.cols())
      throw ConfigError("checkpoint tensor directory mismatch at " + p.name(i) +
                        ": " + path);
    buf.resize(static_cast<std::size_t>(m.size()));
    char* bytes = reinterpret_cast<char*>(buf.data());
    const std::size_t nbytes = buf.size() * sizeof(double);
    f.read(bytes, static_cast<std::streamsize>(nbytes));
    if (!f) throw IoError("truncated checkpoint data: " + path);
    h.update(bytes, nbytes);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        m(r, c) = static_cast<S>(buf[k++]);
  }
  return {j.at("stage").get<int>(), hex64(h.digest())};
}

}  // namespace drfer
