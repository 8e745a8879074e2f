#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "rfl/error.hpp"
#include "rfl/model.hpp"

namespace rfl {

// Checkpoint archive: magic, format version, the model config as JSON, then
// named tensors with explicit shapes and little-endian float32 payloads.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'R', 'F', 'L', 'C', 'K', 'P', 'T', '\0'};

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

inline float read_f32(std::istream& in) {
  const std::uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamStore<T>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 8);
  detail::write_u32(out, kCheckpointVersion);

  const std::string cfg_json = nlohmann::json(cfg).dump();
  detail::write_u32(out, static_cast<std::uint32_t>(cfg_json.size()));
  out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

  detail::write_u32(out, static_cast<std::uint32_t>(params.names.size()));
  for (std::size_t i = 0; i < params.names.size(); ++i) {
    const auto& name = params.names[i];
    const auto& t = params.tensors[i];
    detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) detail::write_u32(out, static_cast<std::uint32_t>(d));
    for (T v : t.data) detail::write_f32(out, static_cast<float>(v));
  }
  if (!out) throw IoError("failed to write " + path);
}

struct LoadedCheckpoint {
  ModelConfig config;
  ParamStore<float> params;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError("not a checkpoint file: " + path);
  }
  const std::uint32_t version = detail::read_u32(in);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }

  LoadedCheckpoint ckpt;
  const std::uint32_t json_len = detail::read_u32(in);
  std::string cfg_json(json_len, '\0');
  in.read(cfg_json.data(), json_len);
  if (!in) throw FormatError("truncated checkpoint config");
  ckpt.config = nlohmann::json::parse(cfg_json).get<ModelConfig>();
  ckpt.config.validate();

  const std::uint32_t n_tensors = detail::read_u32(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::uint32_t name_len = detail::read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = detail::read_u32(in);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(detail::read_u32(in));
    Tensor<float> t(shape);
    for (auto& v : t.data) v = detail::read_f32(in);
    ckpt.params.add(name, std::move(t));
  }

  // Shapes must match what the config dictates.
  std::size_t expected = 0;
  bool ok = true;
  for_each_param(ckpt.config, [&](const std::string& name, const std::vector<int>& shape) {
    auto it = ckpt.params.index.find(name);
    if (it == ckpt.params.index.end() ||
        ckpt.params.tensors[it->second].shape != shape) {
      ok = false;
    }
    ++expected;
  });
  if (!ok || expected != ckpt.params.names.size()) {
    throw FormatError("checkpoint tensors do not match its config");
  }
  return ckpt;
}

}  // namespace rfl
