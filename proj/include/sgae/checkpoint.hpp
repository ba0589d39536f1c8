#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   bytes 0..3    "SGAE"
//   u32           format version
//   u64           header length in bytes
//   header        UTF-8 JSON: {version, phase, epoch, rng_state, config, metadata,
//                              tensors: [{name, shape, offset, count}]}
//   payload       float32 values, tensors back to back; offset is in bytes from
//                 the start of the payload
//
// Parameters live in double precision; a checkpoint holds them rounded to float.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "sgae/errors.hpp"
#include "sgae/layers.hpp"

namespace sgae {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "SGAE";

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const CheckpointTensor&) const = default;
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  std::string phase;
  std::size_t epoch = 0;
  std::string rng_state;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(std::string_view name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }

  bool operator==(const Checkpoint&) const = default;
};

inline CheckpointTensor capture_tensor(const std::string& name, const Tensor& t) {
  CheckpointTensor c{name, t.shape(), {}};
  c.values.reserve(t.numel());
  for (double v : t.data()) c.values.push_back(static_cast<float>(v));
  return c;
}

inline std::vector<CheckpointTensor> capture(const ParameterList& params) {
  std::vector<CheckpointTensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(capture_tensor(p.name, p.tensor));
  return out;
}

/// Copies one stored tensor into a live parameter; shapes must agree.
inline void load_tensor(const CheckpointTensor& stored, Tensor target) {
  if (stored.shape != target.shape()) {
    throw ModelError("checkpoint tensor '" + stored.name + "' has shape " + shape_str(stored.shape) +
                     ", model expects " + shape_str(target.shape()));
  }
  auto values = target.data();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(stored.values[i]);
}

/// Loads every parameter by name; missing names and shape mismatches are model errors.
inline void restore(const Checkpoint& ckpt, const ParameterList& params) {
  for (const auto& p : params) {
    const auto* stored = ckpt.find(p.name);
    if (!stored) throw ModelError("checkpoint lacks tensor '" + p.name + "'");
    load_tensor(*stored, p.tensor);
  }
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint64_t get_le(std::string_view bytes, std::size_t pos, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json directory = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (t.values.size() != shape_numel(t.shape)) throw ModelError("checkpoint tensor '" + t.name + "' size mismatch");
    directory.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += 4 * t.values.size();
  }
  const nlohmann::json header = {{"version", ckpt.format_version}, {"phase", ckpt.phase},
                                 {"epoch", ckpt.epoch},            {"rng_state", ckpt.rng_state},
                                 {"config", ckpt.config},          {"metadata", ckpt.metadata},
                                 {"tensors", directory}};
  const std::string text = header.dump();

  std::string out(kCheckpointMagic);
  detail::put_u32(out, ckpt.format_version);
  detail::put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& t : ckpt.tensors) {
    for (float f : t.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  constexpr std::size_t prefix = 4 + 4 + 8;
  if (bytes.size() < prefix || bytes.substr(0, 4) != kCheckpointMagic) {
    throw ModelError("not a checkpoint: missing SGAE magic bytes");
  }
  Checkpoint ckpt;
  ckpt.format_version = static_cast<std::uint32_t>(detail::get_le(bytes, 4, 4));
  if (ckpt.format_version != kCheckpointVersion) {
    throw ModelError("unsupported checkpoint version " + std::to_string(ckpt.format_version));
  }
  const std::uint64_t header_len = detail::get_le(bytes, 8, 8);
  if (header_len > bytes.size() - prefix) throw ModelError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(prefix, header_len));
    ckpt.phase = header.at("phase").get<std::string>();
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.metadata = header.at("metadata");
    if (!header.at("tensors").is_array()) throw ModelError("checkpoint header tensors must be an array");
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("checkpoint header unreadable: ") + e.what());
  }
  const std::string_view payload = bytes.substr(prefix + header_len);
  for (const auto& entry : header.at("tensors")) {
    CheckpointTensor t;
    std::uint64_t offset = 0, count = 0;
    try {
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      offset = entry.at("offset").get<std::uint64_t>();
      count = entry.at("count").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("checkpoint tensor entry unreadable: ") + e.what());
    }
    if (count != shape_numel(t.shape) || count > payload.size() / 4 || offset > payload.size() - 4 * count) {
      throw ModelError("checkpoint tensor '" + t.name + "' payload out of bounds");
    }
    t.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      t.values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_le(payload, offset + 4 * i, 4)));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace sgae
