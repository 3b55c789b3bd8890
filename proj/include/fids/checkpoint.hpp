#pragma once

// FIDS checkpoint container: magic "FIDS", u32 LE format version, u64 LE
// header length, JSON header (model config + ordered tensor directory),
// then raw little-endian tensor payloads. Offsets are relative to the
// start of the payload section. dtype is f32 or i8; an i8 tensor named W
// is followed by a companion f32 tensor "W.scales" in the directory.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fids/model.hpp"
#include "nlohmann/json.hpp"

namespace fids {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType { f32, i8 };

inline std::string dtype_name(DType d) { return d == DType::f32 ? "f32" : "i8"; }
inline DType dtype_from_name(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "i8") return DType::i8;
  throw CheckpointError("unknown dtype '" + s + "'");
}

struct CheckpointTensor {
  std::string name;
  Shape shape;
  DType dtype = DType::f32;
  std::vector<float> f32;      // valid when dtype == f32
  std::vector<std::int8_t> i8; // valid when dtype == i8

  std::size_t numel() const { return shape_numel(shape); }
  std::size_t payload_bytes() const { return dtype == DType::f32 ? 4 * numel() : numel(); }
};

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> class_names;  // optional label map for inference
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"num_layers", c.num_layers}, {"hidden", c.hidden},
          {"heads", c.heads},           {"intermediate", c.intermediate},
          {"seq_len", c.seq_len},       {"vocab", c.vocab},
          {"num_classes", c.num_classes}, {"dropout", c.dropout}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.intermediate = j.at("intermediate").get<std::size_t>();
  c.seq_len = j.at("seq_len").get<std::size_t>();
  c.vocab = j.at("vocab").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_le(const char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    dir.push_back({{"name", t.name},
                   {"shape", t.shape},
                   {"dtype", dtype_name(t.dtype)},
                   {"offset", offset}});
    offset += t.payload_bytes();
  }
  nlohmann::json header_json{{"config", config_to_json(ckpt.config)}, {"tensors", dir}};
  if (!ckpt.class_names.empty()) header_json["class_names"] = ckpt.class_names;
  const std::string header = header_json.dump();

  std::string out;
  out.reserve(16 + header.size() + offset);
  out += "FIDS";
  detail::put_u32_le(out, kCheckpointVersion);
  detail::put_u64_le(out, header.size());
  out += header;
  for (const auto& t : ckpt.tensors) {
    if (t.dtype == DType::f32) {
      static_assert(sizeof(float) == 4);
      const auto* p = reinterpret_cast<const char*>(t.f32.data());
      out.append(p, p + 4 * t.f32.size());  // little-endian host assumed
    } else {
      const auto* p = reinterpret_cast<const char*>(t.i8.data());
      out.append(p, p + t.i8.size());
    }
  }
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "FIDS") != 0)
    throw CheckpointError("not a FIDS checkpoint");
  const auto version = static_cast<std::uint32_t>(detail::get_le(bytes.data() + 4, 4));
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = detail::get_le(bytes.data() + 8, 8);
  if (16 + header_len > bytes.size()) throw CheckpointError("truncated checkpoint header");
  const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
  const std::size_t payload_start = 16 + header_len;

  Checkpoint ckpt;
  ckpt.config = config_from_json(header.at("config"));
  if (header.contains("class_names"))
    ckpt.class_names = header.at("class_names").get<std::vector<std::string>>();
  for (const auto& e : header.at("tensors")) {
    CheckpointTensor t;
    t.name = e.at("name").get<std::string>();
    t.shape = e.at("shape").get<Shape>();
    t.dtype = dtype_from_name(e.at("dtype").get<std::string>());
    const auto offset = e.at("offset").get<std::uint64_t>();
    const std::size_t pos = payload_start + offset;
    if (pos + t.payload_bytes() > bytes.size())
      throw CheckpointError("truncated payload for tensor " + t.name);
    if (t.dtype == DType::f32) {
      t.f32.resize(t.numel());
      std::memcpy(t.f32.data(), bytes.data() + pos, 4 * t.numel());
    } else {
      t.i8.resize(t.numel());
      std::memcpy(t.i8.data(), bytes.data() + pos, t.numel());
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);
  const auto bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

inline Checkpoint checkpoint_from_weights(const ModelWeights<float>& w, const ModelConfig& cfg) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  for (std::size_t i = 0; i < w.names.size(); ++i) {
    CheckpointTensor t;
    t.name = w.names[i];
    t.shape = w.tensors[i].shape();
    t.dtype = DType::f32;
    t.f32 = w.tensors[i].values();
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

// Rebuilds full-precision weights; i8 tensors dequantize through their
// "<name>.scales" companion (per output-channel scales, axis = last dim).
inline ModelWeights<float> weights_from_checkpoint(const Checkpoint& ckpt) {
  ModelWeights<float> w;
  for (auto& [name, shape] : detail::model_tensor_specs(ckpt.config)) {
    const auto* t = ckpt.find(name);
    if (!t) throw CheckpointError("checkpoint missing tensor " + name);
    if (t->shape != shape)
      throw CheckpointError("tensor " + name + " has shape " + shape_str(t->shape) +
                            ", expected " + shape_str(shape));
    std::vector<float> values;
    if (t->dtype == DType::f32) {
      values = t->f32;
    } else {
      const auto* sc = ckpt.find(name + ".scales");
      if (!sc || sc->dtype != DType::f32)
        throw CheckpointError("missing f32 scales for quantized tensor " + name);
      const std::size_t channels = shape.back();
      if (sc->numel() != channels)
        throw CheckpointError("scale vector length mismatch for " + name);
      values.resize(t->numel());
      for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = static_cast<float>(t->i8[i]) * sc->f32[i % channels];
    }
    w.names.push_back(name);
    w.tensors.push_back(Tensor<float>::from_values(shape, std::move(values), true));
  }
  return w;
}

}  // namespace fids
