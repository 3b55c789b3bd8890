#pragma once

// Post-training symmetric per-channel int8 weight quantization.
// scale_c = max|w_c| / 127 (1 for an all-zero channel), q = clamp(rne(w/scale)),
// zero-point fixed at 0 and code -128 unused. Rounding is half-to-even.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fids/checkpoint.hpp"
#include "fids/tensor.hpp"
#include "nlohmann/json.hpp"

namespace fids {

struct QuantizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QuantizedTensor {
  Shape shape;
  std::size_t axis = 0;
  std::vector<std::int8_t> q_values;
  std::vector<float> scales;  // one per channel along axis
};

// Pass fixed_scales to requantize against known scales (idempotence path);
// otherwise scales derive from the channel maxima.
inline QuantizedTensor quantize_per_channel(const Shape& shape, const std::vector<float>& values,
                                            std::size_t axis,
                                            const std::vector<float>* fixed_scales = nullptr) {
  if (shape.empty() || axis >= shape.size())
    throw QuantizeError("quantize: axis " + std::to_string(axis) + " invalid for " +
                        shape_str(shape));
  for (float v : values)
    if (!std::isfinite(v)) throw QuantizeError("quantize: non-finite input value");

  QuantizedTensor out;
  out.shape = shape;
  out.axis = axis;
  out.q_values.resize(values.size());
  const std::size_t channels = shape[axis];
  out.scales.assign(channels, 0.0f);

  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const auto channel_of = [&](std::size_t i) { return (i / inner) % channels; };

  if (fixed_scales) {
    if (fixed_scales->size() != channels)
      throw QuantizeError("quantize: fixed scale count mismatch");
    out.scales = *fixed_scales;
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::size_t c = channel_of(i);
      out.scales[c] = std::max(out.scales[c], std::abs(values[i]));
    }
    for (auto& s : out.scales) s = s > 0.0f ? s / 127.0f : 1.0f;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float scaled = values[i] / out.scales[channel_of(i)];
    const float r = std::nearbyintf(scaled);  // default FP mode: half to even
    out.q_values[i] = static_cast<std::int8_t>(std::clamp(r, -127.0f, 127.0f));
  }
  return out;
}

inline std::vector<float> dequantize(const QuantizedTensor& q) {
  const std::size_t channels = q.shape[q.axis];
  std::size_t inner = 1;
  for (std::size_t i = q.axis + 1; i < q.shape.size(); ++i) inner *= q.shape[i];
  std::vector<float> out(q.q_values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(q.q_values[i]) * q.scales[(i / inner) % channels];
  return out;
}

struct QuantizePolicy {
  enum class Mode { kDefault, kNone, kExplicit };
  Mode mode = Mode::kDefault;
  std::vector<std::string> tensor_names;  // for kExplicit
};

struct QuantizationReport {
  struct Entry {
    std::string name;
    bool quantized = false;
    std::size_t bytes_before = 0;
    std::size_t bytes_after = 0;
  };
  std::vector<Entry> tensors;
  std::size_t payload_bytes_before = 0;
  std::size_t payload_bytes_after = 0;
  std::size_t file_bytes_before = 0;
  std::size_t file_bytes_after = 0;
  double reduction_percent = 0.0;
  double accuracy_before = -1.0;  // < 0 when no eval set supplied
  double accuracy_after = -1.0;

  nlohmann::json to_json() const {
    nlohmann::json per_tensor = nlohmann::json::array();
    for (const auto& e : tensors)
      per_tensor.push_back({{"name", e.name},
                            {"policy", e.quantized ? "quantized" : "kept-full-precision"},
                            {"bytes_before", e.bytes_before},
                            {"bytes_after", e.bytes_after}});
    nlohmann::json j{{"tensors", per_tensor},
                     {"payload_bytes_before", payload_bytes_before},
                     {"payload_bytes_after", payload_bytes_after},
                     {"file_bytes_before", file_bytes_before},
                     {"file_bytes_after", file_bytes_after},
                     {"reduction_percent", reduction_percent}};
    if (accuracy_before >= 0.0) {
      j["accuracy_before"] = accuracy_before;
      j["accuracy_after"] = accuracy_after;
      j["accuracy_delta"] = accuracy_after - accuracy_before;
    }
    return j;
  }
};

// Default policy: every rank-2 weight matrix except the embedding tables is
// quantized along its output-channel (last) axis; embeddings, layernorm
// parameters and biases stay f32.
inline bool default_quantize_choice(const CheckpointTensor& t) {
  return t.shape.size() == 2 && t.dtype == DType::f32 &&
         t.name.rfind("embeddings.", 0) != 0;
}

inline std::pair<Checkpoint, QuantizationReport> quantize_model(const Checkpoint& in,
                                                                const QuantizePolicy& policy) {
  if (policy.mode == QuantizePolicy::Mode::kExplicit) {
    for (const auto& name : policy.tensor_names)
      if (!in.find(name)) throw QuantizeError("policy names unknown tensor '" + name + "'");
  }
  Checkpoint out;
  out.config = in.config;
  out.class_names = in.class_names;
  QuantizationReport report;
  for (const auto& t : in.tensors) {
    bool quantize = false;
    switch (policy.mode) {
      case QuantizePolicy::Mode::kDefault:
        quantize = default_quantize_choice(t);
        break;
      case QuantizePolicy::Mode::kNone:
        quantize = false;
        break;
      case QuantizePolicy::Mode::kExplicit:
        quantize = std::find(policy.tensor_names.begin(), policy.tensor_names.end(), t.name) !=
                   policy.tensor_names.end();
        break;
    }
    QuantizationReport::Entry entry{t.name, quantize, t.payload_bytes(), 0};
    if (quantize) {
      auto q = quantize_per_channel(t.shape, t.f32, t.shape.size() - 1);
      CheckpointTensor qt;
      qt.name = t.name;
      qt.shape = t.shape;
      qt.dtype = DType::i8;
      qt.i8 = std::move(q.q_values);
      out.tensors.push_back(std::move(qt));
      CheckpointTensor st;
      st.name = t.name + ".scales";
      st.shape = {q.scales.size()};
      st.dtype = DType::f32;
      st.f32 = std::move(q.scales);
      entry.bytes_after = t.numel() + 4 * st.numel();
      out.tensors.push_back(std::move(st));
    } else {
      entry.bytes_after = t.payload_bytes();
      out.tensors.push_back(t);
    }
    report.payload_bytes_before += entry.bytes_before;
    report.payload_bytes_after += entry.bytes_after;
    report.tensors.push_back(std::move(entry));
  }
  report.file_bytes_before = serialize_checkpoint(in).size();
  report.file_bytes_after = serialize_checkpoint(out).size();
  report.reduction_percent =
      100.0 * (1.0 - static_cast<double>(report.file_bytes_after) /
                         static_cast<double>(report.file_bytes_before));
  return {std::move(out), std::move(report)};
}

}  // namespace fids
