#pragma once

// Truncated BERT-style encoder classifier: token+position embeddings, a
// short stack of post-LN transformer layers, and a linear head read from
// the CLS hidden state.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fids/adam.hpp"
#include "fids/ops.hpp"
#include "fids/rng.hpp"
#include "fids/tensor.hpp"

namespace fids {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::size_t num_layers = 4;
  std::size_t hidden = 256;
  std::size_t heads = 4;
  std::size_t intermediate = 1024;
  std::size_t seq_len = 512;
  std::size_t vocab = 5000;
  std::size_t num_classes = 2;
  double dropout = 0.1;
};

inline void validate_config(const ModelConfig& c) {
  if (c.num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (c.hidden < 1 || c.heads < 1) throw ConfigError("hidden and heads must be >= 1");
  if (c.hidden % c.heads != 0) throw ConfigError("H mod A != 0");
  if (c.intermediate != 4 * c.hidden) throw ConfigError("FFN != 4H");
  if (c.seq_len < 2) throw ConfigError("seq_len must be >= 2");
  if (c.vocab < 1) throw ConfigError("vocab must be >= 1");
  if (c.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (c.dropout < 0.0 || c.dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
}

// All learnable tensors in a fixed, named order. The order is the contract
// for the optimizer, FedAvg and the checkpoint directory.
template <typename T>
struct ModelWeights {
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  Tensor<T>& at(const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return tensors[i];
    throw std::out_of_range("no tensor named " + name);
  }
  const Tensor<T>& at(const std::string& name) const {
    return const_cast<ModelWeights*>(this)->at(name);
  }

  void zero_grads() {
    for (auto& t : tensors) t.zero_grad();
  }

  ModelWeights clone() const {
    ModelWeights w;
    w.names = names;
    for (const auto& t : tensors)
      w.tensors.push_back(Tensor<T>::from_values(t.shape(), t.values(), t.requires_grad()));
    return w;
  }
};

namespace detail {

// Declares every tensor of the model, in checkpoint order.
inline std::vector<std::pair<std::string, Shape>> model_tensor_specs(const ModelConfig& c) {
  std::vector<std::pair<std::string, Shape>> specs;
  specs.push_back({"embeddings.token", {c.vocab, c.hidden}});
  specs.push_back({"embeddings.position", {c.seq_len, c.hidden}});
  specs.push_back({"embeddings.ln.gain", {c.hidden}});
  specs.push_back({"embeddings.ln.bias", {c.hidden}});
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    for (const char* proj : {"q", "k", "v", "o"}) {
      specs.push_back({p + "attn." + proj + ".weight", {c.hidden, c.hidden}});
      specs.push_back({p + "attn." + proj + ".bias", {c.hidden}});
    }
    specs.push_back({p + "attn.ln.gain", {c.hidden}});
    specs.push_back({p + "attn.ln.bias", {c.hidden}});
    specs.push_back({p + "ffn.up.weight", {c.hidden, c.intermediate}});
    specs.push_back({p + "ffn.up.bias", {c.intermediate}});
    specs.push_back({p + "ffn.down.weight", {c.intermediate, c.hidden}});
    specs.push_back({p + "ffn.down.bias", {c.hidden}});
    specs.push_back({p + "ffn.ln.gain", {c.hidden}});
    specs.push_back({p + "ffn.ln.bias", {c.hidden}});
  }
  specs.push_back({"classifier.weight", {c.hidden, c.num_classes}});
  specs.push_back({"classifier.bias", {c.num_classes}});
  return specs;
}

inline bool is_ln_gain(const std::string& name) { return name.ends_with("ln.gain"); }
inline bool is_bias(const std::string& name) {
  return name.ends_with(".bias") && !name.ends_with("ln.bias");
}

}  // namespace detail

// Weight init: truncated Normal(0, 0.02^2) at +-2 sigma for matrices and
// embeddings, zeros for biases, (1, 0) for layernorm affines.
template <typename T>
ModelWeights<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  ModelWeights<T> w;
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  for (auto& [name, shape] : detail::model_tensor_specs(cfg)) {
    Tensor<T> t(shape, /*requires_grad=*/true);
    if (detail::is_ln_gain(name)) {
      for (auto& v : t.values()) v = T(1);
    } else if (!detail::is_bias(name) && !name.ends_with("ln.bias")) {
      for (auto& v : t.values()) v = static_cast<T>(rng.truncated_normal(0.02));
    }
    w.names.push_back(name);
    w.tensors.push_back(std::move(t));
  }
  return w;
}

// Closed-form learnable-parameter count for a valid config.
inline std::size_t count_params(const ModelConfig& c) {
  validate_config(c);
  const std::size_t h = c.hidden, f = c.intermediate;
  std::size_t per_layer = 4 * (h * h + h) + 2 * (2 * h) + h * f + f + f * h + h;
  return c.vocab * h + c.seq_len * h + 2 * h + c.num_layers * per_layer +
         h * c.num_classes + c.num_classes;
}

// Estimated f32 checkpoint size: payload plus a rough container overhead.
inline std::size_t estimate_disk_bytes(const ModelConfig& c) {
  return 4 * count_params(c) + 4096;
}

template <typename T>
struct TokenBatch {
  std::vector<std::uint32_t> ids;     // batch * seq_len, row-major
  std::vector<std::uint8_t> mask;     // 1 = real token, 0 = PAD
  std::vector<std::size_t> labels;    // empty when unlabeled
  std::size_t batch = 0;
  std::size_t seq_len = 0;
};

template <typename T>
Tensor<T> forward(ModelWeights<T>& w, const ModelConfig& cfg, const TokenBatch<T>& batch,
                  bool training, Rng& rng) {
  if (batch.seq_len > cfg.seq_len)
    throw ConfigError("batch seq_len " + std::to_string(batch.seq_len) + " exceeds model limit " +
                      std::to_string(cfg.seq_len));
  const std::size_t b = batch.batch, s = batch.seq_len;
  auto x = embed_sequence(w.at("embeddings.token"), w.at("embeddings.position"), batch.ids, b, s);
  x = layer_norm(x, w.at("embeddings.ln.gain"), w.at("embeddings.ln.bias"));
  x = dropout(x, cfg.dropout, training, rng);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    auto q = add_bias(matmul(x, w.at(p + "attn.q.weight")), w.at(p + "attn.q.bias"));
    auto k = add_bias(matmul(x, w.at(p + "attn.k.weight")), w.at(p + "attn.k.bias"));
    auto v = add_bias(matmul(x, w.at(p + "attn.v.weight")), w.at(p + "attn.v.bias"));
    auto attn = multi_head_attention(q, k, v, batch.mask, b, s, cfg.heads);
    attn = add_bias(matmul(attn, w.at(p + "attn.o.weight")), w.at(p + "attn.o.bias"));
    attn = dropout(attn, cfg.dropout, training, rng);
    x = layer_norm(add(x, attn), w.at(p + "attn.ln.gain"), w.at(p + "attn.ln.bias"));
    auto f = gelu(add_bias(matmul(x, w.at(p + "ffn.up.weight")), w.at(p + "ffn.up.bias")));
    f = add_bias(matmul(f, w.at(p + "ffn.down.weight")), w.at(p + "ffn.down.bias"));
    f = dropout(f, cfg.dropout, training, rng);
    x = layer_norm(add(x, f), w.at(p + "ffn.ln.gain"), w.at(p + "ffn.ln.bias"));
  }
  std::vector<std::size_t> cls_rows(b);
  for (std::size_t i = 0; i < b; ++i) cls_rows[i] = i * s;
  auto cls = select_rows(x, cls_rows);
  return add_bias(matmul(cls, w.at("classifier.weight")), w.at("classifier.bias"));
}

// Argmax per row; ties break toward the lower class id.
template <typename T>
std::vector<std::size_t> predict_from_logits(const Tensor<T>& logits) {
  const std::size_t b = logits.size(0), c = logits.size(1);
  std::vector<std::size_t> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    const T* row = logits.values().data() + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = best;
  }
  return out;
}

template <typename T>
std::vector<std::size_t> predict(ModelWeights<T>& w, const ModelConfig& cfg,
                                 const TokenBatch<T>& batch) {
  Rng rng(0);  // unused: inference path takes no dropout
  return predict_from_logits(forward(w, cfg, batch, /*training=*/false, rng));
}

}  // namespace fids
