#pragma once

// Mini-batch training loop shared by centralized training and federated
// local updates. Per-epoch randomness (shuffle order, dropout masks) derives
// from (client seed, epoch index), so the same shard and seed always replay
// the same batches regardless of who drives the loop.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fids/adam.hpp"
#include "fids/flow.hpp"
#include "fids/model.hpp"
#include "fids/ops.hpp"

namespace fids {

struct TrainOptions {
  AdamConfig adam;
  std::size_t batch_size = 32;
};

template <typename T>
TokenBatch<T> make_batch(const std::vector<LabeledExample>& examples,
                         const std::vector<std::size_t>& order, std::size_t begin,
                         std::size_t end) {
  TokenBatch<T> batch;
  batch.batch = end - begin;
  batch.seq_len = examples[order[begin]].token_ids.size();
  batch.ids.reserve(batch.batch * batch.seq_len);
  batch.mask.reserve(batch.batch * batch.seq_len);
  batch.labels.reserve(batch.batch);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& ex = examples[order[i]];
    if (ex.token_ids.size() != batch.seq_len)
      throw DataError("examples have inconsistent sequence lengths");
    batch.ids.insert(batch.ids.end(), ex.token_ids.begin(), ex.token_ids.end());
    batch.mask.insert(batch.mask.end(), ex.mask.begin(), ex.mask.end());
    batch.labels.push_back(ex.label_id);
  }
  return batch;
}

// Mean training loss over one shuffled pass of `shard`.
template <typename T>
double train_one_epoch(ModelWeights<T>& weights, AdamState<T>& adam, const ModelConfig& cfg,
                       const std::vector<LabeledExample>& examples,
                       const std::vector<std::size_t>& shard, const TrainOptions& opts,
                       Rng& rng) {
  if (shard.empty()) throw DataError("training shard is empty");
  std::vector<std::size_t> order(shard.begin(), shard.end());
  std::sort(order.begin(), order.end());  // canonical order before the seeded shuffle
  rng.shuffle(order);
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += opts.batch_size) {
    const std::size_t end = std::min(begin + opts.batch_size, order.size());
    auto batch = make_batch<T>(examples, order, begin, end);
    weights.zero_grads();
    auto logits = forward(weights, cfg, batch, /*training=*/true, rng);
    auto loss = cross_entropy(logits, batch.labels);
    loss.backward();
    adam.apply(weights.tensors);
    loss_sum += static_cast<double>(loss.item());
    ++batches;
  }
  return loss_sum / static_cast<double>(batches);
}

// Runs `epochs` passes; epoch t draws its RNG from (client_seed,
// epoch_offset + t). Returns the final epoch's mean loss.
template <typename T>
double train_epochs(ModelWeights<T>& weights, AdamState<T>& adam, const ModelConfig& cfg,
                    const std::vector<LabeledExample>& examples,
                    const std::vector<std::size_t>& shard, std::size_t epochs,
                    std::uint64_t client_seed, std::size_t epoch_offset,
                    const TrainOptions& opts,
                    const std::function<void(std::size_t, double)>& on_epoch = {}) {
  double last = 0.0;
  for (std::size_t t = 0; t < epochs; ++t) {
    Rng rng(mix_seed(client_seed, epoch_offset + t, 0xe70c5ULL));
    last = train_one_epoch(weights, adam, cfg, examples, shard, opts, rng);
    if (on_epoch) on_epoch(epoch_offset + t, last);
  }
  return last;
}

template <typename T>
std::vector<std::size_t> predict_all(ModelWeights<T>& weights, const ModelConfig& cfg,
                                     const std::vector<LabeledExample>& examples,
                                     std::size_t batch_size) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> preds;
  preds.reserve(examples.size());
  for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, examples.size());
    auto batch = make_batch<T>(examples, order, begin, end);
    for (auto p : predict(weights, cfg, batch)) preds.push_back(p);
  }
  return preds;
}

inline std::vector<std::size_t> labels_of(const std::vector<LabeledExample>& examples) {
  std::vector<std::size_t> labels;
  labels.reserve(examples.size());
  for (const auto& ex : examples) labels.push_back(ex.label_id);
  return labels;
}

inline std::uint64_t client_stream_seed(std::uint64_t global_seed, std::size_t client_id) {
  return mix_seed(global_seed, client_id, 0xc11e47ULL);
}

}  // namespace fids
