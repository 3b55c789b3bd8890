#pragma once

// Federated simulation: broadcast, local training, upload, FedAvg,
// global evaluation. Clients are simulated workers over a PartitionPlan;
// aggregation order is fixed by client id, so results are independent of
// how many worker threads execute the local updates.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "fids/eval.hpp"
#include "fids/model.hpp"
#include "fids/partition.hpp"
#include "fids/trainer.hpp"
#include "nlohmann/json.hpp"

namespace fids {

struct FedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
struct ClientUpdate {
  std::size_t client_id = 0;
  ModelWeights<T> weights;
  std::size_t n_k = 0;  // samples used in local training
  double final_loss = 0.0;
};

// Weighted average w <- sum_k (n_k / sum_j n_j) w_k, accumulated in double,
// clients visited in ascending id order.
template <typename T>
ModelWeights<T> fedavg(const std::vector<ClientUpdate<T>>& updates) {
  if (updates.empty()) throw FedError("fedavg: no updates");
  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return updates[a].client_id < updates[b].client_id;
  });
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.n_k < 1) throw FedError("fedavg: client " + std::to_string(u.client_id) +
                                  " reports zero samples");
    total += static_cast<double>(u.n_k);
  }
  const auto& ref = updates[order[0]].weights;
  ModelWeights<T> out;
  out.names = ref.names;
  for (std::size_t t = 0; t < ref.tensors.size(); ++t) {
    std::vector<double> acc(ref.tensors[t].numel(), 0.0);
    for (auto oi : order) {
      const auto& u = updates[oi];
      if (u.weights.tensors.size() != ref.tensors.size() ||
          u.weights.tensors[t].shape() != ref.tensors[t].shape())
        throw FedError("fedavg: shape mismatch from client " + std::to_string(u.client_id) +
                       " on tensor " + ref.names[t]);
      const double w = static_cast<double>(u.n_k) / total;
      const auto& vals = u.weights.tensors[t].values();
      for (std::size_t i = 0; i < vals.size(); ++i) acc[i] += w * static_cast<double>(vals[i]);
    }
    std::vector<T> vals(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) vals[i] = static_cast<T>(acc[i]);
    out.tensors.push_back(
        Tensor<T>::from_values(ref.tensors[t].shape(), std::move(vals), true));
  }
  return out;
}

struct RoundReport {
  std::size_t round = 0;  // 0 = pre-training evaluation of the random init
  double acc_global = 0.0;
  std::vector<std::pair<std::size_t, double>> loss_by_client;
  double seconds = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json losses = nlohmann::json::object();
    for (const auto& [id, loss] : loss_by_client) losses[std::to_string(id)] = loss;
    return {{"round", round},
            {"acc_global", acc_global},
            {"loss_by_client", losses},
            {"seconds", seconds}};
  }
};

struct RoundConfig {
  std::size_t rounds = 10;
  std::size_t local_epochs = 1;
  TrainOptions train;
  std::uint64_t seed = 0;
  std::size_t workers = 1;  // concurrent client tasks; never affects results
};

template <typename T>
struct SimulationResult {
  ModelWeights<T> global;
  std::vector<RoundReport> reports;
};

// One local update: clone of the global weights trained E epochs on the
// client's shard. The optimizer state is client-owned and persists across
// rounds; `round` selects the epoch window so replays are exact.
template <typename T>
ClientUpdate<T> local_train(const ModelWeights<T>& global, AdamState<T>& adam,
                            const ModelConfig& cfg, const std::vector<LabeledExample>& examples,
                            const std::vector<std::size_t>& shard, std::size_t client_id,
                            std::size_t local_epochs, std::size_t round,
                            const TrainOptions& opts, std::uint64_t global_seed) {
  if (shard.empty()) throw FedError("client " + std::to_string(client_id) + " has empty shard");
  ClientUpdate<T> update;
  update.client_id = client_id;
  update.n_k = shard.size();
  update.weights = global.clone();
  update.final_loss =
      train_epochs(update.weights, adam, cfg, examples, shard, local_epochs,
                   client_stream_seed(global_seed, client_id), (round - 1) * local_epochs, opts);
  return update;
}

template <typename T>
SimulationResult<T> run_simulation(const ModelConfig& cfg, const RoundConfig& rc,
                                   const PartitionPlan& plan,
                                   const std::vector<LabeledExample>& train_examples,
                                   const std::vector<LabeledExample>& test_examples,
                                   const std::function<void(const RoundReport&)>& on_round = {}) {
  if (rc.rounds < 1 || rc.local_epochs < 1)
    throw FedError("rounds and local_epochs must be >= 1");
  const std::size_t k = plan.num_clients;
  SimulationResult<T> result;
  result.global = init_model<T>(cfg, rc.seed);

  const auto test_labels = labels_of(test_examples);
  auto evaluate = [&](ModelWeights<T>& w) {
    return accuracy(predict_all(w, cfg, test_examples, rc.train.batch_size), test_labels);
  };

  {
    const auto t0 = std::chrono::steady_clock::now();
    RoundReport r0;
    r0.round = 0;
    r0.acc_global = evaluate(result.global);
    r0.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.reports.push_back(r0);
    if (on_round) on_round(result.reports.back());
  }

  std::vector<AdamState<T>> client_adam;
  client_adam.reserve(k);
  for (std::size_t c = 0; c < k; ++c)
    client_adam.emplace_back(rc.train.adam, result.global.tensors);

  for (std::size_t round = 1; round <= rc.rounds; ++round) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<ClientUpdate<T>> updates(k);
    std::exception_ptr failure;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= k) return;
        try {
          updates[c] = local_train(result.global, client_adam[c], cfg, train_examples,
                                   plan.shards[c], c, rc.local_epochs, round, rc.train, rc.seed);
        } catch (...) {
          failure = std::current_exception();
          return;
        }
      }
    };
    const std::size_t nthreads = std::max<std::size_t>(1, std::min(rc.workers, k));
    if (nthreads == 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(work);
      for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    result.global = fedavg(updates);
    RoundReport rep;
    rep.round = round;
    rep.acc_global = evaluate(result.global);
    for (const auto& u : updates) rep.loss_by_client.push_back({u.client_id, u.final_loss});
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.reports.push_back(rep);
    if (on_round) on_round(result.reports.back());
  }
  return result;
}

}  // namespace fids
