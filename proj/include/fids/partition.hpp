#pragma once

// Client data partitioning: IID round-robin and Dirichlet label-skew.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fids/rng.hpp"
#include "nlohmann/json.hpp"

namespace fids {

struct PartitionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PartitionPlan {
  std::size_t num_clients = 0;
  std::optional<double> alpha;  // absent for IID
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> shards;  // per client, sorted ascending

  nlohmann::json to_json() const {
    nlohmann::json j{{"clients", num_clients}, {"seed", seed}, {"shards", shards}};
    if (alpha)
      j["alpha"] = *alpha;
    else
      j["alpha"] = nullptr;
    return j;
  }

  static PartitionPlan from_json(const nlohmann::json& j) {
    PartitionPlan p;
    p.num_clients = j.at("clients").get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("alpha").is_null()) p.alpha = j.at("alpha").get<double>();
    p.shards = j.at("shards").get<std::vector<std::vector<std::size_t>>>();
    return p;
  }
};

namespace detail {

inline void sort_shards(PartitionPlan& plan) {
  for (auto& s : plan.shards) std::sort(s.begin(), s.end());
}

// No client may end up empty; steal single samples from the largest shard.
inline void repair_empty_shards(PartitionPlan& plan) {
  for (auto& shard : plan.shards) {
    if (!shard.empty()) continue;
    auto largest = std::max_element(
        plan.shards.begin(), plan.shards.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (largest->size() <= 1) throw PartitionError("not enough samples to fill every client");
    shard.push_back(largest->back());
    largest->pop_back();
  }
}

}  // namespace detail

// Seeded global shuffle, round-robin assignment; shard sizes differ by <= 1.
inline PartitionPlan split_iid(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw PartitionError("need at least one client");
  if (n < k)
    throw PartitionError("cannot split " + std::to_string(n) + " samples across " +
                         std::to_string(k) + " clients");
  PartitionPlan plan;
  plan.num_clients = k;
  plan.seed = seed;
  plan.shards.resize(k);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x696964ULL));
  rng.shuffle(idx);
  for (std::size_t i = 0; i < n; ++i) plan.shards[i % k].push_back(idx[i]);
  detail::sort_shards(plan);
  return plan;
}

// Per class: draw p ~ Dirichlet(alpha * 1_K), distribute the class's
// shuffled indices by largest-remainder rounding of the proportions.
inline PartitionPlan split_dirichlet(const std::vector<std::size_t>& labels, std::size_t k,
                                     double alpha, std::uint64_t seed) {
  if (k < 1) throw PartitionError("need at least one client");
  if (alpha <= 0.0) throw PartitionError("alpha must be > 0");
  if (labels.size() < k) throw PartitionError("fewer samples than clients");
  PartitionPlan plan;
  plan.num_clients = k;
  plan.alpha = alpha;
  plan.seed = seed;
  plan.shards.resize(k);

  const std::size_t num_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  Rng rng(mix_seed(seed, 0x646972ULL));
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    if (idx.empty()) continue;
    rng.shuffle(idx);
    const auto p = rng.dirichlet(alpha, k);

    // Largest-remainder rounding of p * n to integer counts summing to n.
    const std::size_t n = idx.size();
    std::vector<std::size_t> counts(k);
    std::vector<std::pair<double, std::size_t>> remainders(k);
    std::size_t assigned = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double exact = p[j] * static_cast<double>(n);
      counts[j] = static_cast<std::size_t>(std::floor(exact));
      remainders[j] = {exact - std::floor(exact), j};
      assigned += counts[j];
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;  // deterministic tie-break by client id
    });
    for (std::size_t j = 0; assigned < n; ++j, ++assigned) ++counts[remainders[j % k].second];

    std::size_t cursor = 0;
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < counts[j]; ++t) plan.shards[j].push_back(idx[cursor++]);
  }
  detail::repair_empty_shards(plan);
  detail::sort_shards(plan);
  return plan;
}

struct PartitionStats {
  std::vector<std::vector<std::size_t>> class_counts;  // client x class
  std::vector<double> l1_from_global;                  // per client
  double mean_l1 = 0.0;
};

inline PartitionStats partition_stats(const PartitionPlan& plan,
                                      const std::vector<std::size_t>& labels) {
  const std::size_t num_classes =
      labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  PartitionStats stats;
  stats.class_counts.assign(plan.num_clients, std::vector<std::size_t>(num_classes, 0));
  std::vector<double> global(num_classes, 0.0);
  for (auto l : labels) global[l] += 1.0;
  for (auto& g : global) g /= static_cast<double>(labels.size());

  for (std::size_t j = 0; j < plan.num_clients; ++j) {
    for (auto i : plan.shards[j]) {
      if (i >= labels.size()) throw PartitionError("plan index out of range for labels");
      ++stats.class_counts[j][labels[i]];
    }
    const double total = static_cast<double>(plan.shards[j].size());
    double l1 = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c)
      l1 += std::abs(static_cast<double>(stats.class_counts[j][c]) / total - global[c]);
    stats.l1_from_global.push_back(l1);
    stats.mean_l1 += l1;
  }
  if (plan.num_clients) stats.mean_l1 /= static_cast<double>(plan.num_clients);
  return stats;
}

}  // namespace fids
