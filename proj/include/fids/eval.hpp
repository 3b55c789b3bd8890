#pragma once

// Metrics, confusion matrices and the inference timing harness.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fids/model.hpp"
#include "nlohmann/json.hpp"

namespace fids {

struct MetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double accuracy(const std::vector<std::size_t>& predictions,
                       const std::vector<std::size_t>& labels) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw MetricsError("accuracy: need equal-length non-empty inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;  // row = true class, column = predicted

  std::size_t& at(std::size_t truth, std::size_t pred) {
    return counts[truth * num_classes + pred];
  }
  std::size_t at(std::size_t truth, std::size_t pred) const {
    return counts[truth * num_classes + pred];
  }
  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  double accuracy() const {
    std::size_t diag = 0;
    for (std::size_t c = 0; c < num_classes; ++c) diag += at(c, c);
    return total() ? static_cast<double>(diag) / static_cast<double>(total()) : 0.0;
  }

  std::string to_csv() const {
    std::ostringstream oss;
    for (std::size_t i = 0; i < num_classes; ++i) {
      for (std::size_t j = 0; j < num_classes; ++j) oss << (j ? "," : "") << at(i, j);
      oss << "\n";
    }
    return oss.str();
  }
};

inline ConfusionMatrix confusion(const std::vector<std::size_t>& predictions,
                                 const std::vector<std::size_t>& labels, std::size_t num_classes) {
  if (predictions.size() != labels.size())
    throw MetricsError("confusion: prediction/label length mismatch");
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(num_classes * num_classes, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] >= num_classes || labels[i] >= num_classes)
      throw MetricsError("confusion: class id out of range at index " + std::to_string(i));
    ++cm.at(labels[i], predictions[i]);
  }
  return cm;
}

struct ClassMetrics {
  std::vector<double> precision, recall, f1;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
};

// Zero-denominator cells report 0 by convention.
inline ClassMetrics per_class_metrics(const ConfusionMatrix& cm) {
  ClassMetrics m;
  const std::size_t c = cm.num_classes;
  m.precision.resize(c);
  m.recall.resize(c);
  m.f1.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    std::size_t col = 0, row = 0;
    for (std::size_t j = 0; j < c; ++j) {
      col += cm.at(j, i);
      row += cm.at(i, j);
    }
    const double tp = static_cast<double>(cm.at(i, i));
    m.precision[i] = col ? tp / static_cast<double>(col) : 0.0;
    m.recall[i] = row ? tp / static_cast<double>(row) : 0.0;
    m.f1[i] = (m.precision[i] + m.recall[i]) > 0.0
                  ? 2.0 * m.precision[i] * m.recall[i] / (m.precision[i] + m.recall[i])
                  : 0.0;
    m.macro_precision += m.precision[i];
    m.macro_recall += m.recall[i];
    m.macro_f1 += m.f1[i];
  }
  if (c) {
    m.macro_precision /= static_cast<double>(c);
    m.macro_recall /= static_cast<double>(c);
    m.macro_f1 /= static_cast<double>(c);
  }
  return m;
}

inline nlohmann::json metrics_to_json(const ConfusionMatrix& cm,
                                      const std::vector<std::string>& class_names) {
  const auto m = per_class_metrics(cm);
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t i = 0; i < cm.num_classes; ++i)
    per_class.push_back(
        {{"class", i < class_names.size() ? class_names[i] : std::to_string(i)},
         {"precision", m.precision[i]},
         {"recall", m.recall[i]},
         {"f1", m.f1[i]}});
  std::vector<std::vector<std::size_t>> rows(cm.num_classes,
                                             std::vector<std::size_t>(cm.num_classes));
  for (std::size_t i = 0; i < cm.num_classes; ++i)
    for (std::size_t j = 0; j < cm.num_classes; ++j) rows[i][j] = cm.at(i, j);
  return {{"accuracy", cm.accuracy()},
          {"confusion", rows},
          {"per_class", per_class},
          {"macro", {{"precision", m.macro_precision},
                     {"recall", m.macro_recall},
                     {"f1", m.macro_f1}}}};
}

struct TimingReport {
  std::size_t repetitions = 0;
  std::size_t warmup = 0;
  double median_seconds = 0.0;
  double p95_seconds = 0.0;
  std::string hardware;

  nlohmann::json to_json() const {
    return {{"repetitions", repetitions},
            {"warmup", warmup},
            {"median_seconds", median_seconds},
            {"p95_seconds", p95_seconds},
            {"hardware", hardware}};
  }
};

// Single-example forward latency. Monotonic clock, median of reps; absolute
// numbers describe the host they run on, nothing more.
template <typename T>
TimingReport time_inference(ModelWeights<T>& weights, const ModelConfig& cfg,
                            const TokenBatch<T>& example, std::size_t reps, std::size_t warmup,
                            std::string hardware_description) {
  if (reps < 10) throw MetricsError("time_inference: need at least 10 repetitions");
  if (warmup < 3) warmup = 3;
  Rng rng(0);
  for (std::size_t i = 0; i < warmup; ++i) forward(weights, cfg, example, false, rng);
  std::vector<double> samples(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    forward(weights, cfg, example, false, rng);
    const auto t1 = std::chrono::steady_clock::now();
    samples[i] = std::chrono::duration<double>(t1 - t0).count();
  }
  std::sort(samples.begin(), samples.end());
  TimingReport r;
  r.repetitions = reps;
  r.warmup = warmup;
  r.median_seconds = samples[reps / 2];
  r.p95_seconds = samples[std::min(reps - 1, static_cast<std::size_t>(
                                                 std::ceil(0.95 * double(reps)) - 1))];
  r.hardware = std::move(hardware_description);
  return r;
}

}  // namespace fids
