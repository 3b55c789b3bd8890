#pragma once

// Adam with decoupled weight decay. The decay term p -= lr*wd*p is applied
// before the moment update, so it never enters the moment estimates.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "fids/tensor.hpp"

namespace fids {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

template <typename T>
class AdamState {
 public:
  AdamState() = default;

  AdamState(AdamConfig cfg, const std::vector<Tensor<T>>& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.emplace_back(p.numel(), T(0));
      v_.emplace_back(p.numel(), T(0));
    }
  }

  std::size_t step() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // One optimizer application across all tracked parameters. Gradients are
  // read from each tensor's .grad() and must be populated.
  void apply(std::vector<Tensor<T>>& params) {
    if (params.size() != m_.size()) throw std::invalid_argument("adam: parameter count changed");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto& p = params[t];
      if (p.grad().size() != p.numel())
        throw std::invalid_argument("adam: missing gradient for parameter " + std::to_string(t));
      if (m_[t].size() != p.numel())
        throw std::invalid_argument("adam: shape changed for parameter " + std::to_string(t));
      auto& val = p.values();
      const auto& g = p.grad();
      auto& m = m_[t];
      auto& v = v_[t];
      for (std::size_t i = 0; i < val.size(); ++i) {
        double pi = static_cast<double>(val[i]);
        const double gi = static_cast<double>(g[i]);
        pi -= cfg_.lr * cfg_.weight_decay * pi;
        const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        pi -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        val[i] = static_cast<T>(pi);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace fids
