#pragma once

// Finite-difference gradient oracle used by the op and model tests. Runs in
// double so the central-difference step (h = 1e-3) stays well above
// round-off. Kept independent of the backward implementations it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "fids/rng.hpp"
#include "fids/tensor.hpp"

namespace fids::test {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// f must rebuild the graph from the leaves on every call.
inline GradCheckResult grad_check(std::vector<Tensor<double>> leaves,
                                  const std::function<Tensor<double>()>& f,
                                  double h = 1e-3, std::size_t max_per_leaf = 25) {
  auto loss = f();
  for (auto& leaf : leaves) leaf.zero_grad();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) {
    leaf.ensure_grad();
    analytic.push_back(leaf.grad());
  }

  GradCheckResult res;
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    auto& vals = leaves[t].values();
    const std::size_t stride = std::max<std::size_t>(1, vals.size() / max_per_leaf);
    for (std::size_t i = 0; i < vals.size(); i += stride) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = f().item();
      vals[i] = orig - h;
      const double fm = f().item();
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[t][i];
      const double rel = std::abs(a - numeric) / std::max(1e-6, std::abs(a) + std::abs(numeric));
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
    }
  }
  return res;
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal() * scale;
  return Tensor<double>::from_values(std::move(shape), std::move(v), true);
}

}  // namespace fids::test
