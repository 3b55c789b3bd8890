#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
// The scalar type is a template parameter: training runs on float, the
// gradient-check suite instantiates double so finite differences stay
// meaningful. Raw GEMM goes through CBLAS; everything around it (the graph,
// every backward rule) lives here and in ops.hpp.

#include <cblas.h>

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace fids {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream oss;
  oss << "[";
  for (std::size_t i = 0; i < s.size(); ++i) oss << (i ? "x" : "") << s[i];
  oss << "]";
  return oss.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<TensorNode<T>>()) {
    node_->shape = std::move(shape);
    node_->values.assign(shape_numel(node_->shape), T(0));
    node_->requires_grad = requires_grad;
  }

  static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor adopt(std::shared_ptr<TensorNode<T>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size(std::size_t i) const { return node_->shape[i]; }
  std::size_t numel() const { return node_->values.size(); }
  std::vector<T>& values() { return node_->values; }
  const std::vector<T>& values() const { return node_->values; }
  std::vector<T>& grad() { return node_->grad; }
  const std::vector<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  void ensure_grad() { node_->ensure_grad(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->values.size(), T(0));
  }
  std::shared_ptr<TensorNode<T>> node() const { return node_; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() requires a scalar, got " + shape_str(shape()));
    return node_->values[0];
  }

  // Reverse pass from a scalar. Seeds d(this)/d(this) = 1 and walks the
  // graph in reverse topological order.
  void backward() {
    if (numel() != 1) throw ShapeError("backward() requires a scalar, got " + shape_str(shape()));
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> seen;
    topo(node_.get(), seen, order);
    node_->ensure_grad();
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backprop) (*it)->backprop(**it);
    }
  }

 private:
  static void topo(TensorNode<T>* root, std::unordered_set<TensorNode<T>*>& seen,
                   std::vector<TensorNode<T>*>& order) {
    // Iterative DFS; long training graphs overflow the stack otherwise.
    struct Frame {
      TensorNode<T>* n;
      std::size_t next_child;
    };
    std::vector<Frame> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_child < f.n->parents.size()) {
        TensorNode<T>* p = f.n->parents[f.next_child++].get();
        if (seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
std::shared_ptr<TensorNode<T>> make_node(Shape shape,
                                         std::vector<std::shared_ptr<TensorNode<T>>> parents) {
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->values.assign(shape_numel(n->shape), T(0));
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

}  // namespace detail

}  // namespace fids
