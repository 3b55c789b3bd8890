#pragma once

// Differentiable operations over Tensor<T>. Each op writes its forward
// result eagerly and attaches a closure that scatters gradients back to its
// parents. Nodes that do not require grad drop their parents so inference
// graphs stay flat.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "fids/rng.hpp"
#include "fids/tensor.hpp"

namespace fids {

namespace detail {

template <typename T>
Tensor<T> finish(std::shared_ptr<TensorNode<T>> n, std::function<void(TensorNode<T>&)> bp) {
  if (n->requires_grad) {
    n->backprop = std::move(bp);
  } else {
    n->parents.clear();
  }
  return Tensor<T>::adopt(std::move(n));
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.size(1) != b.size(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const int m = static_cast<int>(a.size(0));
  const int k = static_cast<int>(a.size(1));
  const int n = static_cast<int>(b.size(1));
  auto node = detail::make_node<T>({a.size(0), b.size(1)}, {a.node(), b.node()});
  detail::gemm(false, false, m, n, k, T(1), a.values().data(), k, b.values().data(), n, T(0),
               node->values.data(), n);
  return detail::finish<T>(node, [m, n, k](TensorNode<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      detail::gemm(false, true, m, k, n, T(1), self.grad.data(), n, pb.values.data(), n, T(1),
                   pa.grad.data(), k);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      detail::gemm(true, false, k, n, m, T(1), pa.values.data(), k, self.grad.data(), n, T(1),
                   pb.grad.data(), n);
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  auto node = detail::make_node<T>(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) node->values[i] = av[i] + bv[i];
  return detail::finish<T>(node, [](TensorNode<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

// x: N x D, bias: D. Broadcast add along rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.size(0) != x.size(1))
    throw ShapeError("add_bias: " + shape_str(x.shape()) + " vs " + shape_str(bias.shape()));
  const std::size_t rows = x.size(0), d = x.size(1);
  auto node = detail::make_node<T>(x.shape(), {x.node(), bias.node()});
  const auto& xv = x.values();
  const auto& bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) node->values[r * d + j] = xv[r * d + j] + bv[j];
  return detail::finish<T>(node, [rows, d](TensorNode<T>& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) pb.grad[j] += self.grad[r * d + j];
    }
  });
}

// Numerically stable softmax along `axis` (max-subtraction per slice).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                     shape_str(x.shape()));
  std::size_t outer = 1, inner = 1;
  const std::size_t len = x.size(axis);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.size(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.size(i);

  auto node = detail::make_node<T>(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xv[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      T sum = T(0);
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        node->values[base + j * inner] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < len; ++j) node->values[base + j * inner] /= sum;
    }
  }
  return detail::finish<T>(node, [outer, inner, len](TensorNode<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = T(0);
        for (std::size_t j = 0; j < len; ++j)
          dot += self.grad[base + j * inner] * self.values[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          px.grad[idx] += self.values[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

// Layer normalization over the last dimension, then affine (gain, bias).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-12)) {
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d)
    throw ShapeError("layer_norm: gain/bias length must equal last dim " + std::to_string(d));
  const std::size_t rows = x.numel() / d;
  auto node = detail::make_node<T>(x.shape(), {x.node(), gain.node(), bias.node()});
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      const T c = row[j] - mean;
      var += c * c;
    }
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mean) * is;
      (*xhat)[r * d + j] = h;
      node->values[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return detail::finish<T>(node, [rows, d, xhat, inv_std](TensorNode<T>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    const auto& gv = pg.values;
    if (pg.requires_grad) pg.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    if (px.requires_grad) px.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* dy = self.grad.data() + r * d;
      const T* h = xhat->data() + r * d;
      if (pg.requires_grad)
        for (std::size_t j = 0; j < d; ++j) pg.grad[j] += dy[j] * h[j];
      if (pb.requires_grad)
        for (std::size_t j = 0; j < d; ++j) pb.grad[j] += dy[j];
      if (px.requires_grad) {
        T sum_dh = T(0), sum_dhh = T(0);
        for (std::size_t j = 0; j < d; ++j) {
          const T dh = dy[j] * gv[j];
          sum_dh += dh;
          sum_dhh += dh * h[j];
        }
        const T is = (*inv_std)[r];
        for (std::size_t j = 0; j < d; ++j) {
          const T dh = dy[j] * gv[j];
          px.grad[r * d + j] += is * (dh - sum_dh / T(d) - h[j] * sum_dhh / T(d));
        }
      }
    }
  });
}

// Exact GELU: x * Phi(x), with Phi the standard normal CDF (erf form).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  auto node = detail::make_node<T>(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T phi = T(0.5) * (T(1) + std::erf(xv[i] * T(M_SQRT1_2)));
    node->values[i] = xv[i] * phi;
  }
  return detail::finish<T>(node, [](TensorNode<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    const T inv_sqrt_2pi = T(0.3989422804014326779);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T xi = px.values[i];
      const T cdf = T(0.5) * (T(1) + std::erf(xi * T(M_SQRT1_2)));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * xi * xi);
      px.grad[i] += self.grad[i] * (cdf + xi * pdf);
    }
  });
}

// Mean over the batch of -log softmax(logits)[label]. logits: B x C.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || logits.size(0) != labels.size())
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  const std::size_t b = logits.size(0), c = logits.size(1);
  for (std::size_t i = 0; i < b; ++i)
    if (labels[i] >= c)
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) +
                              " out of range [0, " + std::to_string(c) + ")");
  auto node = detail::make_node<T>({1}, {logits.node()});
  auto probs = std::make_shared<std::vector<T>>(b * c);
  const auto& lv = logits.values();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const T* row = lv.data() + i * c;
    T mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      const T e = std::exp(row[j] - mx);
      (*probs)[i * c + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= sum;
    total += -std::log(static_cast<double>((*probs)[i * c + labels[i]]));
  }
  node->values[0] = static_cast<T>(total / static_cast<double>(b));
  auto labels_copy = std::make_shared<std::vector<std::size_t>>(labels);
  return detail::finish<T>(node, [b, c, probs, labels_copy](TensorNode<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    const T g = self.grad[0] / T(b);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        T p = (*probs)[i * c + j];
        if (j == (*labels_copy)[i]) p -= T(1);
        px.grad[i * c + j] += g * p;
      }
    }
  });
}

// Inverted dropout. training=false is the identity (no node inserted).
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  auto node = detail::make_node<T>(x.shape(), {x.node()});
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  const T keep_scale = T(1.0 / (1.0 - rate));
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T m = rng.uniform() < rate ? T(0) : keep_scale;
    (*mask)[i] = m;
    node->values[i] = xv[i] * m;
  }
  return detail::finish<T>(node, [mask](TensorNode<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i] * (*mask)[i];
  });
}

// Token + position embedding lookup for a B x S id batch -> (B*S) x H.
template <typename T>
Tensor<T> embed_sequence(const Tensor<T>& tok_table, const Tensor<T>& pos_table,
                         const std::vector<std::uint32_t>& ids, std::size_t batch,
                         std::size_t seq_len) {
  const std::size_t h = tok_table.size(1);
  const std::size_t vocab = tok_table.size(0);
  if (ids.size() != batch * seq_len) throw ShapeError("embed_sequence: id count mismatch");
  if (pos_table.size(0) < seq_len || pos_table.size(1) != h)
    throw ShapeError("embed_sequence: position table too small");
  for (auto id : ids)
    if (id >= vocab)
      throw std::out_of_range("token id " + std::to_string(id) + " >= vocab size " +
                              std::to_string(vocab));
  auto node = detail::make_node<T>({batch * seq_len, h}, {tok_table.node(), pos_table.node()});
  const auto& tv = tok_table.values();
  const auto& pv = pos_table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const T* trow = tv.data() + std::size_t(ids[i]) * h;
    const T* prow = pv.data() + (i % seq_len) * h;
    T* out = node->values.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) out[j] = trow[j] + prow[j];
  }
  auto ids_copy = std::make_shared<std::vector<std::uint32_t>>(ids);
  return detail::finish<T>(node, [h, seq_len, ids_copy](TensorNode<T>& self) {
    auto& ptok = *self.parents[0];
    auto& ppos = *self.parents[1];
    if (ptok.requires_grad) ptok.ensure_grad();
    if (ppos.requires_grad) ppos.ensure_grad();
    for (std::size_t i = 0; i < ids_copy->size(); ++i) {
      const T* g = self.grad.data() + i * h;
      if (ptok.requires_grad) {
        T* trow = ptok.grad.data() + std::size_t((*ids_copy)[i]) * h;
        for (std::size_t j = 0; j < h; ++j) trow[j] += g[j];
      }
      if (ppos.requires_grad) {
        T* prow = ppos.grad.data() + (i % seq_len) * h;
        for (std::size_t j = 0; j < h; ++j) prow[j] += g[j];
      }
    }
  });
}

// Row gather (used to pull the CLS hidden state per sequence).
template <typename T>
Tensor<T> select_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  if (x.rank() != 2) throw ShapeError("select_rows: need rank-2 input");
  const std::size_t d = x.size(1);
  for (auto r : rows)
    if (r >= x.size(0)) throw std::out_of_range("select_rows: row out of range");
  auto node = detail::make_node<T>({rows.size(), d}, {x.node()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(xv.data() + rows[i] * d, d, node->values.data() + i * d);
  auto rows_copy = std::make_shared<std::vector<std::size_t>>(rows);
  return detail::finish<T>(node, [d, rows_copy](TensorNode<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t i = 0; i < rows_copy->size(); ++i) {
      const T* g = self.grad.data() + i * d;
      T* dst = px.grad.data() + (*rows_copy)[i] * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
    }
  });
}

// Masked multi-head self-attention. q, k, v are (B*S) x H with heads laid
// out as contiguous column blocks of width H/A. key_mask is B x S with 1
// for real tokens and 0 for PAD; PAD keys receive exactly zero attention
// weight from every query.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const std::vector<std::uint8_t>& key_mask, std::size_t batch,
                               std::size_t seq_len, std::size_t heads) {
  const std::size_t h = q.size(1);
  if (h % heads != 0) throw ShapeError("attention: hidden not divisible by heads");
  if (q.shape() != k.shape() || q.shape() != v.shape())
    throw ShapeError("attention: q/k/v shape mismatch");
  if (q.size(0) != batch * seq_len || key_mask.size() != batch * seq_len)
    throw ShapeError("attention: batch/seq mismatch");
  const std::size_t d = h / heads;
  const T scale = T(1) / std::sqrt(T(d));
  const T neg = T(-1e30);

  auto node = detail::make_node<T>(q.shape(), {q.node(), k.node(), v.node()});
  // Attention probabilities are kept for the backward pass.
  auto probs = std::make_shared<std::vector<T>>(batch * heads * seq_len * seq_len);

  const auto& qv = q.values();
  const auto& kv = k.values();
  const auto& vv = v.values();
  std::vector<T> scores(seq_len * seq_len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t a = 0; a < heads; ++a) {
      const T* qb = qv.data() + b * seq_len * h + a * d;
      const T* kb = kv.data() + b * seq_len * h + a * d;
      const T* vb = vv.data() + b * seq_len * h + a * d;
      detail::gemm(false, true, (int)seq_len, (int)seq_len, (int)d, scale, qb, (int)h, kb, (int)h,
                   T(0), scores.data(), (int)seq_len);
      T* p = probs->data() + (b * heads + a) * seq_len * seq_len;
      const std::uint8_t* mask = key_mask.data() + b * seq_len;
      for (std::size_t i = 0; i < seq_len; ++i) {
        T* srow = scores.data() + i * seq_len;
        for (std::size_t j = 0; j < seq_len; ++j)
          if (!mask[j]) srow[j] = neg;
        T mx = srow[0];
        for (std::size_t j = 1; j < seq_len; ++j) mx = std::max(mx, srow[j]);
        T sum = T(0);
        T* prow = p + i * seq_len;
        for (std::size_t j = 0; j < seq_len; ++j) {
          const T e = mask[j] ? std::exp(srow[j] - mx) : T(0);
          prow[j] = e;
          sum += e;
        }
        for (std::size_t j = 0; j < seq_len; ++j) prow[j] /= sum;
      }
      detail::gemm(false, false, (int)seq_len, (int)d, (int)seq_len, T(1), p, (int)seq_len, vb,
                   (int)h, T(0), node->values.data() + b * seq_len * h + a * d, (int)h);
    }
  }

  return detail::finish<T>(node, [batch, seq_len, heads, d, h, scale, probs](TensorNode<T>& self) {
    auto& pq = *self.parents[0];
    auto& pk = *self.parents[1];
    auto& pv = *self.parents[2];
    pq.ensure_grad();
    pk.ensure_grad();
    pv.ensure_grad();
    std::vector<T> dp(seq_len * seq_len), ds(seq_len * seq_len);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t a = 0; a < heads; ++a) {
        const std::size_t off = b * seq_len * h + a * d;
        const T* p = probs->data() + (b * heads + a) * seq_len * seq_len;
        const T* dout = self.grad.data() + off;
        // dV += P^T dO
        detail::gemm(true, false, (int)seq_len, (int)d, (int)seq_len, T(1), p, (int)seq_len, dout,
                     (int)h, T(1), pv.grad.data() + off, (int)h);
        // dP = dO V^T
        detail::gemm(false, true, (int)seq_len, (int)seq_len, (int)d, T(1), dout, (int)h,
                     pv.values.data() + off, (int)h, T(0), dp.data(), (int)seq_len);
        // dS = P o (dP - rowsum(dP o P))
        for (std::size_t i = 0; i < seq_len; ++i) {
          T dot = T(0);
          for (std::size_t j = 0; j < seq_len; ++j)
            dot += dp[i * seq_len + j] * p[i * seq_len + j];
          for (std::size_t j = 0; j < seq_len; ++j)
            ds[i * seq_len + j] = p[i * seq_len + j] * (dp[i * seq_len + j] - dot);
        }
        // dQ += scale * dS K ; dK += scale * dS^T Q
        detail::gemm(false, false, (int)seq_len, (int)d, (int)seq_len, scale, ds.data(),
                     (int)seq_len, pk.values.data() + off, (int)h, T(1), pq.grad.data() + off,
                     (int)h);
        detail::gemm(true, false, (int)seq_len, (int)d, (int)seq_len, scale, ds.data(),
                     (int)seq_len, pq.values.data() + off, (int)h, T(1), pk.grad.data() + off,
                     (int)h);
      }
    }
  });
}

}  // namespace fids
