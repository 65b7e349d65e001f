#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ccsnet/nn/tensor.hpp"

// Differentiable operations. Every op computes its forward value eagerly and,
// when recording, installs a closure that accumulates into the parents' grads.
namespace ccsnet::nn {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <class T>
void require_ndim(const Tensor<T>& a, std::size_t n, const char* op) {
  if (a.ndim() != n)
    throw DimensionError(std::string(op) + ": expected " + std::to_string(n) + "-d input, got " +
                         shape_str(a.shape()));
}

inline std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  auto out = make_result<T>(a.shape(), "add", {&a, &b});
  auto& y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    Node<T>* nb = b.node();
    o->backward = [o, na, nb] {
      for (Node<T>* n : {na, nb})
        if (n->requires_grad) {
          auto& g = n->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
        }
    };
  }
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  auto out = make_result<T>(a.shape(), "sub", {&a, &b});
  auto& y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    Node<T>* nb = b.node();
    o->backward = [o, na, nb] {
      if (na->requires_grad) {
        auto& g = na->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (nb->requires_grad) {
        auto& g = nb->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  auto out = make_result<T>(a.shape(), "mul", {&a, &b});
  auto& y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    Node<T>* nb = b.node();
    o->backward = [o, na, nb] {
      if (na->requires_grad) {
        auto& g = na->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * nb->value[i];
      }
      if (nb->requires_grad) {
        auto& g = nb->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * na->value[i];
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = make_result<T>(a.shape(), "scale", {&a});
  auto& y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * s;
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    o->backward = [o, na, s] {
      auto& g = na->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * s;
    };
  }
  return out;
}

/// x + b with b broadcast along the last dimension of x.
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  const std::size_t c = x.shape().empty() ? 0 : x.shape().back();
  if (b.ndim() != 1 || b.dim(0) != c)
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not match " + shape_str(x.shape()));
  auto out = make_result<T>(x.shape(), "add_bias", {&x, &b});
  auto& y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + b[i % c];
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* nx = x.node();
    Node<T>* nb = b.node();
    o->backward = [o, nx, nb, c] {
      if (nx->requires_grad) {
        auto& g = nx->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (nb->requires_grad) {
        auto& g = nb->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) g[i % c] += o->grad[i];
      }
    };
  }
  return out;
}

namespace detail {

template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& a, const char* name, F f, D dydx_from_xy) {
  auto out = make_result<T>(a.shape(), name, {&a});
  auto& y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(a[i]);
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    o->backward = [o, na, dydx_from_xy] {
      auto& g = na->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * dydx_from_xy(na->value[i], o->value[i]);
    };
  }
  return out;
}

}  // namespace detail

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary(
      a, "relu", [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary(
      a, "sigmoid", [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary(
      a, "tanh", [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

// ----------------------------------------------------------------- reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.values()) s += v;
  auto out = make_result<T>(Shape{}, "sum", {&a}, Storage<T>{s});
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    o->backward = [o, na] {
      auto& g = na->ensure_grad();
      for (auto& v : g) v += o->grad[0];
    };
  }
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

/// Mean squared error over all entries.
template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("mse: prediction " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  const auto n = static_cast<T>(pred.numel());
  T s = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  auto out = make_result<T>(Shape{}, "mse", {&pred, &target}, Storage<T>{s / n});
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* np = pred.node();
    Node<T>* nt = target.node();
    o->backward = [o, np, nt, n] {
      const T k = T(2) * o->grad[0] / n;
      if (np->requires_grad) {
        auto& g = np->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (np->value[i] - nt->value[i]);
      }
      if (nt->requires_grad) {
        auto& g = nt->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * (np->value[i] - nt->value[i]);
      }
    };
  }
  return out;
}

/// Mean absolute error over all entries.
template <class T>
Tensor<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("mae: prediction " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  const auto n = static_cast<T>(pred.numel());
  T s = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) s += std::abs(pred[i] - target[i]);
  auto out = make_result<T>(Shape{}, "mae", {&pred, &target}, Storage<T>{s / n});
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* np = pred.node();
    Node<T>* nt = target.node();
    o->backward = [o, np, nt, n] {
      const T k = o->grad[0] / n;
      auto sgn = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
      if (np->requires_grad) {
        auto& g = np->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * sgn(np->value[i] - nt->value[i]);
      }
      if (nt->requires_grad) {
        auto& g = nt->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * sgn(np->value[i] - nt->value[i]);
      }
    };
  }
  return out;
}

// --------------------------------------------------------------------- shape

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel_of(shape) != a.numel())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto out = make_result<T>(std::move(shape), "reshape", {&a}, a.values());
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    o->backward = [o, na] {
      auto& g = na->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    };
  }
  return out;
}

/// Collapses all dimensions after the first.
template <class T>
Tensor<T> flatten(const Tensor<T>& a) {
  if (a.ndim() < 1) throw DimensionError("flatten of a scalar");
  return reshape(a, Shape{a.dim(0), a.numel() / std::max<std::size_t>(a.dim(0), 1)});
}

template <class T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& perm) {
  const std::size_t nd = a.ndim();
  if (perm.size() != nd) throw DimensionError("permute: permutation rank does not match " + shape_str(a.shape()));
  std::vector<char> used(nd, 0);
  for (auto p : perm) {
    if (p >= nd || used[p]) throw ArgumentError("permute: invalid permutation");
    used[p] = 1;
  }
  Shape os(nd);
  std::vector<std::size_t> in_stride(nd, 1);
  for (std::size_t i = nd; i-- > 1;) in_stride[i - 1] = in_stride[i] * a.dim(i);
  std::vector<std::size_t> src_stride(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    os[i] = a.dim(perm[i]);
    src_stride[i] = in_stride[perm[i]];
  }
  // map[out_index] = in_index
  std::vector<std::size_t> map(a.numel());
  std::vector<std::size_t> idx(nd, 0);
  std::size_t src = 0;
  for (std::size_t k = 0; k < map.size(); ++k) {
    map[k] = src;
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      src += src_stride[d];
      if (idx[d] < os[d]) break;
      src -= src_stride[d] * os[d];
      idx[d] = 0;
    }
  }
  auto out = make_result<T>(os, "permute", {&a});
  auto& y = out.values();
  for (std::size_t k = 0; k < map.size(); ++k) y[k] = a[map[k]];
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    o->backward = [o, na, map = std::move(map)] {
      auto& g = na->ensure_grad();
      for (std::size_t k = 0; k < map.size(); ++k) g[map[k]] += o->grad[k];
    };
  }
  return out;
}

/// Entries [start, start + len) along dimension `dim`.
template <class T>
Tensor<T> slice(const Tensor<T>& a, std::size_t dim, std::size_t start, std::size_t len) {
  if (dim >= a.ndim() || start + len > a.dim(dim))
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of bounds for dim " + std::to_string(dim) + " of " + shape_str(a.shape()));
  Shape os = a.shape();
  os[dim] = len;
  const std::size_t outer = detail::prod(a.shape(), 0, dim);
  const std::size_t inner = detail::prod(a.shape(), dim + 1, a.ndim());
  const std::size_t full = a.dim(dim);
  auto out = make_result<T>(os, "slice", {&a});
  auto& y = out.values();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.values().begin() + static_cast<std::ptrdiff_t>((o * full + start) * inner), len * inner,
                y.begin() + static_cast<std::ptrdiff_t>(o * len * inner));
  if (out.requires_grad()) {
    Node<T>* on = out.node();
    Node<T>* na = a.node();
    on->backward = [on, na, outer, inner, full, start, len] {
      auto& g = na->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < len * inner; ++k) g[(o * full + start) * inner + k] += on->grad[o * len * inner + k];
    };
  }
  return out;
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t dim) {
  if (parts.empty()) throw ArgumentError("concat of zero tensors");
  const auto& s0 = parts[0].shape();
  if (dim >= s0.size()) throw DimensionError("concat: dim out of range for " + shape_str(s0));
  Shape os = s0;
  os[dim] = 0;
  for (const auto& p : parts) {
    auto s = p.shape();
    if (s.size() != s0.size()) throw DimensionError("concat: rank mismatch");
    s[dim] = s0[dim];
    if (s != s0)
      throw DimensionError("concat: shape " + shape_str(p.shape()) + " incompatible with " + shape_str(s0));
    os[dim] += p.dim(dim);
  }
  const std::size_t outer = detail::prod(s0, 0, dim);
  const std::size_t inner = detail::prod(s0, dim + 1, s0.size());
  auto out = make_result<T>(os, "concat", parts);
  auto& y = out.values();
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(dim);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.values().begin() + static_cast<std::ptrdiff_t>(o * len * inner), len * inner,
                  y.begin() + static_cast<std::ptrdiff_t>((o * os[dim] + offset) * inner));
    offsets.push_back(offset);
    offset += len;
  }
  if (out.requires_grad()) {
    Node<T>* on = out.node();
    const std::size_t total = os[dim];
    on->backward = [on, outer, inner, total, offsets = std::move(offsets)] {
      for (std::size_t k = 0; k < on->parents.size(); ++k) {
        Node<T>* p = on->parents[k].get();
        if (!p->requires_grad) continue;
        auto& g = p->ensure_grad();
        const std::size_t len = p->shape.empty() ? 0 : g.size() / (outer * inner);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < len * inner; ++i)
            g[o * len * inner + i] += on->grad[(o * total + offsets[k]) * inner + i];
      }
    };
  }
  return out;
}

// ------------------------------------------------------------ linear algebra

/// (M x K) . (K x N)
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_ndim(a, 2, "matmul");
  detail::require_ndim(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  const auto m = static_cast<Eigen::Index>(a.dim(0)), k = static_cast<Eigen::Index>(a.dim(1)),
             n = static_cast<Eigen::Index>(b.dim(1));
  auto out = make_result<T>(Shape{a.dim(0), b.dim(1)}, "matmul", {&a, &b});
  detail::MapMat<T>(out.values().data(), m, n).noalias() =
      detail::CMapMat<T>(a.values().data(), m, k) * detail::CMapMat<T>(b.values().data(), k, n);
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    Node<T>* nb = b.node();
    o->backward = [o, na, nb, m, k, n] {
      detail::CMapMat<T> g(o->grad.data(), m, n);
      if (na->requires_grad)
        detail::MapMat<T>(na->ensure_grad().data(), m, k).noalias() +=
            g * detail::CMapMat<T>(nb->value.data(), k, n).transpose();
      if (nb->requires_grad)
        detail::MapMat<T>(nb->ensure_grad().data(), k, n).noalias() +=
            detail::CMapMat<T>(na->value.data(), m, k).transpose() * g;
    };
  }
  return out;
}

/// Batched (B x M x K) . (B x K x N)
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_ndim(a, 3, "bmm");
  detail::require_ndim(b, 3, "bmm");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  const std::size_t bs = a.dim(0);
  const auto m = static_cast<Eigen::Index>(a.dim(1)), k = static_cast<Eigen::Index>(a.dim(2)),
             n = static_cast<Eigen::Index>(b.dim(2));
  auto out = make_result<T>(Shape{bs, a.dim(1), b.dim(2)}, "bmm", {&a, &b});
  for (std::size_t i = 0; i < bs; ++i)
    detail::MapMat<T>(out.values().data() + i * m * n, m, n).noalias() =
        detail::CMapMat<T>(a.values().data() + i * m * k, m, k) *
        detail::CMapMat<T>(b.values().data() + i * k * n, k, n);
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    Node<T>* nb = b.node();
    o->backward = [o, na, nb, bs, m, k, n] {
      for (std::size_t i = 0; i < bs; ++i) {
        detail::CMapMat<T> g(o->grad.data() + i * m * n, m, n);
        if (na->requires_grad)
          detail::MapMat<T>(na->ensure_grad().data() + i * m * k, m, k).noalias() +=
              g * detail::CMapMat<T>(nb->value.data() + i * k * n, k, n).transpose();
        if (nb->requires_grad)
          detail::MapMat<T>(nb->ensure_grad().data() + i * k * n, k, n).noalias() +=
              detail::CMapMat<T>(na->value.data() + i * m * k, m, k).transpose() * g;
      }
    };
  }
  return out;
}

/// y = x W^T + b over the last dimension of x; W is (out x in).
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b = nullptr) {
  detail::require_ndim(w, 2, "linear weight");
  if (x.ndim() < 1 || x.shape().back() != w.dim(1))
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  if (b && (b->ndim() != 1 || b->dim(0) != w.dim(0)))
    throw DimensionError("linear: bias " + shape_str(b->shape()) + " does not match weight " + shape_str(w.shape()));
  const auto in = static_cast<Eigen::Index>(w.dim(1)), outf = static_cast<Eigen::Index>(w.dim(0));
  const auto rows = static_cast<Eigen::Index>(x.numel() / w.dim(1));
  Shape os = x.shape();
  os.back() = w.dim(0);
  auto out = b ? make_result<T>(os, "linear", {&x, &w, b}) : make_result<T>(os, "linear", {&x, &w});
  detail::MapMat<T> y(out.values().data(), rows, outf);
  y.noalias() = detail::CMapMat<T>(x.values().data(), rows, in) * detail::CMapMat<T>(w.values().data(), outf, in).transpose();
  if (b) y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b->values().data(), outf);
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* nx = x.node();
    Node<T>* nw = w.node();
    Node<T>* nb = b ? b->node() : nullptr;
    o->backward = [o, nx, nw, nb, rows, in, outf] {
      detail::CMapMat<T> g(o->grad.data(), rows, outf);
      if (nx->requires_grad)
        detail::MapMat<T>(nx->ensure_grad().data(), rows, in).noalias() += g * detail::CMapMat<T>(nw->value.data(), outf, in);
      if (nw->requires_grad)
        detail::MapMat<T>(nw->ensure_grad().data(), outf, in).noalias() +=
            g.transpose() * detail::CMapMat<T>(nx->value.data(), rows, in);
      if (nb && nb->requires_grad)
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(nb->ensure_grad().data(), outf) += g.colwise().sum();
    };
  }
  return out;
}

// -------------------------------------------------------- attention building blocks

/// Softmax over the last dimension. With `causal`, entry (i, j) of each
/// trailing (Lq x Lk) matrix is masked when j > i + (Lk - Lq).
template <class T>
Tensor<T> softmax(const Tensor<T>& a, bool causal = false) {
  if (a.ndim() < 1) throw DimensionError("softmax of a scalar");
  if (causal && a.ndim() < 2) throw DimensionError("causal softmax needs a matrix");
  const std::size_t lk = a.shape().back();
  const std::size_t lq = causal ? a.dim(a.ndim() - 2) : 1;
  const std::size_t rows = a.numel() / lk;
  auto out = make_result<T>(a.shape(), "softmax", {&a});
  auto& y = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t limit = causal ? std::min(lk, r % lq + 1 + (lk - std::min(lk, lq))) : lk;
    const T* x = a.values().data() + r * lk;
    T* yr = y.data() + r * lk;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < limit; ++j) mx = std::max(mx, x[j]);
    T s = 0;
    for (std::size_t j = 0; j < limit; ++j) s += (yr[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < limit; ++j) yr[j] /= s;
    for (std::size_t j = limit; j < lk; ++j) yr[j] = 0;
  }
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* na = a.node();
    o->backward = [o, na, rows, lk] {
      auto& g = na->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* yr = o->value.data() + r * lk;
        const T* gy = o->grad.data() + r * lk;
        T dot = 0;
        for (std::size_t j = 0; j < lk; ++j) dot += gy[j] * yr[j];
        for (std::size_t j = 0; j < lk; ++j) g[r * lk + j] += yr[j] * (gy[j] - dot);
      }
    };
  }
  return out;
}

/// Normalization over the last dimension with learned scale and shift.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t d = x.ndim() ? x.shape().back() : 0;
  if (d == 0 || gamma.numel() != d || beta.numel() != d)
    throw DimensionError("layer_norm: parameters do not match input " + shape_str(x.shape()));
  const std::size_t rows = x.numel() / d;
  auto out = make_result<T>(x.shape(), "layer_norm", {&x, &gamma, &beta});
  std::vector<T> xhat(x.numel()), inv(rows);
  auto& y = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.values().data() + r * d;
    T mu = 0, var = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    inv[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * inv[r];
      y[r * d + j] = gamma[j] * xhat[r * d + j] + beta[j];
    }
  }
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* nx = x.node();
    Node<T>* ng = gamma.node();
    Node<T>* nb = beta.node();
    o->backward = [o, nx, ng, nb, rows, d, xhat = std::move(xhat), inv = std::move(inv)] {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gy = o->grad.data() + r * d;
        const T* xh = xhat.data() + r * d;
        if (ng->requires_grad) {
          auto& gg = ng->ensure_grad();
          for (std::size_t j = 0; j < d; ++j) gg[j] += gy[j] * xh[j];
        }
        if (nb->requires_grad) {
          auto& gb = nb->ensure_grad();
          for (std::size_t j = 0; j < d; ++j) gb[j] += gy[j];
        }
        if (nx->requires_grad) {
          auto& gx = nx->ensure_grad();
          T s1 = 0, s2 = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const T dxh = gy[j] * ng->value[j];
            s1 += dxh;
            s2 += dxh * xh[j];
          }
          const T dd = static_cast<T>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const T dxh = gy[j] * ng->value[j];
            gx[r * d + j] += inv[r] / dd * (dd * dxh - s1 - xh[j] * s2);
          }
        }
      }
    };
  }
  return out;
}

/// Inverted dropout; identity outside training or when p == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng* rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ArgumentError("dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  if (!rng) throw ContractError("dropout in training mode needs a random generator");
  std::vector<T> mask(x.numel());
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask) m = rng->uniform() >= p ? keep : T(0);
  auto out = make_result<T>(x.shape(), "dropout", {&x});
  auto& y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * mask[i];
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* nx = x.node();
    o->backward = [o, nx, mask = std::move(mask)] {
      auto& g = nx->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * mask[i];
    };
  }
  return out;
}

// ------------------------------------------------------------ convolutional

namespace detail {

struct ConvGeometry {
  std::size_t n, c, h, w, f, k, stride, pad, ho, wo;
  std::size_t kdim() const { return c * k * k; }
  std::size_t pix() const { return ho * wo; }
};

/// Unfolds images [n0, n0 + nb) into a (C k k) x (nb Ho Wo) row-major matrix.
template <class T>
void im2col(const ConvGeometry& g, const T* x, std::size_t n0, std::size_t nb, T* col) {
  const std::size_t ld = nb * g.pix();
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = col + ((c * g.k + ki) * g.k + kj) * ld;
        for (std::size_t i = 0; i < nb; ++i) {
          const T* img = x + ((n0 + i) * g.c + c) * g.h * g.w;
          T* dst = row + i * g.pix();
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            T* d = dst + oh * g.wo;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
              std::fill_n(d, g.wo, T(0));
              continue;
            }
            const T* src = img + static_cast<std::size_t>(ih) * g.w;
            for (std::size_t ow = 0; ow < g.wo; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              d[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) ? T(0) : src[iw];
            }
          }
        }
      }
}

template <class T>
void col2im(const ConvGeometry& g, const T* col, std::size_t n0, std::size_t nb, T* dx) {
  const std::size_t ld = nb * g.pix();
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = col + ((c * g.k + ki) * g.k + kj) * ld;
        for (std::size_t i = 0; i < nb; ++i) {
          T* img = dx + ((n0 + i) * g.c + c) * g.h * g.w;
          const T* srcr = row + i * g.pix();
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
            T* d = img + static_cast<std::size_t>(ih) * g.w;
            for (std::size_t ow = 0; ow < g.wo; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) d[iw] += srcr[oh * g.wo + ow];
            }
          }
        }
      }
}

inline std::size_t conv_chunk(const ConvGeometry& g) {
  constexpr std::size_t budget = std::size_t{1} << 22;  // elements in the unfolded buffer
  return std::clamp<std::size_t>(budget / std::max<std::size_t>(g.kdim() * g.pix(), 1), 1, g.n);
}

}  // namespace detail

/// 2-D convolution (cross-correlation) of N x C x H x W input with an
/// F x C x k x k kernel, zero padding and equal strides.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, std::size_t stride = 1,
                 std::size_t pad = 0) {
  detail::require_ndim(x, 4, "conv2d");
  detail::require_ndim(w, 4, "conv2d weight");
  if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3))
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) + " does not match input " + shape_str(x.shape()));
  if (stride == 0) throw ArgumentError("conv2d: stride must be positive");
  if (bias && bias->numel() != w.dim(0)) throw DimensionError("conv2d: bias size does not match kernel count");
  detail::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad, 0, 0};
  if (g.h + 2 * pad < g.k || g.w + 2 * pad < g.k)
    throw DimensionError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  auto out = bias ? make_result<T>(Shape{g.n, g.f, g.ho, g.wo}, "conv2d", {&x, &w, bias})
                  : make_result<T>(Shape{g.n, g.f, g.ho, g.wo}, "conv2d", {&x, &w});
  const std::size_t chunk = detail::conv_chunk(g);
  const auto K = static_cast<Eigen::Index>(g.kdim());
  const auto F = static_cast<Eigen::Index>(g.f);
  const std::size_t P = g.pix();
  Storage<T> col(g.kdim() * chunk * P);
  detail::RowMat<T> prod;
  detail::CMapMat<T> wm(w.values().data(), F, K);
  for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::size_t nb = std::min(chunk, g.n - n0);
    const auto cols = static_cast<Eigen::Index>(nb * P);
    detail::im2col(g, x.values().data(), n0, nb, col.data());
    prod.noalias() = wm * detail::CMapMat<T>(col.data(), K, cols);
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t f = 0; f < g.f; ++f) {
        T* dst = out.values().data() + ((n0 + i) * g.f + f) * P;
        const T* src = prod.data() + f * nb * P + i * P;
        const T b = bias ? (*bias)[f] : T(0);
        for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + b;
      }
  }
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* nx = x.node();
    Node<T>* nw = w.node();
    Node<T>* nbias = bias ? bias->node() : nullptr;
    o->backward = [o, nx, nw, nbias, g, chunk, K, F, P] {
      Storage<T> colb(g.kdim() * chunk * P);
      detail::RowMat<T> gy, dcol;
      for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
        const std::size_t nb = std::min(chunk, g.n - n0);
        const auto cols = static_cast<Eigen::Index>(nb * P);
        gy.resize(F, cols);
        for (std::size_t i = 0; i < nb; ++i)
          for (std::size_t f = 0; f < g.f; ++f)
            std::copy_n(o->grad.data() + ((n0 + i) * g.f + f) * P, P, gy.data() + f * nb * P + i * P);
        if (nbias && nbias->requires_grad) {
          auto& gb = nbias->ensure_grad();
          for (std::size_t f = 0; f < g.f; ++f) gb[f] += gy.row(static_cast<Eigen::Index>(f)).sum();
        }
        if (nw->requires_grad) {
          detail::im2col(g, nx->value.data(), n0, nb, colb.data());
          detail::MapMat<T>(nw->ensure_grad().data(), F, K).noalias() +=
              gy * detail::CMapMat<T>(colb.data(), K, cols).transpose();
        }
        if (nx->requires_grad) {
          dcol.noalias() = detail::CMapMat<T>(nw->value.data(), F, K).transpose() * gy;
          detail::col2im(g, dcol.data(), n0, nb, nx->ensure_grad().data());
        }
      }
    };
  }
  return out;
}

/// Per-channel batch normalization of N x C x H x W input. In training mode
/// batch statistics are used (biased variance) and the running estimates are
/// updated in place as r <- (1 - momentum) r + momentum * batch.
template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, bool training, T momentum = T(0.1), T eps = T(1e-5)) {
  detail::require_ndim(x, 4, "batch_norm2d");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c || running_var.numel() != c)
    throw DimensionError("batch_norm2d: parameters do not match channel count of " + shape_str(x.shape()));
  if (training && n < 2)
    throw DegenerateDataError("degenerate batch: batch normalization in training mode needs at least 2 samples");
  const std::size_t m = n * hw;
  std::vector<T> mu(c), inv(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0, s2 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.values().data() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) s += p[k];
      }
      const double mean = s / static_cast<double>(m);
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.values().data() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) s2 += (p[k] - mean) * (p[k] - mean);
      }
      const double var = s2 / static_cast<double>(m);
      mu[ch] = static_cast<T>(mean);
      inv[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * static_cast<T>(mean);
      running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * static_cast<T>(var);
    } else {
      mu[ch] = running_mean[ch];
      inv[ch] = T(1) / std::sqrt(running_var[ch] + eps);
    }
  }
  auto out = make_result<T>(x.shape(), "batch_norm2d", {&x, &gamma, &beta});
  auto& y = out.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * hw;
      const T a = gamma[ch] * inv[ch];
      const T b = beta[ch] - a * mu[ch];
      for (std::size_t k = 0; k < hw; ++k) y[off + k] = a * x[off + k] + b;
    }
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* nx = x.node();
    Node<T>* ng = gamma.node();
    Node<T>* nb = beta.node();
    o->backward = [o, nx, ng, nb, n, c, hw, m, training, mu = std::move(mu), inv = std::move(inv)] {
      for (std::size_t ch = 0; ch < c; ++ch) {
        T sg = 0, sgx = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t off = (i * c + ch) * hw;
          for (std::size_t k = 0; k < hw; ++k) {
            const T gy = o->grad[off + k];
            sg += gy;
            sgx += gy * (nx->value[off + k] - mu[ch]) * inv[ch];
          }
        }
        if (ng->requires_grad) ng->ensure_grad()[ch] += sgx;
        if (nb->requires_grad) nb->ensure_grad()[ch] += sg;
        if (!nx->requires_grad) continue;
        auto& gx = nx->ensure_grad();
        const T gm = ng->value[ch];
        const T mm = static_cast<T>(m);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t off = (i * c + ch) * hw;
          for (std::size_t k = 0; k < hw; ++k) {
            const T gy = o->grad[off + k];
            if (training) {
              const T xh = (nx->value[off + k] - mu[ch]) * inv[ch];
              gx[off + k] += gm * inv[ch] / mm * (mm * gy - sg - xh * sgx);
            } else {
              gx[off + k] += gm * inv[ch] * gy;
            }
          }
        }
      }
    };
  }
  return out;
}

/// 2 x 2 max pooling with stride 2 (trailing odd rows/columns dropped).
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
  detail::require_ndim(x, 4, "max_pool2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) throw DimensionError("max_pool2d: input " + shape_str(x.shape()) + " smaller than 2x2");
  const std::size_t ho = h / 2, wo = w / 2;
  auto out = make_result<T>(Shape{n, c, ho, wo}, "max_pool2d", {&x});
  std::vector<std::uint32_t> arg(out.numel());
  auto& y = out.values();
  for (std::size_t pc = 0; pc < n * c; ++pc)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        std::size_t best = pc * h * w + 2 * i * w + 2 * j;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) {
            const std::size_t idx = pc * h * w + (2 * i + a) * w + 2 * j + b;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (pc * ho + i) * wo + j;
        y[o] = x[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* nx = x.node();
    o->backward = [o, nx, arg = std::move(arg)] {
      auto& g = nx->ensure_grad();
      for (std::size_t k = 0; k < arg.size(); ++k) g[arg[k]] += o->grad[k];
    };
  }
  return out;
}

namespace detail {

/// Gathers y[n, c, i, j] = x[n, c, rows[i], cols[j]]; backward scatter-adds.
template <class T>
Tensor<T> gather_2d(const Tensor<T>& x, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols,
                    const char* name) {
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = rows.size(), wo = cols.size();
  auto out = make_result<T>(Shape{x.dim(0), x.dim(1), ho, wo}, name, {&x});
  auto& y = out.values();
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) y[(p * ho + i) * wo + j] = x[(p * h + rows[i]) * w + cols[j]];
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* nx = x.node();
    o->backward = [o, nx, rows, cols, nc, h, w] {
      auto& g = nx->ensure_grad();
      const std::size_t ho = rows.size(), wo = cols.size();
      for (std::size_t p = 0; p < nc; ++p)
        for (std::size_t i = 0; i < ho; ++i)
          for (std::size_t j = 0; j < wo; ++j) g[(p * h + rows[i]) * w + cols[j]] += o->grad[(p * ho + i) * wo + j];
    };
  }
  return out;
}

/// Source index of output position i when resampling n_in -> n_out with
/// both end points aligned.
inline std::size_t aligned_source(std::size_t i, std::size_t n_in, std::size_t n_out) {
  if (n_out == 1) return 0;
  return static_cast<std::size_t>(std::llround(static_cast<double>(i) * static_cast<double>(n_in - 1) /
                                                static_cast<double>(n_out - 1)));
}

}  // namespace detail

/// Nearest-neighbour 2x upsampling.
template <class T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  detail::require_ndim(x, 4, "upsample2x");
  std::vector<std::size_t> rows(2 * x.dim(2)), cols(2 * x.dim(3));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i / 2;
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j / 2;
  return detail::gather_2d(x, rows, cols, "upsample2x");
}

/// Nearest-neighbour resampling to (h, w) with corners aligned.
template <class T>
Tensor<T> resize_nearest(const Tensor<T>& x, std::size_t h, std::size_t w) {
  detail::require_ndim(x, 4, "resize_nearest");
  if (h == 0 || w == 0) throw ArgumentError("resize_nearest: empty target size");
  std::vector<std::size_t> rows(h), cols(w);
  for (std::size_t i = 0; i < h; ++i) rows[i] = detail::aligned_source(i, x.dim(2), h);
  for (std::size_t j = 0; j < w; ++j) cols[j] = detail::aligned_source(j, x.dim(3), w);
  return detail::gather_2d(x, rows, cols, "resize_nearest");
}

/// N x C x H x W -> N x C spatial mean.
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require_ndim(x, 4, "global_avg_pool");
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  auto out = make_result<T>(Shape{x.dim(0), x.dim(1)}, "global_avg_pool", {&x});
  for (std::size_t p = 0; p < nc; ++p) {
    T s = 0;
    for (std::size_t k = 0; k < hw; ++k) s += x[p * hw + k];
    out[p] = s / static_cast<T>(hw);
  }
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* nx = x.node();
    o->backward = [o, nx, nc, hw] {
      auto& g = nx->ensure_grad();
      for (std::size_t p = 0; p < nc; ++p)
        for (std::size_t k = 0; k < hw; ++k) g[p * hw + k] += o->grad[p] / static_cast<T>(hw);
    };
  }
  return out;
}

/// Broadcast add of a (L x D) table to every batch entry of (B x L x D).
template <class T>
Tensor<T> add_positional(const Tensor<T>& x, const Tensor<T>& table) {
  detail::require_ndim(x, 3, "add_positional");
  if (table.ndim() != 2 || table.dim(0) < x.dim(1) || table.dim(1) != x.dim(2))
    throw DimensionError("add_positional: table " + shape_str(table.shape()) + " does not cover " + shape_str(x.shape()));
  auto out = make_result<T>(x.shape(), "add_positional", {&x});
  const std::size_t ld = x.dim(1) * x.dim(2);
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] + table[i % ld];
  if (out.requires_grad()) {
    Node<T>* o = out.node();
    Node<T>* nx = x.node();
    o->backward = [o, nx] {
      auto& g = nx->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    };
  }
  return out;
}

}  // namespace ccsnet::nn
