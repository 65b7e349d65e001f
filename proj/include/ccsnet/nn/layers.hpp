#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ccsnet/nn/ops.hpp"

namespace ccsnet::nn {

/// Per-call execution state: training toggles batch statistics and dropout.
struct Context {
  bool training = false;
  Rng* rng = nullptr;
};

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  bool buffer = false;  // running statistics, saved but never optimized
};

template <class T>
class Module {
 public:
  virtual ~Module() = default;
  virtual void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const = 0;

  std::vector<NamedTensor<T>> named_tensors(const std::string& prefix = "") const {
    std::vector<NamedTensor<T>> out;
    collect(prefix, out);
    return out;
  }
  /// Tensors the optimizer should update.
  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& nt : named_tensors())
      if (!nt.buffer && nt.tensor.requires_grad()) out.push_back(nt.tensor);
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto& nt : named_tensors())
      if (!nt.buffer) n += nt.tensor.numel();
    return n;
  }
  void set_trainable(bool on) {
    for (auto& nt : named_tensors())
      if (!nt.buffer) nt.tensor.set_requires_grad(on);
  }
  void zero_grad() {
    for (auto& nt : named_tensors()) nt.tensor.zero_grad();
  }
};

namespace detail {

template <class T>
Tensor<T> parameter(Shape s, Rng& rng, double stddev) {
  auto t = stddev > 0.0 ? Tensor<T>::randn(std::move(s), rng, stddev) : Tensor<T>(std::move(s));
  t.set_requires_grad(true);
  return t;
}

template <class T>
Tensor<T> constant_parameter(Shape s, T v) {
  Tensor<T> t(std::move(s), v);
  t.set_requires_grad(true);
  return t;
}

inline std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace detail

// ------------------------------------------------------------------ functional

/// One LSTM step with gate order (input, forget, cell, output):
///   z = x W_ih^T + h W_hh^T + b,  c' = f c + i g,  h' = o tanh(c').
template <class T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell(const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& c,
                                          const Tensor<T>& w_ih, const Tensor<T>& w_hh, const Tensor<T>& bias) {
  const std::size_t hid = w_hh.dim(1);
  if (w_ih.dim(0) != 4 * hid || w_hh.dim(0) != 4 * hid || bias.numel() != 4 * hid)
    throw DimensionError("lstm_cell: gate weights must have 4 x hidden rows");
  if (h.ndim() != 2 || h.dim(1) != hid || c.shape() != h.shape() || h.dim(0) != x.dim(0))
    throw DimensionError("lstm_cell: state " + shape_str(h.shape()) + " does not match hidden size " +
                         std::to_string(hid));
  const auto z = add(linear(x, w_ih, &bias), linear(h, w_hh));
  const auto i = sigmoid(slice(z, 1, 0, hid));
  const auto f = sigmoid(slice(z, 1, hid, hid));
  const auto g = tanh(slice(z, 1, 2 * hid, hid));
  const auto o = sigmoid(slice(z, 1, 3 * hid, hid));
  auto c2 = add(mul(f, c), mul(i, g));
  auto h2 = mul(o, tanh(c2));
  return {std::move(h2), std::move(c2)};
}

/// Scaled dot-product attention over `heads` equal slices of the model
/// dimension. q is (B x Lq x d), k and v are (B x Lk x d). If `weights` is
/// given it receives the (B*heads x Lq x Lk) attention matrix.
template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                               bool causal = false, double dropout_p = 0.0, const Context& ctx = {},
                               Tensor<T>* weights = nullptr) {
  detail::require_ndim(q, 3, "attention query");
  detail::require_ndim(k, 3, "attention key");
  if (k.shape() != v.shape() || q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2))
    throw DimensionError("attention: incompatible q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                         ", v " + shape_str(v.shape()));
  const std::size_t b = q.dim(0), lq = q.dim(1), lk = k.dim(1), d = q.dim(2);
  if (heads == 0 || d % heads != 0)
    throw ConfigError("model dimension " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  const std::size_t dh = d / heads;
  auto split = [&](const Tensor<T>& t, std::size_t len, bool transpose) {
    const auto r = reshape(t, Shape{b, len, heads, dh});
    return transpose ? reshape(permute(r, {0, 2, 3, 1}), Shape{b * heads, dh, len})
                     : reshape(permute(r, {0, 2, 1, 3}), Shape{b * heads, len, dh});
  };
  const auto qh = split(q, lq, false);
  const auto kt = split(k, lk, true);
  const auto vh = split(v, lk, false);
  auto att = softmax(scale(bmm(qh, kt), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)))), causal);
  if (weights) *weights = att;
  att = dropout(att, dropout_p, ctx.training, ctx.rng);
  const auto ctxv = bmm(att, vh);
  return reshape(permute(reshape(ctxv, Shape{b, heads, lq, dh}), {0, 2, 1, 3}), Shape{b, lq, d});
}

/// Sinusoidal table: PE(p, 2i) = sin(p / 10000^(2i/d)), PE(p, 2i+1) = cos(...).
template <class T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d) {
  Tensor<T> pe(Shape{length, d});
  for (std::size_t p = 0; p < length; ++p)
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
      const double a = static_cast<double>(p) * freq;
      pe[p * d + i] = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  return pe;
}

// ---------------------------------------------------------------------- layers

template <class T>
class Linear : public Module<T> {
 public:
  Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true)
      : weight(detail::parameter<T>({out, in}, rng, 1.0 / std::sqrt(static_cast<double>(in)))) {
    if (bias) this->bias = detail::constant_parameter<T>({out}, T(0));
  }
  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight, bias.defined() ? &bias : nullptr); }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& out) const override {
    out.push_back({detail::join(p, "weight"), weight});
    if (bias.defined()) out.push_back({detail::join(p, "bias"), bias});
  }
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor<T> weight;
  Tensor<T> bias;
};

template <class T>
class Conv2d : public Module<T> {
 public:
  Conv2d(std::size_t in, std::size_t out, std::size_t k, Rng& rng, std::size_t stride = 1, std::size_t pad = 0,
         bool bias = false)
      : weight(detail::parameter<T>({out, in, k, k}, rng, std::sqrt(2.0 / static_cast<double>(in * k * k)))),
        stride(stride),
        pad(pad) {
    if (bias) this->bias = detail::constant_parameter<T>({out}, T(0));
  }
  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(x, weight, bias.defined() ? &bias : nullptr, stride, pad);
  }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& out) const override {
    out.push_back({detail::join(p, "weight"), weight});
    if (bias.defined()) out.push_back({detail::join(p, "bias"), bias});
  }

  Tensor<T> weight;
  Tensor<T> bias;
  std::size_t stride;
  std::size_t pad;
};

template <class T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(std::size_t c)
      : gamma(detail::constant_parameter<T>({c}, T(1))),
        beta(detail::constant_parameter<T>({c}, T(0))),
        running_mean(Shape{c}, T(0)),
        running_var(Shape{c}, T(1)) {}
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) {
    return batch_norm2d(x, gamma, beta, running_mean, running_var, ctx.training);
  }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& out) const override {
    out.push_back({detail::join(p, "weight"), gamma});
    out.push_back({detail::join(p, "bias"), beta});
    out.push_back({detail::join(p, "running_mean"), running_mean, true});
    out.push_back({detail::join(p, "running_var"), running_var, true});
  }

  Tensor<T> gamma, beta, running_mean, running_var;
};

template <class T>
class LayerNorm : public Module<T> {
 public:
  explicit LayerNorm(std::size_t d)
      : gamma(detail::constant_parameter<T>({d}, T(1))), beta(detail::constant_parameter<T>({d}, T(0))) {}
  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& out) const override {
    out.push_back({detail::join(p, "weight"), gamma});
    out.push_back({detail::join(p, "bias"), beta});
  }

  Tensor<T> gamma, beta;
};

template <class T>
class LSTMCell : public Module<T> {
 public:
  LSTMCell(std::size_t in, std::size_t hidden, Rng& rng)
      : w_ih(detail::parameter<T>({4 * hidden, in}, rng, 1.0 / std::sqrt(static_cast<double>(hidden)))),
        w_hh(detail::parameter<T>({4 * hidden, hidden}, rng, 1.0 / std::sqrt(static_cast<double>(hidden)))),
        bias(detail::constant_parameter<T>({4 * hidden}, T(0))) {
    // Forget gate starts open.
    for (std::size_t i = hidden; i < 2 * hidden; ++i) bias[i] = T(1);
  }
  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& c) const {
    return lstm_cell(x, h, c, w_ih, w_hh, bias);
  }
  std::size_t hidden() const { return w_hh.dim(1); }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& out) const override {
    out.push_back({detail::join(p, "w_ih"), w_ih});
    out.push_back({detail::join(p, "w_hh"), w_hh});
    out.push_back({detail::join(p, "bias"), bias});
  }

  Tensor<T> w_ih, w_hh, bias;
};

/// Attention with learned input and output projections.
template <class T>
class MultiheadAttention : public Module<T> {
 public:
  MultiheadAttention(std::size_t d, std::size_t heads, Rng& rng, double dropout = 0.0)
      : q(d, d, rng), k(d, d, rng), v(d, d, rng), out(d, d, rng), heads(heads), dropout(dropout) {
    if (heads == 0 || d % heads != 0)
      throw ConfigError("model dimension " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                        " heads");
  }
  Tensor<T> forward(const Tensor<T>& query, const Tensor<T>& memory, bool causal, const Context& ctx,
                    Tensor<T>* weights = nullptr) const {
    const auto a = multi_head_attention(q.forward(query), k.forward(memory), v.forward(memory), heads, causal,
                                        dropout, ctx, weights);
    return this->out.forward(a);
  }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    q.collect(detail::join(p, "q"), o);
    k.collect(detail::join(p, "k"), o);
    v.collect(detail::join(p, "v"), o);
    out.collect(detail::join(p, "out"), o);
  }

  Linear<T> q, k, v, out;
  std::size_t heads;
  double dropout;
};

template <class T>
class FeedForward : public Module<T> {
 public:
  FeedForward(std::size_t d, std::size_t width, Rng& rng, double dropout)
      : up(d, width, rng), down(width, d, rng), dropout(dropout) {}
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) const {
    return down.forward(nn::dropout(relu(up.forward(x)), dropout, ctx.training, ctx.rng));
  }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    up.collect(detail::join(p, "up"), o);
    down.collect(detail::join(p, "down"), o);
  }

  Linear<T> up, down;
  double dropout;
};

/// Post-norm encoder layer: x = LN(x + SA(x)); x = LN(x + FF(x)).
template <class T>
class EncoderLayer : public Module<T> {
 public:
  EncoderLayer(std::size_t d, std::size_t heads, std::size_t ff, double dropout, Rng& rng)
      : attn(d, heads, rng, dropout), ff(d, ff, rng, dropout), norm1(d), norm2(d), dropout(dropout) {}
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) const {
    auto h = norm1.forward(add(x, nn::dropout(attn.forward(x, x, false, ctx), dropout, ctx.training, ctx.rng)));
    return norm2.forward(add(h, nn::dropout(ff.forward(h, ctx), dropout, ctx.training, ctx.rng)));
  }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    attn.collect(detail::join(p, "attn"), o);
    ff.collect(detail::join(p, "ff"), o);
    norm1.collect(detail::join(p, "norm1"), o);
    norm2.collect(detail::join(p, "norm2"), o);
  }

  MultiheadAttention<T> attn;
  FeedForward<T> ff;
  LayerNorm<T> norm1, norm2;
  double dropout;
};

/// Post-norm decoder layer with causal self-attention and cross-attention.
template <class T>
class DecoderLayer : public Module<T> {
 public:
  DecoderLayer(std::size_t d, std::size_t heads, std::size_t ff, double dropout, Rng& rng)
      : self_attn(d, heads, rng, dropout),
        cross_attn(d, heads, rng, dropout),
        ff(d, ff, rng, dropout),
        norm1(d),
        norm2(d),
        norm3(d),
        dropout(dropout) {}
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& memory, const Context& ctx) const {
    auto drop = [&](const Tensor<T>& t) { return nn::dropout(t, dropout, ctx.training, ctx.rng); };
    auto h = norm1.forward(add(x, drop(self_attn.forward(x, x, true, ctx))));
    h = norm2.forward(add(h, drop(cross_attn.forward(h, memory, false, ctx))));
    return norm3.forward(add(h, drop(ff.forward(h, ctx))));
  }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    self_attn.collect(detail::join(p, "self_attn"), o);
    cross_attn.collect(detail::join(p, "cross_attn"), o);
    ff.collect(detail::join(p, "ff"), o);
    norm1.collect(detail::join(p, "norm1"), o);
    norm2.collect(detail::join(p, "norm2"), o);
    norm3.collect(detail::join(p, "norm3"), o);
  }

  MultiheadAttention<T> self_attn, cross_attn;
  FeedForward<T> ff;
  LayerNorm<T> norm1, norm2, norm3;
  double dropout;
};

}  // namespace ccsnet::nn
