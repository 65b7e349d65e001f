#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ccsnet/nn/layers.hpp"

namespace ccsnet::models {

using nn::Context;
using nn::NamedTensor;
using nn::Tensor;

/// conv 3x3 (no bias) -> batch norm -> ReLU
template <class T>
class ConvBlock : public nn::Module<T> {
 public:
  ConvBlock(std::size_t in, std::size_t out, Rng& rng) : conv(in, out, 3, rng, 1, 1), bn(out) {}
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) { return nn::relu(bn.forward(conv.forward(x), ctx)); }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    conv.collect(nn::detail::join(p, "conv"), o);
    bn.collect(nn::detail::join(p, "bn"), o);
  }

  nn::Conv2d<T> conv;
  nn::BatchNorm2d<T> bn;
};

/// out = ReLU(F(x) + shortcut(x)) with F = conv-BN-ReLU-conv-BN. The
/// shortcut is the identity unless the stride or channel count changes, in
/// which case it is a 1x1 convolution followed by batch norm.
template <class T>
class ResidualBlock : public nn::Module<T> {
 public:
  ResidualBlock(std::size_t in, std::size_t out, Rng& rng, std::size_t stride = 1)
      : conv1(in, out, 3, rng, stride, 1), bn1(out), conv2(out, out, 3, rng, 1, 1), bn2(out) {
    if (stride != 1 || in != out) {
      proj = std::make_unique<nn::Conv2d<T>>(in, out, 1, rng, stride, 0);
      proj_bn = std::make_unique<nn::BatchNorm2d<T>>(out);
    }
  }
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) {
    auto f = nn::relu(bn1.forward(conv1.forward(x), ctx));
    f = bn2.forward(conv2.forward(f), ctx);
    const auto sc = proj ? proj_bn->forward(proj->forward(x), ctx) : x;
    return nn::relu(nn::add(f, sc));
  }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    using nn::detail::join;
    conv1.collect(join(p, "conv1"), o);
    bn1.collect(join(p, "bn1"), o);
    conv2.collect(join(p, "conv2"), o);
    bn2.collect(join(p, "bn2"), o);
    if (proj) {
      proj->collect(join(p, "proj"), o);
      proj_bn->collect(join(p, "proj_bn"), o);
    }
  }
  bool identity_shortcut() const { return !proj; }

  nn::Conv2d<T> conv1;
  nn::BatchNorm2d<T> bn1;
  nn::Conv2d<T> conv2;
  nn::BatchNorm2d<T> bn2;
  std::unique_ptr<nn::Conv2d<T>> proj;
  std::unique_ptr<nn::BatchNorm2d<T>> proj_bn;
};

template <class T, class M>
void collect_list(const std::vector<std::unique_ptr<M>>& list, const std::string& prefix,
                  std::vector<NamedTensor<T>>& out) {
  for (std::size_t i = 0; i < list.size(); ++i) list[i]->collect(nn::detail::join(prefix, std::to_string(i)), out);
}

}  // namespace ccsnet::models
