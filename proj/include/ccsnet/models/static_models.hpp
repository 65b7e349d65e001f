#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "ccsnet/models/blocks.hpp"
#include "ccsnet/models/config.hpp"

namespace ccsnet::models {

/// Image (B x C x H x W) to flattened displacement field (B x output_size).
template <class T>
class StaticModel : public nn::Module<T> {
 public:
  explicit StaticModel(ModelConfig cfg)
      : config((cfg.validate(), std::move(cfg))), label_offset(nn::Shape{config.output_size()}, T(0)) {}
  virtual Tensor<T> forward(const Tensor<T>& images, const Context& ctx) = 0;

  ModelConfig config;
  /// Per-pixel value added to every prediction. The trainer sets it to the
  /// mean training label so the network only learns the geometry-dependent
  /// part of the field. Saved with the weights, never optimized.
  Tensor<T> label_offset;

 protected:
  Tensor<T> with_offset(const Tensor<T>& y) const { return nn::add_bias(y, label_offset); }
  void collect_offset(const std::string& p, std::vector<NamedTensor<T>>& o) const {
    o.push_back({nn::detail::join(p, "label_offset"), label_offset, true});
  }
  void check_input(const Tensor<T>& x) const {
    if (x.ndim() != 4 || x.dim(1) != config.input_channels || x.dim(2) != config.input_h ||
        x.dim(3) != config.input_w)
      throw DimensionError(to_string(config.architecture) + " expects B x " + std::to_string(config.input_channels) +
                           " x " + std::to_string(config.input_h) + " x " + std::to_string(config.input_w) +
                           " images, got " + nn::shape_str(x.shape()));
  }
};

/// Output projections start at zero so an untrained model predicts
/// label_offset exactly.
template <class T>
void zero_fill(Tensor<T>& t) {
  std::fill(t.values().begin(), t.values().end(), T(0));
}

namespace detail {

inline void require_divisible(const ModelConfig& c, std::size_t downsamplings) {
  const std::size_t f = std::size_t{1} << downsamplings;
  if (c.input_h % f != 0 || c.input_w % f != 0)
    throw ConfigError(to_string(c.architecture) + ": input " + std::to_string(c.input_h) + "x" +
                      std::to_string(c.input_w) + " must be divisible by " + std::to_string(f));
}

}  // namespace detail

/// Stacked conv blocks, each followed by 2x2 max pooling, then one fully
/// connected layer to the label grid.
template <class T>
class CnnBaseline : public StaticModel<T> {
 public:
  explicit CnnBaseline(ModelConfig cfg) : StaticModel<T>(std::move(cfg)) {
    const auto w = this->config.resolved_widths();
    detail::require_divisible(this->config, w.size());
    Rng rng(this->config.seed);
    std::size_t in = this->config.input_channels;
    for (auto c : w) {
      blocks.push_back(std::make_unique<ConvBlock<T>>(in, c, rng));
      in = c;
    }
    const std::size_t f = std::size_t{1} << w.size();
    fc = std::make_unique<nn::Linear<T>>(in * (this->config.input_h / f) * (this->config.input_w / f),
                                         this->config.output_size(), rng);
    zero_fill(fc->weight);
  }
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override {
    this->check_input(x);
    auto h = x;
    for (auto& b : blocks) h = nn::max_pool2d(b->forward(h, ctx));
    return this->with_offset(fc->forward(nn::flatten(h)));
  }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    collect_list(blocks, nn::detail::join(p, "blocks"), o);
    fc->collect(nn::detail::join(p, "fc"), o);
    this->collect_offset(p, o);
  }

  std::vector<std::unique_ptr<ConvBlock<T>>> blocks;
  std::unique_ptr<nn::Linear<T>> fc;
};

/// ResNet-18 layout: 7x7 stride-2 stem with 2x2 pooling, four stages of two
/// basic residual blocks (stride 2 at the start of stages 2-4), global
/// average pooling and a fully connected layer onto the label grid.
template <class T>
class ResNetBaseline : public StaticModel<T> {
 public:
  explicit ResNetBaseline(ModelConfig cfg) : StaticModel<T>(std::move(cfg)) {
    const auto w = this->config.resolved_widths();
    Rng rng(this->config.seed);
    stem = std::make_unique<nn::Conv2d<T>>(this->config.input_channels, w[0], 7, rng, 2, 3);
    stem_bn = std::make_unique<nn::BatchNorm2d<T>>(w[0]);
    std::size_t in = w[0];
    for (std::size_t s = 0; s < w.size(); ++s) {
      blocks.push_back(std::make_unique<ResidualBlock<T>>(in, w[s], rng, s == 0 ? 1 : 2));
      blocks.push_back(std::make_unique<ResidualBlock<T>>(w[s], w[s], rng, 1));
      in = w[s];
    }
    fc = std::make_unique<nn::Linear<T>>(in, this->config.output_size(), rng);
    zero_fill(fc->weight);
  }
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override {
    this->check_input(x);
    auto h = nn::max_pool2d(nn::relu(stem_bn->forward(stem->forward(x), ctx)));
    for (auto& b : blocks) h = b->forward(h, ctx);
    // The fully connected output is the 1 x 25 x 50 map, already flat.
    return this->with_offset(fc->forward(nn::global_avg_pool(h)));
  }
  void collect(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    using nn::detail::join;
    stem->collect(join(p, "stem"), o);
    stem_bn->collect(join(p, "stem_bn"), o);
    collect_list(blocks, join(p, "blocks"), o);
    fc->collect(join(p, "fc"), o);
    this->collect_offset(p, o);
  }

  std::unique_ptr<nn::Conv2d<T>> stem;
  std::unique_ptr<nn::BatchNorm2d<T>> stem_bn;
  std::vector<std::unique_ptr<ResidualBlock<T>>> blocks;
  std::unique_ptr<nn::Linear<T>> fc;
};

/// U-Net whose encoder levels are pairs of residual blocks. With widths
/// w_0..w_L there are L 2x downsamplings; level l < L feeds the decoder
/// stage at the same resolution through a channel concatenation. A 1x1
/// convolution produces the single-channel map, which is resampled onto the
/// label grid with corner-aligned nearest neighbours.
template <class T>
class ResNetUNet : public StaticModel<T> {
 public:
  explicit ResNetUNet(ModelConfig cfg) : StaticModel<T>(std::move(cfg)) {
    const auto w = this->config.resolved_widths();
    if (w.size() < 2) throw ConfigError("resnet_unet needs at least two widths");
    detail::require_divisible(this->config, w.size() - 1);
    Rng rng(this->config.seed);
    stem = std::make_unique<ConvBlock<T>>(this->config.input_channels, w[0], rng);
    std::size_t in = w[0];
    for (std::size_t l = 0; l < w.size(); ++l) {
      encoder.push_back(std::make_unique<ResidualBlock<T>>(in, w[l], rng));
      encoder.push_back(std::make_unique<ResidualBlock<T>>(w[l], w[l], rng));
      in = w[l];
    }
    for (std::size_t l = w.size() - 1; l-- > 0;) {
      decoder.push_back(std::make_unique<ConvBlock<T>>(in + w[l], w[l], rng));
      decoder.push_back(std::make_unique<ConvBlock<T>>(w[l], w[l], rng));
      in = w[l];
    }
    head = std::make_unique<nn::Conv2d<T>>(in, 1, 1, rng, 1, 0, true);
    zero_fill(head->weight);
  }

  std::size_t levels() const { return encoder.size() / 2; }

  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override {
    this->check_input(x);
    std::vector<Tensor<T>> skips;
    auto h = stem->forward(x, ctx);
    for (std::size_t l = 0; l < levels(); ++l) {
      if (l > 0) h = nn::max_pool2d(h);
      h = encoder[2 * l]->forward(h, ctx);
      h = encoder[2 * l + 1]->forward(h, ctx);
      if (l + 1 < levels()) skips.push_back(h);
    }
    for (std::size_t k = 0; k < decoder.size() / 2; ++k) {
      auto skip = skips[skips.size() - 1 - k];
      if (ablate_skips) skip = Tensor<T>(skip.shape());
      h = nn::concat<T>({nn::upsample2x(h), skip}, 1);
      h = decoder[2 * k]->forward(h, ctx);
      h = decoder[2 * k + 1]->forward(h, ctx);
    }
    h = nn::resize_nearest(head->forward(h), this->config.output_h, this->config.output_w);
    return this->with_offset(nn::flatten(h));
  }

  void collect(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    using nn::detail::join;
    stem->collect(join(p, "stem"), o);
    collect_list(encoder, join(p, "encoder"), o);
    collect_list(decoder, join(p, "decoder"), o);
    head->collect(join(p, "head"), o);
    this->collect_offset(p, o);
  }

  /// Replaces every skip tensor with zeros; used to check the skips matter.
  bool ablate_skips = false;

  std::unique_ptr<ConvBlock<T>> stem;
  std::vector<std::unique_ptr<ResidualBlock<T>>> encoder;
  std::vector<std::unique_ptr<ConvBlock<T>>> decoder;
  std::unique_ptr<nn::Conv2d<T>> head;
};

/// Runs a static model in eval mode without recording a graph.
template <class T>
Tensor<T> extract_features(StaticModel<T>& model, const Tensor<T>& images) {
  nn::NoGradGuard guard;
  return model.forward(images, Context{false, nullptr});
}

}  // namespace ccsnet::models
