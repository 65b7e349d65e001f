#pragma once

#include <memory>
#include <utility>
#include <string>
#include <vector>

#include "ccsnet/models/static_models.hpp"

namespace ccsnet::models {

/// Sequence model conditioned on a geometry. Geometry enters as the frozen
/// encoder's feature vector (B x F); windows are B x window x series_dim.
template <class T>
class TransientModel : public nn::Module<T> {
 public:
  TransientModel(ModelConfig cfg, std::shared_ptr<ResNetUNet<T>> enc)
      : config(std::move(cfg)), encoder(std::move(enc)) {
    config.validate();
    if (!encoder) throw DependencyError("sequence model needs a pretrained resnet_unet encoder");
    encoder->set_trainable(false);
  }

  /// Next-step prediction (B x series_dim) from a window of `window` rows.
  virtual Tensor<T> predict_next(const Tensor<T>& features, const Tensor<T>& window, const Context& ctx) = 0;
  /// Teacher-forced (prediction, target) pair on windows of window + 1 rows
  /// (inputs then target). The training objective is their MSE.
  virtual std::pair<Tensor<T>, Tensor<T>> teacher_forced(const Tensor<T>& features, const Tensor<T>& window_with_target,
                                                         const Context& ctx) = 0;
  Tensor<T> loss(const Tensor<T>& features, const Tensor<T>& window_with_target, const Context& ctx) {
    const auto [pred, target] = teacher_forced(features, window_with_target, ctx);
    return nn::mse_loss(pred, target);
  }

  Tensor<T> features(const Tensor<T>& images) const { return extract_features<T>(*encoder, images); }
  Tensor<T> predict_next_from_images(const Tensor<T>& images, const Tensor<T>& window, const Context& ctx) {
    return predict_next(features(images), window, ctx);
  }

  /// Trainable head parameters plus the frozen encoder under "encoder.".
  void collect(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    encoder->collect(nn::detail::join(p, "encoder"), o);
    collect_head(p, o);
  }
  virtual void collect_head(const std::string& p, std::vector<NamedTensor<T>>& o) const = 0;

  ModelConfig config;
  std::shared_ptr<ResNetUNet<T>> encoder;

 protected:

  void check(const Tensor<T>& features, const Tensor<T>& window, std::size_t rows) const {
    if (features.ndim() != 2 || features.dim(1) != encoder->config.output_size())
      throw DimensionError("geometry features must be B x " + std::to_string(encoder->config.output_size()) +
                           ", got " + nn::shape_str(features.shape()));
    if (window.ndim() != 3 || window.dim(1) != rows || window.dim(2) != config.series_dim ||
        window.dim(0) != features.dim(0))
      throw DimensionError("window must be " + std::to_string(features.dim(0)) + " x " + std::to_string(rows) +
                           " x " + std::to_string(config.series_dim) + ", got " + nn::shape_str(window.shape()));
  }
};

/// The geometry embedding is fed as step 0, followed by the window rows,
/// through stacked LSTM cells; the top hidden state after the last row is
/// mapped to the increment over the last window row. The output head starts
/// at zero, so an untrained model repeats the last row.
template <class T>
class LstmPredictor : public TransientModel<T> {
 public:
  LstmPredictor(ModelConfig cfg, std::shared_ptr<ResNetUNet<T>> enc) : TransientModel<T>(std::move(cfg), std::move(enc)) {
    Rng rng(this->config.seed);
    const auto& c = this->config;
    feature_head = std::make_unique<nn::Linear<T>>(this->encoder->config.output_size(), c.series_dim, rng);
    for (std::size_t l = 0; l < c.lstm_layers; ++l)
      cells.push_back(std::make_unique<nn::LSTMCell<T>>(l == 0 ? c.series_dim : c.lstm_hidden, c.lstm_hidden, rng));
    out_head = std::make_unique<nn::Linear<T>>(c.lstm_hidden, c.series_dim, rng);
    std::fill(out_head->weight.values().begin(), out_head->weight.values().end(), T(0));
  }

  Tensor<T> predict_next(const Tensor<T>& features, const Tensor<T>& window, const Context&) override {
    this->check(features, window, this->config.window);
    const std::size_t b = features.dim(0), hid = this->config.lstm_hidden;
    std::vector<Tensor<T>> h(cells.size(), Tensor<T>(nn::Shape{b, hid}));
    std::vector<Tensor<T>> c(cells.size(), Tensor<T>(nn::Shape{b, hid}));
    auto step = [&](const Tensor<T>& x) {
      auto in = x;
      for (std::size_t l = 0; l < cells.size(); ++l) {
        std::tie(h[l], c[l]) = cells[l]->forward(in, h[l], c[l]);
        in = h[l];
      }
    };
    step(feature_head->forward(features));
    for (std::size_t t = 0; t < this->config.window; ++t)
      step(nn::reshape(nn::slice(window, 1, t, 1), nn::Shape{b, this->config.series_dim}));
    const auto last = nn::reshape(nn::slice(window, 1, this->config.window - 1, 1), nn::Shape{b, this->config.series_dim});
    return nn::add(out_head->forward(h.back()), last);
  }

  std::pair<Tensor<T>, Tensor<T>> teacher_forced(const Tensor<T>& features, const Tensor<T>& w,
                                                 const Context& ctx) override {
    this->check(features, w, this->config.window + 1);
    const std::size_t b = w.dim(0), n = this->config.window;
    return {predict_next(features, nn::slice(w, 1, 0, n), ctx),
            nn::reshape(nn::slice(w, 1, n, 1), nn::Shape{b, this->config.series_dim})};
  }

  void collect_head(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    using nn::detail::join;
    feature_head->collect(join(p, "feature_head"), o);
    collect_list(cells, join(p, "cells"), o);
    out_head->collect(join(p, "out_head"), o);
  }

  std::unique_ptr<nn::Linear<T>> feature_head;
  std::vector<std::unique_ptr<nn::LSTMCell<T>>> cells;
  std::unique_ptr<nn::Linear<T>> out_head;
};

/// Encoder-decoder transformer: the encoder sees a single token built from
/// the geometry embedding, the decoder reads the embedded window under a
/// causal mask and cross-attends to it. Trained on windows shifted by one
/// step; the next-step prediction is the last output row. Like the LSTM,
/// each output row is an increment over its input row from a zero-initialized
/// head. Decoder tokens are the row followed by its change from the previous
/// row (zero for the first) divided by `step_scale`; without the explicit
/// difference the decoder stays on the repeat-last-row solution.
template <class T>
class TransformerPredictor : public TransientModel<T> {
 public:
  TransformerPredictor(ModelConfig cfg, std::shared_ptr<ResNetUNet<T>> enc)
      : TransientModel<T>(std::move(cfg), std::move(enc)) {
    Rng rng(this->config.seed);
    const auto& c = this->config;
    feature_head = std::make_unique<nn::Linear<T>>(this->encoder->config.output_size(), c.series_dim, rng);
    enc_embed = std::make_unique<nn::Linear<T>>(c.series_dim, c.d_model, rng);
    dec_embed = std::make_unique<nn::Linear<T>>(2 * c.series_dim, c.d_model, rng);
    for (std::size_t l = 0; l < c.encoder_layers; ++l)
      enc_layers.push_back(std::make_unique<nn::EncoderLayer<T>>(c.d_model, c.heads, c.ff_width, c.dropout, rng));
    for (std::size_t l = 0; l < c.decoder_layers; ++l)
      dec_layers.push_back(std::make_unique<nn::DecoderLayer<T>>(c.d_model, c.heads, c.ff_width, c.dropout, rng));
    enc_norm = std::make_unique<nn::LayerNorm<T>>(c.d_model);
    dec_norm = std::make_unique<nn::LayerNorm<T>>(c.d_model);
    out_head = std::make_unique<nn::Linear<T>>(c.d_model, c.series_dim, rng);
    std::fill(out_head->weight.values().begin(), out_head->weight.values().end(), T(0));
    pe = nn::positional_encoding<T>(c.window + 1, c.d_model);
  }

  /// B x window x series_dim -> B x window x series_dim, row t predicting t + 1.
  Tensor<T> forward_sequence(const Tensor<T>& features, const Tensor<T>& window, const Context& ctx) {
    this->check(features, window, this->config.window);
    const std::size_t b = features.dim(0), d = this->config.d_model;
    auto mem = nn::reshape(enc_embed->forward(feature_head->forward(features)), nn::Shape{b, 1, d});
    mem = nn::add_positional(mem, pe);
    for (auto& l : enc_layers) mem = l->forward(mem, ctx);
    mem = enc_norm->forward(mem);
    const std::size_t n = this->config.window;
    const auto prev = nn::concat<T>({nn::slice(window, 1, 0, 1), nn::slice(window, 1, 0, n - 1)}, 1);
    const auto diff = nn::scale(nn::sub(window, prev), T(1) / step_scale[0]);
    auto h = nn::add_positional(dec_embed->forward(nn::concat<T>({window, diff}, 2)), pe);
    for (auto& l : dec_layers) h = l->forward(h, mem, ctx);
    return nn::add(out_head->forward(dec_norm->forward(h)), window);
  }

  Tensor<T> predict_next(const Tensor<T>& features, const Tensor<T>& window, const Context& ctx) override {
    const auto seq = forward_sequence(features, window, ctx);
    const std::size_t n = this->config.window;
    return nn::reshape(nn::slice(seq, 1, n - 1, 1), nn::Shape{features.dim(0), this->config.series_dim});
  }

  std::pair<Tensor<T>, Tensor<T>> teacher_forced(const Tensor<T>& features, const Tensor<T>& w,
                                                 const Context& ctx) override {
    this->check(features, w, this->config.window + 1);
    const std::size_t n = this->config.window;
    return {forward_sequence(features, nn::slice(w, 1, 0, n), ctx), nn::slice(w, 1, 1, n)};
  }

  void collect_head(const std::string& p, std::vector<NamedTensor<T>>& o) const override {
    using nn::detail::join;
    feature_head->collect(join(p, "feature_head"), o);
    enc_embed->collect(join(p, "enc_embed"), o);
    dec_embed->collect(join(p, "dec_embed"), o);
    collect_list(enc_layers, join(p, "enc_layers"), o);
    collect_list(dec_layers, join(p, "dec_layers"), o);
    o.push_back({join(p, "step_scale"), step_scale, true});
    enc_norm->collect(join(p, "enc_norm"), o);
    dec_norm->collect(join(p, "dec_norm"), o);
    out_head->collect(join(p, "out_head"), o);
  }

  std::unique_ptr<nn::Linear<T>> feature_head, enc_embed, dec_embed;
  std::vector<std::unique_ptr<nn::EncoderLayer<T>>> enc_layers;
  std::vector<std::unique_ptr<nn::DecoderLayer<T>>> dec_layers;
  std::unique_ptr<nn::LayerNorm<T>> enc_norm, dec_norm;
  std::unique_ptr<nn::Linear<T>> out_head;
  Tensor<T> pe;
  /// RMS one-step change of the scaled training series, set by the trainer.
  Tensor<T> step_scale{nn::Shape{1}, T(1)};
};

}  // namespace ccsnet::models
