#pragma once

#include <chrono>
#include <limits>
#include <numeric>
#include <optional>
#include <unordered_map>

#include "ccsnet/data/dataset.hpp"
#include "ccsnet/data/windows.hpp"
#include "ccsnet/models/factory.hpp"
#include "ccsnet/train/config.hpp"

namespace ccsnet::train {

using models::Context;
using nn::Tensor;

/// Splits a (shuffled) index list into consecutive batches. A trailing batch
/// of one is folded into the previous batch, since batch norm cannot train on
/// a single example.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch)));
  if (out.size() >= 2 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

namespace detail {

inline std::vector<std::size_t> require_split(const data::Dataset& ds, data::Split s) {
  auto idx = ds.indices(s);
  if (idx.empty()) throw DatasetError("the " + data::to_string(s) + " split is empty");
  return idx;
}

template <class T>
std::vector<nn::Storage<T>> snapshot(const nn::Module<T>& m) {
  std::vector<nn::Storage<T>> out;
  for (const auto& nt : m.named_tensors()) out.push_back(nt.tensor.values());
  return out;
}

template <class T>
void restore(nn::Module<T>& m, const std::vector<nn::Storage<T>>& snap) {
  auto nts = m.named_tensors();
  for (std::size_t k = 0; k < nts.size(); ++k) nts[k].tensor.values() = snap[k];
}

inline Tensor<float> image_batch(const data::Dataset& ds, std::span<const std::size_t> idx) {
  const std::size_t plane = ds.raster_size();
  Tensor<float> x(nn::Shape{idx.size(), 3, static_cast<std::size_t>(ds.domain.raster_h),
                            static_cast<std::size_t>(ds.domain.raster_w)});
  for (std::size_t b = 0; b < idx.size(); ++b) data::write_image(ds, idx[b], x.values().data() + b * 3 * plane);
  return x;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// ---------------------------------------------------------------- static

/// Static labels in scaled units, one vector per sample.
inline std::vector<std::vector<float>> scaled_static_labels(const data::Dataset& ds) {
  if (!ds.has_static) throw DatasetError("dataset has no static labels");
  if (!ds.static_scaler) throw DatasetError("dataset has no static scaler");
  std::vector<std::vector<float>> out(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    out[i] = ds.static_scaler->transform<float>(ds.samples[i].static_label);
  return out;
}

/// Scaled predictions (indices.size() x label size), eval mode.
inline std::vector<float> predict_static(models::StaticModel<float>& model, const data::Dataset& ds,
                                         const std::vector<std::size_t>& indices, std::size_t batch = 64) {
  nn::NoGradGuard guard;
  std::vector<float> out;
  out.reserve(indices.size() * ds.label_size());
  for (const auto& b : make_batches(indices, std::max<std::size_t>(batch, 1))) {
    const auto y = model.forward(detail::image_batch(ds, b), Context{false, nullptr});
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

/// MSE and mean absolute error over the given samples, eval mode, scaled units.
inline Metrics evaluate_static(models::StaticModel<float>& model, const data::Dataset& ds,
                               const std::vector<std::size_t>& indices, std::size_t batch = 64) {
  const auto labels = scaled_static_labels(ds);
  const auto pred = predict_static(model, ds, indices, batch);
  Metrics m;
  const std::size_t n = ds.label_size();
  for (std::size_t k = 0; k < indices.size(); ++k)
    m.add(std::span<const float>(pred).subspan(k * n, n), std::span<const float>(labels[indices[k]]));
  return m;
}

inline Metrics evaluate_static(models::StaticModel<float>& model, const data::Dataset& ds, data::Split split,
                               std::size_t batch = 64) {
  return evaluate_static(model, ds, detail::require_split(ds, split), batch);
}

/// Per-pixel mean of the scaled training labels.
inline std::vector<float> train_label_mean(const data::Dataset& ds) {
  const auto labels = scaled_static_labels(ds);
  const auto train = detail::require_split(ds, data::Split::Train);
  std::vector<double> mean(ds.label_size(), 0.0);
  for (auto i : train)
    for (std::size_t p = 0; p < mean.size(); ++p) mean[p] += labels[i][p];
  std::vector<float> m(mean.size());
  for (std::size_t p = 0; p < mean.size(); ++p) m[p] = static_cast<float>(mean[p] / static_cast<double>(train.size()));
  return m;
}

/// Predicting the per-pixel training mean, scored on `indices`.
inline Metrics static_mean_baseline(const data::Dataset& ds, const std::vector<std::size_t>& indices) {
  const auto labels = scaled_static_labels(ds);
  const auto m = train_label_mean(ds);
  Metrics out;
  for (auto i : indices) out.add(std::span<const float>(m), std::span<const float>(labels[i]));
  return out;
}

using EpochCallback = std::function<void(const EpochRow&)>;

template <class Step, class Eval, class Snap>
TrainResult run_epochs(const TrainConfig& cfg, std::size_t n_train, Step&& train_epoch, Eval&& eval, Snap& module,
                       const EpochCallback& on_epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r;
  std::vector<nn::Storage<float>> best;
  r.best_val_mse = std::numeric_limits<double>::infinity();
  Rng order_rng(Rng::derive(cfg.seed, 100));
  Rng dropout_rng(Rng::derive(cfg.seed, 101));
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Metrics tr;
    if (cfg.evaluation_only()) {
      tr = eval(data::Split::Train);
    } else {
      std::vector<std::size_t> order(n_train);
      std::iota(order.begin(), order.end(), std::size_t{0});
      order_rng.shuffle(order);
      tr = train_epoch(make_batches(order, cfg.batch), dropout_rng, cfg.lr_at(epoch));
    }
    const Metrics va = eval(data::Split::Val);
    EpochRow row{epoch, tr.mse(), tr.mae(), va.mse(), va.mae()};
    r.history.rows.push_back(row);
    if (va.mse() < r.best_val_mse) {
      r.best_val_mse = va.mse();
      r.best_epoch = epoch;
      if (cfg.restore_best) best = detail::snapshot(module);
    }
    if (on_epoch) on_epoch(row);
  }
  if (cfg.restore_best && !best.empty() && r.best_epoch != cfg.epochs) detail::restore(module, best);
  r.final_train = eval(data::Split::Train);
  r.final_val = eval(data::Split::Val);
  r.seconds = detail::seconds_since(t0);
  return r;
}

/// Minibatch Adam on the MSE between the prediction and the scaled label
/// grid. History train columns average the train-mode minibatch errors.
inline TrainResult train_static(models::StaticModel<float>& model, const data::Dataset& ds, const TrainConfig& cfg,
                                const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const auto labels = scaled_static_labels(ds);
  const auto train_idx = detail::require_split(ds, data::Split::Train);
  const auto val_idx = detail::require_split(ds, data::Split::Val);
  std::optional<nn::Adam<float>> opt;
  if (!cfg.evaluation_only()) opt.emplace(model.parameters(), cfg.adam());
  const std::size_t n = ds.label_size();
  if (model.label_offset.numel() != n)
    throw DimensionError("model predicts " + std::to_string(model.label_offset.numel()) + " values, labels have " +
                         std::to_string(n));
  if (!cfg.evaluation_only()) {
    const auto mean = train_label_mean(ds);
    model.label_offset.values().assign(mean.begin(), mean.end());
  }

  auto train_epoch = [&](const std::vector<std::vector<std::size_t>>& batches, Rng& rng, double lr) {
    opt->set_lr(lr);
    Metrics m;
    for (const auto& b : batches) {
      std::vector<std::size_t> idx(b.size());
      for (std::size_t k = 0; k < b.size(); ++k) idx[k] = train_idx[b[k]];
      Tensor<float> y(nn::Shape{idx.size(), n});
      for (std::size_t k = 0; k < idx.size(); ++k)
        std::copy(labels[idx[k]].begin(), labels[idx[k]].end(), y.values().begin() + static_cast<std::ptrdiff_t>(k * n));
      opt->zero_grad();
      const auto pred = model.forward(detail::image_batch(ds, idx), Context{true, &rng});
      nn::backward(nn::mse_loss(pred, y));
      opt->step();
      m.add(pred.data(), y.data());
    }
    return m;
  };
  auto eval = [&](data::Split s) {
    return evaluate_static(model, ds, s == data::Split::Train ? train_idx : val_idx, cfg.eval_batch);
  };
  auto r = run_epochs(cfg, train_idx.size(), train_epoch, eval, model, on_epoch);
  const auto mean = static_mean_baseline(ds, val_idx);
  r.baselines["train_mean"] = {{"val_mse", mean.mse()}, {"val_mae", mean.mae()}};
  return r;
}

// ---------------------------------------------------------------- transient

/// Scaled series, one (steps x surface_points) vector per sample.
inline std::vector<std::vector<float>> scaled_series(const data::Dataset& ds) {
  if (!ds.has_transient) throw DatasetError("dataset has no transient series");
  if (!ds.transient_scaler) throw DatasetError("dataset has no transient scaler");
  std::vector<std::vector<float>> out(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) out[i] = ds.transient_scaler->transform<float>(ds.samples[i].series);
  return out;
}

/// Frozen-encoder features per sample, computed once.
class FeatureCache {
 public:
  FeatureCache(models::ResNetUNet<float>& encoder, const data::Dataset& ds, std::size_t batch = 32) {
    std::vector<std::size_t> all(ds.samples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    dim_ = encoder.config.output_size();
    for (const auto& b : make_batches(all, std::max<std::size_t>(batch, 1))) {
      const auto f = models::extract_features<float>(encoder, detail::image_batch(ds, b));
      for (std::size_t k = 0; k < b.size(); ++k)
        rows_[b[k]].assign(f.values().begin() + static_cast<std::ptrdiff_t>(k * dim_),
                           f.values().begin() + static_cast<std::ptrdiff_t>((k + 1) * dim_));
    }
  }

  std::size_t dim() const { return dim_; }
  const std::vector<float>& at(std::size_t sample) const { return rows_.at(sample); }

  Tensor<float> batch(std::span<const std::size_t> samples) const {
    Tensor<float> t(nn::Shape{samples.size(), dim_});
    for (std::size_t k = 0; k < samples.size(); ++k)
      std::copy(at(samples[k]).begin(), at(samples[k]).end(), t.values().begin() + static_cast<std::ptrdiff_t>(k * dim_));
    return t;
  }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::size_t, std::vector<float>> rows_;
};

struct WindowRef {
  std::size_t sample = 0;
  std::size_t start = 0;
};

inline std::vector<WindowRef> window_refs(const data::Dataset& ds, const std::vector<std::size_t>& samples,
                                          std::size_t window, std::size_t stride) {
  std::vector<WindowRef> out;
  for (auto s : samples) {
    const std::size_t rows = ds.samples[s].series.size() / ds.surface_points;
    for (auto st : data::window_starts(rows, window, stride)) out.push_back({s, st});
  }
  return out;
}

/// B x rows x dim tensor of consecutive series rows starting at each ref.
inline Tensor<float> window_batch(const std::vector<std::vector<float>>& series, std::span<const WindowRef> refs,
                                  std::size_t rows, std::size_t dim) {
  Tensor<float> t(nn::Shape{refs.size(), rows, dim});
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto& s = series[refs[k].sample];
    std::copy(s.begin() + static_cast<std::ptrdiff_t>(refs[k].start * dim),
              s.begin() + static_cast<std::ptrdiff_t>((refs[k].start + rows) * dim),
              t.values().begin() + static_cast<std::ptrdiff_t>(k * rows * dim));
  }
  return t;
}

/// Next-step prediction error over every window of the given samples, eval
/// mode, scaled units.
inline Metrics evaluate_transient(models::TransientModel<float>& model, const data::Dataset& ds,
                                  const FeatureCache& features, const std::vector<std::size_t>& samples,
                                  std::size_t stride = 1, std::size_t batch = 256) {
  const auto series = scaled_series(ds);
  const std::size_t w = model.config.window, dim = model.config.series_dim;
  const auto refs = window_refs(ds, samples, w, stride);
  nn::NoGradGuard guard;
  Metrics m;
  for (std::size_t i = 0; i < refs.size(); i += batch) {
    const std::span<const WindowRef> b(refs.data() + i, std::min(batch, refs.size() - i));
    std::vector<std::size_t> ids(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) ids[k] = b[k].sample;
    const auto win = window_batch(series, b, w + 1, dim);
    const auto pred = model.predict_next(features.batch(ids), nn::slice(win, 1, 0, w), Context{false, nullptr});
    const auto target = nn::slice(win, 1, w, 1);
    m.add(pred.data(), target.data());
  }
  return m;
}

/// Reference predictors for next-step prediction on `samples`: repeat the
/// last window row, or predict the mean training target.
inline nlohmann::json transient_baselines(const data::Dataset& ds, const std::vector<std::size_t>& samples,
                                          std::size_t window, std::size_t stride) {
  const auto series = scaled_series(ds);
  const std::size_t dim = ds.surface_points;
  double mean = 0.0;
  std::size_t count = 0;
  for (const auto& r : window_refs(ds, ds.indices(data::Split::Train), window, stride)) {
    const auto& s = series[r.sample];
    for (std::size_t j = 0; j < dim; ++j) mean += s[(r.start + window) * dim + j];
    count += dim;
  }
  mean = count ? mean / static_cast<double>(count) : 0.0;
  Metrics last, constant;
  for (const auto& r : window_refs(ds, samples, window, stride)) {
    const auto& s = series[r.sample];
    const std::span<const float> prev(s.data() + (r.start + window - 1) * dim, dim);
    const std::span<const float> target(s.data() + (r.start + window) * dim, dim);
    last.add(prev, target);
    const std::vector<double> c(dim, mean);
    constant.add(std::span<const double>(c), target);
  }
  return {{"last_frame", {{"mse", last.mse()}, {"mae", last.mae()}}},
          {"train_mean", {{"mse", constant.mse()}, {"mae", constant.mae()}}}};
}

/// Trains the sequence head with the encoder frozen. The LSTM learns
/// window -> next row; the transformer learns the one-step-shifted window.
/// History train columns average those teacher-forced errors; validation
/// columns score next-step prediction.
namespace detail {

/// RMS of the one-step changes of the scaled training series; 1 for
/// constant series.
inline float rms_increment(const std::vector<std::vector<float>>& series, const std::vector<std::size_t>& samples,
                           std::size_t dim) {
  double acc = 0;
  std::size_t n = 0;
  for (auto i : samples)
    for (std::size_t k = dim; k < series[i].size(); ++k, ++n) {
      const double d = static_cast<double>(series[i][k]) - series[i][k - dim];
      acc += d * d;
    }
  const double rms = n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
  return rms > 0 ? static_cast<float>(rms) : 1.0f;
}

}  // namespace detail

inline TrainResult train_transient(models::TransientModel<float>& model, const data::Dataset& ds,
                                   const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (!model.encoder) throw DependencyError("sequence model has no pretrained encoder");
  const auto series = scaled_series(ds);
  const auto train_samples = detail::require_split(ds, data::Split::Train);
  const auto val_samples = detail::require_split(ds, data::Split::Val);
  const std::size_t w = model.config.window, dim = model.config.series_dim;
  if (ds.surface_points != dim)
    throw DimensionError("dataset has " + std::to_string(ds.surface_points) + " surface points, model expects " +
                         std::to_string(dim));
  const auto refs = window_refs(ds, train_samples, w, cfg.stride);
  const FeatureCache features(*model.encoder, ds);
  if (auto* t = dynamic_cast<models::TransformerPredictor<float>*>(&model); t && !cfg.evaluation_only())
    t->step_scale[0] = detail::rms_increment(series, train_samples, dim);

  std::optional<nn::Adam<float>> opt;
  if (!cfg.evaluation_only()) opt.emplace(model.parameters(), cfg.adam());

  auto train_epoch = [&](const std::vector<std::vector<std::size_t>>& batches, Rng& rng, double lr) {
    opt->set_lr(lr);
    Metrics m;
    for (const auto& b : batches) {
      std::vector<WindowRef> br(b.size());
      std::vector<std::size_t> ids(b.size());
      for (std::size_t k = 0; k < b.size(); ++k) {
        br[k] = refs[b[k]];
        ids[k] = br[k].sample;
      }
      opt->zero_grad();
      const auto [pred, target] =
          model.teacher_forced(features.batch(ids), window_batch(series, br, w + 1, dim), Context{true, &rng});
      nn::backward(nn::mse_loss(pred, target));
      opt->step();
      m.add(pred.data(), target.data());
    }
    return m;
  };
  auto eval = [&](data::Split s) {
    return evaluate_transient(model, ds, features, s == data::Split::Train ? train_samples : val_samples, cfg.stride,
                              cfg.eval_batch);
  };
  auto r = run_epochs(cfg, refs.size(), train_epoch, eval, model, on_epoch);
  r.baselines = transient_baselines(ds, val_samples, w, cfg.stride);
  return r;
}

/// Closed-loop rollout in scaled units: each prediction is appended to the
/// window for the next step. `window` holds `config.window` rows.
inline std::vector<float> rollout_scaled(models::TransientModel<float>& model, const Tensor<float>& features,
                                         std::vector<float> window, std::size_t n_steps) {
  const std::size_t w = model.config.window, dim = model.config.series_dim;
  if (window.size() != w * dim)
    throw DimensionError("initial window must have " + std::to_string(w) + " x " + std::to_string(dim) + " values");
  nn::NoGradGuard guard;
  std::vector<float> out;
  out.reserve(n_steps * dim);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const auto next =
        model.predict_next(features, Tensor<float>(nn::Shape{1, w, dim}, window), Context{false, nullptr});
    out.insert(out.end(), next.values().begin(), next.values().end());
    window.erase(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(dim));
    window.insert(window.end(), next.values().begin(), next.values().end());
  }
  return out;
}

/// Closed-loop surface curve (n_steps x series_dim) in meters.
inline std::vector<float> rollout_surface(models::TransientModel<float>& model, const Tensor<float>& features,
                                          const std::vector<float>& window, std::size_t n_steps,
                                          const std::optional<data::MinMaxScaler>& scaler) {
  if (!scaler) throw DatasetError("rollout needs the transient scaler to report meters");
  const auto s = rollout_scaled(model, features, window, n_steps);
  return scaler->inverse<float>(s);
}

/// Open-loop counterpart: every step is predicted from ground-truth rows.
/// `series` is scaled; predictions cover rows start + window .. + n_steps - 1.
inline std::vector<float> open_loop_scaled(models::TransientModel<float>& model, const Tensor<float>& features,
                                           const std::vector<float>& series, std::size_t start, std::size_t n_steps) {
  const std::size_t w = model.config.window, dim = model.config.series_dim;
  if ((start + w + n_steps) * dim > series.size()) throw ArgumentError("open-loop horizon runs past the series");
  nn::NoGradGuard guard;
  std::vector<float> out;
  for (std::size_t k = 0; k < n_steps; ++k) {
    std::vector<float> win(series.begin() + static_cast<std::ptrdiff_t>((start + k) * dim),
                           series.begin() + static_cast<std::ptrdiff_t>((start + k + w) * dim));
    const auto next = model.predict_next(features, Tensor<float>(nn::Shape{1, w, dim}, std::move(win)),
                                         Context{false, nullptr});
    out.insert(out.end(), next.values().begin(), next.values().end());
  }
  return out;
}

}  // namespace ccsnet::train
