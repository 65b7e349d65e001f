#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ccsnet/error.hpp"
#include "ccsnet/nn/optim.hpp"
#include "json.hpp"

namespace ccsnet::train {

struct TrainConfig {
  std::size_t batch = 32;
  std::size_t epochs = 30;
  /// 0 is an evaluation-only run: no optimizer, no parameter or buffer update.
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  bool deterministic = true;
  /// Restore the weights of the epoch with the lowest validation MSE.
  bool restore_best = true;
  std::size_t eval_batch = 64;
  /// Sliding-window stride for the sequence models.
  std::size_t stride = 1;
  /// "constant", or "cosine": per-epoch cosine decay from lr towards
  /// lr * min_lr_fraction at the last epoch.
  std::string schedule = "constant";
  double min_lr_fraction = 0.01;

  bool evaluation_only() const { return lr == 0.0; }

  /// Learning rate used throughout epoch `epoch` (1-based).
  double lr_at(std::size_t epoch) const {
    if (schedule == "constant" || epochs < 2) return lr;
    const double f = static_cast<double>(epoch - 1) / static_cast<double>(epochs - 1);
    const double lo = lr * min_lr_fraction;
    return lo + 0.5 * (lr - lo) * (1.0 + std::cos(3.14159265358979323846 * f));
  }

  nn::AdamConfig adam() const { return {lr, beta1, beta2, eps, weight_decay, false}; }

  void validate() const {
    if (batch < 1) throw ConfigError("batch size must be at least 1");
    if (eval_batch < 1) throw ConfigError("evaluation batch size must be at least 1");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (stride < 1) throw ConfigError("window stride must be at least 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be >= 0, got " + std::to_string(lr));
    if (schedule != "constant" && schedule != "cosine")
      throw ConfigError("unknown learning-rate schedule '" + schedule + "' (expected constant or cosine)");
    if (!(min_lr_fraction > 0.0 && min_lr_fraction <= 1.0)) throw ConfigError("min_lr_fraction must lie in (0, 1]");
    if (!evaluation_only()) adam().validate();
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch", c.batch},       {"epochs", c.epochs},   {"lr", c.lr},
          {"weight_decay", c.weight_decay}, {"beta1", c.beta1}, {"beta2", c.beta2},
          {"eps", c.eps},           {"seed", c.seed},       {"deterministic", c.deterministic},
          {"restore_best", c.restore_best}, {"eval_batch", c.eval_batch}, {"stride", c.stride},
          {"schedule", c.schedule},         {"min_lr_fraction", c.min_lr_fraction}};
}

/// Reads the keys present in `j` over `base`.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  try {
    base.batch = j.value("batch", base.batch);
    base.epochs = j.value("epochs", base.epochs);
    base.lr = j.value("lr", base.lr);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.beta1 = j.value("beta1", base.beta1);
    base.beta2 = j.value("beta2", base.beta2);
    base.eps = j.value("eps", base.eps);
    base.seed = j.value("seed", base.seed);
    base.deterministic = j.value("deterministic", base.deterministic);
    base.restore_best = j.value("restore_best", base.restore_best);
    base.eval_batch = j.value("eval_batch", base.eval_batch);
    base.stride = j.value("stride", base.stride);
    base.schedule = j.value("schedule", base.schedule);
    base.min_lr_fraction = j.value("min_lr_fraction", base.min_lr_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training configuration: ") + e.what());
  }
  base.validate();
  return base;
}

/// Running sums for MSE and mean absolute error.
struct Metrics {
  double sq = 0.0;
  double abs = 0.0;
  std::size_t n = 0;

  template <class A, class B>
  void add(std::span<A> pred, std::span<B> target) {
    if (pred.size() != target.size()) throw DimensionError("metric: prediction and target sizes differ");
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double r = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
      sq += r * r;
      abs += std::abs(r);
    }
    n += pred.size();
  }
  double mse() const { return n ? sq / static_cast<double>(n) : 0.0; }
  double mae() const { return n ? abs / static_cast<double>(n) : 0.0; }
};

struct EpochRow {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double train_mae = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
};

struct LossHistory {
  std::vector<EpochRow> rows;

  std::string csv() const {
    std::string out = "epoch,train_mse,train_mae,val_mse,val_mae\n";
    char buf[160];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%zu,%.9e,%.9e,%.9e,%.9e\n", r.epoch, r.train_mse, r.train_mae, r.val_mse,
                    r.val_mae);
      out += buf;
    }
    return out;
  }

  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw PathError("cannot write " + path.string());
    os << csv();
  }
};

struct TrainResult {
  LossHistory history;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  /// Metrics of the returned (possibly restored) weights, eval mode, scaled units.
  Metrics final_train;
  Metrics final_val;
  /// Reference predictors on the validation split, scaled units.
  nlohmann::json baselines = nlohmann::json::object();
  double seconds = 0.0;
};

/// Run summary. `fit_gap_ok` records whether the final train and validation
/// MSE are within a factor of two of each other.
inline nlohmann::json run_report(const TrainConfig& cfg, const TrainResult& r) {
  const double a = r.final_train.mse(), b = r.final_val.mse();
  const double lo = std::min(a, b), hi = std::max(a, b);
  return {{"train_config", to_json(cfg)},
          {"epochs_completed", r.history.rows.size()},
          {"best_epoch", r.best_epoch},
          {"best_val_mse", r.best_val_mse},
          {"final", {{"train_mse", a}, {"train_mae", r.final_train.mae()}, {"val_mse", b}, {"val_mae", r.final_val.mae()}}},
          {"units", "scaled"},
          {"fit_gap_ok", hi <= 2.0 * lo},
          {"baselines", r.baselines}};
}

}  // namespace ccsnet::train
