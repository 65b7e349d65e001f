#pragma once

#include <filesystem>
#include <fstream>

#include "ccsnet/train/trainer.hpp"

namespace ccsnet::train {

struct TrainJob {
  std::filesystem::path data;
  std::filesystem::path out;
  /// Trained resnet_unet checkpoint; required by the sequence models.
  std::filesystem::path pretrained;
  models::ModelConfig model;
  TrainConfig train;
  EpochCallback on_epoch;
};

struct TrainOutput {
  TrainResult result;
  nlohmann::json report;
  std::filesystem::path checkpoint;
};

inline std::filesystem::path checkpoint_in(const std::filesystem::path& dir) { return dir / "model.ckpt"; }

/// Adds meter-unit versions of scaled metrics: MSE scales by range^2, MAE by range.
inline nlohmann::json metrics_json(const Metrics& m, const std::optional<data::MinMaxScaler>& scaler) {
  nlohmann::json j{{"mse", m.mse()}, {"mae", m.mae()}};
  if (scaler) {
    const double r = scaler->range();
    j["mse_m2"] = m.mse() * r * r;
    j["mae_m"] = m.mae() * r;
  }
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw PathError("cannot write " + p.string());
  os << s;
}

/// Fits input/output sizes of a model configuration to a dataset.
inline void fit_model_to_dataset(models::ModelConfig& c, const data::Dataset& ds) {
  if (models::is_transient(c.architecture)) {
    c.series_dim = ds.surface_points;
  } else {
    c.input_h = static_cast<std::size_t>(ds.domain.raster_h);
    c.input_w = static_cast<std::size_t>(ds.domain.raster_w);
    c.output_h = ds.label_h;
    c.output_w = ds.label_w;
  }
}

/// Loads the dataset, trains, and writes model.ckpt (+ model.json),
/// history.csv and report.json into job.out.
inline TrainOutput run_training(TrainJob job) {
  job.train.validate();
  if (!std::filesystem::is_directory(job.data)) throw PathError("dataset directory not found: " + job.data.string());
  if (!std::filesystem::exists(job.data / "manifest.json"))
    throw PathError("no manifest.json in dataset directory " + job.data.string());
  const bool transient = models::is_transient(job.model.architecture);
  if (transient && job.pretrained.empty())
    throw DependencyError(models::to_string(job.model.architecture) +
                          " training needs a pretrained resnet_unet checkpoint (--pretrained)");
  std::filesystem::create_directories(job.out);

  const auto ds = data::load_dataset(job.data);
  fit_model_to_dataset(job.model, ds);
  TrainOutput out;
  out.checkpoint = checkpoint_in(job.out);
  std::optional<data::MinMaxScaler> scaler;
  if (transient) {
    auto encoder = models::load_encoder<float>(job.pretrained);
    job.model.encoder = std::make_shared<models::ModelConfig>(encoder->config);
    auto model = models::make_transient_model<float>(job.model, encoder);
    out.result = train_transient(*model, ds, job.train, job.on_epoch);
    models::save_model<float>(out.checkpoint, *model, job.model);
    scaler = ds.transient_scaler;
  } else {
    auto model = models::make_static_model<float>(job.model);
    out.result = train_static(*model, ds, job.train, job.on_epoch);
    models::save_model<float>(out.checkpoint, *model, job.model);
    scaler = ds.static_scaler;
  }
  out.result.history.write_csv(job.out / "history.csv");

  out.report = run_report(job.train, out.result);
  out.report["model"] = models::to_json(job.model);
  out.report["dataset"] = job.data.string();
  out.report["pretrained"] = job.pretrained.string();
  out.report["final_train"] = metrics_json(out.result.final_train, scaler);
  out.report["final_val"] = metrics_json(out.result.final_val, scaler);
  // Wall time is kept out of the report so reruns produce identical files.
  write_text(job.out / "report.json", out.report.dump(2) + "\n");
  return out;
}

/// Eval-mode metrics of a saved model on one split.
inline nlohmann::json evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                                          data::Split split, std::size_t stride = 1, std::size_t batch = 64) {
  auto m = models::load_model<float>(checkpoint);
  const auto ds = data::load_dataset(data_dir);
  const auto idx = ds.indices(split);
  if (idx.empty()) throw DatasetError("the " + data::to_string(split) + " split is empty");
  Metrics r;
  std::optional<data::MinMaxScaler> scaler;
  if (m.is_transient()) {
    const FeatureCache features(*m.transient_model->encoder, ds);
    r = evaluate_transient(*m.transient_model, ds, features, idx, stride, batch);
    scaler = ds.transient_scaler;
  } else {
    r = evaluate_static(*m.static_model, ds, idx, batch);
    scaler = ds.static_scaler;
  }
  auto j = metrics_json(r, scaler);
  j["split"] = data::to_string(split);
  j["samples"] = idx.size();
  j["architecture"] = models::to_string(m.config.architecture);
  return j;
}

}  // namespace ccsnet::train
