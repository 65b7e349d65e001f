// ccsnet: data generation, training, evaluation and figures.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ccsnet/data/generate.hpp"
#include "ccsnet/fem/verification.hpp"
#include "ccsnet/io/figures.hpp"
#include "ccsnet/train/pipeline.hpp"
#include "ccsnet/verify/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using namespace ccsnet;
using nlohmann::json;

namespace {

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw PathError("cannot open config file " + path);
  try {
    json j;
    is >> j;
    if (!j.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config file " + path + ": " + e.what());
  }
}

/// Takes `key` from the config file unless the flag was given.
template <class V>
void from_config(const json& cfg, const char* key, V& var, const CLI::Option* opt) {
  if (opt && opt->count() > 0) return;
  if (!cfg.contains(key)) return;
  try {
    var = cfg.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::pair<int, int> parse_mesh(const std::string& s) {
  int nx = 0, ny = 0;
  char x = 0;
  std::istringstream is(s);
  if (!(is >> nx >> x >> ny) || (x != 'x' && x != 'X') || nx < 2 || ny < 2)
    throw ArgumentError("mesh must look like 48x24, got '" + s + "'");
  return {nx, ny};
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ArgumentError("expected a comma-separated list of integers, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::size_t find_sample(const data::Dataset& ds, const std::string& id) {
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].id == id) return i;
  throw ArgumentError("no sample '" + id + "' in dataset");
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw PathError(std::string("missing ") + what + ": " + p.string());
}

// ------------------------------------------------------------------ generate

struct GenerateArgs {
  std::string config, out, mesh = "48x24";
  std::size_t samples = 500, steps = 1000;
  std::uint64_t seed = 0;
  bool static_labels = false, transient_labels = false, gravity = false;
  double load = 1e6, horizon = 20.0, val_fraction = 0.05, test_fraction = 0.05, permeability_scale = 1.0;
};

void add_generate(CLI::App& app, GenerateArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("generate", "Generate geometries and finite-element labels");
  c->add_option("--config", a.config, "JSON config file");
  auto* out = c->add_option("-o,--out", a.out, "Output dataset directory");
  auto* n = c->add_option("-n,--samples", a.samples, "Train+val pool size (test geometries are added)");
  auto* seed = c->add_option("--seed", a.seed, "Seed");
  auto* mesh = c->add_option("--mesh", a.mesh, "Elements, e.g. 48x24");
  auto* st = c->add_flag("--static", a.static_labels, "Static displacement labels");
  auto* tr = c->add_flag("--transient", a.transient_labels, "Transient surface series");
  auto* steps = c->add_option("--steps", a.steps, "Time steps over the horizon");
  auto* hz = c->add_option("--horizon-years", a.horizon, "Simulated time span");
  auto* load = c->add_option("--load", a.load, "Injection traction on the bottom patch, Pa");
  auto* vf = c->add_option("--val-fraction", a.val_fraction, "Validation share of the pool");
  auto* tf = c->add_option("--test-fraction", a.test_fraction, "Fresh test geometries per pool sample");
  auto* ps = c->add_option("--permeability-scale", a.permeability_scale, "Multiplier on both permeabilities");
  auto* gr = c->add_flag("--gravity", a.gravity, "Include self-weight");
  run = [&a, out, n, seed, mesh, st, tr, steps, hz, load, vf, tf, ps, gr] {
    const json cfg = read_config(a.config);
    from_config(cfg, "out", a.out, out);
    from_config(cfg, "samples", a.samples, n);
    from_config(cfg, "seed", a.seed, seed);
    from_config(cfg, "mesh", a.mesh, mesh);
    from_config(cfg, "static", a.static_labels, st);
    from_config(cfg, "transient", a.transient_labels, tr);
    from_config(cfg, "steps", a.steps, steps);
    from_config(cfg, "horizon_years", a.horizon, hz);
    from_config(cfg, "load", a.load, load);
    from_config(cfg, "val_fraction", a.val_fraction, vf);
    from_config(cfg, "test_fraction", a.test_fraction, tf);
    from_config(cfg, "permeability_scale", a.permeability_scale, ps);
    from_config(cfg, "gravity", a.gravity, gr);
    if (a.out.empty()) throw ArgumentError("generate needs --out");
    if (!a.static_labels && !a.transient_labels) a.static_labels = true;

    data::GenerateConfig g;
    g.samples = a.samples;
    g.seed = a.seed;
    std::tie(g.mesh_nx, g.mesh_ny) = parse_mesh(a.mesh);
    g.static_labels = a.static_labels;
    g.transient_labels = a.transient_labels;
    g.steps = a.steps;
    g.horizon_years = a.horizon;
    g.load = a.load;
    g.val_fraction = a.val_fraction;
    g.test_fraction = a.test_fraction;
    g.gravity = a.gravity;
    if (!(a.permeability_scale > 0.0)) throw ConfigError("permeability scale must be positive");
    g.registry = g.registry.with_permeability_scale(a.permeability_scale);
    g.validate();
    if (a.samples < 20) throw DatasetError("a pool of at least 20 samples is needed for the train/val split");
    fs::create_directories(a.out);

    const auto ds = data::generate_dataset(g, [](std::size_t done, std::size_t total, const data::Sample& s, double res) {
      std::printf("[%zu/%zu] %s dip %.3f deg split %s residual %.2e\n", done, total, s.id.c_str(), s.dip_deg,
                  data::to_string(s.split).c_str(), res);
      std::fflush(stdout);
    });
    data::save_dataset(ds, a.out);
    std::printf("wrote %zu samples (%zu train, %zu val, %zu test) to %s\n", ds.samples.size(),
                ds.indices(data::Split::Train).size(), ds.indices(data::Split::Val).size(),
                ds.indices(data::Split::Test).size(), a.out.c_str());
  };
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string config, data, out, model = "resnet_unet", pretrained, widths;
  train::TrainConfig tc;
  double dropout = 0.3;
  std::size_t ff_width = 2048;
};

void add_train(CLI::App& app, TrainArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("train", "Train a model on a generated dataset");
  c->add_option("--config", a.config, "JSON config file");
  auto* d = c->add_option("-d,--data", a.data, "Dataset directory");
  auto* out = c->add_option("-o,--out", a.out, "Run directory");
  auto* m = c->add_option("-m,--model", a.model, "cnn | resnet | resnet_unet | lstm | transformer");
  auto* pre = c->add_option("--pretrained", a.pretrained, "resnet_unet checkpoint for the sequence models");
  auto* w = c->add_option("--widths", a.widths, "Comma-separated channel widths");
  auto* ep = c->add_option("--epochs", a.tc.epochs, "Epochs");
  auto* bs = c->add_option("--batch", a.tc.batch, "Minibatch size");
  auto* lr = c->add_option("--lr", a.tc.lr, "Learning rate (0 = evaluate only)");
  auto* sched = c->add_option("--lr-schedule", a.tc.schedule, "constant | cosine (per-epoch decay)");
  auto* wd = c->add_option("--weight-decay", a.tc.weight_decay, "L2 weight decay");
  auto* b1 = c->add_option("--beta1", a.tc.beta1, "Adam beta1");
  auto* b2 = c->add_option("--beta2", a.tc.beta2, "Adam beta2");
  auto* seed = c->add_option("--seed", a.tc.seed, "Seed for initialization, shuffling and dropout");
  auto* stride = c->add_option("--stride", a.tc.stride, "Window stride for the sequence models");
  auto* drop = c->add_option("--dropout", a.dropout, "Transformer dropout");
  auto* ff = c->add_option("--ff-width", a.ff_width, "Transformer feed-forward width");
  run = [&a, d, out, m, pre, w, ep, bs, lr, sched, wd, b1, b2, seed, stride, drop, ff] {
    const json cfg = read_config(a.config);
    from_config(cfg, "data", a.data, d);
    from_config(cfg, "out", a.out, out);
    from_config(cfg, "model", a.model, m);
    from_config(cfg, "pretrained", a.pretrained, pre);
    from_config(cfg, "widths", a.widths, w);
    from_config(cfg, "epochs", a.tc.epochs, ep);
    from_config(cfg, "batch", a.tc.batch, bs);
    from_config(cfg, "lr", a.tc.lr, lr);
    from_config(cfg, "lr_schedule", a.tc.schedule, sched);
    from_config(cfg, "weight_decay", a.tc.weight_decay, wd);
    from_config(cfg, "beta1", a.tc.beta1, b1);
    from_config(cfg, "beta2", a.tc.beta2, b2);
    from_config(cfg, "seed", a.tc.seed, seed);
    from_config(cfg, "stride", a.tc.stride, stride);
    from_config(cfg, "dropout", a.dropout, drop);
    from_config(cfg, "ff_width", a.ff_width, ff);
    if (a.data.empty()) throw ArgumentError("train needs --data");
    if (a.out.empty()) throw ArgumentError("train needs --out");

    train::TrainJob job;
    job.data = a.data;
    job.out = a.out;
    job.pretrained = a.pretrained;
    job.train = a.tc;
    job.model.architecture = models::parse_architecture(a.model);
    job.model.seed = a.tc.seed;
    job.model.widths = parse_list(a.widths);
    job.model.dropout = a.dropout;
    job.model.ff_width = a.ff_width;
    if (job.model.architecture == models::Architecture::Transformer || job.model.architecture == models::Architecture::Lstm)
      if (!a.pretrained.empty()) require_file(a.pretrained, "pretrained checkpoint");
    job.on_epoch = [](const train::EpochRow& r) {
      std::printf("epoch %zu train_mse %.6e train_mae %.6e val_mse %.6e val_mae %.6e\n", r.epoch, r.train_mse,
                  r.train_mae, r.val_mse, r.val_mae);
      std::fflush(stdout);
    };
    const auto res = train::run_training(job);
    std::printf("best epoch %zu\nfinal val (MSE, MAE) = (%.6e, %.6e)\ncheckpoint %s\n", res.result.best_epoch,
                res.result.final_val.mse(), res.result.final_val.mae(), res.checkpoint.c_str());
  };
}

// ------------------------------------------------------------------ evaluate

struct EvaluateArgs {
  std::string checkpoint, data, split = "val";
  std::size_t stride = 1, batch = 64;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("evaluate", "MSE and mean absolute error of a checkpoint on a split");
  c->add_option("-c,--checkpoint", a.checkpoint, "Checkpoint file")->required();
  c->add_option("-d,--data", a.data, "Dataset directory")->required();
  c->add_option("--split", a.split, "train | val | test");
  c->add_option("--stride", a.stride, "Window stride for the sequence models");
  c->add_option("--batch", a.batch, "Evaluation batch size");
  run = [&a] {
    require_file(a.checkpoint, "checkpoint");
    if (!fs::is_directory(a.data)) throw PathError("dataset directory not found: " + a.data);
    const auto j = train::evaluate_checkpoint(a.checkpoint, a.data, data::parse_split(a.split), a.stride, a.batch);
    std::printf("%s\n(MSE, MAE) = (%.6e, %.6e)\n", j.dump().c_str(), j["mse"].get<double>(), j["mae"].get<double>());
  };
}

// ------------------------------------------------------------------ predict

struct PredictArgs {
  std::string checkpoint, data, sample, out, years = "5,10,15,20";
  int width = 720, height = 200;
};

io::Field field_of(int rows, int cols, const std::vector<float>& v) {
  io::Field f{rows, cols, {}};
  f.values.assign(v.begin(), v.end());
  return f;
}

void write_grid_csv(const fs::path& p, std::size_t rows, std::size_t cols, const std::vector<float>& v) {
  std::vector<std::string> header;
  for (std::size_t c = 0; c < cols; ++c) header.push_back("c" + std::to_string(c));
  std::vector<std::vector<std::string>> body(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) body[r].push_back(io::exact(v[r * cols + c]));
  io::write_csv(p, header, body);
}

void predict_static(models::StaticModel<float>& model, const data::Dataset& ds, std::size_t idx, const PredictArgs& a) {
  const auto& s = ds.samples[idx];
  const auto pred_scaled = train::predict_static(model, ds, {idx}, 1);
  const auto pred = ds.static_scaler->inverse<float>(pred_scaled);
  const int h = static_cast<int>(ds.label_h), w = static_cast<int>(ds.label_w);
  io::Field geo{ds.domain.raster_h, ds.domain.raster_w, {}};
  geo.values.assign(s.classes.begin(), s.classes.end());
  io::ColorScale scale;
  const auto fig = io::contour_figure(geo, field_of(h, w, s.static_label), field_of(h, w, pred), a.width, a.height, &scale);
  const fs::path out(a.out);
  io::write_png(out / ("contour_" + s.id + ".png"), fig);
  write_grid_csv(out / ("truth_" + s.id + ".csv"), ds.label_h, ds.label_w, s.static_label);
  write_grid_csv(out / ("prediction_" + s.id + ".csv"), ds.label_h, ds.label_w, pred);
  std::printf("color scale min %.6e m max %.6e m\nfigure %dx%d %s\n", scale.lo, scale.hi, a.width, a.height,
              (out / ("contour_" + s.id + ".png")).c_str());
}

void predict_transient(models::TransientModel<float>& model, const data::Dataset& ds, std::size_t idx,
                       const PredictArgs& a) {
  const auto& s = ds.samples[idx];
  const std::size_t dim = ds.surface_points, w = model.config.window;
  const std::size_t rows = s.series.size() / dim;
  const double year = data::kSecondsPerYear;
  std::vector<std::size_t> mark_rows;
  std::vector<double> marks;
  for (auto y : parse_list(a.years)) marks.push_back(static_cast<double>(y));
  for (double y : marks) {
    const auto k = static_cast<long>(std::lround(y * year / ds.dt_seconds));  // state index, 1-based
    if (k < 1 || static_cast<std::size_t>(k) > rows)
      throw ArgumentError("year mark " + std::to_string(y) + " lies outside the simulated horizon");
    mark_rows.push_back(static_cast<std::size_t>(k - 1));
  }
  const std::size_t last = *std::max_element(mark_rows.begin(), mark_rows.end());
  const auto scaled = ds.transient_scaler->transform<float>(s.series);
  std::vector<float> initial(scaled.begin(), scaled.begin() + static_cast<std::ptrdiff_t>(w * dim));
  const std::size_t n = last >= w ? last - w + 1 : 0;
  std::vector<std::size_t> one{idx};
  const auto features = model.features(train::detail::image_batch(ds, one));
  const auto curve = train::rollout_surface(model, features, initial, n, ds.transient_scaler);

  std::vector<std::vector<std::string>> body;
  std::vector<io::Curve> curves;
  for (std::size_t m = 0; m < marks.size(); ++m) {
    const std::size_t r = mark_rows[m];
    io::Curve truth{{}, io::viridis(marks.size() > 1 ? 0.85 * m / (marks.size() - 1) : 0.0), false};
    io::Curve pred{{}, truth.color, true};
    for (std::size_t j = 0; j < dim; ++j) {
      const float t = s.series[r * dim + j];
      const float p = r < w ? t : curve[(r - w) * dim + j];  // rows inside the seed window are given
      const double x = ds.domain.width * static_cast<double>(j) / static_cast<double>(dim - 1);
      body.push_back({io::exact(marks[m]), std::to_string(j), io::exact(x), io::exact(t), io::exact(p)});
      truth.y.push_back(t);
      pred.y.push_back(p);
    }
    curves.push_back(std::move(truth));
    curves.push_back(std::move(pred));
  }
  const fs::path out(a.out);
  io::write_csv(out / ("surface_" + s.id + ".csv"), {"year", "point", "x_m", "truth_m", "prediction_m"}, body);
  io::write_png(out / ("surface_" + s.id + ".png"), io::curve_figure(curves, a.width, a.height));
  std::printf("%zu rows (%zu marks x %zu points) %s\n", body.size(), marks.size(), dim,
              (out / ("surface_" + s.id + ".csv")).c_str());
}

void add_predict(CLI::App& app, PredictArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("predict", "Prediction figures and CSV for one sample");
  c->add_option("-c,--checkpoint", a.checkpoint, "Checkpoint file")->required();
  c->add_option("-d,--data", a.data, "Dataset directory")->required();
  c->add_option("-s,--sample", a.sample, "Sample id (default: first test sample)");
  c->add_option("-o,--out", a.out, "Output directory")->required();
  c->add_option("--years", a.years, "Comma-separated year marks for surface curves");
  c->add_option("--width", a.width, "Figure width in pixels");
  c->add_option("--height", a.height, "Figure height in pixels");
  run = [&a] {
    require_file(a.checkpoint, "checkpoint");
    if (!fs::is_directory(a.data)) throw PathError("dataset directory not found: " + a.data);
    auto m = models::load_model<float>(a.checkpoint);
    const auto ds = data::load_dataset(a.data);
    std::size_t idx;
    if (a.sample.empty()) {
      const auto test = ds.indices(data::Split::Test);
      if (test.empty()) throw DatasetError("dataset has no test samples");
      idx = test.front();
    } else {
      idx = find_sample(ds, a.sample);
    }
    if (m.is_transient()) {
      if (!ds.has_transient || !ds.transient_scaler) throw DatasetError("dataset has no transient series");
      predict_transient(*m.transient_model, ds, idx, a);
    } else {
      if (!ds.has_static || !ds.static_scaler) throw DatasetError("dataset has no static labels");
      predict_static(*m.static_model, ds, idx, a);
    }
  };
}

// ------------------------------------------------------------------ export

struct ExportArgs {
  std::string data, run, out, sample;
  int width = 720, height = 200;
};

void add_export(CLI::App& app, ExportArgs& a, std::function<void()>& run) {
  auto* c = app.add_subcommand("export", "Figures of dataset samples and training histories");
  c->add_option("-d,--data", a.data, "Dataset directory");
  c->add_option("-s,--sample", a.sample, "Sample id (default: all test samples)");
  c->add_option("-r,--run", a.run, "Run directory holding history.csv");
  c->add_option("-o,--out", a.out, "Output directory")->required();
  c->add_option("--width", a.width, "Figure width in pixels");
  c->add_option("--height", a.height, "Figure height in pixels");
  run = [&a] {
    if (a.data.empty() && a.run.empty()) throw ArgumentError("export needs --data and/or --run");
    const fs::path out(a.out);
    if (!a.data.empty()) {
      if (!fs::is_directory(a.data)) throw PathError("dataset directory not found: " + a.data);
      const auto ds = data::load_dataset(a.data);
      const auto idx = a.sample.empty() ? ds.indices(data::Split::Test) : std::vector<std::size_t>{find_sample(ds, a.sample)};
      for (auto i : idx) {
        const auto& s = ds.samples[i];
        io::write_png(out / ("geometry_" + s.id + ".png"), data::class_raster(ds, s));
        if (ds.has_static) {
          const int h = static_cast<int>(ds.label_h), w = static_cast<int>(ds.label_w);
          io::Field geo{ds.domain.raster_h, ds.domain.raster_w, {}};
          geo.values.assign(s.classes.begin(), s.classes.end());
          const auto truth = field_of(h, w, s.static_label);
          io::ColorScale scale;
          io::write_png(out / ("label_" + s.id + ".png"), io::contour_figure(geo, truth, truth, a.width, a.height, &scale));
          write_grid_csv(out / ("label_" + s.id + ".csv"), ds.label_h, ds.label_w, s.static_label);
          std::printf("%s color scale min %.6e m max %.6e m\n", s.id.c_str(), scale.lo, scale.hi);
        }
      }
      std::printf("exported %zu samples to %s\n", idx.size(), a.out.c_str());
    }
    if (!a.run.empty()) {
      const fs::path hist = fs::path(a.run) / "history.csv";
      require_file(hist, "history");
      std::ifstream is(hist);
      std::string line;
      std::getline(is, line);
      io::Curve tr{{}, io::viridis(0.1), false}, va{{}, io::viridis(0.7), true};
      std::vector<std::vector<std::string>> body;
      while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::vector<std::string> cells;
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5) throw FormatError("malformed history row: " + line);
        const double t = std::stod(cells[1]), v = std::stod(cells[3]);
        tr.y.push_back(std::log10(std::max(t, 1e-300)));
        va.y.push_back(std::log10(std::max(v, 1e-300)));
        body.push_back({cells[0], io::exact(tr.y.back()), io::exact(va.y.back())});
      }
      io::write_csv(out / "loss.csv", {"epoch", "log10_train_mse", "log10_val_mse"}, body);
      io::write_png(out / "loss.png", io::curve_figure({tr, va}, a.width, a.height));
      std::printf("loss curves for %zu epochs in %s\n", body.size(), (out / "loss.png").c_str());
    }
  };
}

// ------------------------------------------------------------------ verify-fem, gradcheck

void add_verify(CLI::App& app, std::function<void()>& run) {
  auto* c = app.add_subcommand("verify-fem", "Analytical and manufactured-solution checks of the solver");
  run = [] {
    bool ok = true;
    const auto u = fem::verify::verify_uniaxial(16, 16);
    std::printf("uniaxial column 16x16: rel err %.3e (< 1e-6)\n", u.relative_error);
    ok &= u.relative_error < 1e-6;
    const auto mms = fem::verify::verify_manufactured({8, 16, 32, 64});
    for (std::size_t k = 0; k < mms.orders.size(); ++k) {
      std::printf("manufactured %d->%d: L2 order %.3f (>= 1.9)\n", mms.resolutions[k], mms.resolutions[k + 1],
                  mms.orders[k]);
      ok &= mms.orders[k] >= 1.9;
    }
    const auto tz = fem::verify::verify_terzaghi();
    for (std::size_t k = 0; k < tz.time_factors.size(); ++k) {
      std::printf("terzaghi T_v=%.2f: rel L2 %.3e (< 0.02)\n", tz.time_factors[k], tz.relative_l2[k]);
      ok &= tz.relative_l2[k] < 0.02;
    }
    std::printf("settlement monotone: %s\ndrained limit gap %.3e (< 0.005)\n", tz.settlement_monotone ? "yes" : "no",
                tz.drained_gap);
    ok &= tz.settlement_monotone && tz.drained_gap < 0.005;
    if (!ok) throw ContractError("finite-element verification failed");
    std::printf("all checks passed\n");
  };
  (void)c;
}

void add_gradcheck(CLI::App& app, double& tol, std::function<void()>& run) {
  auto* c = app.add_subcommand("gradcheck", "Finite-difference gradient checks of every op and model (double)");
  c->add_option("--tolerance", tol, "Maximum relative error");
  run = [&tol] {
    double worst = 0.0;
    auto show = [&](const std::vector<verify::GradcheckCase>& cases) {
      for (const auto& k : cases) {
        std::printf("%-20s %.3e over %zu entries\n", k.name.c_str(), k.result.max_relative_error, k.result.checked);
        worst = std::max(worst, k.result.max_relative_error);
      }
    };
    show(verify::op_gradchecks());
    show(verify::model_gradchecks());
    std::printf("max relative error %.3e (tolerance %.1e)\n", worst, tol);
    if (!(worst < tol)) throw ContractError("gradient check exceeded tolerance");
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geomechanics surrogate pipeline: generate, train, evaluate, predict, export, verify"};
  app.require_subcommand(1);
  GenerateArgs gen;
  TrainArgs tr;
  EvaluateArgs ev;
  PredictArgs pr;
  ExportArgs ex;
  double tol = 1e-4;
  std::function<void()> run_gen, run_train, run_eval, run_pred, run_export, run_verify, run_grad;
  add_generate(app, gen, run_gen);
  add_train(app, tr, run_train);
  add_evaluate(app, ev, run_eval);
  add_predict(app, pr, run_pred);
  add_export(app, ex, run_export);
  add_verify(app, run_verify);
  add_gradcheck(app, tol, run_grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error[argument]: %s\n", e.what());
    return 2;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "generate") run_gen();
    else if (name == "train") run_train();
    else if (name == "evaluate") run_eval();
    else if (name == "predict") run_pred();
    else if (name == "export") run_export();
    else if (name == "verify-fem") run_verify();
    else if (name == "gradcheck") run_grad();
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", e.category().c_str(), e.what());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error[path]: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}
