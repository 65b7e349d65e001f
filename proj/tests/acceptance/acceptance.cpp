// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [--workdir DIR] [--only 1,4,...]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>

#include "CLI11.hpp"
#include "ccsnet/data/generate.hpp"
#include "ccsnet/fem/verification.hpp"
#include "ccsnet/train/pipeline.hpp"
#include "ccsnet/verify/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using namespace ccsnet;
using nlohmann::json;
using models::Architecture;
using models::ModelConfig;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------- presets
//
// Desk-scale settings shared by criteria 4-6. The UNet widths are half the
// library default so the 30-epoch run fits the time budget on one core.

const std::vector<std::size_t> kUnetWidths{8, 16, 32, 64, 64};
constexpr double kStaticLr = 1e-3;
constexpr std::size_t kStaticBatch = 32;
constexpr double kSequenceLr = 1e-3;
constexpr std::size_t kSequenceBatch = 8;
// With dropout on, the transformer stays near the last-frame predictor.
constexpr double kTransformerLr = 1e-4;
constexpr double kTransformerDropout = 0.0;
constexpr const char* kSchedule = "cosine";

ModelConfig static_model(Architecture a, std::uint64_t seed) {
  ModelConfig c;
  c.architecture = a;
  c.seed = seed;
  if (a == Architecture::ResNetUNet) c.widths = kUnetWidths;
  return c;
}

ModelConfig sequence_model(Architecture a, const ModelConfig& encoder, std::uint64_t seed) {
  ModelConfig c;
  c.architecture = a;
  c.seed = seed;
  c.encoder = std::make_shared<ModelConfig>(encoder);
  return c;
}

train::TrainConfig train_config(std::size_t epochs, double lr, std::size_t batch, std::uint64_t seed) {
  train::TrainConfig t;
  t.epochs = epochs;
  t.lr = lr;
  t.batch = batch;
  t.seed = seed;
  t.schedule = kSchedule;
  return t;
}

void log_epoch(const std::string& tag, const train::EpochRow& r) {
  std::printf("    %s epoch %zu train %.3e val %.3e\n", tag.c_str(), r.epoch, r.train_mse, r.val_mse);
  std::fflush(stdout);
}

/// Copy of `ds` holding only the listed samples with the given splits, with
/// scalers refitted on the new training split.
data::Dataset subset(const data::Dataset& ds, const std::vector<std::pair<std::size_t, data::Split>>& keep,
                     std::size_t max_rows = 0) {
  data::Dataset out = ds;
  out.samples.clear();
  for (const auto& [i, split] : keep) {
    auto s = ds.samples[i];
    s.split = split;
    if (max_rows && !s.series.empty()) s.series.resize(max_rows * ds.surface_points);
    out.samples.push_back(std::move(s));
  }
  if (max_rows) out.steps = max_rows;
  out.fit_scalers();
  return out;
}

// ---------------------------------------------------------------- criteria

Outcome fem_static() {
  const auto t0 = Clock::now();
  const auto u = fem::verify::verify_uniaxial(16, 16);
  const auto mms = fem::verify::verify_manufactured({8, 16, 32, 64});
  const double secs = seconds_since(t0);
  double worst = 1e9;
  for (double o : mms.orders) worst = std::min(worst, o);
  Outcome r;
  r.pass = u.relative_error < 1e-6 && worst >= 1.9 && secs < 10.0;
  r.detail = "uniaxial rel err " + fmt("%.2e", u.relative_error) + " (< 1e-6), min L2 order " + fmt("%.3f", worst) +
             " over 8/16/32/64 (>= 1.9), " + fmt("%.1f", secs) + " s (< 10 s)";
  return r;
}

Outcome fem_transient() {
  const auto t0 = Clock::now();
  const auto tz = fem::verify::verify_terzaghi();
  const double secs = seconds_since(t0);
  double worst = 0;
  for (double e : tz.relative_l2) worst = std::max(worst, e);
  Outcome r;
  r.pass = tz.relative_l2.size() == 3 && worst < 0.02 && tz.settlement_monotone && tz.drained_gap < 0.005 &&
           secs < 60.0;
  r.detail = "Terzaghi max rel L2 " + fmt("%.2e", worst) + " at 3 times (< 0.02), settlement monotone " +
             (tz.settlement_monotone ? "yes" : "no") + ", drained gap " + fmt("%.2e", tz.drained_gap) +
             " (< 0.005), " + fmt("%.1f", secs) + " s (< 60 s)";
  return r;
}

Outcome autodiff() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_name;
  std::size_t cases = 0;
  for (const auto& list : {verify::op_gradchecks(), verify::model_gradchecks()})
    for (const auto& k : list) {
      ++cases;
      if (k.result.max_relative_error >= worst) {
        worst = k.result.max_relative_error;
        worst_name = k.name;
      }
    }
  const double secs = seconds_since(t0);
  Outcome r;
  r.pass = worst < 1e-4 && secs < 300.0;
  r.detail = std::to_string(cases) + " op/model gradchecks, max rel err " + fmt("%.2e", worst) + " (" + worst_name +
             ", < 1e-4), " + fmt("%.1f", secs) + " s (< 300 s)";
  return r;
}

Outcome static_ranking(const fs::path& work) {
  const auto t0 = Clock::now();
  data::GenerateConfig g;
  g.samples = 500;
  g.seed = 11;
  g.mesh_nx = 48;
  g.mesh_ny = 24;
  const auto ds = data::generate_dataset(g);
  std::printf("    generated %zu samples in %.1f s\n", ds.samples.size(), seconds_since(t0));
  data::save_dataset(ds, work / "c4_data");

  json report;
  double mse[3] = {0, 0, 0};
  const Architecture archs[3] = {Architecture::Cnn, Architecture::ResNet, Architecture::ResNetUNet};
  for (int k = 0; k < 3; ++k) {
    auto m = models::make_static_model<float>(static_model(archs[k], 5));
    const auto tag = models::to_string(archs[k]);
    const auto res = train::train_static(*m, ds, train_config(30, kStaticLr, kStaticBatch, 5),
                                         [&](const train::EpochRow& r) { log_epoch(tag, r); });
    mse[k] = res.final_val.mse();
    report[tag] = train::run_report(train_config(30, kStaticLr, kStaticBatch, 5), res);
    std::printf("    %s val MSE %.3e (%.0f s)\n", tag.c_str(), mse[k], res.seconds);
  }
  train::write_text(work / "c4_report.json", report.dump(2) + "\n");
  const double secs = seconds_since(t0);
  Outcome r;
  r.pass = mse[2] <= 0.1 * mse[0] && mse[2] <= 0.1 * mse[1] && secs < 1800.0;
  r.detail = "val MSE (scaled) resnet_unet " + fmt("%.3e", mse[2]) + ", cnn " + fmt("%.3e", mse[0]) + ", resnet " +
             fmt("%.3e", mse[1]) + "; ratios " + fmt("%.3f", mse[2] / mse[0]) + ", " + fmt("%.3f", mse[2] / mse[1]) +
             " (<= 0.1), " + fmt("%.0f", secs) + " s (< 1800 s)";
  return r;
}

Outcome transient_ranking(const fs::path& work) {
  const auto t0 = Clock::now();
  data::GenerateConfig g;
  g.samples = 50;
  g.seed = 12;
  g.static_labels = true;
  g.transient_labels = true;
  g.steps = 200;
  const auto ds = data::generate_dataset(g);
  std::printf("    generated %zu samples in %.1f s\n", ds.samples.size(), seconds_since(t0));

  auto encoder = models::make_static_model<float>(static_model(Architecture::ResNetUNet, 6));
  train::train_static(*encoder, ds, train_config(30, kStaticLr, kStaticBatch, 6));
  auto enc = std::shared_ptr<models::ResNetUNet<float>>(
      dynamic_cast<models::ResNetUNet<float>*>(encoder.release()));

  json report;
  double mse[2] = {0, 0};
  double last_frame = 0;
  const Architecture archs[2] = {Architecture::Lstm, Architecture::Transformer};
  for (int k = 0; k < 2; ++k) {
    const bool transformer = archs[k] == Architecture::Transformer;
    auto tc = train_config(30, transformer ? kTransformerLr : kSequenceLr, kSequenceBatch, 7);
    tc.stride = 4;
    auto mc = sequence_model(archs[k], enc->config, 7);
    if (transformer) mc.dropout = kTransformerDropout;
    auto m = models::make_transient_model<float>(mc, enc);
    const auto tag = models::to_string(archs[k]);
    const auto res = train::train_transient(*m, ds, tc, [&](const train::EpochRow& r) { log_epoch(tag, r); });
    mse[k] = res.final_val.mse();
    last_frame = res.baselines["last_frame"]["mse"];
    report[tag] = train::run_report(tc, res);
    std::printf("    %s val MSE %.3e (%.0f s)\n", tag.c_str(), mse[k], res.seconds);
  }
  train::write_text(work / "c5_report.json", report.dump(2) + "\n");
  const double secs = seconds_since(t0);
  Outcome r;
  r.pass = mse[1] <= mse[0] && 5.0 * mse[0] <= last_frame && 5.0 * mse[1] <= last_frame && secs < 1800.0;
  r.detail = "next-step val MSE (scaled) transformer " + fmt("%.3e", mse[1]) + ", lstm " + fmt("%.3e", mse[0]) +
             ", last-frame " + fmt("%.3e", last_frame) + " (transformer <= lstm, both <= last-frame / 5), " +
             fmt("%.0f", secs) + " s (< 1800 s)";
  return r;
}

Outcome overfit() {
  data::GenerateConfig g;
  g.samples = 20;
  g.seed = 13;
  g.static_labels = true;
  g.transient_labels = true;
  g.steps = 21;
  const auto pool = data::generate_dataset(g);

  // 8 static training samples, one held out so the trainer has a val split.
  std::vector<std::pair<std::size_t, data::Split>> keep;
  for (std::size_t i = 0; i < 8; ++i) keep.push_back({i, data::Split::Train});
  keep.push_back({8, data::Split::Val});
  const auto ds8 = subset(pool, keep);
  auto unet = models::make_static_model<float>(static_model(Architecture::ResNetUNet, 8));
  // Memorization is judged on the final weights, not the best-val epoch.
  auto tc = train_config(500, kStaticLr, 8, 8);
  tc.restore_best = false;
  const auto rs = train::train_static(*unet, ds8, tc);
  const double static_mse = train::evaluate_static(*unet, ds8, data::Split::Train).mse();
  std::printf("    resnet_unet 8 samples: train MSE %.3e (%.0f s)\n", static_mse, rs.seconds);

  // 4 geometries x 16 windows (21 rows, window 5, stride 1) = 64 windows.
  keep.clear();
  for (std::size_t i = 0; i < 4; ++i) keep.push_back({i, data::Split::Train});
  keep.push_back({8, data::Split::Val});
  const auto ds64 = subset(pool, keep, 21);
  auto enc = std::shared_ptr<models::ResNetUNet<float>>(
      dynamic_cast<models::ResNetUNet<float>*>(unet.release()));
  double seq_mse[2] = {0, 0};
  const Architecture archs[2] = {Architecture::Lstm, Architecture::Transformer};
  for (int k = 0; k < 2; ++k) {
    auto cfg = sequence_model(archs[k], enc->config, 9);
    cfg.dropout = 0.0;
    auto m = models::make_transient_model<float>(cfg, enc);
    auto ts = train_config(500, archs[k] == Architecture::Transformer ? kTransformerLr : kSequenceLr, 16, 9);
    ts.restore_best = false;
    const auto rt = train::train_transient(*m, ds64, ts);
    seq_mse[k] = rt.final_train.mse();
    std::printf("    %s 64 windows: train MSE %.3e (%.0f s)\n", models::to_string(archs[k]).c_str(), seq_mse[k],
                rt.seconds);
  }
  Outcome r;
  r.pass = static_mse < 1e-7 && seq_mse[0] < 1e-6 && seq_mse[1] < 1e-6;
  r.detail = "train MSE (scaled) resnet_unet/8 samples " + fmt("%.2e", static_mse) + " (< 1e-7), lstm/64 windows " +
             fmt("%.2e", seq_mse[0]) + ", transformer/64 windows " + fmt("%.2e", seq_mse[1]) + " (< 1e-6)";
  return r;
}

Outcome dataset_contracts(const fs::path& work) {
  std::vector<std::string> failures;
  // Min-max round trip.
  Rng rng(14);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(200);
    const double scale = std::pow(10.0, rng.uniform(-6, 3));
    for (auto& v : x) v = scale * rng.normal();
    const auto [y, s] = data::minmax_fit_transform<double>(x);
    const auto back = s.inverse<double>(y);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]) / scale);
  }
  if (!(worst < 1e-7)) failures.push_back("round trip " + fmt("%.2e", worst));

  // Window counts against enumeration.
  std::size_t combos = 0;
  for (std::size_t rows = 6; rows <= 1000; rows += 17)
    for (std::size_t stride : {1, 2, 3, 4, 7, 10}) {
      std::size_t n = 0;
      for (std::size_t s = 0; s + 5 < rows; s += stride) ++n;
      if (data::window_count(rows, 5, stride) != n) failures.push_back("window count T=" + std::to_string(rows));
      ++combos;
    }

  // Generated dataset: save / load / save is byte-identical.
  data::GenerateConfig g;
  g.samples = 40;
  g.seed = 15;
  g.mesh_nx = 24;
  g.mesh_ny = 12;
  g.static_labels = true;
  g.transient_labels = true;
  g.steps = 20;
  const auto ds = data::generate_dataset(g);
  data::save_dataset(ds, work / "c7_a");
  data::save_dataset(data::load_dataset(work / "c7_a"), work / "c7_b");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(work / "c7_a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), work / "c7_a");
    if (io::read_bytes(e.path()) != io::read_bytes(work / "c7_b" / rel)) failures.push_back("bytes differ: " + rel.string());
  }

  // 95/5 partition of the pool plus fresh test geometries.
  const auto train = ds.indices(data::Split::Train), val = ds.indices(data::Split::Val),
             test = ds.indices(data::Split::Test);
  std::set<std::size_t> pool(train.begin(), train.end());
  pool.insert(val.begin(), val.end());
  if (pool.size() != 40 || train.size() + val.size() != 40 || val.size() != 2)
    failures.push_back("split is not a 38/2 partition");
  std::set<double> pool_dips;
  for (auto i : pool) pool_dips.insert(ds.samples[i].dip_deg);
  for (auto i : test)
    if (i < 40 || pool_dips.count(ds.samples[i].dip_deg)) failures.push_back("test geometry reused from the pool");
  if (test.empty()) failures.push_back("no test geometries");

  Outcome r;
  r.pass = failures.empty();
  r.detail = "min-max round trip " + fmt("%.1e", worst) + " (< 1e-7), " + std::to_string(combos) +
             " (T, stride) window counts, " + std::to_string(files) + " files byte-identical after reload, " +
             std::to_string(train.size()) + "/" + std::to_string(val.size()) + " split + " +
             std::to_string(test.size()) + " fresh test";
  for (const auto& f : failures) r.detail += "; FAILED " + f;
  return r;
}

Outcome determinism(const fs::path& work) {
  auto pipeline = [&](const fs::path& dir) {
    data::GenerateConfig g;
    g.samples = 20;
    g.seed = 16;
    g.mesh_nx = 24;
    g.mesh_ny = 12;
    g.static_labels = true;
    g.transient_labels = true;
    g.steps = 16;
    data::save_dataset(data::generate_dataset(g), dir / "data");
    train::TrainJob job;
    job.data = dir / "data";
    job.out = dir / "unet";
    job.model.architecture = Architecture::ResNetUNet;
    job.model.widths = {4, 8, 8, 16};
    job.model.seed = 17;
    job.train = train_config(5, 1e-3, 8, 17);
    train::run_training(job);
    job.out = dir / "transformer";
    job.pretrained = dir / "unet" / "model.ckpt";
    job.model = ModelConfig{};
    job.model.architecture = Architecture::Transformer;
    job.model.seed = 17;
    job.model.ff_width = 64;
    train::run_training(job);
    json ev;
    ev["unet"] = train::evaluate_checkpoint(dir / "unet" / "model.ckpt", dir / "data", data::Split::Val);
    ev["transformer"] = train::evaluate_checkpoint(dir / "transformer" / "model.ckpt", dir / "data", data::Split::Val);
    train::write_text(dir / "evaluate.json", ev.dump(2) + "\n");
  };
  // Both runs use the same directory so recorded paths agree; the first
  // run's tree is moved aside before the second starts.
  const auto run_dir = work / "c8_run";
  for (const char* d : {"c8_a", "c8_b", "c8_run"}) fs::remove_all(work / d);
  pipeline(run_dir);
  fs::rename(run_dir, work / "c8_a");
  pipeline(run_dir);
  fs::rename(run_dir, work / "c8_b");
  std::vector<std::string> compared, differ;
  for (const auto& rel : {"unet/model.ckpt", "unet/model.json", "unet/history.csv", "unet/report.json",
                          "transformer/model.ckpt", "transformer/history.csv", "transformer/report.json",
                          "evaluate.json", "data/labels_static.bin", "data/labels_transient.bin"}) {
    compared.push_back(rel);
    if (io::read_bytes(work / "c8_a" / rel) != io::read_bytes(work / "c8_b" / rel)) differ.push_back(rel);
  }
  Outcome r;
  r.pass = differ.empty();
  r.detail = std::to_string(compared.size() - differ.size()) + "/" + std::to_string(compared.size()) +
             " artifacts byte-identical across two seeded runs (checkpoints, histories, reports, evaluation)";
  for (const auto& d : differ) r.detail += "; differs: " + d;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-8"};
  std::string workdir = (fs::temp_directory_path() / "ccsnet_acceptance").string();
  std::string only;
  app.add_option("--workdir", workdir, "Scratch directory for datasets and runs");
  app.add_option("--only", only, "Comma-separated criterion numbers");
  CLI11_PARSE(app, argc, argv);
  std::set<int> selected;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) selected.insert(std::stoi(item));
  const fs::path work(workdir);
  fs::create_directories(work);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "FEM static oracle", fem_static},
      {2, "FEM transient oracle", fem_transient},
      {3, "Autodiff gradcheck", autodiff},
      {4, "Static model ranking", [&] { return static_ranking(work); }},
      {5, "Transient model ranking", [&] { return transient_ranking(work); }},
      {6, "Overfit sanity", overfit},
      {7, "Dataset contracts", [&] { return dataset_contracts(work); }},
      {8, "Determinism", [&] { return determinism(work); }},
  };
  json summary = json::array();
  bool all = true;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::printf("criterion %d: %s\n", c.id, c.name);
    std::fflush(stdout);
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("raised: ") + e.what()};
    }
    all &= o.pass;
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    summary.push_back({{"criterion", c.id}, {"name", c.name}, {"pass", o.pass}, {"detail", o.detail}});
  }
  train::write_text(work / "acceptance.json", summary.dump(2) + "\n");
  return all ? 0 : 1;
}
