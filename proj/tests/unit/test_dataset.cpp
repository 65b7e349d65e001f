#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "ccsnet/data/generate.hpp"
#include "ccsnet/data/windows.hpp"

using namespace ccsnet;
using namespace ccsnet::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ccsnet_test_dataset_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<float> ramp_series(std::size_t rows, std::size_t dim) {
  std::vector<float> s(rows * dim);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < dim; ++c) s[r * dim + c] = static_cast<float>(r) + 0.001f * static_cast<float>(c);
  return s;
}

Dataset synthetic(std::size_t n, bool with_static, bool with_transient, std::uint64_t seed = 1) {
  Dataset ds;
  ds.domain = {100.0, 50.0, 32, 16};
  ds.label_h = 5;
  ds.label_w = 10;
  ds.surface_points = 4;
  ds.steps = with_transient ? 12 : 0;
  ds.dt_seconds = with_transient ? 3600.0 : 0.0;
  ds.has_static = with_static;
  ds.has_transient = with_transient;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = sample_id(i);
    s.dip_deg = 45.0 * rng.uniform();
    s.split = i % 5 == 0 ? Split::Val : Split::Train;
    s.classes.resize(ds.raster_size());
    for (auto& c : s.classes) c = static_cast<std::uint8_t>(rng.below(2));
    if (with_static) {
      s.static_label.resize(ds.label_size());
      for (auto& v : s.static_label) v = static_cast<float>(1e-3 * rng.normal());
    }
    if (with_transient) {
      s.series.resize(ds.steps * ds.surface_points);
      for (auto& v : s.series) v = static_cast<float>(1e-3 * rng.normal());
    }
    ds.samples.push_back(std::move(s));
  }
  if (n > 0) ds.fit_scalers();
  return ds;
}

}  // namespace

TEST(Scaler, SimpleArray) {
  const std::vector<double> x{2, 4, 6};
  const auto [y, s] = minmax_fit_transform<double>(x);
  EXPECT_EQ(y, (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(s.x_min, 2.0);
  EXPECT_EQ(s.x_max, 6.0);
}

TEST(Scaler, UnitIntervalIsFixedPoint) {
  const std::vector<double> x{0.0, 0.25, 1.0, 0.5};
  EXPECT_EQ(minmax_fit_transform<double>(x).first, x);
}

TEST(Scaler, ConstantIsDegenerate) {
  const std::vector<float> x(7, 3.0f);
  EXPECT_THROW(minmax_fit_transform<float>(x), DegenerateDataError);
  EXPECT_THROW(minmax_fit_transform<float>(std::vector<float>{}), ArgumentError);
}

TEST(Scaler, RoundTripRandom) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(1 + rng.below(200));
    const double off = rng.normal() * 10, mag = std::exp(rng.uniform(-10, 3));
    for (auto& v : x) v = off + mag * rng.normal();
    if (x.size() == 1) x.push_back(x[0] + mag);
    const auto [y, s] = minmax_fit_transform<double>(x);
    const auto back = s.inverse<double>(y);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-7 * std::max(1.0, std::abs(x[i])));
    for (double v : y) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Scaler, NeverClipsHeldOutValues) {
  const std::vector<double> train{1.0, 3.0};
  const auto s = MinMaxScaler::fit<double>(train);
  EXPECT_DOUBLE_EQ(s.transform(5.0), 2.0);
  EXPECT_DOUBLE_EQ(s.transform(-1.0), -1.0);
}

TEST(Windows, SixRowsGiveOne) {
  const auto s = ramp_series(6, 3);
  const auto w = make_windows(s, 3);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].input, std::vector<float>(s.begin(), s.begin() + 15));
  EXPECT_EQ(w[0].target, std::vector<float>(s.begin() + 15, s.end()));
}

TEST(Windows, Counting) {
  EXPECT_EQ(window_count(1000), 995u);
  EXPECT_EQ(3000 * window_count(1000), 2985000u);
  EXPECT_EQ(window_count(200, 5, 4), 49u);
  EXPECT_EQ(window_count(6, 5, 7), 1u);
  EXPECT_THROW(window_count(5), SeriesTooShortError);
  EXPECT_THROW(window_count(10, 5, 0), ArgumentError);
}

TEST(Windows, CountFormulaMatchesEnumeration) {
  for (std::size_t rows = 6; rows < 60; ++rows)
    for (std::size_t stride = 1; stride < 9; ++stride) {
      std::size_t n = 0;
      for (std::size_t s = 0; s + 5 < rows; s += stride) ++n;
      EXPECT_EQ(window_count(rows, 5, stride), n);
      EXPECT_EQ(window_starts(rows, 5, stride).size(), n);
    }
}

TEST(Windows, TargetIsRowStartPlusFive) {
  Rng rng(4);
  const std::size_t dim = 40, rows = 37;
  std::vector<float> s(rows * dim);
  for (auto& v : s) v = static_cast<float>(rng.normal());
  for (std::size_t stride : {1u, 3u}) {
    for (const auto& w : make_windows(s, dim, 5, stride)) {
      ASSERT_EQ(w.target.size(), dim);
      for (std::size_t c = 0; c < dim; ++c) EXPECT_EQ(w.target[c], s[(w.start + 5) * dim + c]);
      for (std::size_t k = 0; k < 5 * dim; ++k) EXPECT_EQ(w.input[k], s[w.start * dim + k]);
    }
  }
}

TEST(Windows, ShortSeriesError) {
  EXPECT_THROW(make_windows(ramp_series(5, 2), 2), SeriesTooShortError);
  EXPECT_THROW(make_windows(std::vector<float>(7), 2), DimensionError);
}

TEST(ShiftedPairs, SixRows) {
  const auto s = ramp_series(6, 2);
  const auto p = make_shifted_pairs(s, 2);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].target, std::vector<float>(s.begin() + 2, s.end()));
}

TEST(ShiftedPairs, ShiftIdentityAndCount) {
  const std::size_t dim = 3;
  for (std::size_t rows : {6u, 11u, 40u})
    for (std::size_t stride : {1u, 2u, 5u}) {
      const auto s = ramp_series(rows, dim);
      const auto p = make_shifted_pairs(s, dim, 5, stride);
      EXPECT_EQ(p.size(), make_windows(s, dim, 5, stride).size());
      for (const auto& q : p)
        for (std::size_t k = 0; k < 4 * dim; ++k) EXPECT_EQ(q.target[k], q.input[k + dim]);
    }
}

TEST(Split, Sizes) {
  auto s = split_pool(20, 1);
  EXPECT_EQ(s.train.size(), 19u);
  EXPECT_EQ(s.val.size(), 1u);
  s = split_pool(10000, 1);
  EXPECT_EQ(s.train.size(), 9500u);
  EXPECT_EQ(s.val.size(), 500u);
  EXPECT_THROW(split_pool(19, 1), DatasetError);
}

TEST(Split, DeterministicPartition) {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 20 + rng.below(500);
    const std::uint64_t seed = rng.next_u64();
    const auto a = split_pool(n, seed);
    const auto b = split_pool(n, seed);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.val, b.val);
    std::set<std::size_t> all(a.train.begin(), a.train.end());
    for (auto v : a.val) EXPECT_TRUE(all.insert(v).second) << "index " << v << " in both splits";
    EXPECT_EQ(all.size(), n);
    EXPECT_EQ(*all.rbegin(), n - 1);
  }
}

TEST(Persist, RoundTripBitEqual) {
  const auto dir = scratch("roundtrip");
  const auto ds = synthetic(10, true, true);
  save_dataset(ds, dir);
  const auto back = load_dataset(dir);
  ASSERT_EQ(back.samples.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& a = ds.samples[i];
    const auto& b = back.samples[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.dip_deg, b.dip_deg);
    EXPECT_EQ(a.split, b.split);
    EXPECT_EQ(a.classes, b.classes);
    EXPECT_EQ(0, std::memcmp(a.static_label.data(), b.static_label.data(), a.static_label.size() * 4));
    EXPECT_EQ(0, std::memcmp(a.series.data(), b.series.data(), a.series.size() * 4));
  }
  ASSERT_TRUE(back.static_scaler && back.transient_scaler);
  EXPECT_EQ(back.static_scaler->x_min, ds.static_scaler->x_min);
  EXPECT_EQ(back.transient_scaler->x_max, ds.transient_scaler->x_max);
  EXPECT_EQ(back.steps, ds.steps);
  EXPECT_EQ(back.dt_seconds, ds.dt_seconds);

  // Saving the loaded copy reproduces the files byte for byte.
  const auto dir2 = scratch("roundtrip2");
  save_dataset(back, dir2);
  for (const char* f : {"manifest.json", "labels_static.bin", "labels_transient.bin", "scaler.json"})
    EXPECT_EQ(io::read_bytes(dir / f), io::read_bytes(dir2 / f)) << f;
}

TEST(Persist, EmptyDataset) {
  const auto dir = scratch("empty");
  Dataset ds;
  save_dataset(ds, dir);
  const auto back = load_dataset(dir);
  EXPECT_TRUE(back.samples.empty());
}

TEST(Persist, TruncatedLabelFile) {
  const auto dir = scratch("truncated");
  save_dataset(synthetic(10, true, false), dir);
  const auto p = dir / "labels_static.bin";
  fs::resize_file(p, fs::file_size(p) - 4);
  try {
    load_dataset(dir);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("labels_static.bin"), std::string::npos);
  }
}

TEST(Persist, ChecksumMismatch) {
  const auto dir = scratch("crc");
  save_dataset(synthetic(10, true, false), dir);
  const auto p = dir / "labels_static.bin";
  auto bytes = io::read_bytes(p);
  bytes[17] ^= 0x40;
  io::write_bytes(p, bytes.data(), bytes.size());
  EXPECT_THROW(load_dataset(dir), FormatError);
}

TEST(Persist, MissingManifestIsPathError) { EXPECT_THROW(load_dataset(scratch("missing")), PathError); }

TEST(Dataset, ScalersFitOnTrainOnly) {
  auto ds = synthetic(20, true, false);
  auto& val = ds.samples[ds.indices(Split::Val)[0]];
  val.static_label[0] = 1.0f;  // far outside every training value
  ds.fit_scalers();
  EXPECT_LT(ds.static_scaler->x_max, 1.0);
  for (auto i : ds.indices(Split::Train))
    for (float v : ds.samples[i].static_label) {
      const double s = ds.static_scaler->transform(v);
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
  EXPECT_GT(ds.static_scaler->transform(val.static_label[0]), 1.0);
}

TEST(Generate, SmallStaticAndTransient) {
  GenerateConfig cfg;
  cfg.samples = 20;
  cfg.seed = 3;
  cfg.mesh_nx = 12;
  cfg.mesh_ny = 6;
  cfg.transient_labels = true;
  cfg.steps = 8;
  cfg.horizon_years = 2;
  std::size_t calls = 0;
  const auto ds = generate_dataset(cfg, [&](std::size_t, std::size_t total, const Sample&, double residual) {
    ++calls;
    EXPECT_EQ(total, 21u);
    EXPECT_LT(residual, 1e-8);
  });
  EXPECT_EQ(calls, 21u);
  EXPECT_EQ(ds.indices(Split::Train).size(), 19u);
  EXPECT_EQ(ds.indices(Split::Val).size(), 1u);
  EXPECT_EQ(ds.indices(Split::Test).size(), 1u);
  std::set<std::string> ids;
  for (const auto& s : ds.samples) {
    EXPECT_TRUE(ids.insert(s.id).second);
    EXPECT_EQ(s.static_label.size(), 1250u);
    EXPECT_EQ(s.series.size(), 8u * 40u);
    EXPECT_GE(s.dip_deg, 0.0);
    EXPECT_LE(s.dip_deg, 45.0);
  }
  // Test geometries come after the pool and are not part of it.
  EXPECT_EQ(ds.samples.back().split, Split::Test);

  const auto again = generate_dataset(cfg);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(ds.samples[i].static_label, again.samples[i].static_label);
    EXPECT_EQ(ds.samples[i].series, again.samples[i].series);
  }
}
