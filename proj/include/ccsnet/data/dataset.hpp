#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ccsnet/data/scaler.hpp"
#include "ccsnet/geom/geomgen.hpp"
#include "ccsnet/io/binary.hpp"
#include "ccsnet/io/png.hpp"
#include "ccsnet/rng.hpp"
#include "json.hpp"

namespace ccsnet::data {

enum class Split : std::uint8_t { Train, Val, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ArgumentError("unknown split '" + s + "' (expected train, val or test)");
}

struct Sample {
  std::string id;
  double dip_deg = 0.0;
  Split split = Split::Train;
  /// Raster classes, row-major, row 0 at the ground surface.
  std::vector<std::uint8_t> classes;
  /// u_y on the label grid (rows from the surface down), meters.
  std::vector<float> static_label;
  /// Surface u_y, steps x surface_points, meters; row k is the state after step k + 1.
  std::vector<float> series;
};

struct Dataset {
  geom::DomainSpec domain;
  geom::LayerSpec layer;
  std::size_t label_h = 25;
  std::size_t label_w = 50;
  std::size_t surface_points = 40;
  std::size_t steps = 0;
  double dt_seconds = 0.0;
  bool has_static = false;
  bool has_transient = false;
  /// Record of how the data were produced.
  nlohmann::json generation = nlohmann::json::object();
  std::vector<Sample> samples;
  std::optional<MinMaxScaler> static_scaler;
  std::optional<MinMaxScaler> transient_scaler;

  std::size_t label_size() const { return label_h * label_w; }
  std::size_t raster_size() const { return static_cast<std::size_t>(domain.raster_w) * domain.raster_h; }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].split == s) out.push_back(i);
    return out;
  }

  /// Fits both scalers on the training split only.
  void fit_scalers() {
    const auto train = indices(Split::Train);
    if (train.empty()) throw DatasetError("cannot fit scalers: training split is empty");
    if (has_static) {
      std::vector<float> all;
      for (auto i : train) all.insert(all.end(), samples[i].static_label.begin(), samples[i].static_label.end());
      static_scaler = MinMaxScaler::fit<float>(all);
    }
    if (has_transient) {
      std::vector<float> all;
      for (auto i : train) all.insert(all.end(), samples[i].series.begin(), samples[i].series.end());
      transient_scaler = MinMaxScaler::fit<float>(all);
    }
  }
};

/// Channel-first image of one sample: shale (1, 0, 0), rock (0, 1, 0).
inline void write_image(const Dataset& ds, std::size_t index, float* out) {
  const auto& c = ds.samples.at(index).classes;
  const std::size_t plane = ds.raster_size();
  std::fill(out, out + 3 * plane, 0.0f);
  for (std::size_t k = 0; k < plane; ++k) out[(c[k] == 1 ? 0 : plane) + k] = 1.0f;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Seeded shuffle of 0..n-1; floor(n * val_fraction) go to validation, the
/// rest to training.
inline SplitIndices split_pool(std::size_t n, std::uint64_t seed, double val_fraction = 0.05) {
  if (n < 20) throw DatasetError("pool of " + std::to_string(n) + " samples is too small for a train/val split (need >= 20)");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ArgumentError("validation fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction + 1e-9));
  SplitIndices s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

inline std::string sample_id(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

// ------------------------------------------------------------------ persistence

namespace detail {

inline nlohmann::json label_sidecar(const std::string& file, std::size_t samples, std::vector<std::size_t> shape,
                                    const std::vector<unsigned char>& bytes, const std::string& layout) {
  return {{"file", file},
          {"dtype", "float32"},
          {"byte_order", "little"},
          {"order", "row-major"},
          {"units", "m"},
          {"quantity", "vertical displacement u_y (positive up)"},
          {"samples", samples},
          {"shape_per_sample", shape},
          {"layout", layout},
          {"bytes", bytes.size()},
          {"crc32", io::crc32_bytes(bytes.data(), bytes.size())}};
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  const std::string s = j.dump(2) + "\n";
  io::write_bytes(p, s.data(), s.size());
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  const auto bytes = io::read_bytes(p);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

inline std::vector<float> read_labels(const std::filesystem::path& dir, const nlohmann::json& side,
                                      std::size_t expected_values) {
  const std::string file = side.at("file").get<std::string>();
  const auto path = dir / file;
  const auto bytes = io::read_bytes(path);
  if (bytes.size() != expected_values * 4 || bytes.size() != side.at("bytes").get<std::size_t>())
    throw FormatError("corrupt length in " + path.string() + ": " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected_values * 4));
  if (io::crc32_bytes(bytes.data(), bytes.size()) != side.at("crc32").get<std::uint32_t>())
    throw FormatError("checksum mismatch in " + path.string());
  return io::decode_f32le(bytes, path.string());
}

}  // namespace detail

/// Rendering of the class raster used for geom/<id>.png.
inline io::Raster class_raster(const Dataset& ds, const Sample& s) {
  io::Raster r(ds.domain.raster_w, ds.domain.raster_h, 3);
  for (std::size_t k = 0; k < s.classes.size(); ++k) {
    auto* px = r.pixels.data() + 3 * k;
    px[0] = s.classes[k] == 1 ? 255 : 0;
    px[1] = s.classes[k] == 1 ? 0 : 255;
  }
  return r;
}

/// Layout under `dir`: manifest.json, geom/<id>.raw (uint8 classes),
/// geom/<id>.png, labels_static.bin/.json, labels_transient.bin/.json,
/// scaler.json.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "geom");
  nlohmann::json m;
  m["format"] = "ccsnet-dataset";
  m["version"] = 1;
  m["domain"] = {{"width_m", ds.domain.width},
                 {"depth_m", ds.domain.depth},
                 {"raster_w", ds.domain.raster_w},
                 {"raster_h", ds.domain.raster_h}};
  m["layer"] = {{"thickness_m", ds.layer.thickness}, {"depth_to_top_m", ds.layer.depth_to_top}};
  m["label_grid"] = {ds.label_h, ds.label_w};
  m["surface_points"] = ds.surface_points;
  m["steps"] = ds.steps;
  m["dt_seconds"] = ds.dt_seconds;
  m["generation"] = ds.generation;
  m["samples"] = nlohmann::json::array();
  m["files"] = nlohmann::json::object();

  std::vector<float> stat, trans;
  for (const auto& s : ds.samples) {
    if (s.classes.size() != ds.raster_size()) throw DimensionError("sample " + s.id + " raster has wrong size");
    m["samples"].push_back({{"id", s.id}, {"dip_deg", s.dip_deg}, {"split", to_string(s.split)}});
    io::write_bytes(dir / "geom" / (s.id + ".raw"), s.classes.data(), s.classes.size());
    io::write_png(dir / "geom" / (s.id + ".png"), class_raster(ds, s));
    if (ds.has_static) {
      if (s.static_label.size() != ds.label_size()) throw DimensionError("sample " + s.id + " has a wrong label size");
      stat.insert(stat.end(), s.static_label.begin(), s.static_label.end());
    }
    if (ds.has_transient) {
      if (s.series.size() != ds.steps * ds.surface_points)
        throw DimensionError("sample " + s.id + " has a wrong series length");
      trans.insert(trans.end(), s.series.begin(), s.series.end());
    }
  }
  if (ds.has_static) {
    const auto bytes = io::encode_f32le(stat);
    io::write_bytes(dir / "labels_static.bin", bytes.data(), bytes.size());
    const auto side = detail::label_sidecar("labels_static.bin", ds.samples.size(), {ds.label_h, ds.label_w}, bytes,
                                            "per sample label_h x label_w grid; row 0 at the ground surface, "
                                            "columns left to right, boundary to boundary");
    detail::write_json(dir / "labels_static.json", side);
    m["files"]["labels_static"] = side;
  }
  if (ds.has_transient) {
    const auto bytes = io::encode_f32le(trans);
    io::write_bytes(dir / "labels_transient.bin", bytes.data(), bytes.size());
    auto side = detail::label_sidecar("labels_transient.bin", ds.samples.size(), {ds.steps, ds.surface_points}, bytes,
                                      "per sample steps x surface_points; row k is the state after step k+1, "
                                      "points left to right along the ground surface");
    side["dt_seconds"] = ds.dt_seconds;
    detail::write_json(dir / "labels_transient.json", side);
    m["files"]["labels_transient"] = side;
  }
  if (ds.static_scaler || ds.transient_scaler) {
    nlohmann::json sc = nlohmann::json::object();
    sc["fitted_on"] = "train";
    if (ds.static_scaler) sc["static"] = to_json(*ds.static_scaler);
    if (ds.transient_scaler) sc["transient"] = to_json(*ds.transient_scaler);
    detail::write_json(dir / "scaler.json", sc);
  }
  detail::write_json(dir / "manifest.json", m);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath)) throw PathError("no dataset manifest at " + mpath.string());
  const auto m = detail::read_json(mpath);
  Dataset ds;
  try {
    if (m.at("format").get<std::string>() != "ccsnet-dataset") throw FormatError("unrecognized manifest format");
    if (m.at("version").get<int>() != 1) throw FormatError("unsupported dataset version in " + mpath.string());
    const auto& d = m.at("domain");
    ds.domain = {d.at("width_m").get<double>(), d.at("depth_m").get<double>(), d.at("raster_w").get<int>(),
                 d.at("raster_h").get<int>()};
    ds.layer.thickness = m.at("layer").at("thickness_m").get<double>();
    ds.layer.depth_to_top = m.at("layer").at("depth_to_top_m").get<double>();
    ds.label_h = m.at("label_grid").at(0).get<std::size_t>();
    ds.label_w = m.at("label_grid").at(1).get<std::size_t>();
    ds.surface_points = m.at("surface_points").get<std::size_t>();
    ds.steps = m.at("steps").get<std::size_t>();
    ds.dt_seconds = m.at("dt_seconds").get<double>();
    ds.generation = m.at("generation");
    for (const auto& js : m.at("samples")) {
      Sample s;
      s.id = js.at("id").get<std::string>();
      s.dip_deg = js.at("dip_deg").get<double>();
      s.split = parse_split(js.at("split").get<std::string>());
      ds.samples.push_back(std::move(s));
    }
    const auto& files = m.at("files");
    ds.has_static = files.contains("labels_static");
    ds.has_transient = files.contains("labels_transient");
    const std::size_t n = ds.samples.size();
    if (ds.has_static) {
      const auto v = detail::read_labels(dir, files.at("labels_static"), n * ds.label_size());
      for (std::size_t i = 0; i < n; ++i)
        ds.samples[i].static_label.assign(v.begin() + static_cast<std::ptrdiff_t>(i * ds.label_size()),
                                          v.begin() + static_cast<std::ptrdiff_t>((i + 1) * ds.label_size()));
    }
    if (ds.has_transient) {
      const std::size_t per = ds.steps * ds.surface_points;
      const auto v = detail::read_labels(dir, files.at("labels_transient"), n * per);
      for (std::size_t i = 0; i < n; ++i)
        ds.samples[i].series.assign(v.begin() + static_cast<std::ptrdiff_t>(i * per),
                                    v.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    }
    if (std::filesystem::exists(dir / "scaler.json")) {
      const auto sc = detail::read_json(dir / "scaler.json");
      if (sc.contains("static")) ds.static_scaler = scaler_from_json(sc.at("static"));
      if (sc.contains("transient")) ds.transient_scaler = scaler_from_json(sc.at("transient"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset manifest " + mpath.string() + ": " + e.what());
  }
  for (auto& s : ds.samples) {
    const auto raw = dir / "geom" / (s.id + ".raw");
    const auto bytes = io::read_bytes(raw);
    if (bytes.size() != ds.raster_size())
      throw FormatError("corrupt length in " + raw.string() + ": " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(ds.raster_size()));
    s.classes.assign(bytes.begin(), bytes.end());
  }
  return ds;
}

}  // namespace ccsnet::data
