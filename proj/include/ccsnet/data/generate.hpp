#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>

#include "ccsnet/data/dataset.hpp"
#include "ccsnet/fem/biot.hpp"
#include "ccsnet/fem/sampling.hpp"
#include "ccsnet/fem/static.hpp"
#include "ccsnet/parallel.hpp"

namespace ccsnet::data {

inline constexpr double kSecondsPerYear = 365.25 * 24.0 * 3600.0;

struct GenerateConfig {
  std::size_t samples = 500;  // train + val pool; test geometries are added on top
  std::uint64_t seed = 0;
  geom::DomainSpec domain;
  geom::LayerSpec layer;
  int mesh_nx = 48;
  int mesh_ny = 24;
  double load = 1e6;  // Pa, upward traction on the bottom patch
  double patch_fraction = 0.2;
  geom::MaterialRegistry registry = geom::MaterialRegistry::defaults();
  bool gravity = false;
  bool static_labels = true;
  bool transient_labels = false;
  std::size_t steps = 1000;
  double horizon_years = 20.0;
  double val_fraction = 0.05;
  double test_fraction = 0.05;
  std::size_t label_h = 25;
  std::size_t label_w = 50;
  std::size_t surface_points = 40;

  double dt_seconds() const { return horizon_years * kSecondsPerYear / static_cast<double>(steps); }
  std::size_t test_count() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(samples) * test_fraction + 1e-9)));
  }

  void validate() const {
    domain.validate();
    registry.validate();
    if (mesh_nx < 2 || mesh_ny < 2) throw ConfigError("mesh needs at least 2 x 2 elements");
    if (!static_labels && !transient_labels) throw ConfigError("nothing to generate: enable static and/or transient labels");
    if (transient_labels && steps < 1) throw ConfigError("transient generation needs at least one step");
    if (!(horizon_years > 0.0)) throw ConfigError("time horizon must be positive");
    if (!(patch_fraction > 0.0 && patch_fraction < 1.0)) throw ConfigError("load patch fraction must lie in (0, 1)");
  }

  nlohmann::json to_json() const {
    const auto& rock = registry.get(0);
    const auto& shale = registry.get(1);
    auto mat = [](const geom::MaterialProperties& p) {
      return nlohmann::json{{"youngs_modulus_pa", p.youngs_modulus},
                            {"poisson_ratio", p.poisson_ratio},
                            {"permeability_m2", p.permeability},
                            {"viscosity_pa_s", p.fluid_viscosity},
                            {"density_kg_m3", p.density}};
    };
    return {{"samples", samples},
            {"test_samples", test_count()},
            {"seed", seed},
            {"mesh", {mesh_nx, mesh_ny}},
            {"load_pa", load},
            {"patch_fraction", patch_fraction},
            {"gravity", gravity},
            {"materials", {{"rock", mat(rock)}, {"shale", mat(shale)}}},
            {"static", static_labels},
            {"transient", transient_labels},
            {"steps", transient_labels ? steps : 0},
            {"horizon_years", horizon_years},
            {"val_fraction", val_fraction},
            {"test_fraction", test_fraction}};
  }
};

/// Labels for one geometry. Static: u_y on the label grid from the drained
/// elastic solve. Transient: surface u_y after each backward-Euler step.
/// Returns the relative residual of the static solve (0 when not run).
inline double simulate_sample(const GenerateConfig& cfg, const fem::Mesh& mesh, const fem::BoundaryConditions& bcs,
                            Sample& s) {
  geom::LayerSpec layer = cfg.layer;
  layer.dip_deg = s.dip_deg;
  const auto field = geom::rasterize(cfg.domain, layer, cfg.mesh_nx, cfg.mesh_ny);
  s.classes = field.classes;
  double residual = 0.0;
  if (cfg.static_labels) {
    const auto sol = fem::solve_static(fem::assemble_static(mesh, field.element_classes, cfg.registry, bcs));
    const auto grid = fem::sample_uy_grid(sol.displacement, mesh, static_cast<int>(cfg.label_w),
                                          static_cast<int>(cfg.label_h));
    s.static_label.assign(grid.begin(), grid.end());
    residual = sol.relative_residual;
  }
  if (cfg.transient_labels) {
    s.series.clear();
    s.series.reserve(cfg.steps * cfg.surface_points);
    std::size_t k = 0;
    fem::run_transient(mesh, field.element_classes, cfg.registry, bcs, cfg.dt_seconds(), cfg.steps,
                       [&](const fem::TransientState& st) {
                         if (k++ == 0) return;  // initial state is not a label row
                         const auto row = fem::sample_surface(st.displacement, mesh, static_cast<int>(cfg.surface_points));
                         s.series.insert(s.series.end(), row.begin(), row.end());
                       });
  }
  return residual;
}

/// (completed, total, sample, static residual)
using GenerateProgress = std::function<void(std::size_t, std::size_t, const Sample&, double)>;

/// Generates the pool (split train/val) plus fresh test geometries, runs the
/// solver for each in parallel and fits the scalers on the training split.
/// Seed streams: 0 pool dips, 1 test dips, 2 split membership.
inline Dataset generate_dataset(const GenerateConfig& cfg,
                                const GenerateProgress& progress = {}) {
  cfg.validate();
  Dataset ds;
  ds.domain = cfg.domain;
  ds.layer = cfg.layer;
  ds.label_h = cfg.label_h;
  ds.label_w = cfg.label_w;
  ds.surface_points = cfg.surface_points;
  ds.has_static = cfg.static_labels;
  ds.has_transient = cfg.transient_labels;
  ds.steps = cfg.transient_labels ? cfg.steps : 0;
  ds.dt_seconds = cfg.transient_labels ? cfg.dt_seconds() : 0.0;
  ds.generation = cfg.to_json();

  const auto split = split_pool(cfg.samples, Rng::derive(cfg.seed, 2), cfg.val_fraction);
  const auto pool_dips = geom::sample_dip_angles(cfg.samples, Rng::derive(cfg.seed, 0));
  const auto test_dips = geom::sample_dip_angles(cfg.test_count(), Rng::derive(cfg.seed, 1));
  ds.samples.resize(cfg.samples + test_dips.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    auto& s = ds.samples[i];
    s.id = sample_id(i);
    s.dip_deg = i < cfg.samples ? pool_dips[i] : test_dips[i - cfg.samples];
    s.split = i < cfg.samples ? Split::Train : Split::Test;
  }
  for (auto i : split.val) ds.samples[i].split = Split::Val;

  const auto mesh = fem::build_mesh(cfg.domain, cfg.mesh_nx, cfg.mesh_ny);
  auto bcs = fem::injection_bcs(mesh, cfg.load, cfg.patch_fraction);
  bcs.gravity = cfg.gravity;
  std::mutex mu;
  std::size_t done = 0;
  parallel_for(ds.samples.size(), [&](std::size_t i) {
    double residual = 0.0;
    try {
      residual = simulate_sample(cfg, mesh, bcs, ds.samples[i]);
    } catch (const Error& e) {
      throw SolverError("geometry " + ds.samples[i].id + " (dip " + std::to_string(ds.samples[i].dip_deg) +
                        " deg): " + e.what());
    }
    if (progress) {
      std::lock_guard lock(mu);
      progress(++done, ds.samples.size(), ds.samples[i], residual);
    }
  });
  ds.fit_scalers();
  return ds;
}

}  // namespace ccsnet::data
