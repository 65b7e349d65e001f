#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "ccsnet/fem/biot.hpp"
#include "ccsnet/fem/sampling.hpp"
#include "ccsnet/fem/static.hpp"

// Closed-form reference solutions used to verify the finite-element solvers.
namespace ccsnet::fem::verify {

/// Terzaghi excess pore pressure at depth z below the drained top of a
/// column of height h with an impermeable base, after a step load p0.
inline double terzaghi_pressure(double z, double t, double h, double cv, double p0, int terms = 400) {
  const double tv = cv * t / (h * h);
  double p = 0.0;
  for (int m = 0; m < terms; ++m) {
    const double mm = std::numbers::pi * (2 * m + 1) / 2.0;
    p += 2.0 * p0 / mm * std::sin(mm * z / h) * std::exp(-mm * mm * tv);
  }
  return p;
}

inline double consolidation_coefficient(const geom::MaterialProperties& m) {
  return m.mobility() * m.constrained_modulus();
}

struct UniaxialResult {
  double computed;    // surface u_y
  double analytical;  // -t H / M
  double relative_error;
};

/// Homogeneous column with rollers on the sides, fixed base and a uniform
/// compressive top traction t.
inline UniaxialResult verify_uniaxial(int nx = 16, int ny = 16, double traction = 1e6) {
  const geom::MaterialProperties mat{10e9, 0.25, 1e-13, 1e-3};
  const auto reg = geom::MaterialRegistry::homogeneous(mat);
  geom::DomainSpec dom{10.0, 20.0, 16, 16};
  const auto mesh = build_mesh(dom, nx, ny);
  const auto bcs = column_bcs(mesh, -traction);
  const auto sol = solve_static(assemble_static(mesh, std::vector<std::uint8_t>(mesh.num_elements(), 0), reg, bcs));
  UniaxialResult r;
  r.analytical = -traction * dom.depth / mat.constrained_modulus();
  double worst = 0.0;
  for (int i = 0; i <= nx; ++i) {
    const double v = sol.uy(mesh.node_at(i, ny));
    worst = std::max(worst, std::abs(v - r.analytical));
    if (i == nx / 2) r.computed = v;
  }
  r.relative_error = worst / std::abs(r.analytical);
  return r;
}

/// Manufactured displacement on the unit square:
///   u_x = sin(pi x) sin(pi y),  u_y = sin(pi x) cos(pi y).
struct ManufacturedElasticity {
  double e = 1.0;
  double nu = 0.3;

  double lambda() const { return e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)); }
  double shear() const { return e / (2.0 * (1.0 + nu)); }

  std::array<double, 2> displacement(double x, double y) const {
    const double pi = std::numbers::pi;
    return {std::sin(pi * x) * std::sin(pi * y), std::sin(pi * x) * std::cos(pi * y)};
  }

  /// b = -div sigma = -[(lambda + G) grad(div u) + G laplacian(u)].
  std::array<double, 2> body_force(double x, double y) const {
    const double pi = std::numbers::pi;
    const double sx = std::sin(pi * x), cx = std::cos(pi * x);
    const double sy = std::sin(pi * y), cy = std::cos(pi * y);
    const double lg = lambda() + shear();
    const double g = shear();
    return {lg * pi * pi * sy * (sx + cx) + 2.0 * g * pi * pi * sx * sy,
            -lg * pi * pi * cy * (cx - sx) + 2.0 * g * pi * pi * sx * cy};
  }
};

/// L2 norm of the displacement error against an exact field (3x3 Gauss).
inline double l2_error(const Mesh& mesh, const Eigen::VectorXd& u,
                       const std::function<std::array<double, 2>(double, double)>& exact) {
  static constexpr double g[3] = {-0.77459666924148337704, 0.0, 0.77459666924148337704};
  static constexpr double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  double acc = 0.0;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto xy = element_coords(mesh, e);
    const auto& el = mesh.elements[e];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const auto s = shape_values(xy, g[a], g[b]);
        double uh[2] = {0.0, 0.0};
        for (int k = 0; k < 4; ++k) {
          uh[0] += s.n[k] * u[2 * el[k]];
          uh[1] += s.n[k] * u[2 * el[k] + 1];
        }
        const auto ex = exact(s.x[0], s.x[1]);
        acc += ((uh[0] - ex[0]) * (uh[0] - ex[0]) + (uh[1] - ex[1]) * (uh[1] - ex[1])) * s.det_j * w[a] * w[b];
      }
  }
  return std::sqrt(acc);
}

struct ConvergenceResult {
  std::vector<int> resolutions;
  std::vector<double> errors;
  std::vector<double> orders;  // log2(e_k / e_{k+1})
};

inline ConvergenceResult verify_manufactured(std::vector<int> resolutions = {8, 16, 32, 64}) {
  ManufacturedElasticity mms;
  const auto reg = geom::MaterialRegistry::homogeneous({mms.e, mms.nu, 1.0, 1.0});
  ConvergenceResult out;
  for (int n : resolutions) {
    const auto mesh = build_mesh({1.0, 1.0, 16, 16}, n, n);
    auto exact = [&](double x, double y) { return mms.displacement(x, y); };
    auto bcs = dirichlet_all(mesh, exact);
    bcs.body_force = [&](double x, double y) { return mms.body_force(x, y); };
    const auto sol = solve_static(assemble_static(mesh, std::vector<std::uint8_t>(mesh.num_elements(), 0), reg, bcs));
    out.resolutions.push_back(n);
    out.errors.push_back(l2_error(mesh, sol.displacement, exact));
  }
  for (std::size_t k = 0; k + 1 < out.errors.size(); ++k)
    out.orders.push_back(std::log2(out.errors[k] / out.errors[k + 1]));
  return out;
}

struct TerzaghiResult {
  std::vector<double> time_factors;
  std::vector<double> relative_l2;       // pressure profile vs series
  bool settlement_monotone = true;       // |u_y| at the surface never decreases
  double max_pressure_overshoot = 0.0;   // max(p - p0, -p, 0) / p0 over all steps
  double drained_gap = 0.0;              // |u(5 T) - u_static| / |u_static|
};

/// Terzaghi column of height 10 m; pressure profiles are compared at the
/// given time factors T_v = c_v t / H^2 and the run continues to T_v = 5.
inline TerzaghiResult verify_terzaghi(std::vector<double> time_factors = {0.05, 0.1, 0.2}, int ny = 40,
                                      int steps_per_unit = 2000) {
  const geom::MaterialProperties mat{10e9, 0.25, 1e-15, 1e-3};
  const auto reg = geom::MaterialRegistry::homogeneous(mat);
  const double h = 10.0;
  const double p0 = 1e6;
  const geom::DomainSpec dom{1.0, h, 16, 16};
  const auto mesh = build_mesh(dom, 2, ny);
  const auto bcs = column_bcs(mesh, -p0);
  const std::vector<std::uint8_t> classes(mesh.num_elements(), 0);
  const double cv = consolidation_coefficient(mat);
  const double tc = h * h / cv;
  const double dt = tc / steps_per_unit;
  const std::size_t n_steps = static_cast<std::size_t>(5 * steps_per_unit);

  TerzaghiResult r;
  r.time_factors = time_factors;
  std::vector<std::size_t> marks;
  for (double tv : time_factors) marks.push_back(static_cast<std::size_t>(std::llround(tv * steps_per_unit)));
  r.relative_l2.assign(time_factors.size(), 0.0);

  std::size_t k = 0;
  double last_settlement = 0.0;
  Eigen::VectorXd final_u;
  run_transient(mesh, classes, reg, bcs, dt, n_steps, [&](const TransientState& s) {
    const double settle = -s.displacement[2 * mesh.node_at(1, ny) + 1];
    if (settle < last_settlement - 1e-12) r.settlement_monotone = false;
    last_settlement = std::max(last_settlement, settle);
    for (Eigen::Index i = 0; i < s.pressure.size(); ++i) {
      if (k == 0) break;
      r.max_pressure_overshoot = std::max({r.max_pressure_overshoot, (s.pressure[i] - p0) / p0, -s.pressure[i] / p0});
    }
    for (std::size_t m = 0; m < marks.size(); ++m)
      if (k == marks[m]) {
        double num = 0.0, den = 0.0;
        for (int j = 0; j <= ny; ++j) {
          const int node = mesh.node_at(1, j);
          const double z = h - mesh.nodes[static_cast<std::size_t>(node)][1];
          const double exact = terzaghi_pressure(z, s.time, h, cv, p0);
          num += (s.pressure[node] - exact) * (s.pressure[node] - exact);
          den += exact * exact;
        }
        r.relative_l2[m] = std::sqrt(num / den);
      }
    if (k == n_steps) final_u = s.displacement;
    ++k;
  });
  const auto st = solve_static(assemble_static(mesh, classes, reg, bcs));
  r.drained_gap = (final_u - st.displacement).norm() / st.displacement.norm();
  return r;
}

}  // namespace ccsnet::fem::verify
