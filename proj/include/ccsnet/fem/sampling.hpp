#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "ccsnet/fem/mesh.hpp"

namespace ccsnet::fem {

namespace detail {

/// Cell index and local coordinate in [0, 1] along one mesh direction.
/// Points on an interior node resolve to the cell on their right so that
/// the local coordinate is exactly zero.
inline std::pair<int, double> locate(double v, int n, const auto& coord_of) {
  const double lo = coord_of(0);
  const double hi = coord_of(n);
  int i = static_cast<int>(std::floor((v - lo) / (hi - lo) * n));
  i = std::clamp(i, 0, n - 1);
  while (i > 0 && v < coord_of(i)) --i;
  while (i < n - 1 && v >= coord_of(i + 1)) ++i;
  const double a = coord_of(i);
  const double b = coord_of(i + 1);
  return {i, (v - a) / (b - a)};
}

}  // namespace detail

/// Bilinear interpolation of nodal component `comp` of a (2 dofs per node)
/// displacement vector at (x, y).
inline double interpolate_displacement(const Mesh& mesh, const Eigen::VectorXd& u, int comp, double x, double y) {
  auto xc = [&](int i) { return mesh.nodes[static_cast<std::size_t>(mesh.node_at(i, 0))][0]; };
  auto yc = [&](int j) { return mesh.nodes[static_cast<std::size_t>(mesh.node_at(0, j))][1]; };
  const auto [i, s] = detail::locate(x, mesh.nx, xc);
  const auto [j, t] = detail::locate(y, mesh.ny, yc);
  const auto& el = mesh.element_at(i, j);
  const double v0 = u[2 * el[0] + comp];
  const double v1 = u[2 * el[1] + comp];
  const double v2 = u[2 * el[2] + comp];
  const double v3 = u[2 * el[3] + comp];
  return (1.0 - s) * (1.0 - t) * v0 + s * (1.0 - t) * v1 + s * t * v2 + (1.0 - s) * t * v3;
}

/// u_y on an nx_points x ny_points grid spanning the domain boundary to
/// boundary. Row-major with row 0 at the ground surface, x inner.
inline std::vector<double> sample_uy_grid(const Eigen::VectorXd& u, const Mesh& mesh, int nx_points = 50,
                                          int ny_points = 25) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(nx_points) * ny_points);
  for (int r = 0; r < ny_points; ++r) {
    const double y = (r == 0) ? mesh.depth : mesh.depth - mesh.depth * r / (ny_points - 1);
    for (int c = 0; c < nx_points; ++c) {
      const double x = (c == nx_points - 1) ? mesh.width : mesh.width * c / (nx_points - 1);
      out.push_back(interpolate_displacement(mesh, u, 1, x, y));
    }
  }
  return out;
}

/// u_y at n uniformly spaced points along the top boundary, left to right,
/// endpoints included.
inline std::vector<double> sample_surface(const Eigen::VectorXd& u, const Mesh& mesh, int n = 40) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    const double x = (c == n - 1) ? mesh.width : mesh.width * c / (n - 1);
    out.push_back(interpolate_displacement(mesh, u, 1, x, mesh.depth));
  }
  return out;
}

}  // namespace ccsnet::fem
