#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "ccsnet/error.hpp"
#include "ccsnet/fem/boundary.hpp"
#include "ccsnet/fem/mesh.hpp"

namespace ccsnet::fem {

using ElementCoords = std::array<Point, 4>;
using Matrix8 = Eigen::Matrix<double, 8, 8>;
using Matrix84 = Eigen::Matrix<double, 8, 4>;
using Matrix4 = Eigen::Matrix<double, 4, 4>;
using Vector8 = Eigen::Matrix<double, 8, 1>;
using Vector4 = Eigen::Matrix<double, 4, 1>;

struct QuadraturePoint {
  double xi;
  double eta;
  double weight;
};

inline constexpr double kGauss2 = 0.57735026918962576451;  // 1/sqrt(3)

inline constexpr std::array<QuadraturePoint, 4> kGauss2x2{{{-kGauss2, -kGauss2, 1.0},
                                                          {kGauss2, -kGauss2, 1.0},
                                                          {kGauss2, kGauss2, 1.0},
                                                          {-kGauss2, kGauss2, 1.0}}};

struct ShapeValues {
  std::array<double, 4> n;
  std::array<double, 4> dndx;
  std::array<double, 4> dndy;
  double det_j;
  Point x;
};

inline ShapeValues shape_values(const ElementCoords& xy, double xi, double eta) {
  static constexpr double sx[4] = {-1.0, 1.0, 1.0, -1.0};
  static constexpr double sy[4] = {-1.0, -1.0, 1.0, 1.0};
  ShapeValues s{};
  double dndxi[4], dndeta[4];
  for (int a = 0; a < 4; ++a) {
    s.n[a] = 0.25 * (1.0 + sx[a] * xi) * (1.0 + sy[a] * eta);
    dndxi[a] = 0.25 * sx[a] * (1.0 + sy[a] * eta);
    dndeta[a] = 0.25 * sy[a] * (1.0 + sx[a] * xi);
  }
  double j11 = 0, j12 = 0, j21 = 0, j22 = 0;
  s.x = {0.0, 0.0};
  for (int a = 0; a < 4; ++a) {
    j11 += dndxi[a] * xy[a][0];
    j12 += dndxi[a] * xy[a][1];
    j21 += dndeta[a] * xy[a][0];
    j22 += dndeta[a] * xy[a][1];
    s.x[0] += s.n[a] * xy[a][0];
    s.x[1] += s.n[a] * xy[a][1];
  }
  s.det_j = j11 * j22 - j12 * j21;
  if (!(s.det_j > 0.0)) throw GeometryError("element with non-positive Jacobian");
  const double inv = 1.0 / s.det_j;
  for (int a = 0; a < 4; ++a) {
    s.dndx[a] = inv * (j22 * dndxi[a] - j12 * dndeta[a]);
    s.dndy[a] = inv * (-j21 * dndxi[a] + j11 * dndeta[a]);
  }
  return s;
}

/// Plane-strain isotropic elasticity matrix in Voigt order (xx, yy, xy).
inline Eigen::Matrix3d plane_strain_elasticity(double e, double nu) {
  const double c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
  Eigen::Matrix3d d;
  d << c * (1.0 - nu), c * nu, 0.0,
       c * nu, c * (1.0 - nu), 0.0,
       0.0, 0.0, c * (1.0 - 2.0 * nu) / 2.0;
  return d;
}

inline Eigen::Matrix<double, 3, 8> strain_displacement(const ShapeValues& s) {
  Eigen::Matrix<double, 3, 8> b = Eigen::Matrix<double, 3, 8>::Zero();
  for (int a = 0; a < 4; ++a) {
    b(0, 2 * a) = s.dndx[a];
    b(1, 2 * a + 1) = s.dndy[a];
    b(2, 2 * a) = s.dndy[a];
    b(2, 2 * a + 1) = s.dndx[a];
  }
  return b;
}

/// 8x8 stiffness, dofs ordered (u0x, u0y, u1x, u1y, ...).
inline Matrix8 element_stiffness(const ElementCoords& xy, double e, double nu) {
  const Eigen::Matrix3d d = plane_strain_elasticity(e, nu);
  Matrix8 k = Matrix8::Zero();
  for (const auto& q : kGauss2x2) {
    const auto s = shape_values(xy, q.xi, q.eta);
    const auto b = strain_displacement(s);
    k.noalias() += b.transpose() * d * b * (s.det_j * q.weight);
  }
  return k;
}

/// Q(a, j) = integral of div(N_a) * psi_j.
inline Matrix84 element_coupling(const ElementCoords& xy) {
  Matrix84 c = Matrix84::Zero();
  for (const auto& q : kGauss2x2) {
    const auto s = shape_values(xy, q.xi, q.eta);
    const double w = s.det_j * q.weight;
    for (int a = 0; a < 4; ++a)
      for (int j = 0; j < 4; ++j) {
        c(2 * a, j) += s.dndx[a] * s.n[j] * w;
        c(2 * a + 1, j) += s.dndy[a] * s.n[j] * w;
      }
  }
  return c;
}

/// Darcy conductivity: integral of mobility * grad psi_i . grad psi_j.
inline Matrix4 element_conductivity(const ElementCoords& xy, double mobility) {
  Matrix4 h = Matrix4::Zero();
  for (const auto& q : kGauss2x2) {
    const auto s = shape_values(xy, q.xi, q.eta);
    const double w = s.det_j * q.weight * mobility;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) h(i, j) += (s.dndx[i] * s.dndx[j] + s.dndy[i] * s.dndy[j]) * w;
  }
  return h;
}

/// Pressure-projection term tau * integral (psi_i - P psi_i)(psi_j - P psi_j)
/// where P is the element-wise L2 projection onto constants.
inline Matrix4 element_projection_stabilization(const ElementCoords& xy, double tau) {
  Matrix4 m = Matrix4::Zero();
  Vector4 v = Vector4::Zero();
  double area = 0.0;
  for (const auto& q : kGauss2x2) {
    const auto s = shape_values(xy, q.xi, q.eta);
    const double w = s.det_j * q.weight;
    area += w;
    for (int i = 0; i < 4; ++i) {
      v(i) += s.n[i] * w;
      for (int j = 0; j < 4; ++j) m(i, j) += s.n[i] * s.n[j] * w;
    }
  }
  return tau * (m - v * v.transpose() / area);
}

inline Vector8 element_body_load(const ElementCoords& xy, const BodyForce& f) {
  Vector8 r = Vector8::Zero();
  // 3x3 Gauss keeps the load consistent for smooth manufactured forcing.
  static constexpr double g[3] = {-0.77459666924148337704, 0.0, 0.77459666924148337704};
  static constexpr double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const auto s = shape_values(xy, g[a], g[b]);
      const auto bf = f(s.x[0], s.x[1]);
      const double ww = s.det_j * w[a] * w[b];
      for (int k = 0; k < 4; ++k) {
        r(2 * k) += s.n[k] * bf[0] * ww;
        r(2 * k + 1) += s.n[k] * bf[1] * ww;
      }
    }
  return r;
}

inline ElementCoords element_coords(const Mesh& mesh, std::size_t e) {
  ElementCoords xy;
  for (int k = 0; k < 4; ++k) xy[k] = mesh.nodes[static_cast<std::size_t>(mesh.elements[e][k])];
  return xy;
}

/// Consistent nodal loads of a uniform traction over the loaded part of an
/// edge; returns (node0 fx, node0 fy, node1 fx, node1 fy).
inline std::array<double, 4> edge_traction_load(const Mesh& mesh, const Edge& e,
                                                const std::array<double, 2>& t) {
  const auto& p0 = mesh.nodes[static_cast<std::size_t>(e.n0)];
  const auto& p1 = mesh.nodes[static_cast<std::size_t>(e.n1)];
  const double len = std::hypot(p1[0] - p0[0], p1[1] - p0[1]);
  // Integral over s in [s0, s1] of (1 - s) and s, times edge length.
  const double i0 = (e.s1 - e.s0) - 0.5 * (e.s1 * e.s1 - e.s0 * e.s0);
  const double i1 = 0.5 * (e.s1 * e.s1 - e.s0 * e.s0);
  return {t[0] * i0 * len, t[1] * i0 * len, t[0] * i1 * len, t[1] * i1 * len};
}

}  // namespace ccsnet::fem
