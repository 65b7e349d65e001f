#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ccsnet/error.hpp"
#include "ccsnet/fem/mesh.hpp"

namespace ccsnet::fem {

/// Boundary edge between two nodes; [s0, s1] is the loaded fraction of the
/// edge measured from n0.
struct Edge {
  int n0;
  int n1;
  double s0 = 0.0;
  double s1 = 1.0;
};

struct DisplacementConstraint {
  int node;
  int component;  // 0 = x, 1 = y
  double value;   // m
};

struct TractionSegment {
  std::vector<Edge> edges;
  std::array<double, 2> traction;  // Pa
};

struct PressureConstraint {
  int node;
  double value;  // Pa
};

/// Prescribed outward normal Darcy flux (m/s) on a set of edges.
struct FluxSegment {
  std::vector<Edge> edges;
  double flux;
};

using BodyForce = std::function<std::array<double, 2>(double x, double y)>;

struct BoundaryConditions {
  std::vector<DisplacementConstraint> displacement;
  std::vector<TractionSegment> traction;
  std::vector<PressureConstraint> pressure;
  std::vector<FluxSegment> flux;
  /// Body force per unit volume (N/m^3), used for manufactured solutions.
  BodyForce body_force;
  /// Adds rho*g (downward) per element material when set.
  bool gravity = false;
  double gravity_acceleration = 9.81;

  /// Rejects conflicting duplicate constraints on the same degree of freedom.
  void validate(const Mesh& mesh) const {
    std::map<std::pair<int, int>, double> seen;
    for (const auto& c : displacement) {
      if (c.node < 0 || static_cast<std::size_t>(c.node) >= mesh.num_nodes() || c.component < 0 ||
          c.component > 1)
        throw ArgumentError("displacement constraint references invalid dof");
      auto [it, inserted] = seen.emplace(std::pair{c.node, c.component}, c.value);
      if (!inserted && it->second != c.value)
        throw ArgumentError("conflicting displacement constraints on node " +
                            std::to_string(c.node));
    }
    std::map<int, double> pseen;
    for (const auto& c : pressure) {
      if (c.node < 0 || static_cast<std::size_t>(c.node) >= mesh.num_nodes())
        throw ArgumentError("pressure constraint references invalid node");
      auto [it, inserted] = pseen.emplace(c.node, c.value);
      if (!inserted && it->second != c.value)
        throw ArgumentError("conflicting pressure constraints on node " + std::to_string(c.node));
    }
    for (const auto& seg : flux)
      for (const auto& e : seg.edges)
        if (pseen.contains(e.n0) && pseen.contains(e.n1))
          throw ArgumentError("flux edge lies entirely on a prescribed-pressure boundary");
  }
};

/// Injection load model: rollers on the sides (u_x = 0) and the bottom
/// (u_y = 0) except for a centered patch where an upward traction acts.
/// The top is drained (p = 0); other boundaries are no-flux.
inline BoundaryConditions injection_bcs(const Mesh& mesh, double load = 1e6,
                                        double patch_fraction = 0.2) {
  BoundaryConditions bc;
  const double x0 = 0.5 * mesh.width * (1.0 - patch_fraction);
  const double x1 = 0.5 * mesh.width * (1.0 + patch_fraction);
  for (int j = 0; j <= mesh.ny; ++j) {
    bc.displacement.push_back({mesh.node_at(0, j), 0, 0.0});
    bc.displacement.push_back({mesh.node_at(mesh.nx, j), 0, 0.0});
  }
  TractionSegment patch{{}, {0.0, load}};
  for (int i = 0; i <= mesh.nx; ++i) {
    const int n = mesh.node_at(i, 0);
    const double x = mesh.nodes[static_cast<std::size_t>(n)][0];
    if (x < x0 || x > x1) bc.displacement.push_back({n, 1, 0.0});
    if (i < mesh.nx) {
      const int m = mesh.node_at(i + 1, 0);
      const double xa = x;
      const double xb = mesh.nodes[static_cast<std::size_t>(m)][0];
      const double lo = std::max(xa, x0);
      const double hi = std::min(xb, x1);
      if (hi > lo) patch.edges.push_back({n, m, (lo - xa) / (xb - xa), (hi - xa) / (xb - xa)});
    }
  }
  bc.traction.push_back(std::move(patch));
  for (int i = 0; i <= mesh.nx; ++i) bc.pressure.push_back({mesh.node_at(i, mesh.ny), 0.0});
  return bc;
}

/// One-dimensional column: rollers on the sides, fixed bottom, uniform
/// vertical traction on the top, top drained.
inline BoundaryConditions column_bcs(const Mesh& mesh, double top_traction_y) {
  BoundaryConditions bc;
  for (int j = 0; j <= mesh.ny; ++j) {
    bc.displacement.push_back({mesh.node_at(0, j), 0, 0.0});
    bc.displacement.push_back({mesh.node_at(mesh.nx, j), 0, 0.0});
  }
  for (int i = 0; i <= mesh.nx; ++i) {
    bc.displacement.push_back({mesh.node_at(i, 0), 1, 0.0});
    if (i > 0 && i < mesh.nx) bc.displacement.push_back({mesh.node_at(i, 0), 0, 0.0});
  }
  TractionSegment top{{}, {0.0, top_traction_y}};
  // Top edges run right to left so the outward normal is +y for a CCW traversal.
  for (int i = 0; i < mesh.nx; ++i) top.edges.push_back({mesh.node_at(i + 1, mesh.ny), mesh.node_at(i, mesh.ny)});
  bc.traction.push_back(std::move(top));
  for (int i = 0; i <= mesh.nx; ++i) bc.pressure.push_back({mesh.node_at(i, mesh.ny), 0.0});
  return bc;
}

/// Dirichlet data on every boundary node from a displacement function.
inline BoundaryConditions dirichlet_all(const Mesh& mesh,
                                        const std::function<std::array<double, 2>(double, double)>& u) {
  BoundaryConditions bc;
  auto add = [&](int n) {
    const auto& p = mesh.nodes[static_cast<std::size_t>(n)];
    const auto v = u(p[0], p[1]);
    bc.displacement.push_back({n, 0, v[0]});
    bc.displacement.push_back({n, 1, v[1]});
  };
  for (int i = 0; i <= mesh.nx; ++i) {
    add(mesh.node_at(i, 0));
    add(mesh.node_at(i, mesh.ny));
  }
  for (int j = 1; j < mesh.ny; ++j) {
    add(mesh.node_at(0, j));
    add(mesh.node_at(mesh.nx, j));
  }
  return bc;
}

}  // namespace ccsnet::fem
