#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ccsnet/error.hpp"
#include "ccsnet/geom/geomgen.hpp"

namespace ccsnet::fem {

using Point = std::array<double, 2>;

/// Structured grid of bilinear quadrilaterals. Elements are ordered row by
/// row from the bottom-left; node numbering is arbitrary and looked up
/// through node_at(i, j) so that meshes can be renumbered.
struct Mesh {
  int nx = 0;
  int ny = 0;
  double width = 0.0;
  double depth = 0.0;
  std::vector<Point> nodes;
  /// Counterclockwise: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
  std::vector<std::array<int, 4>> elements;
  /// Structured index (j*(nx+1)+i) -> node id.
  std::vector<int> grid_to_node;

  std::size_t num_nodes() const { return nodes.size(); }
  std::size_t num_elements() const { return elements.size(); }
  double dx() const { return width / nx; }
  double dy() const { return depth / ny; }
  int node_at(int i, int j) const {
    return grid_to_node[static_cast<std::size_t>(j) * (nx + 1) + i];
  }
  const std::array<int, 4>& element_at(int i, int j) const {
    return elements[static_cast<std::size_t>(j) * nx + i];
  }

  /// Returns a copy whose node k becomes node perm[k].
  Mesh renumbered(const std::vector<int>& perm) const {
    if (perm.size() != nodes.size()) throw ArgumentError("permutation size does not match nodes");
    Mesh m = *this;
    for (std::size_t k = 0; k < nodes.size(); ++k) m.nodes[static_cast<std::size_t>(perm[k])] = nodes[k];
    for (auto& e : m.elements)
      for (auto& n : e) n = perm[static_cast<std::size_t>(n)];
    for (auto& n : m.grid_to_node) n = perm[static_cast<std::size_t>(n)];
    return m;
  }
};

inline Mesh build_mesh(const geom::DomainSpec& domain, int nx, int ny) {
  if (nx < 2 || ny < 2)
    throw ArgumentError("mesh needs at least 2x2 elements, got " + std::to_string(nx) + "x" +
                        std::to_string(ny));
  if (!(domain.width > 0.0) || !(domain.depth > 0.0))
    throw ArgumentError("domain dimensions must be positive");
  Mesh m;
  m.nx = nx;
  m.ny = ny;
  m.width = domain.width;
  m.depth = domain.depth;
  m.nodes.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
  m.grid_to_node.resize(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      // Boundary nodes take the exact domain extents.
      const double x = (i == nx) ? domain.width : domain.width * i / nx;
      const double y = (j == ny) ? domain.depth : domain.depth * j / ny;
      m.grid_to_node[static_cast<std::size_t>(j) * (nx + 1) + i] = static_cast<int>(m.nodes.size());
      m.nodes.push_back({x, y});
    }
  m.elements.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      m.elements.push_back({m.node_at(i, j), m.node_at(i + 1, j), m.node_at(i + 1, j + 1),
                            m.node_at(i, j + 1)});
  return m;
}

/// Shoelace area of element e.
inline double element_area(const Mesh& m, std::size_t e) {
  double a = 0.0;
  const auto& el = m.elements[e];
  for (int k = 0; k < 4; ++k) {
    const auto& p = m.nodes[static_cast<std::size_t>(el[k])];
    const auto& q = m.nodes[static_cast<std::size_t>(el[(k + 1) % 4])];
    a += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * a;
}

}  // namespace ccsnet::fem
