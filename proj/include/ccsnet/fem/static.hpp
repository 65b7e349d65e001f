#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ccsnet/error.hpp"
#include "ccsnet/fem/boundary.hpp"
#include "ccsnet/fem/element.hpp"
#include "ccsnet/fem/mesh.hpp"
#include "ccsnet/fem/sparse.hpp"
#include "ccsnet/geom/geomgen.hpp"
#include "ccsnet/parallel.hpp"

namespace ccsnet::fem {

struct StaticSystem {
  SparseSymmetric stiffness;
  Eigen::VectorXd load;
  std::vector<int> constrained_dofs;
  std::vector<double> constrained_values;
  /// Rigid-body modes (out of 3) left free by the displacement constraints.
  int null_space_dimension = 0;
};

struct StaticSolution {
  Eigen::VectorXd displacement;  // (u_x, u_y) per node
  double relative_residual = 0.0;

  double ux(int node) const { return displacement[2 * node]; }
  double uy(int node) const { return displacement[2 * node + 1]; }
};

enum class LinearSolver { Direct, ConjugateGradient };

namespace detail {

inline void check_classes(const Mesh& mesh, const std::vector<std::uint8_t>& element_classes) {
  if (element_classes.size() != mesh.num_elements())
    throw DimensionError("element class count " + std::to_string(element_classes.size()) +
                         " does not match mesh element count " +
                         std::to_string(mesh.num_elements()));
}

/// Elastic stiffness and body/traction loads before any constraint handling.
inline void assemble_elastic_block(const Mesh& mesh, const std::vector<std::uint8_t>& element_classes,
                                   const geom::MaterialRegistry& registry,
                                   const BoundaryConditions& bcs, std::vector<Triplet>& triplets,
                                   Eigen::VectorXd& load) {
  const std::size_t ne = mesh.num_elements();
  std::vector<Matrix8> ke(ne);
  std::vector<Vector8> fe(ne, Vector8::Zero());
  // Materials are resolved up front so that registry errors surface in order.
  std::vector<const geom::MaterialProperties*> mat(ne);
  for (std::size_t e = 0; e < ne; ++e) mat[e] = &registry.get(element_classes[e]);
  parallel_for(ne, [&](std::size_t e) {
    const auto xy = element_coords(mesh, e);
    ke[e] = element_stiffness(xy, mat[e]->youngs_modulus, mat[e]->poisson_ratio);
    if (bcs.body_force) fe[e] += element_body_load(xy, bcs.body_force);
    if (bcs.gravity) {
      const double w = -mat[e]->density * bcs.gravity_acceleration;
      fe[e] += element_body_load(xy, [w](double, double) { return std::array<double, 2>{0.0, w}; });
    }
  });
  triplets.reserve(triplets.size() + ne * 64);
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& el = mesh.elements[e];
    for (int a = 0; a < 8; ++a) {
      const int ra = 2 * el[a / 2] + a % 2;
      load[ra] += fe[e](a);
      for (int b = 0; b < 8; ++b) triplets.emplace_back(ra, 2 * el[b / 2] + b % 2, ke[e](a, b));
    }
  }
  for (const auto& seg : bcs.traction)
    for (const auto& edge : seg.edges) {
      const auto f = edge_traction_load(mesh, edge, seg.traction);
      load[2 * edge.n0] += f[0];
      load[2 * edge.n0 + 1] += f[1];
      load[2 * edge.n1] += f[2];
      load[2 * edge.n1 + 1] += f[3];
    }
}

/// Symmetric elimination of prescribed dofs: the lifted values are moved to
/// the right-hand side, rows and columns are cleared, and the original
/// diagonal entry is kept so the scaling of the system is preserved.
struct Elimination {
  SparseSymmetric::Storage matrix;
  Eigen::VectorXd lift;      // A0 * g
  Eigen::VectorXd diagonal;  // original diagonal
  std::vector<char> constrained;
  Eigen::VectorXd values;

  Eigen::VectorXd apply(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd b = rhs - lift;
    for (Eigen::Index i = 0; i < b.size(); ++i)
      if (constrained[static_cast<std::size_t>(i)]) b[i] = diagonal[i] * values[i];
    return b;
  }
};

inline Elimination eliminate(const SparseSymmetric::Storage& a, const std::vector<int>& dofs,
                             const std::vector<double>& vals) {
  const Eigen::Index n = a.rows();
  Elimination out;
  out.constrained.assign(static_cast<std::size_t>(n), 0);
  out.values = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < dofs.size(); ++k) {
    out.constrained[static_cast<std::size_t>(dofs[k])] = 1;
    out.values[dofs[k]] = vals[k];
  }
  out.lift = a * out.values;
  out.diagonal = a.diagonal();
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(a.nonZeros()));
  for (int r = 0; r < a.outerSize(); ++r)
    for (SparseSymmetric::Storage::InnerIterator it(a, r); it; ++it) {
      const bool cr = out.constrained[static_cast<std::size_t>(it.row())];
      const bool cc = out.constrained[static_cast<std::size_t>(it.col())];
      if (!cr && !cc) t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  for (Eigen::Index i = 0; i < n; ++i)
    if (out.constrained[static_cast<std::size_t>(i)]) {
      if (out.diagonal[i] == 0.0) out.diagonal[i] = 1.0;
      t.emplace_back(static_cast<int>(i), static_cast<int>(i), out.diagonal[i]);
    }
  out.matrix.resize(n, n);
  out.matrix.setFromTriplets(t.begin(), t.end());
  out.matrix.prune(0.0, 0.0);
  out.matrix.makeCompressed();
  return out;
}

/// Rank deficiency left among the three planar rigid-body modes after the
/// displacement constraints are imposed.
inline int rigid_null_space_dimension(const Mesh& mesh, const std::vector<DisplacementConstraint>& cons) {
  if (cons.empty()) return 3;
  double xc = 0.0, yc = 0.0;
  for (const auto& p : mesh.nodes) {
    xc += p[0];
    yc += p[1];
  }
  xc /= static_cast<double>(mesh.num_nodes());
  yc /= static_cast<double>(mesh.num_nodes());
  const double scale = std::max(mesh.width, mesh.depth);
  Eigen::MatrixXd c(static_cast<Eigen::Index>(cons.size()), 3);
  for (std::size_t k = 0; k < cons.size(); ++k) {
    const auto& p = mesh.nodes[static_cast<std::size_t>(cons[k].node)];
    const auto r = static_cast<Eigen::Index>(k);
    if (cons[k].component == 0) {
      c(r, 0) = 1.0;
      c(r, 1) = 0.0;
      c(r, 2) = -(p[1] - yc) / scale;
    } else {
      c(r, 0) = 0.0;
      c(r, 1) = 1.0;
      c(r, 2) = (p[0] - xc) / scale;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(c);
  qr.setThreshold(1e-10);
  return 3 - static_cast<int>(qr.rank());
}

}  // namespace detail

inline StaticSystem assemble_static(const Mesh& mesh, const std::vector<std::uint8_t>& element_classes,
                                    const geom::MaterialRegistry& registry, const BoundaryConditions& bcs) {
  detail::check_classes(mesh, element_classes);
  bcs.validate(mesh);
  const std::size_t ndof = 2 * mesh.num_nodes();
  std::vector<Triplet> triplets;
  Eigen::VectorXd load = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ndof));
  detail::assemble_elastic_block(mesh, element_classes, registry, bcs, triplets, load);
  SparseSymmetric::Storage k0(static_cast<Eigen::Index>(ndof), static_cast<Eigen::Index>(ndof));
  k0.setFromTriplets(triplets.begin(), triplets.end());

  StaticSystem sys;
  for (const auto& c : bcs.displacement) {
    sys.constrained_dofs.push_back(2 * c.node + c.component);
    sys.constrained_values.push_back(c.value);
  }
  const auto elim = detail::eliminate(k0, sys.constrained_dofs, sys.constrained_values);
  sys.stiffness = SparseSymmetric(elim.matrix);
  sys.load = elim.apply(load);
  sys.null_space_dimension = detail::rigid_null_space_dimension(mesh, bcs.displacement);
  return sys;
}

inline StaticSolution solve_static(const StaticSystem& sys, LinearSolver solver = LinearSolver::Direct) {
  if (sys.null_space_dimension > 0)
    throw SolverError("under-constrained boundary conditions: null-space dimension " +
                      std::to_string(sys.null_space_dimension));
  StaticSolution sol;
  const Eigen::SparseMatrix<double> k = sys.stiffness.storage();
  if (solver == LinearSolver::Direct) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(k);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
      throw SolverError("singular stiffness matrix: under-constrained boundary conditions "
                        "(null-space dimension >= 1)");
    sol.displacement = ldlt.solve(sys.load);
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg(k);
    cg.setTolerance(1e-12);
    cg.setMaxIterations(static_cast<Eigen::Index>(10 * k.rows()));
    sol.displacement = cg.solve(sys.load);
    if (cg.info() != Eigen::Success) throw SolverError("conjugate gradient did not converge");
  }
  const double fn = sys.load.norm();
  const Eigen::VectorXd r = sys.stiffness * sol.displacement - sys.load;
  sol.relative_residual = fn > 0.0 ? r.norm() / fn : r.norm();
  if (!(sol.relative_residual < 1e-8))
    throw SolverError("static solve residual " + std::to_string(sol.relative_residual) +
                      " exceeds 1e-8");
  return sol;
}

}  // namespace ccsnet::fem
