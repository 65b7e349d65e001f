#pragma once

#include <Eigen/SparseLU>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ccsnet/error.hpp"
#include "ccsnet/fem/static.hpp"

namespace ccsnet::fem {

struct TransientState {
  double time = 0.0;              // s
  Eigen::VectorXd displacement;   // (u_x, u_y) per node, m
  Eigen::VectorXd pressure;       // per node, Pa
};

struct TransientOptions {
  /// Multiplier on the pressure-projection parameter tau = 1/(2G).
  double stabilization = 1.0;
  std::optional<TransientState> initial;
};

/// Monolithic backward-Euler integrator for quasi-static Biot consolidation
/// with incompressible constituents, equal-order bilinear displacement and
/// pressure, and element-wise pressure-projection stabilization:
///
///   K u - Q p                 = f
///   Q^T du + dt H p + S dp    = -dt F
///
/// where H is the Darcy conductivity (q = -(k/mu) grad p), S the projection
/// term and F the prescribed boundary flux. The pressure unknown is scaled
/// internally by a reference modulus so that both blocks have comparable
/// magnitude for the LU factorization, which is computed once.
class BiotStepper {
 public:
  BiotStepper(const Mesh& mesh, const std::vector<std::uint8_t>& element_classes,
              const geom::MaterialRegistry& registry, const BoundaryConditions& bcs, double dt,
              const TransientOptions& options = {})
      : nu_(2 * mesh.num_nodes()), np_(mesh.num_nodes()), dt_(dt) {
    if (!(dt > 0.0)) throw ArgumentError("time step must be positive");
    detail::check_classes(mesh, element_classes);
    bcs.validate(mesh);
    const auto n = static_cast<Eigen::Index>(nu_ + np_);

    std::vector<Triplet> t;
    external_ = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd fu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nu_));
    detail::assemble_elastic_block(mesh, element_classes, registry, bcs, t, fu);
    external_.head(static_cast<Eigen::Index>(nu_)) = fu;

    scale_ = 0.0;
    for (const auto c : element_classes) scale_ = std::max(scale_, 2.0 * registry.get(c).shear_modulus());

    std::vector<Triplet> qt, st;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
      const auto xy = element_coords(mesh, e);
      const auto& m = registry.get(element_classes[e]);
      const auto q = element_coupling(xy);
      const auto h = element_conductivity(xy, m.mobility());
      const auto s = element_projection_stabilization(xy, options.stabilization / (2.0 * m.shear_modulus()));
      const auto& el = mesh.elements[e];
      for (int j = 0; j < 4; ++j) {
        const int pj = el[j];
        for (int a = 0; a < 8; ++a) {
          const int ua = 2 * el[a / 2] + a % 2;
          const double v = -scale_ * q(a, j);
          t.emplace_back(ua, static_cast<int>(nu_) + pj, v);
          t.emplace_back(static_cast<int>(nu_) + pj, ua, v);
          qt.emplace_back(pj, ua, scale_ * q(a, j));
        }
        for (int i = 0; i < 4; ++i) {
          const int pi = el[i];
          const double pp = scale_ * scale_ * (dt * h(i, j) + s(i, j));
          t.emplace_back(static_cast<int>(nu_) + pi, static_cast<int>(nu_) + pj, -pp);
          st.emplace_back(pi, pj, scale_ * scale_ * s(i, j));
        }
      }
    }
    coupling_t_.resize(static_cast<Eigen::Index>(np_), static_cast<Eigen::Index>(nu_));
    coupling_t_.setFromTriplets(qt.begin(), qt.end());
    stabilization_.resize(static_cast<Eigen::Index>(np_), static_cast<Eigen::Index>(np_));
    stabilization_.setFromTriplets(st.begin(), st.end());

    for (const auto& seg : bcs.flux)
      for (const auto& edge : seg.edges) {
        const auto f = edge_traction_load(mesh, edge, {seg.flux, 0.0});
        external_[static_cast<Eigen::Index>(nu_) + edge.n0] += scale_ * dt * f[0];
        external_[static_cast<Eigen::Index>(nu_) + edge.n1] += scale_ * dt * f[2];
      }

    SparseSymmetric::Storage a0(n, n);
    a0.setFromTriplets(t.begin(), t.end());
    std::vector<int> dofs;
    std::vector<double> vals;
    for (const auto& c : bcs.displacement) {
      dofs.push_back(2 * c.node + c.component);
      vals.push_back(c.value);
    }
    for (const auto& c : bcs.pressure) {
      dofs.push_back(static_cast<int>(nu_) + c.node);
      vals.push_back(c.value / scale_);
    }
    elim_ = detail::eliminate(a0, dofs, vals);
    if (detail::rigid_null_space_dimension(mesh, bcs.displacement) > 0)
      throw SolverError("ill-posed configuration: displacement constraints leave rigid-body modes");
    matrix_ = elim_.matrix;
    lu_.compute(matrix_);
    if (lu_.info() != Eigen::Success)
      throw SolverError("ill-posed configuration: coupled system factorization failed");

    state_.time = 0.0;
    if (options.initial) {
      state_ = *options.initial;
      if (static_cast<std::size_t>(state_.displacement.size()) != nu_ ||
          static_cast<std::size_t>(state_.pressure.size()) != np_)
        throw DimensionError("initial state does not match the mesh");
    } else {
      state_.displacement = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nu_));
      state_.pressure = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np_));
    }
  }

  const TransientState& state() const { return state_; }
  double dt() const { return dt_; }

  void step() {
    Eigen::VectorXd rhs = external_;
    const Eigen::VectorXd p_scaled = state_.pressure / scale_;
    rhs.tail(static_cast<Eigen::Index>(np_)) -= coupling_t_ * state_.displacement + stabilization_ * p_scaled;
    const Eigen::VectorXd b = elim_.apply(rhs);
    const Eigen::VectorXd x = lu_.solve(b);
    if (lu_.info() != Eigen::Success || !x.allFinite())
      throw SolverError("ill-posed configuration: coupled solve failed");
    if (!checked_) {
      const double bn = b.norm();
      const double r = (matrix_ * x - b).norm();
      if (bn > 0.0 && !(r <= 1e-8 * bn))
        throw SolverError("ill-posed configuration: coupled solve residual " + std::to_string(r / bn));
      checked_ = true;
    }
    state_.displacement = x.head(static_cast<Eigen::Index>(nu_));
    state_.pressure = scale_ * x.tail(static_cast<Eigen::Index>(np_));
    state_.time += dt_;
  }

 private:
  std::size_t nu_;
  std::size_t np_;
  double dt_;
  double scale_ = 1.0;
  bool checked_ = false;
  Eigen::VectorXd external_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> coupling_t_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> stabilization_;
  detail::Elimination elim_;
  Eigen::SparseMatrix<double> matrix_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  TransientState state_;
};

/// Streams the initial state followed by n_steps backward-Euler states.
inline void run_transient(const Mesh& mesh, const std::vector<std::uint8_t>& element_classes,
                          const geom::MaterialRegistry& registry, const BoundaryConditions& bcs, double dt,
                          std::size_t n_steps, const std::function<void(const TransientState&)>& observer,
                          const TransientOptions& options = {}) {
  if (n_steps < 1) throw ArgumentError("transient run needs at least one step");
  BiotStepper stepper(mesh, element_classes, registry, bcs, dt, options);
  observer(stepper.state());
  for (std::size_t k = 0; k < n_steps; ++k) {
    stepper.step();
    observer(stepper.state());
  }
}

inline std::vector<TransientState> run_transient(const Mesh& mesh, const std::vector<std::uint8_t>& element_classes,
                                                 const geom::MaterialRegistry& registry,
                                                 const BoundaryConditions& bcs, double dt, std::size_t n_steps,
                                                 const TransientOptions& options = {}) {
  std::vector<TransientState> out;
  out.reserve(n_steps + 1);
  run_transient(mesh, element_classes, registry, bcs, dt, n_steps,
                [&](const TransientState& s) { out.push_back(s); }, options);
  return out;
}

}  // namespace ccsnet::fem
