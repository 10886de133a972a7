#pragma once

#include <array>

#include "qpat/grid.hpp"
#include "qpat/sparse.hpp"

namespace qpat {

// Bilinear (Q1) finite elements on the uniform grid. Coefficients are constant
// per cell, fields are nodal.

using ElementMatrix = std::array<std::array<double, 4>, 4>;

/// Exact Q1 stiffness matrix of a hx-by-hy rectangle (integral of grad phi_a . grad phi_b).
ElementMatrix element_stiffness(double hx, double hy);
/// Exact Q1 mass matrix of a hx-by-hy rectangle.
ElementMatrix element_mass(double hx, double hy);

/// Matrix of x -> -div(d grad x) + mu x.
///
/// Neumann leaves the natural assembly untouched. DirichletZero replaces every
/// boundary row and column by the identity, which keeps the operator symmetric.
SparseOperator assemble_operator(const CoefficientField& mu, const CoefficientField& d,
                                 BoundaryCondition bc);

/// Weighted Laplacian x -> -div(sigma grad x) on nodes with natural boundary conditions.
SparseOperator assemble_stiffness(const CellField& sigma);

/// Row sums of the consistent mass matrix (hx*hy times 1, 1/2 or 1/4).
NodeField lumped_mass(const Grid& g);

/// Column c holds the load of a unit coefficient on cell c acting on u,
/// i.e. M_c u (mass) or S_c u (stiffness). Boundary rows are kept.
SparseMatrix mass_coupling(const NodeField& u);
SparseMatrix stiffness_coupling(const NodeField& u);

/// Fluence with u = g on the boundary ring. Interior values of g are ignored.
NodeField solve_dirichlet(const CoefficientField& mu, const CoefficientField& d, const NodeField& g,
                          const SolveOptions& opts = {});

/// E = mu * u evaluated at cell midpoints (u averaged over the cell corners).
CellField absorbed_energy(const CoefficientField& mu, const NodeField& u);

/// Forward model with a cached factorization of the Dirichlet-zero operator,
/// for repeated linearized solves at one (mu, D).
class DiffusionModel {
 public:
  DiffusionModel(CoefficientField mu, CoefficientField d, NodeField g, SolveOptions opts = {});

  const Grid& grid() const { return mu_.grid; }
  const CoefficientField& mu() const { return mu_; }
  const CoefficientField& d() const { return d_; }
  const NodeField& boundary() const { return g_; }
  const NodeField& fluence() const { return u_; }
  CellField energy() const { return absorbed_energy(mu_, u_); }

  /// Solves L_{mu,D} y = load with y = 0 on the boundary; boundary entries of
  /// `load` are discarded.
  Vector solve_zero_dirichlet(const Vector& load) const;

  const SparseOperator& dirichlet_operator() const { return factor_.op(); }

 private:
  CoefficientField mu_;
  CoefficientField d_;
  NodeField g_;
  Factorization factor_;
  NodeField u_;
};

inline Eigen::Map<const Vector> as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace qpat
