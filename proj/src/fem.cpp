#include "qpat/fem.hpp"

#include <cmath>
#include <string>

namespace qpat {

ElementMatrix element_stiffness(double hx, double hy) {
  // Local nodes counterclockwise from the bottom-left corner.
  static constexpr double ax[4][4] = {{2, -2, -1, 1}, {-2, 2, 1, -1}, {-1, 1, 2, -2}, {1, -1, -2, 2}};
  static constexpr double ay[4][4] = {{2, 1, -1, -2}, {1, 2, -2, -1}, {-1, -2, 2, 1}, {-2, -1, 1, 2}};
  const double wx = hy / (6.0 * hx);
  const double wy = hx / (6.0 * hy);
  ElementMatrix k{};
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) k[a][b] = wx * ax[a][b] + wy * ay[a][b];
  }
  return k;
}

ElementMatrix element_mass(double hx, double hy) {
  static constexpr double m[4][4] = {{4, 2, 1, 2}, {2, 4, 2, 1}, {1, 2, 4, 2}, {2, 1, 2, 4}};
  const double w = hx * hy / 36.0;
  ElementMatrix out{};
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) out[a][b] = w * m[a][b];
  }
  return out;
}

namespace {

void check_coefficients(const CoefficientField& mu, const CoefficientField& d) {
  require_same_grid(mu.grid, d.grid, "mu and D");
  for (std::size_t c = 0; c < mu.size(); ++c) {
    if (!std::isfinite(mu[c]) || mu[c] < 0.0) {
      throw ValidationError("absorption must be finite and nonnegative (cell " + std::to_string(c) + ")");
    }
    if (!std::isfinite(d[c]) || !(d[c] > 0.0)) {
      throw ValidationError("diffusion must be finite and positive (cell " + std::to_string(c) + ")");
    }
  }
}

SparseMatrix assemble_natural(const Grid& g, const CellField* mu, const CellField& d) {
  const auto ks = element_stiffness(g.hx(), g.hy());
  const auto km = element_mass(g.hx(), g.hy());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(g.num_cells() * 16);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const auto nodes = g.cell_nodes(c);
    const double dc = d[c];
    const double mc = mu ? (*mu)[c] : 0.0;
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        trips.emplace_back(static_cast<int>(nodes[a]), static_cast<int>(nodes[b]),
                           dc * ks[a][b] + mc * km[a][b]);
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  SparseMatrix k(n, n);
  k.setFromTriplets(trips.begin(), trips.end());
  return k;
}

SparseMatrix eliminate_boundary(const Grid& g, const SparseMatrix& k) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(k.nonZeros());
  for (int col = 0; col < k.outerSize(); ++col) {
    const bool col_b = g.is_boundary_node(col);
    for (SparseMatrix::InnerIterator it(k, col); it; ++it) {
      if (col_b || g.is_boundary_node(it.row())) continue;
      trips.emplace_back(it.row(), col, it.value());
    }
    if (col_b) trips.emplace_back(col, col, 1.0);
  }
  SparseMatrix out(k.rows(), k.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

SparseMatrix coupling(const NodeField& u, const ElementMatrix& local) {
  const Grid& g = u.grid;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(g.num_cells() * 4);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const auto nodes = g.cell_nodes(c);
    for (int a = 0; a < 4; ++a) {
      double s = 0.0;
      for (int b = 0; b < 4; ++b) s += local[a][b] * u[nodes[b]];
      trips.emplace_back(static_cast<int>(nodes[a]), static_cast<int>(c), s);
    }
  }
  SparseMatrix out(static_cast<Eigen::Index>(g.num_nodes()), static_cast<Eigen::Index>(g.num_cells()));
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

Vector dirichlet_rhs(const Grid& g, const SparseMatrix& natural, const NodeField& bc) {
  Vector lift = Vector::Zero(static_cast<Eigen::Index>(g.num_nodes()));
  for (std::size_t k = 0; k < g.num_nodes(); ++k) {
    if (g.is_boundary_node(k)) {
      if (!std::isfinite(bc[k])) throw ValidationError("boundary data must be finite");
      lift[static_cast<Eigen::Index>(k)] = bc[k];
    }
  }
  Vector rhs = -(natural * lift);
  for (std::size_t k = 0; k < g.num_nodes(); ++k) {
    if (g.is_boundary_node(k)) rhs[static_cast<Eigen::Index>(k)] = bc[k];
  }
  return rhs;
}

}  // namespace

SparseOperator assemble_operator(const CoefficientField& mu, const CoefficientField& d,
                                 BoundaryCondition bc) {
  check_coefficients(mu, d);
  SparseMatrix k = assemble_natural(mu.grid, &mu, d);
  if (bc == BoundaryCondition::DirichletZero) k = eliminate_boundary(mu.grid, k);
  k.makeCompressed();
  return SparseOperator{std::move(k), true, bc};
}

SparseOperator assemble_stiffness(const CellField& sigma) {
  SparseMatrix k = assemble_natural(sigma.grid, nullptr, sigma);
  k.makeCompressed();
  return SparseOperator{std::move(k), true, BoundaryCondition::Neumann};
}

NodeField lumped_mass(const Grid& g) {
  NodeField m(g);
  const double q = 0.25 * g.cell_area();
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    for (std::size_t k : g.cell_nodes(c)) m[k] += q;
  }
  return m;
}

SparseMatrix mass_coupling(const NodeField& u) {
  return coupling(u, element_mass(u.grid.hx(), u.grid.hy()));
}

SparseMatrix stiffness_coupling(const NodeField& u) {
  return coupling(u, element_stiffness(u.grid.hx(), u.grid.hy()));
}

NodeField solve_dirichlet(const CoefficientField& mu, const CoefficientField& d, const NodeField& g,
                          const SolveOptions& opts) {
  require_same_grid(mu.grid, g.grid, "coefficients and boundary data");
  return DiffusionModel(mu, d, g, opts).fluence();
}

CellField absorbed_energy(const CoefficientField& mu, const NodeField& u) {
  require_same_grid(mu.grid, u.grid, "mu and fluence");
  CellField e = nodes_to_cells(u);
  for (std::size_t c = 0; c < e.size(); ++c) e[c] *= mu[c];
  return e;
}

DiffusionModel::DiffusionModel(CoefficientField mu, CoefficientField d, NodeField g, SolveOptions opts)
    : mu_(std::move(mu)),
      d_(std::move(d)),
      g_(std::move(g)),
      factor_([&] {
        check_coefficients(mu_, d_);
        require_same_grid(mu_.grid, g_.grid, "coefficients and boundary data");
        return Factorization(assemble_operator(mu_, d_, BoundaryCondition::DirichletZero), opts);
      }()) {
  const SparseMatrix natural = assemble_natural(mu_.grid, &mu_, d_);
  const Vector rhs = dirichlet_rhs(mu_.grid, natural, g_);
  u_ = NodeField(mu_.grid, to_std(factor_.solve(rhs)));
  // The identity rows reproduce g to rounding; pin it exactly.
  for (std::size_t k = 0; k < u_.size(); ++k) {
    if (u_.grid.is_boundary_node(k)) u_[k] = g_[k];
  }
}

Vector DiffusionModel::solve_zero_dirichlet(const Vector& load) const {
  Vector rhs = load;
  const Grid& g = grid();
  for (std::size_t k = 0; k < g.num_nodes(); ++k) {
    if (g.is_boundary_node(k)) rhs[static_cast<Eigen::Index>(k)] = 0.0;
  }
  Vector y = factor_.solve(rhs);
  for (std::size_t k = 0; k < g.num_nodes(); ++k) {
    if (g.is_boundary_node(k)) y[static_cast<Eigen::Index>(k)] = 0.0;
  }
  return y;
}

}  // namespace qpat
