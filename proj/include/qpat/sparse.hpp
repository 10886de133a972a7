#pragma once

#include <Eigen/Sparse>

#include <memory>
#include <stdexcept>
#include <string>

namespace qpat {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

enum class BoundaryCondition { DirichletZero, Neumann };

/// Assembled linear operator together with the facts solvers rely on.
struct SparseOperator {
  SparseMatrix matrix;
  bool symmetric = false;
  BoundaryCondition bc = BoundaryCondition::Neumann;

  Eigen::Index dimension() const { return matrix.rows(); }
};

/// Breakdown, singularity or a residual above tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double achieved_residual)
      : std::runtime_error(what), residual(achieved_residual) {}
  double residual;
};

struct SolveOptions {
  double tol = 1e-10;  // on ||A x - b|| / ||b||
  int max_refinements = 4;
  int max_iterations = 20000;  // iterative fallback
};

struct SolveReport {
  double relative_residual = 0.0;
  int refinements = 0;
  bool used_iterative = false;
};

/// Reusable factorization of one operator.
///
/// Symmetric positive definite operators use a simplicial LDL^T with AMD
/// ordering; everything else (and symmetric operators with a nonpositive
/// pivot) uses supernodal LU with COLAMD ordering. Each solve is followed by
/// iterative refinement; if the tolerance is still not met a Krylov solver with
/// a Jacobi preconditioner takes over from the direct solution.
class Factorization {
 public:
  explicit Factorization(SparseOperator op, SolveOptions opts = {});
  ~Factorization();
  Factorization(Factorization&&) noexcept;
  Factorization& operator=(Factorization&&) noexcept;

  Vector solve(const Vector& rhs, SolveReport* report = nullptr) const;
  const SparseOperator& op() const { return op_; }

 private:
  struct Impl;
  SparseOperator op_;
  SolveOptions opts_;
  std::unique_ptr<Impl> impl_;
};

/// One-shot solve; throws SolverError when tolerance cannot be reached.
Vector solve_sparse(const SparseOperator& op, const Vector& rhs, const SolveOptions& opts = {},
                    SolveReport* report = nullptr);

/// max |A - A^T| relative to max |A|.
double asymmetry(const SparseMatrix& a);

}  // namespace qpat
