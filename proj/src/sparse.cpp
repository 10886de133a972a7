#include "qpat/sparse.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <optional>

namespace qpat {

struct Factorization::Impl {
  std::optional<Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>> cholesky;
  std::optional<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu;

  Vector apply(const Vector& b) const {
    if (cholesky) return cholesky->solve(b);
    return lu->solve(b);
  }
};

Factorization::Factorization(SparseOperator op, SolveOptions opts)
    : op_(std::move(op)), opts_(opts), impl_(std::make_unique<Impl>()) {
  if (op_.matrix.rows() != op_.matrix.cols()) {
    throw SolverError("operator is not square", INFINITY);
  }
  op_.matrix.makeCompressed();
  if (op_.symmetric) {
    impl_->cholesky.emplace();
    impl_->cholesky->compute(op_.matrix);
    if (impl_->cholesky->info() != Eigen::Success || !(impl_->cholesky->vectorD().minCoeff() > 0.0)) {
      impl_->cholesky.reset();
    }
  }
  if (!impl_->cholesky) {
    impl_->lu.emplace();
    impl_->lu->analyzePattern(op_.matrix);
    impl_->lu->factorize(op_.matrix);
    if (impl_->lu->info() != Eigen::Success) {
      throw SolverError("sparse LU failed: operator is singular", INFINITY);
    }
  }
}

Factorization::~Factorization() = default;
Factorization::Factorization(Factorization&&) noexcept = default;
Factorization& Factorization::operator=(Factorization&&) noexcept = default;

Vector Factorization::solve(const Vector& rhs, SolveReport* report) const {
  const SparseMatrix& a = op_.matrix;
  if (rhs.size() != a.rows()) throw SolverError("rhs dimension mismatch", INFINITY);
  const double bnorm = rhs.norm();
  SolveReport rep;
  if (bnorm == 0.0) {
    if (report) *report = rep;
    return Vector::Zero(rhs.size());
  }

  Vector x = impl_->apply(rhs);
  Vector r = rhs - a * x;
  rep.relative_residual = r.norm() / bnorm;
  while (!(rep.relative_residual <= opts_.tol) && rep.refinements < opts_.max_refinements) {
    Vector dx = impl_->apply(r);
    if (!dx.allFinite()) break;
    x += dx;
    r = rhs - a * x;
    const double next = r.norm() / bnorm;
    ++rep.refinements;
    if (!(next < 0.5 * rep.relative_residual)) {
      rep.relative_residual = next;
      break;
    }
    rep.relative_residual = next;
  }

  if (!(rep.relative_residual <= opts_.tol)) {
    rep.used_iterative = true;
    Vector guess = x.allFinite() ? x : Vector::Zero(rhs.size());
    if (op_.symmetric) {
      Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                               Eigen::DiagonalPreconditioner<double>>
          cg(a);
      cg.setTolerance(opts_.tol);
      cg.setMaxIterations(opts_.max_iterations);
      x = cg.solveWithGuess(rhs, guess);
    } else {
      Eigen::BiCGSTAB<SparseMatrix, Eigen::DiagonalPreconditioner<double>> bicg(a);
      bicg.setTolerance(opts_.tol);
      bicg.setMaxIterations(opts_.max_iterations);
      x = bicg.solveWithGuess(rhs, guess);
    }
    rep.relative_residual = (rhs - a * x).norm() / bnorm;
    if (!(rep.relative_residual <= opts_.tol)) {
      throw SolverError("linear solve did not reach tolerance (relative residual " +
                            std::to_string(rep.relative_residual) + ")",
                        rep.relative_residual);
    }
  }
  if (report) *report = rep;
  return x;
}

Vector solve_sparse(const SparseOperator& op, const Vector& rhs, const SolveOptions& opts,
                    SolveReport* report) {
  return Factorization(op, opts).solve(rhs, report);
}

double asymmetry(const SparseMatrix& a) {
  const SparseMatrix at = a.transpose();
  const SparseMatrix diff = a - at;
  double dmax = 0.0;
  double amax = 0.0;
  for (int k = 0; k < diff.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(diff, k); it; ++it) dmax = std::max(dmax, std::abs(it.value()));
  }
  for (int k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) amax = std::max(amax, std::abs(it.value()));
  }
  return amax > 0.0 ? dmax / amax : 0.0;
}

}  // namespace qpat
