#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qpat/edge_detect.hpp"
#include "qpat/fem.hpp"
#include "qpat/grid.hpp"

namespace qpat {

// Ambrosio-Tortorelli approximation of the Mumford-Shah functional for
// (mu, D) and its minimization by alternating Gauss-Newton / phase-field
// updates.
//
// Discretization:
//   * mu, D constant per cell; E(mu, D) = mu * (cell mean of u), compared to
//     the data image with midpoint quadrature.
//   * |grad mu|^2 uses differences across interior cell faces; a face's
//     phase-field weight is the mean of v^2 at its two end nodes.
//   * v lives on nodes; its length term uses the Q1 stiffness matrix and the
//     lumped mass.
// Every piece of F_eps is a closed-form quadratic in whichever block is being
// updated, so the v-update is an exact minimizer and the Gauss-Newton step is
// the exact minimizer of the linearized model.

struct Hyperparams {
  double alpha_mu = 1e-2;
  double alpha_d = 1e-4;
  double beta_mu = 1e-6;
  double beta_d = 1e-8;
  double zeta_mu = 1e-6;
  double zeta_d = 1e-4;
  double epsilon = 0.01;
  double lower = 0.01;
  double upper = 3.0;
  double outer_tol = 1e-4;  // relative change of F_eps per outer iteration
  double inner_tol = 1e-2;  // relative change of F_eps per Gauss-Newton step
  int max_outer = 60;
  int max_inner = 20;
  bool backtracking = true;
  int max_backtracks = 10;
  bool log_parameters = false;
  double divergence_factor = 10.0;
  double block_tol = 1e-8;  // relative residual of the coupled Gauss-Newton system

  void validate() const;

  static Hyperparams circles_noise_free();
  static Hyperparams circles_low_noise();
  static Hyperparams circles_high_noise();
  static Hyperparams rectangles_noise_free();
  static Hyperparams rectangles_low_noise();
  static Hyperparams rectangles_high_noise();
};

struct FunctionalTerms {
  double discrepancy = 0.0;
  double smooth_mu = 0.0;
  double smooth_d = 0.0;
  double length_mu = 0.0;
  double length_d = 0.0;

  double total() const { return discrepancy + smooth_mu + smooth_d + length_mu + length_d; }
};

/// Data of one reconstruction: the (noisy) absorbed-energy image and the
/// illumination on the boundary nodes of the same grid.
struct ReconProblem {
  CellField data;
  NodeField boundary;
};

struct ATState {
  CoefficientField mu;
  CoefficientField d;
  NodeField v_mu;
  NodeField v_d;
  NodeField u;  // fluence of (mu, D)
  FunctionalTerms terms;
};

/// Interior face between two neighboring cells.
struct Face {
  std::size_t cell_a, cell_b;  // cell_b is the right/upper neighbor
  std::size_t node_a, node_b;  // end points of the shared grid edge
  double weight;               // edge length / center distance
};

std::vector<Face> interior_faces(const Grid& g);

/// Cell-based weighted Laplacian sum_f w_f sigma_f (x_a - x_b)^2 / 2 -> matrix,
/// with sigma_f = mean(v^2 at face ends) + zeta. Natural boundary conditions.
SparseMatrix face_laplacian(const Grid& g, const NodeField& v, double zeta);

/// Terms of F_eps; `u` must be the fluence of (mu, D).
FunctionalTerms evaluate_terms(const CoefficientField& mu, const CoefficientField& d, const NodeField& u,
                               const NodeField& v_mu, const NodeField& v_d, const Hyperparams& hp,
                               const CellField& data);

/// Recomputes the fluence and the breakdown of a state.
void refresh(ATState& state, const Hyperparams& hp, const ReconProblem& problem);

/// E'(mu, D)(s_mu, s_D) = s_mu u + mu y with L y = -s_mu u + div(s_D grad u), y = 0 on the boundary.
CellField apply_derivative(const DiffusionModel& model, const CellField& s_mu, const CellField& s_d);

struct ParameterPair {
  CellField mu;
  CellField d;
};

/// Adjoint of apply_derivative for the cell-area weighted inner products.
ParameterPair apply_adjoint(const DiffusionModel& model, const CellField& t);

struct GaussNewtonStep {
  CellField s_mu;
  CellField s_d;
  double block_residual = 0.0;  // ||A x - b|| / ||b|| of the coupled system
};

/// Solves the five-block system (s_mu, s_D, y1, y2, y3) for the minimizer of
/// the linearized functional at fixed (v_mu, v_D). With `hp.log_parameters`
/// the returned step is in log(mu), log(D).
GaussNewtonStep gauss_newton_step(const DiffusionModel& model, const NodeField& v_mu, const NodeField& v_d,
                                  const Hyperparams& hp, const CellField& data);

/// The coupled operator and right-hand side, exposed for verification.
struct GaussNewtonSystem {
  SparseMatrix matrix;
  Vector rhs;
  std::size_t cells = 0;
  std::size_t nodes = 0;
};
GaussNewtonSystem assemble_gauss_newton(const DiffusionModel& model, const NodeField& v_mu, const NodeField& v_d,
                                        const Hyperparams& hp, const CellField& data);

/// clamp(f, lower, upper) element-wise.
CellField project_box(const CellField& f, double lower, double upper);

/// Exact minimizer of F_eps over (v_mu, v_D) at fixed (mu, D), clamped to [0, 1].
std::pair<NodeField, NodeField> update_v(const CoefficientField& mu, const CoefficientField& d,
                                         const Hyperparams& hp);

/// Phase field 1 - 1_K: nodes touching a flagged pixel get 0.
NodeField phase_field_from_edges(const EdgeMask& edges);

struct IterationRecord {
  int outer = 0;
  int inner = 0;         // 0 for phase-field updates and the initial record
  std::string kind;      // "init", "gn" or "v"
  FunctionalTerms terms;
  double step_norm_mu = 0.0;
  double step_norm_d = 0.0;
  int backtracks = 0;
  double block_residual = 0.0;

  std::string to_json_line() const;
};

struct MinimizeResult {
  ATState state;
  std::vector<IterationRecord> log;
  int outer_iterations = 0;
  bool converged = false;
};

/// Raised when F_eps exceeds divergence_factor times its initial value.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<IterationRecord> records)
      : std::runtime_error(what), log(std::move(records)) {}
  std::vector<IterationRecord> log;
};

/// Alternating minimization starting from mu = D = 1 and v = 1 - 1_K.
MinimizeResult minimize(const ReconProblem& problem, const Hyperparams& hp, const EdgeMask& initial_edges,
                        const std::function<void(const IterationRecord&)>& on_record = {});

}  // namespace qpat
