#include "qpat/at_ms.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace qpat {

void Hyperparams::validate() const {
  const double positive[] = {alpha_mu, alpha_d, beta_mu, beta_d, zeta_mu, zeta_d, epsilon, lower, upper,
                             outer_tol, inner_tol, divergence_factor, block_tol};
  for (double v : positive) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("hyperparameters must be positive and finite");
  }
  if (!(lower < upper)) throw ValidationError("box bounds need lower < upper");
  if (max_outer < 1 || max_inner < 1 || max_backtracks < 0) throw ValidationError("iteration limits must be positive");
}

Hyperparams Hyperparams::circles_noise_free() { return {}; }

Hyperparams Hyperparams::circles_low_noise() {
  Hyperparams hp;
  hp.alpha_d = 1e-5;
  hp.zeta_d = 1e-3;
  return hp;
}

Hyperparams Hyperparams::circles_high_noise() {
  Hyperparams hp;
  hp.alpha_mu = 1.0;
  hp.alpha_d = 5e-3;
  hp.beta_mu = 1e-5;
  hp.beta_d = 5e-6;
  hp.zeta_mu = 1e-5;
  hp.zeta_d = 1e-3;
  return hp;
}

Hyperparams Hyperparams::rectangles_noise_free() {
  Hyperparams hp;
  hp.zeta_d = 1e-5;
  return hp;
}

Hyperparams Hyperparams::rectangles_low_noise() {
  Hyperparams hp;
  hp.alpha_d = 1e-5;
  hp.zeta_d = 1e-3;
  return hp;
}

Hyperparams Hyperparams::rectangles_high_noise() {
  Hyperparams hp;
  hp.alpha_mu = 1.0;
  hp.alpha_d = 1e-3;
  hp.beta_mu = 1e-5;
  hp.beta_d = 1e-7;
  hp.zeta_mu = 1e-5;
  hp.zeta_d = 1e-3;
  return hp;
}

std::vector<Face> interior_faces(const Grid& g) {
  std::vector<Face> faces;
  faces.reserve(2 * g.num_cells());
  const double wx = g.hy() / g.hx();
  const double wy = g.hx() / g.hy();
  for (std::size_t j = 0; j < g.cy(); ++j) {
    for (std::size_t i = 0; i < g.cx(); ++i) {
      if (i + 1 < g.cx()) faces.push_back({g.cell(i, j), g.cell(i + 1, j), g.node(i + 1, j), g.node(i + 1, j + 1), wx});
      if (j + 1 < g.cy()) faces.push_back({g.cell(i, j), g.cell(i, j + 1), g.node(i, j + 1), g.node(i + 1, j + 1), wy});
    }
  }
  return faces;
}

namespace {

double face_sigma(const Face& f, const NodeField& v, double zeta) {
  return 0.5 * (v[f.node_a] * v[f.node_a] + v[f.node_b] * v[f.node_b]) + zeta;
}

double smooth_term(const std::vector<Face>& faces, const CellField& x, const NodeField& v, double alpha,
                   double zeta) {
  double s = 0.0;
  for (const Face& f : faces) {
    const double dx = x[f.cell_b] - x[f.cell_a];
    s += f.weight * face_sigma(f, v, zeta) * dx * dx;
  }
  return 0.5 * alpha * s;
}

double length_term(const SparseMatrix& stiff, const NodeField& mass, const NodeField& v, double beta,
                   double eps) {
  const auto vv = as_vector(v.values);
  const double grad = vv.dot(stiff * vv);
  double well = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) well += mass[k] * (v[k] - 1.0) * (v[k] - 1.0);
  return beta * (eps * grad + well / (4.0 * eps));
}

SparseMatrix unit_stiffness(const Grid& g) { return assemble_stiffness(CellField(g, 1.0)).matrix; }

Vector cell_mean_fluence(const DiffusionModel& m) {
  return as_vector(nodes_to_cells(m.fluence()).values);
}

}  // namespace

SparseMatrix face_laplacian(const Grid& g, const NodeField& v, double zeta) {
  std::vector<Eigen::Triplet<double>> trips;
  const auto faces = interior_faces(g);
  trips.reserve(4 * faces.size());
  for (const Face& f : faces) {
    const double w = f.weight * face_sigma(f, v, zeta);
    const int a = static_cast<int>(f.cell_a);
    const int b = static_cast<int>(f.cell_b);
    trips.emplace_back(a, a, w);
    trips.emplace_back(b, b, w);
    trips.emplace_back(a, b, -w);
    trips.emplace_back(b, a, -w);
  }
  const auto n = static_cast<Eigen::Index>(g.num_cells());
  SparseMatrix l(n, n);
  l.setFromTriplets(trips.begin(), trips.end());
  return l;
}

FunctionalTerms evaluate_terms(const CoefficientField& mu, const CoefficientField& d, const NodeField& u,
                               const NodeField& v_mu, const NodeField& v_d, const Hyperparams& hp,
                               const CellField& data) {
  const Grid& g = mu.grid;
  require_same_grid(g, data.grid, "state and data");
  FunctionalTerms t;
  const CellField e = absorbed_energy(mu, u);
  double s = 0.0;
  for (std::size_t c = 0; c < e.size(); ++c) s += (e[c] - data[c]) * (e[c] - data[c]);
  t.discrepancy = 0.5 * g.cell_area() * s;
  const auto faces = interior_faces(g);
  t.smooth_mu = smooth_term(faces, mu, v_mu, hp.alpha_mu, hp.zeta_mu);
  t.smooth_d = smooth_term(faces, d, v_d, hp.alpha_d, hp.zeta_d);
  const SparseMatrix stiff = unit_stiffness(g);
  const NodeField mass = lumped_mass(g);
  t.length_mu = length_term(stiff, mass, v_mu, hp.beta_mu, hp.epsilon);
  t.length_d = length_term(stiff, mass, v_d, hp.beta_d, hp.epsilon);
  return t;
}

void refresh(ATState& state, const Hyperparams& hp, const ReconProblem& problem) {
  state.u = solve_dirichlet(state.mu, state.d, problem.boundary);
  state.terms = evaluate_terms(state.mu, state.d, state.u, state.v_mu, state.v_d, hp, problem.data);
}

CellField apply_derivative(const DiffusionModel& model, const CellField& s_mu, const CellField& s_d) {
  const Grid& g = model.grid();
  require_same_grid(g, s_mu.grid, "step and model");
  require_same_grid(g, s_d.grid, "step and model");
  const SparseMatrix bm = mass_coupling(model.fluence());
  const SparseMatrix bd = stiffness_coupling(model.fluence());
  const Vector load = -(bm * as_vector(s_mu.values) + bd * as_vector(s_d.values));
  const Vector y = model.solve_zero_dirichlet(load);
  const CellField ybar = nodes_to_cells(NodeField(g, to_std(y)));
  const CellField ubar = nodes_to_cells(model.fluence());
  CellField out(g);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = s_mu[c] * ubar[c] + model.mu()[c] * ybar[c];
  return out;
}

ParameterPair apply_adjoint(const DiffusionModel& model, const CellField& t) {
  const Grid& g = model.grid();
  require_same_grid(g, t.grid, "residual and model");
  CellField weighted(g);
  for (std::size_t c = 0; c < t.size(); ++c) weighted[c] = model.mu()[c] * t[c];
  const NodeField load = spread_cells_to_nodes(weighted);
  const Vector y = model.solve_zero_dirichlet(as_vector(load.values));
  const SparseMatrix bm = mass_coupling(model.fluence());
  const SparseMatrix bd = stiffness_coupling(model.fluence());
  const Vector pm = bm.transpose() * y;
  const Vector pd = bd.transpose() * y;
  const CellField ubar = nodes_to_cells(model.fluence());
  ParameterPair out{CellField(g), CellField(g)};
  for (std::size_t c = 0; c < t.size(); ++c) {
    out.mu[c] = ubar[c] * t[c] - pm[static_cast<Eigen::Index>(c)];
    out.d[c] = -pd[static_cast<Eigen::Index>(c)];
  }
  return out;
}

GaussNewtonSystem assemble_gauss_newton(const DiffusionModel& model, const NodeField& v_mu, const NodeField& v_d,
                                        const Hyperparams& hp, const CellField& data) {
  const Grid& g = model.grid();
  require_same_grid(g, data.grid, "model and data");
  const std::size_t nc = g.num_cells();
  const std::size_t nn = g.num_nodes();
  const double area = g.cell_area();
  const int off_sd = static_cast<int>(nc);
  const int off_y1 = static_cast<int>(2 * nc);
  const int off_y2 = static_cast<int>(2 * nc + nn);
  const int off_y3 = static_cast<int>(2 * nc + 2 * nn);

  const CellField& mu = model.mu();
  const CellField& d = model.d();
  const Vector ubar = cell_mean_fluence(model);
  const SparseMatrix bm = mass_coupling(model.fluence());
  const SparseMatrix bd = stiffness_coupling(model.fluence());
  const SparseMatrix lm = face_laplacian(g, v_mu, hp.zeta_mu);
  const SparseMatrix ld = face_laplacian(g, v_d, hp.zeta_d);
  const SparseMatrix& k0 = model.dirichlet_operator().matrix;

  // Chain-rule factors for the log-parameter variant.
  Vector scale_mu = Vector::Ones(static_cast<Eigen::Index>(nc));
  Vector scale_d = Vector::Ones(static_cast<Eigen::Index>(nc));
  if (hp.log_parameters) {
    scale_mu = as_vector(mu.values);
    scale_d = as_vector(d.values);
  }
  auto smu = [&](std::size_t c) { return scale_mu[static_cast<Eigen::Index>(c)]; };
  auto sd = [&](std::size_t c) { return scale_d[static_cast<Eigen::Index>(c)]; };
  auto ub = [&](std::size_t c) { return ubar[static_cast<Eigen::Index>(c)]; };

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nc * 40 + nn * 40);

  // s_mu rows.
  for (std::size_t c = 0; c < nc; ++c) {
    const int row = static_cast<int>(c);
    trips.emplace_back(row, row, smu(c) * area * ub(c) * ub(c) * smu(c));
    const double couple = smu(c) * area * ub(c) * mu[c] * 0.25;
    for (std::size_t k : g.cell_nodes(c)) {
      if (g.is_boundary_node(k)) continue;
      trips.emplace_back(row, off_y1 + static_cast<int>(k), couple);
      trips.emplace_back(row, off_y2 + static_cast<int>(k), couple);
    }
  }
  for (int col = 0; col < lm.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(lm, col); it; ++it) {
      const auto r = static_cast<std::size_t>(it.row());
      trips.emplace_back(it.row(), col, smu(r) * hp.alpha_mu * it.value() * smu(static_cast<std::size_t>(col)));
    }
  }
  // s_D rows.
  for (int col = 0; col < ld.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(ld, col); it; ++it) {
      const auto r = static_cast<std::size_t>(it.row());
      trips.emplace_back(off_sd + it.row(), off_sd + col, sd(r) * hp.alpha_d * it.value() * sd(static_cast<std::size_t>(col)));
    }
  }
  // -B^T y3 in the s rows and B s in the y1 / y2 rows (interior nodes only).
  for (int c = 0; c < bm.outerSize(); ++c) {
    const auto cc = static_cast<std::size_t>(c);
    for (SparseMatrix::InnerIterator it(bm, c); it; ++it) {
      if (g.is_boundary_node(static_cast<std::size_t>(it.row()))) continue;
      trips.emplace_back(c, off_y3 + it.row(), -smu(cc) * it.value());
      trips.emplace_back(off_y1 + it.row(), c, it.value() * smu(cc));
    }
    for (SparseMatrix::InnerIterator it(bd, c); it; ++it) {
      if (g.is_boundary_node(static_cast<std::size_t>(it.row()))) continue;
      trips.emplace_back(off_sd + c, off_y3 + it.row(), -sd(cc) * it.value());
      trips.emplace_back(off_y1 + static_cast<int>(nn) + it.row(), off_sd + c, it.value() * sd(cc));
    }
  }
  // K0 on the diagonal of the three y blocks.
  for (int col = 0; col < k0.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(k0, col); it; ++it) {
      trips.emplace_back(off_y1 + it.row(), off_y1 + col, it.value());
      trips.emplace_back(off_y2 + it.row(), off_y2 + col, it.value());
      trips.emplace_back(off_y3 + it.row(), off_y3 + col, it.value());
    }
  }
  // y3 rows: -P^T diag(area mu) (ubar s_mu + mu P (y1 + y2)).
  for (std::size_t c = 0; c < nc; ++c) {
    const auto nodes = g.cell_nodes(c);
    const double w_s = area * mu[c] * ub(c) * 0.25 * smu(c);
    const double w_y = area * mu[c] * mu[c] * 0.0625;
    for (std::size_t k : nodes) {
      if (g.is_boundary_node(k)) continue;
      trips.emplace_back(off_y3 + static_cast<int>(k), static_cast<int>(c), -w_s);
      for (std::size_t l : nodes) {
        if (g.is_boundary_node(l)) continue;
        trips.emplace_back(off_y3 + static_cast<int>(k), off_y1 + static_cast<int>(l), -w_y);
        trips.emplace_back(off_y3 + static_cast<int>(k), off_y2 + static_cast<int>(l), -w_y);
      }
    }
  }

  GaussNewtonSystem sys;
  sys.cells = nc;
  sys.nodes = nn;
  const auto dim = static_cast<Eigen::Index>(2 * nc + 3 * nn);
  sys.matrix.resize(dim, dim);
  sys.matrix.setFromTriplets(trips.begin(), trips.end());
  sys.matrix.makeCompressed();

  // Right-hand side -(J^* (E - E^delta) + alpha L x), in the area-weighted inner product.
  const CellField e = model.energy();
  CellField residual(g);
  for (std::size_t c = 0; c < nc; ++c) residual[c] = area * (e[c] - data[c]);
  const ParameterPair grad = apply_adjoint(model, residual);
  const Vector reg_mu = hp.alpha_mu * (lm * as_vector(mu.values));
  const Vector reg_d = hp.alpha_d * (ld * as_vector(d.values));
  sys.rhs = Vector::Zero(dim);
  for (std::size_t c = 0; c < nc; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    sys.rhs[ci] = -smu(c) * (grad.mu[c] + reg_mu[ci]);
    sys.rhs[off_sd + ci] = -sd(c) * (grad.d[c] + reg_d[ci]);
  }
  return sys;
}

GaussNewtonStep gauss_newton_step(const DiffusionModel& model, const NodeField& v_mu, const NodeField& v_d,
                                  const Hyperparams& hp, const CellField& data) {
  GaussNewtonSystem sys = assemble_gauss_newton(model, v_mu, v_d, hp, data);
  SolveOptions opts;
  opts.tol = hp.block_tol;
  SolveReport report;
  const Vector x = solve_sparse(SparseOperator{std::move(sys.matrix), false, BoundaryCondition::Neumann},
                                sys.rhs, opts, &report);
  const Grid& g = model.grid();
  GaussNewtonStep step{CellField(g), CellField(g), report.relative_residual};
  for (std::size_t c = 0; c < sys.cells; ++c) {
    step.s_mu[c] = x[static_cast<Eigen::Index>(c)];
    step.s_d[c] = x[static_cast<Eigen::Index>(sys.cells + c)];
  }
  return step;
}

CellField project_box(const CellField& f, double lower, double upper) {
  if (!(lower < upper)) throw ValidationError("box bounds need lower < upper");
  CellField out = f;
  for (double& v : out.values) v = std::clamp(v, lower, upper);
  return out;
}

namespace {

NodeField solve_phase_field(const CoefficientField& x, double alpha, double beta, double eps,
                            const SparseMatrix& stiff, const NodeField& mass) {
  const Grid& g = x.grid;
  NodeField weight(g);
  for (const Face& f : interior_faces(g)) {
    const double dx = x[f.cell_b] - x[f.cell_a];
    const double half = 0.5 * f.weight * dx * dx;
    weight[f.node_a] += half;
    weight[f.node_b] += half;
  }
  SparseMatrix a = (2.0 * beta * eps) * stiff;
  Vector rhs(static_cast<Eigen::Index>(g.num_nodes()));
  for (std::size_t k = 0; k < g.num_nodes(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    a.coeffRef(ki, ki) += alpha * weight[k] + beta * mass[k] / (2.0 * eps);
    rhs[ki] = beta * mass[k] / (2.0 * eps);
  }
  const Vector v = solve_sparse(SparseOperator{std::move(a), true, BoundaryCondition::Neumann}, rhs);
  NodeField out(g, to_std(v));
  for (double& val : out.values) val = std::clamp(val, 0.0, 1.0);
  return out;
}

}  // namespace

std::pair<NodeField, NodeField> update_v(const CoefficientField& mu, const CoefficientField& d,
                                         const Hyperparams& hp) {
  require_same_grid(mu.grid, d.grid, "mu and D");
  const SparseMatrix stiff = unit_stiffness(mu.grid);
  const NodeField mass = lumped_mass(mu.grid);
  return {solve_phase_field(mu, hp.alpha_mu, hp.beta_mu, hp.epsilon, stiff, mass),
          solve_phase_field(d, hp.alpha_d, hp.beta_d, hp.epsilon, stiff, mass)};
}

NodeField phase_field_from_edges(const EdgeMask& edges) {
  const Grid& g = edges.grid;
  NodeField v(g, 1.0);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    if (!edges.flagged(c)) continue;
    for (std::size_t k : g.cell_nodes(c)) v[k] = 0.0;
  }
  return v;
}

std::string IterationRecord::to_json_line() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "{\"outer\":%d,\"inner\":%d,\"kind\":\"%s\",\"discrepancy\":%.17g,\"smooth_mu\":%.17g,"
                "\"smooth_d\":%.17g,\"length_mu\":%.17g,\"length_d\":%.17g,\"total\":%.17g,"
                "\"step_norm_mu\":%.17g,\"step_norm_d\":%.17g,\"backtracks\":%d,\"block_residual\":%.6g}",
                outer, inner, kind.c_str(), terms.discrepancy, terms.smooth_mu, terms.smooth_d, terms.length_mu,
                terms.length_d, terms.total(), step_norm_mu, step_norm_d, backtracks, block_residual);
  return buf;
}

namespace {

CellField apply_step(const CellField& x, const CellField& s, double t, bool log_params, double lo, double hi) {
  CellField out = x;
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double v = log_params ? x[c] * std::exp(t * s[c]) : x[c] + t * s[c];
    out[c] = std::clamp(v, lo, hi);
  }
  return out;
}

double relative_change(double before, double after) {
  const double scale = std::max(std::abs(before), 1e-300);
  return std::abs(before - after) / scale;
}

}  // namespace

MinimizeResult minimize(const ReconProblem& problem, const Hyperparams& hp, const EdgeMask& initial_edges,
                        const std::function<void(const IterationRecord&)>& on_record) {
  hp.validate();
  const Grid& g = problem.data.grid;
  require_same_grid(g, problem.boundary.grid, "data and boundary");
  require_same_grid(g, initial_edges.grid, "data and edges");

  MinimizeResult res;
  auto push = [&](IterationRecord rec) {
    if (on_record) on_record(rec);
    res.log.push_back(std::move(rec));
  };

  ATState& st = res.state;
  const double start = std::clamp(1.0, hp.lower, hp.upper);
  st.mu = CoefficientField(g, start);
  st.d = CoefficientField(g, start);
  st.v_mu = phase_field_from_edges(initial_edges);
  st.v_d = st.v_mu;

  auto model = std::make_unique<DiffusionModel>(st.mu, st.d, problem.boundary);
  st.u = model->fluence();
  st.terms = evaluate_terms(st.mu, st.d, st.u, st.v_mu, st.v_d, hp, problem.data);
  const double f_initial = st.terms.total();
  push({0, 0, "init", st.terms});

  auto check_divergence = [&] {
    if (st.terms.total() > hp.divergence_factor * f_initial) {
      throw DivergenceError("functional diverged", res.log);
    }
  };

  for (int outer = 1; outer <= hp.max_outer; ++outer) {
    res.outer_iterations = outer;
    const double f_outer = st.terms.total();

    for (int inner = 1; inner <= hp.max_inner; ++inner) {
      const double f_prev = st.terms.total();
      const GaussNewtonStep step = gauss_newton_step(*model, st.v_mu, st.v_d, hp, problem.data);

      double t = 1.0;
      int backtracks = 0;
      std::unique_ptr<DiffusionModel> trial;
      FunctionalTerms trial_terms;
      CellField mu_t, d_t;
      bool accepted = false;
      while (true) {
        mu_t = apply_step(st.mu, step.s_mu, t, hp.log_parameters, hp.lower, hp.upper);
        d_t = apply_step(st.d, step.s_d, t, hp.log_parameters, hp.lower, hp.upper);
        trial = std::make_unique<DiffusionModel>(mu_t, d_t, problem.boundary);
        trial_terms = evaluate_terms(mu_t, d_t, trial->fluence(), st.v_mu, st.v_d, hp, problem.data);
        if (!hp.backtracking || trial_terms.total() <= f_prev) {
          accepted = true;
          break;
        }
        if (backtracks >= hp.max_backtracks) break;
        t *= 0.5;
        ++backtracks;
      }
      if (!accepted) break;  // no descent along the Gauss-Newton direction

      double norm_mu = 0.0, norm_d = 0.0;
      for (std::size_t c = 0; c < mu_t.size(); ++c) {
        norm_mu += (mu_t[c] - st.mu[c]) * (mu_t[c] - st.mu[c]);
        norm_d += (d_t[c] - st.d[c]) * (d_t[c] - st.d[c]);
      }
      st.mu = std::move(mu_t);
      st.d = std::move(d_t);
      model = std::move(trial);
      st.u = model->fluence();
      st.terms = trial_terms;
      push({outer, inner, "gn", st.terms, std::sqrt(norm_mu), std::sqrt(norm_d), backtracks, step.block_residual});
      check_divergence();
      if (relative_change(f_prev, st.terms.total()) < hp.inner_tol) break;
    }

    auto [v_mu, v_d] = update_v(st.mu, st.d, hp);
    st.v_mu = std::move(v_mu);
    st.v_d = std::move(v_d);
    st.terms = evaluate_terms(st.mu, st.d, st.u, st.v_mu, st.v_d, hp, problem.data);
    push({outer, 0, "v", st.terms});
    check_divergence();

    if (relative_change(f_outer, st.terms.total()) < hp.outer_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace qpat
