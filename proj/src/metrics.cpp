#include "qpat/metrics.hpp"

#include <cmath>

#include "qpat/at_ms.hpp"

namespace qpat {

double relative_l2(const CellField& est, const CellField& truth) {
  require_same_grid(est.grid, truth.grid, "estimate and truth");
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < est.size(); ++c) {
    num += (est[c] - truth[c]) * (est[c] - truth[c]);
    den += truth[c] * truth[c];
  }
  if (!(den > 0.0)) throw ValidationError("relative error against a zero field");
  return std::sqrt(num / den);
}

double dice(const PixelMask& a, const PixelMask& b) {
  if (a.size() != b.size()) throw ValidationError("masks differ in size");
  std::size_t both = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    na += a[k] != 0;
    nb += b[k] != 0;
    both += a[k] != 0 && b[k] != 0;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<InclusionScore> inclusion_dice(const CellField& mu_est, const PhantomSpec& spec,
                                           const std::vector<int>& labels) {
  if (labels.size() != mu_est.size()) throw ValidationError("label image does not match the estimate");
  std::vector<InclusionScore> out;
  for (std::size_t k = 0; k < spec.shapes.size(); ++k) {
    const double mu = spec.shapes[k].mu;
    if (mu == spec.mu0) continue;
    const int label = static_cast<int>(k + 1);
    const double t = 0.5 * (mu + spec.mu0);
    PixelMask truth, est;
    for (std::size_t c = 0; c < labels.size(); ++c) {
      if (labels[c] != label && labels[c] != 0) continue;
      truth.push_back(labels[c] == label);
      est.push_back(mu > spec.mu0 ? mu_est[c] > t : mu_est[c] < t);
    }
    out.push_back({static_cast<int>(k), t, dice(truth, est)});
  }
  return out;
}

Profile diagonal_profile(const CellField& f, bool anti) {
  const Grid& g = f.grid;
  if (g.cx() != g.cy()) throw ValidationError("diagonal profiles need a square image");
  Profile p;
  const double step = std::hypot(g.hx(), g.hy());
  for (std::size_t k = 0; k < g.cx(); ++k) {
    const std::size_t j = anti ? g.cy() - 1 - k : k;
    p.t.push_back(static_cast<double>(k) * step);
    p.values.push_back(f.at(k, j));
  }
  return p;
}

double total_variation_outside(const CellField& f, const NodeField& v, double threshold) {
  require_same_grid(f.grid, v.grid, "field and phase field");
  double tv = 0.0;
  for (const Face& face : interior_faces(f.grid)) {
    if (v[face.node_a] < threshold || v[face.node_b] < threshold) continue;
    const bool x_neighbor = face.cell_b == face.cell_a + 1;
    const double length = x_neighbor ? f.grid.hy() : f.grid.hx();
    tv += length * std::abs(f[face.cell_b] - f[face.cell_a]);
  }
  return tv;
}

}  // namespace qpat
