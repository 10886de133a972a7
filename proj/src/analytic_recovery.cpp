#include "qpat/analytic_recovery.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <nlohmann/json.hpp>

namespace qpat {

namespace {

bool on_domain_boundary(const Grid& g, std::size_t i, std::size_t j) {
  return i == 0 || j == 0 || i + 1 == g.cx() || j + 1 == g.cy();
}

Partition build_partition(const Grid& g, std::vector<int> label, int regions) {
  Partition p{g, std::move(label), regions, std::vector<std::size_t>(static_cast<std::size_t>(regions), 0), {}};
  for (std::size_t j = 0; j < g.cy(); ++j) {
    for (std::size_t i = 0; i < g.cx(); ++i) {
      const std::size_t c = g.cell(i, j);
      const int m = p.label[c];
      if (on_domain_boundary(g, i, j)) ++p.boundary_contact[static_cast<std::size_t>(m)];
      const auto add = [&](std::size_t c2, int di, int dj) {
        const int n = p.label[c2];
        if (n == m) return;
        if (m < n) {
          p.interfaces[{m, n}].push_back({c, c2, di, dj});
        } else {
          p.interfaces[{n, m}].push_back({c2, c, -di, -dj});
        }
      };
      if (i + 1 < g.cx()) add(g.cell(i + 1, j), 1, 0);
      if (j + 1 < g.cy()) add(g.cell(i, j + 1), 0, 1);
    }
  }
  return p;
}

/// 4-connected components of cells with `member[c]` where `same(a, b)` holds.
template <class Same>
int label_components(const Grid& g, const std::vector<bool>& member, Same same, std::vector<int>& label) {
  label.assign(g.num_cells(), -1);
  int next = 0;
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < g.num_cells(); ++seed) {
    if (!member[seed] || label[seed] >= 0) continue;
    label[seed] = next;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t c = queue.front();
      queue.pop_front();
      const std::size_t i = g.cell_i(c), j = g.cell_j(c);
      const auto visit = [&](std::size_t c2) {
        if (member[c2] && label[c2] < 0 && same(c, c2)) {
          label[c2] = next;
          queue.push_back(c2);
        }
      };
      if (i > 0) visit(c - 1);
      if (i + 1 < g.cx()) visit(c + 1);
      if (j > 0) visit(c - g.cx());
      if (j + 1 < g.cy()) visit(c + g.cx());
    }
    ++next;
  }
  return next;
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

/// Interquartile range over |median|.
double relative_spread(std::vector<double> v, double med) {
  std::sort(v.begin(), v.end());
  return (quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25)) / std::abs(med);
}

bool step_cell(const Grid& g, std::size_t c, int di, int dj, int k, std::size_t& out) {
  const long i = static_cast<long>(g.cell_i(c)) + k * di;
  const long j = static_cast<long>(g.cell_j(c)) + k * dj;
  if (i < 0 || j < 0 || i >= static_cast<long>(g.cx()) || j >= static_cast<long>(g.cy())) return false;
  out = g.cell(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  return true;
}

}  // namespace

std::vector<int> Partition::neighbors(int m) const {
  std::vector<int> out;
  for (const auto& [key, faces] : interfaces) {
    if (key.first == m) out.push_back(key.second);
    if (key.second == m) out.push_back(key.first);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Partition segment(const EdgeMask& edges, std::size_t min_cells) {
  const Grid& g = edges.grid;
  std::vector<bool> member(g.num_cells());
  for (std::size_t c = 0; c < g.num_cells(); ++c) member[c] = !edges.flagged(c);
  std::vector<int> label;
  int regions = label_components(g, member, [](std::size_t, std::size_t) { return true; }, label);

  // Components below min_cells are dropped and regrown like edge cells.
  std::vector<std::size_t> size(static_cast<std::size_t>(regions), 0);
  for (int l : label) {
    if (l >= 0) ++size[static_cast<std::size_t>(l)];
  }
  std::vector<int> remap(static_cast<std::size_t>(regions), -1);
  int kept = 0;
  for (int l = 0; l < regions; ++l) {
    if (size[static_cast<std::size_t>(l)] >= min_cells) remap[static_cast<std::size_t>(l)] = kept++;
  }
  for (int& l : label) {
    if (l >= 0) l = remap[static_cast<std::size_t>(l)];
  }
  regions = kept;
  if (regions == 0) throw RecoveryError("no region outside the edge set is large enough");

  // Multi-source breadth-first growth into the edge cells.
  std::deque<std::size_t> queue;
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    if (label[c] >= 0) queue.push_back(c);
  }
  while (!queue.empty()) {
    const std::size_t c = queue.front();
    queue.pop_front();
    const std::size_t i = g.cell_i(c), j = g.cell_j(c);
    const auto visit = [&](std::size_t c2) {
      if (label[c2] < 0) {
        label[c2] = label[c];
        queue.push_back(c2);
      }
    };
    if (i > 0) visit(c - 1);
    if (i + 1 < g.cx()) visit(c + 1);
    if (j > 0) visit(c - g.cx());
    if (j + 1 < g.cy()) visit(c + g.cx());
  }
  return build_partition(g, std::move(label), regions);
}

Partition partition_from_labels(const Grid& g, const std::vector<int>& labels) {
  if (labels.size() != g.num_cells()) throw ValidationError("label image does not match the grid");
  std::vector<int> label;
  const int regions = label_components(g, std::vector<bool>(g.num_cells(), true),
                                       [&](std::size_t a, std::size_t b) { return labels[a] == labels[b]; }, label);
  return build_partition(g, std::move(label), regions);
}

RecoveryResult recover_mu(const CellField& e, const Partition& part, const NodeField& boundary,
                          Propagation order) {
  const Grid& g = part.grid;
  require_same_grid(g, e.grid, "data and partition");
  require_same_grid(g, boundary.grid, "boundary and partition");
  for (double v : e.values) {
    if (!(v > 0.0)) throw RecoveryError("absorbed energy must be positive");
  }

  RecoveryResult res;
  res.regions.resize(static_cast<std::size_t>(part.regions));
  res.anchor = static_cast<int>(std::max_element(part.boundary_contact.begin(), part.boundary_contact.end()) -
                                part.boundary_contact.begin());
  if (!part.touches_boundary(res.anchor)) throw RecoveryError("no region touches the domain boundary");

  // Anchor: E extrapolated linearly from the first two cells to the boundary, divided by g there.
  std::vector<double> samples;
  const int m0 = res.anchor;
  const auto boundary_sample = [&](std::size_t c1, std::size_t c2, std::size_t na, std::size_t nb) {
    if (part.label[c1] != m0 || part.label[c2] != m0) return;
    const double gb = 0.5 * (boundary[na] + boundary[nb]);
    if (!(gb > 0.0)) throw RecoveryError("boundary illumination must be positive on the anchor region");
    samples.push_back((1.5 * e[c1] - 0.5 * e[c2]) / gb);
  };
  const std::size_t cx = g.cx(), cy = g.cy();
  for (std::size_t j = 0; j < cy; ++j) {
    boundary_sample(g.cell(0, j), g.cell(1, j), g.node(0, j), g.node(0, j + 1));
    boundary_sample(g.cell(cx - 1, j), g.cell(cx - 2, j), g.node(cx, j), g.node(cx, j + 1));
  }
  for (std::size_t i = 0; i < cx; ++i) {
    boundary_sample(g.cell(i, 0), g.cell(i, 1), g.node(i, 0), g.node(i + 1, 0));
    boundary_sample(g.cell(i, cy - 1), g.cell(i, cy - 2), g.node(i, cy), g.node(i + 1, cy));
  }
  if (samples.empty()) throw RecoveryError("anchor region has no boundary samples");
  RegionEstimate& anchor = res.regions[static_cast<std::size_t>(m0)];
  anchor.mu = median_of(samples);
  anchor.mu_samples = samples.size();
  anchor.ratio_spread = relative_spread(samples, anchor.mu);

  // Interface ratio E_m / E_n at the interface, from cells 2 and 3 deep on each side.
  const auto interface_ratios = [&](int m, int n) {
    const auto key = std::make_pair(std::min(m, n), std::max(m, n));
    std::vector<double> r;
    const auto it = part.interfaces.find(key);
    if (it == part.interfaces.end()) return r;
    for (const InterfaceFace& f : it->second) {
      std::size_t a1, a2, b1, b2;
      if (!step_cell(g, f.cell_first, -f.di, -f.dj, 1, a1) || !step_cell(g, f.cell_first, -f.di, -f.dj, 2, a2) ||
          !step_cell(g, f.cell_second, f.di, f.dj, 1, b1) || !step_cell(g, f.cell_second, f.di, f.dj, 2, b2)) {
        continue;
      }
      if (part.label[a1] != key.first || part.label[a2] != key.first || part.label[b1] != key.second ||
          part.label[b2] != key.second) {
        continue;
      }
      const double ea = 2.5 * e[a1] - 1.5 * e[a2];
      const double eb = 2.5 * e[b1] - 1.5 * e[b2];
      const double ratio = ea / eb;  // mu_first / mu_second
      r.push_back(m == key.first ? ratio : 1.0 / ratio);
    }
    return r;
  };

  std::vector<bool> done(static_cast<std::size_t>(part.regions), false);
  done[static_cast<std::size_t>(m0)] = true;
  std::deque<int> work{m0};
  while (!work.empty()) {
    int m;
    if (order == Propagation::BreadthFirst) {
      m = work.front();
      work.pop_front();
    } else {
      m = work.back();
      work.pop_back();
    }
    for (int n : part.neighbors(m)) {
      if (done[static_cast<std::size_t>(n)]) continue;
      const std::vector<double> r = interface_ratios(m, n);  // mu_m / mu_n
      if (r.empty()) continue;
      const double ratio = median_of(r);
      if (!(ratio > 0.0)) throw RecoveryError("nonpositive interface ratio");
      RegionEstimate& est = res.regions[static_cast<std::size_t>(n)];
      est.mu = res.regions[static_cast<std::size_t>(m)].mu / ratio;
      est.parent = m;
      est.mu_samples = r.size();
      est.ratio_spread = relative_spread(r, ratio);
      done[static_cast<std::size_t>(n)] = true;
      work.push_back(n);
    }
  }
  for (int m = 0; m < part.regions; ++m) {
    if (!done[static_cast<std::size_t>(m)]) {
      throw RecoveryError("region " + std::to_string(m) + " is not reachable from the anchor region");
    }
  }
  return res;
}

void recover_d(const CellField& e, const Partition& part, RecoveryResult& result, int margin) {
  const Grid& g = part.grid;
  require_same_grid(g, e.grid, "data and partition");
  if (margin < 1) throw ValidationError("margin must be at least one cell");
  if (result.regions.size() != static_cast<std::size_t>(part.regions)) {
    throw ValidationError("recovery result does not match the partition");
  }
  const double hx2 = g.hx() * g.hx(), hy2 = g.hy() * g.hy();
  const long cx = static_cast<long>(g.cx()), cy = static_cast<long>(g.cy());
  std::vector<std::vector<double>> q(static_cast<std::size_t>(part.regions));
  for (long j = margin; j < cy - margin; ++j) {
    for (long i = margin; i < cx - margin; ++i) {
      const std::size_t c = g.cell(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      const int m = part.label[c];
      bool pure = true;
      for (long b = j - margin; b <= j + margin && pure; ++b) {
        for (long a = i - margin; a <= i + margin; ++a) {
          if (part.label[g.cell(static_cast<std::size_t>(a), static_cast<std::size_t>(b))] != m) {
            pure = false;
            break;
          }
        }
      }
      if (!pure) continue;
      const std::size_t sx = 1, sy = g.cx();
      const double lap = (e[c + sx] - 2.0 * e[c] + e[c - sx]) / hx2 + (e[c + sy] - 2.0 * e[c] + e[c - sy]) / hy2;
      q[static_cast<std::size_t>(m)].push_back(lap / e[c]);
    }
  }
  for (int m = 0; m < part.regions; ++m) {
    auto& samples = q[static_cast<std::size_t>(m)];
    RegionEstimate& est = result.regions[static_cast<std::size_t>(m)];
    if (samples.empty()) throw RecoveryError("region " + std::to_string(m) + " is too thin to sample Delta E / E");
    const double med = median_of(samples);
    if (!(med > 0.0)) {
      throw RecoveryError("region " + std::to_string(m) + ": Delta E / E median " + std::to_string(med) +
                          " is not positive (absorption near zero?)");
    }
    est.d = est.mu / med;
    est.d_samples = samples.size();
    est.laplace_spread = relative_spread(samples, med);
  }
}

RecoveryResult recover(const CellField& e, const Partition& part, const NodeField& boundary, Propagation order) {
  RecoveryResult r = recover_mu(e, part, boundary, order);
  recover_d(e, part, r);
  return r;
}

CellField region_field(const Partition& part, const RecoveryResult& r, bool diffusion) {
  CellField out(part.grid);
  for (std::size_t c = 0; c < out.size(); ++c) {
    const RegionEstimate& est = r.regions[static_cast<std::size_t>(part.label[c])];
    out[c] = diffusion ? est.d : est.mu;
  }
  return out;
}

std::string RecoveryResult::to_json() const {
  nlohmann::json j;
  j["regions"] = regions.size();
  j["anchor"] = anchor;
  auto& list = j["values"] = nlohmann::json::array();
  for (std::size_t m = 0; m < regions.size(); ++m) {
    const RegionEstimate& r = regions[m];
    list.push_back({{"region", m},
                    {"mu", r.mu},
                    {"d", r.d},
                    {"parent", r.parent},
                    {"mu_samples", r.mu_samples},
                    {"ratio_spread", r.ratio_spread},
                    {"d_samples", r.d_samples},
                    {"laplace_spread", r.laplace_spread}});
  }
  return j.dump(2);
}

}  // namespace qpat
