#include "qpat/phantom.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qpat/fem.hpp"

namespace qpat {

using nlohmann::json;

bool Shape::contains(double x, double y) const {
  if (kind == Kind::Circle) {
    const double dx = x - x0;
    const double dy = y - y0;
    return dx * dx + dy * dy <= r * r;
  }
  return x >= x0 && x <= x1 && y >= y0 && y <= y1;
}

Shape Shape::circle(double cx, double cy, double radius, double mu, double d) {
  Shape s;
  s.kind = Kind::Circle;
  s.x0 = cx;
  s.y0 = cy;
  s.r = radius;
  s.mu = mu;
  s.d = d;
  return s;
}

Shape Shape::rectangle(double xa, double ya, double xb, double yb, double mu, double d) {
  Shape s;
  s.kind = Kind::Rectangle;
  s.x0 = xa;
  s.y0 = ya;
  s.x1 = xb;
  s.y1 = yb;
  s.mu = mu;
  s.d = d;
  return s;
}

void PhantomSpec::validate() const {
  if (!(lower > 0.0) || !(lower < upper)) throw ValidationError("phantom bounds need 0 < lower < upper");
  auto in_bounds = [&](double v) { return v >= lower && v <= upper; };
  if (!in_bounds(mu0) || !in_bounds(d0)) throw ValidationError("background values outside bounds");
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const Shape& s = shapes[k];
    const std::string id = "shape " + std::to_string(k + 1);
    if (!in_bounds(s.mu) || !in_bounds(s.d)) throw ValidationError(id + ": values outside bounds");
    double xa, xb, ya, yb;
    if (s.kind == Shape::Kind::Circle) {
      if (!(s.r > 0.0)) throw ValidationError(id + ": radius must be positive");
      xa = s.x0 - s.r;
      xb = s.x0 + s.r;
      ya = s.y0 - s.r;
      yb = s.y0 + s.r;
    } else {
      xa = s.x0;
      xb = s.x1;
      ya = s.y0;
      yb = s.y1;
      if (!(xa < xb) || !(ya < yb)) throw ValidationError(id + ": empty rectangle");
    }
    if (xa < 0.0 || ya < 0.0 || xb > lx || yb > ly) throw ValidationError(id + ": outside the domain");
  }
}

std::vector<int> shape_labels(const PhantomSpec& spec, const Grid& grid) {
  spec.validate();
  std::vector<int> labels(grid.num_cells(), 0);
  for (std::size_t c = 0; c < grid.num_cells(); ++c) {
    const double x = grid.cell_x(grid.cell_i(c));
    const double y = grid.cell_y(grid.cell_j(c));
    for (std::size_t k = 0; k < spec.shapes.size(); ++k) {
      if (spec.shapes[k].contains(x, y)) labels[c] = static_cast<int>(k + 1);
    }
  }
  return labels;
}

Coefficients rasterize(const PhantomSpec& spec, const Grid& grid) {
  if (std::abs(grid.lx - spec.lx) > 1e-12 || std::abs(grid.ly - spec.ly) > 1e-12) {
    throw ValidationError("grid extents differ from the phantom domain");
  }
  const auto labels = shape_labels(spec, grid);
  Coefficients out{CoefficientField(grid, spec.mu0), CoefficientField(grid, spec.d0)};
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (labels[c] > 0) {
      const Shape& s = spec.shapes[static_cast<std::size_t>(labels[c] - 1)];
      out.mu[c] = s.mu;
      out.d[c] = s.d;
    }
  }
  return out;
}

CellField downsample_average(const CellField& f, std::size_t factor) {
  if (factor == 0) throw ValidationError("downsampling factor must be >= 1");
  const Grid& g = f.grid;
  if (g.cx() % factor != 0 || g.cy() % factor != 0) {
    throw ValidationError("cell counts are not divisible by the downsampling factor");
  }
  if (factor == 1) return f;
  const Grid coarse = Grid::with_cells(g.cx() / factor, g.cy() / factor, g.lx, g.ly);
  CellField out(coarse);
  const double w = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t j = 0; j < coarse.cy(); ++j) {
    for (std::size_t i = 0; i < coarse.cx(); ++i) {
      double s = 0.0;
      for (std::size_t b = 0; b < factor; ++b) {
        for (std::size_t a = 0; a < factor; ++a) s += f.at(i * factor + a, j * factor + b);
      }
      out.at(i, j) = s * w;
    }
  }
  return out;
}

CellField downsample_average(const NodeField& f, std::size_t factor) {
  return downsample_average(nodes_to_cells(f), factor);
}

NoisySample add_noise(const CellField& e, double delta, std::uint64_t seed) {
  if (!(delta >= 0.0)) throw ValidationError("noise level must be nonnegative");
  NoisySample out{e, e, delta, seed};
  if (delta == 0.0) return out;
  const double sd = delta * mean(e.span());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sd);
  for (double& v : out.noisy.values) v += normal(rng);
  return out;
}

namespace {

Shape shape_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const double mu = j.at("mu").get<double>();
  const double d = j.at("d").get<double>();
  if (kind == "circle") {
    const auto c = j.at("center").get<std::vector<double>>();
    if (c.size() != 2) throw ValidationError("circle center needs two coordinates");
    return Shape::circle(c[0], c[1], j.at("radius").get<double>(), mu, d);
  }
  if (kind == "rectangle") {
    const auto lo = j.at("min").get<std::vector<double>>();
    const auto hi = j.at("max").get<std::vector<double>>();
    if (lo.size() != 2 || hi.size() != 2) throw ValidationError("rectangle corners need two coordinates");
    return Shape::rectangle(lo[0], lo[1], hi[0], hi[1], mu, d);
  }
  throw ValidationError("unknown shape kind '" + kind + "'");
}

}  // namespace

PhantomSpec phantom_from_json(const std::string& text) {
  PhantomSpec spec;
  try {
    const json j = json::parse(text);
    spec.name = j.value("name", spec.name);
    const auto& bg = j.at("background");
    spec.mu0 = bg.at("mu").get<double>();
    spec.d0 = bg.at("d").get<double>();
    if (j.contains("bounds")) {
      const auto b = j.at("bounds").get<std::vector<double>>();
      if (b.size() != 2) throw ValidationError("bounds must be [lower, upper]");
      spec.lower = b[0];
      spec.upper = b[1];
    }
    if (j.contains("domain")) {
      const auto dom = j.at("domain").get<std::vector<double>>();
      if (dom.size() != 2) throw ValidationError("domain must be [lx, ly]");
      spec.lx = dom[0];
      spec.ly = dom[1];
    }
    for (const auto& s : j.value("shapes", json::array())) spec.shapes.push_back(shape_from_json(s));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("phantom config: ") + e.what());
  }
  spec.validate();
  return spec;
}

PhantomSpec load_phantom(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open phantom file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return phantom_from_json(ss.str());
}

std::string phantom_to_json(const PhantomSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["domain"] = {spec.lx, spec.ly};
  j["bounds"] = {spec.lower, spec.upper};
  j["background"] = {{"mu", spec.mu0}, {"d", spec.d0}};
  j["shapes"] = json::array();
  for (const Shape& s : spec.shapes) {
    if (s.kind == Shape::Kind::Circle) {
      j["shapes"].push_back({{"kind", "circle"}, {"center", {s.x0, s.y0}}, {"radius", s.r}, {"mu", s.mu}, {"d", s.d}});
    } else {
      j["shapes"].push_back(
          {{"kind", "rectangle"}, {"min", {s.x0, s.y0}}, {"max", {s.x1, s.y1}}, {"mu", s.mu}, {"d", s.d}});
    }
  }
  return j.dump(2);
}

PhantomSpec example_phantom_a() {
  PhantomSpec p;
  p.name = "A";
  p.mu0 = 0.05;
  p.d0 = 0.125;
  p.shapes = {
      Shape::circle(1.5, 3.5, 0.75, 0.1, 0.125),     // absorption only
      Shape::circle(3.5, 3.5, 0.7, 0.05, 0.25),      // diffusion only
      Shape::circle(1.5, 1.5, 0.7, 0.075, 0.0625),   // both
      Shape::circle(3.5, 1.5, 0.8, 0.025, 0.1875),   // both, with a nested inclusion
      Shape::circle(3.5, 1.5, 0.35, 0.125, 0.1875),  // absorption jump inside the previous disk
  };
  return p;
}

PhantomSpec example_phantom_b() {
  PhantomSpec p;
  p.name = "B";
  p.mu0 = 0.05;
  p.d0 = 0.125;
  p.shapes = {
      Shape::rectangle(0.75, 0.75, 2.25, 2.0, 0.1, 0.125),
      Shape::rectangle(2.75, 0.75, 4.25, 2.25, 0.05, 0.25),
      Shape::rectangle(0.75, 2.75, 2.0, 4.25, 0.025, 0.075),
      Shape::rectangle(2.5, 2.75, 4.25, 4.25, 0.075, 0.1875),
      Shape::rectangle(3.0, 3.25, 3.75, 3.75, 0.15, 0.1875),
  };
  return p;
}

SimulatedData simulate_data(const PhantomSpec& spec, std::size_t fine_cells, std::size_t coarse_cells,
                            double delta, std::uint64_t seed, double illumination) {
  if (coarse_cells == 0 || fine_cells % coarse_cells != 0) {
    throw ValidationError("fine grid size must be a multiple of the coarse grid size");
  }
  const std::size_t factor = fine_cells / coarse_cells;
  SimulatedData out;
  out.fine = Grid::with_cells(fine_cells, fine_cells, spec.lx, spec.ly);
  out.coarse = Grid::with_cells(coarse_cells, coarse_cells, spec.lx, spec.ly);
  const Coefficients fine_truth = rasterize(spec, out.fine);
  const NodeField u = solve_dirichlet(fine_truth.mu, fine_truth.d, boundary_field(out.fine, illumination));
  // Order matters: simulate, average, then add noise.
  const CellField e_coarse = downsample_average(absorbed_energy(fine_truth.mu, u), factor);
  out.truth = rasterize(spec, out.coarse);
  out.truth_average = {downsample_average(fine_truth.mu, factor), downsample_average(fine_truth.d, factor)};
  out.boundary = boundary_field(out.coarse, illumination);
  out.sample = add_noise(e_coarse, delta, seed);
  return out;
}

}  // namespace qpat
