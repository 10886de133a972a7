#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qpat/grid.hpp"

namespace qpat {

struct Shape {
  enum class Kind { Circle, Rectangle };
  Kind kind = Kind::Circle;
  // Circle: center (x0, y0), radius r. Rectangle: [x0, x1] x [y0, y1].
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0, r = 0.0;
  double mu = 0.1;
  double d = 1.0;

  bool contains(double x, double y) const;
  static Shape circle(double cx, double cy, double radius, double mu, double d);
  static Shape rectangle(double xa, double ya, double xb, double yb, double mu, double d);
};

/// Piecewise constant scene: background values plus shapes painted in order.
struct PhantomSpec {
  std::string name = "phantom";
  double mu0 = 0.05;
  double d0 = 0.125;
  double lower = 0.01;
  double upper = 3.0;
  double lx = 5.0;
  double ly = 5.0;
  std::vector<Shape> shapes;

  /// Throws ValidationError for values outside [lower, upper] or shapes leaving the domain.
  void validate() const;
};

struct Coefficients {
  CoefficientField mu;
  CoefficientField d;
};

/// Every cell takes the values of the last shape containing its center.
Coefficients rasterize(const PhantomSpec& spec, const Grid& grid);

/// Integer label per cell: 0 for background, k for the k-th shape (1-based)
/// whose paint ends up visible at the cell center.
std::vector<int> shape_labels(const PhantomSpec& spec, const Grid& grid);

/// Mean over factor x factor blocks of cells.
CellField downsample_average(const CellField& f, std::size_t factor);
/// Nodal input is averaged to cells first.
CellField downsample_average(const NodeField& f, std::size_t factor);

struct NoisySample {
  CellField clean;
  CellField noisy;
  double delta = 0.0;  // noise std as a fraction of the spatial mean of `clean`
  std::uint64_t seed = 0;
};

/// Adds i.i.d. N(0, (delta * mean(E))^2) noise; delta = 0 returns an exact copy.
NoisySample add_noise(const CellField& e, double delta, std::uint64_t seed);

PhantomSpec phantom_from_json(const std::string& text);
PhantomSpec load_phantom(const std::filesystem::path& path);
std::string phantom_to_json(const PhantomSpec& spec);

/// Circle scene used throughout the tests and shipped configs.
PhantomSpec example_phantom_a();
/// Rectangle scene.
PhantomSpec example_phantom_b();

/// Output of the data-generation protocol: simulate on the fine grid,
/// average down to the coarse grid, then add noise.
struct SimulatedData {
  Grid fine;
  Grid coarse;
  Coefficients truth;          // rasterized on the coarse grid
  Coefficients truth_average;  // fine rasterization averaged to the coarse grid
  NodeField boundary;          // g on the coarse grid
  NoisySample sample;
};

SimulatedData simulate_data(const PhantomSpec& spec, std::size_t fine_cells, std::size_t coarse_cells,
                            double delta, std::uint64_t seed, double illumination = 1.0);

}  // namespace qpat
