#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "qpat/grid.hpp"

namespace qpat {

/// Per-pixel flags; a pixel is one cell of the data grid.
using PixelMask = std::vector<std::uint8_t>;

/// Detected jump set. `stage[c]` is 0 for no edge, k+1 if stage k flagged cell c.
struct EdgeMask {
  Grid grid;
  std::vector<std::uint8_t> stage;

  EdgeMask() = default;
  explicit EdgeMask(const Grid& g) : grid(g), stage(g.num_cells(), 0) {}

  bool flagged(std::size_t c) const { return stage[c] != 0; }
  std::size_t count() const;
  PixelMask flags() const;
  /// 0/1 image for the CSV writer.
  CellField as_field() const;
  static EdgeMask from_flags(const Grid& g, const PixelMask& flags, std::uint8_t tag = 1);
};

/// Sampled Gaussian filter on a square (2 rho + 1)^2 window with rho = 2 ceil(sigma).
///
/// sigma and rho are in pixels. Taps are normalized so that the smoothing
/// kernel sums to one, the gradient kernels differentiate linear functions
/// exactly and the Laplacian kernel maps x^2 + y^2 to 4 while annihilating
/// constants. Derivative taps are scaled by the pixel size, so convolution
/// returns derivatives in physical units.
struct Kernel {
  enum class Kind { Smooth, GradientX, GradientY, Laplacian };
  Kind kind = Kind::Smooth;
  double sigma = 1.0;
  int radius = 2;
  std::vector<double> taps;  // row-major, offset (a, b) at (b + radius) * side + (a + radius)

  int side() const { return 2 * radius + 1; }
  double tap(int a, int b) const { return taps[static_cast<std::size_t>((b + radius) * side() + (a + radius))]; }
  double sum() const;

  static Kernel make(Kind kind, double sigma, double pixel = 1.0);
};

struct MaskedImage {
  CellField values;
  PixelMask valid;  // 1 where the whole window lay inside the input's valid region

  std::size_t valid_count() const;
};

/// Convolution restricted to the erosion of `valid` by the kernel window.
/// Outside the domain counts as invalid.
MaskedImage convolve_masked(const CellField& f, const Kernel& k, const PixelMask& valid);

/// |grad f| in per-pixel units: central differences where both neighbors are
/// valid, one-sided where only one is, zero along an axis with neither.
CellField gradient_magnitude(const CellField& f, const PixelMask& valid);

struct EdgeParams {
  std::array<double, 3> sigma{0.5, 0.5, 0.5};
  std::array<double, 3> xi{0.1, 0.1, 0.1};
  double gamma = 1e-4;  // floor for |grad E|^2 before the logarithm (stage 1)
  std::array<bool, 3> stages{true, true, true};
  double log_floor = 1e-300;  // floor before the logarithm in stages 0 and 2

  void validate() const;
};

enum class EdgeStage { Value = 0, Gradient = 1, Laplacian = 2 };

struct StageOutput {
  CellField transformed;  // f_k on its valid region, 0 elsewhere
  PixelMask valid;
  PixelMask edges;
};

/// One detection stage on the data image: filter, log-transform, threshold |grad f_k| >= xi.
StageOutput detect_stage(const CellField& data, EdgeStage stage, double sigma, double xi,
                         const PixelMask& valid, const EdgeParams& params);

/// Staged detector: stage k only looks at pixels whose window avoids the
/// domain boundary and every edge found by the stages before it.
EdgeMask detect_edges(const CellField& data, const EdgeParams& params);

/// Presets for the three noise regimes of the circle scene.
EdgeParams edge_params_noise_free();
EdgeParams edge_params_low_noise();
EdgeParams edge_params_high_noise();
/// The same for the rectangle scene.
EdgeParams edge_params_rectangles_noise_free();
EdgeParams edge_params_rectangles_low_noise();
EdgeParams edge_params_rectangles_high_noise();

/// Grows a mask by `steps` pixels (8-neighborhood).
PixelMask dilate(const Grid& g, const PixelMask& m, int steps = 1);

/// Pixels whose 4-neighbor carries a different value in any of the given fields.
PixelMask jump_pixels(const std::vector<const CellField*>& fields);

/// Fraction of `target` pixels within Euclidean distance `radius` of a `reference` pixel.
double fraction_within(const Grid& g, const PixelMask& target, const PixelMask& reference, double radius);

}  // namespace qpat
