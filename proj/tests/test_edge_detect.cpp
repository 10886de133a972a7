#include <doctest.h>

#include <cmath>

#include "qpat/edge_detect.hpp"
#include "qpat/phantom.hpp"
#include "support.hpp"

using namespace qpat;

namespace {

// 1 inside the disk, 2 outside.
CellField disk_step(const Grid& g, double cx, double cy, double r) {
  CellField f(g, 2.0);
  for (std::size_t c = 0; c < f.size(); ++c) {
    const double x = g.cell_x(g.cell_i(c)) - cx;
    const double y = g.cell_y(g.cell_j(c)) - cy;
    if (x * x + y * y <= r * r) f[c] = 1.0;
  }
  return f;
}

std::size_t count(const PixelMask& m) {
  std::size_t n = 0;
  for (auto v : m) n += v != 0;
  return n;
}

// Pixels flagged in `m` at distance more than `radius` from every `ref` pixel.
std::size_t outside(const Grid& g, const PixelMask& m, const PixelMask& ref, double radius) {
  const double frac = fraction_within(g, m, ref, radius);
  return static_cast<std::size_t>(std::lround((1.0 - frac) * static_cast<double>(count(m))));
}

}  // namespace

TEST_SUITE("edge_detect") {

TEST_CASE("kernel normalization") {
  for (double sigma : {0.5, 1.0, 1.5, 2.4}) {
    const Kernel s = Kernel::make(Kernel::Kind::Smooth, sigma);
    const Kernel gx = Kernel::make(Kernel::Kind::GradientX, sigma);
    const Kernel gy = Kernel::make(Kernel::Kind::GradientY, sigma);
    const Kernel lap = Kernel::make(Kernel::Kind::Laplacian, sigma);
    const int rho = 2 * static_cast<int>(std::ceil(sigma));
    CHECK(s.radius == rho);
    CHECK(s.side() == 2 * rho + 1);
    CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(gx.sum()) < 1e-14);
    CHECK(std::abs(gy.sum()) < 1e-14);
    CHECK(std::abs(lap.sum()) < 1e-12);
    // Unit slope and x^2 + y^2 -> 4, applied as correlation-with-flip at the center.
    double slope = 0.0, quad = 0.0;
    for (int b = -rho; b <= rho; ++b) {
      for (int a = -rho; a <= rho; ++a) {
        slope += gx.tap(a, b) * static_cast<double>(-a);
        quad += lap.tap(a, b) * static_cast<double>(a * a + b * b);
      }
    }
    CHECK(slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(quad == doctest::Approx(4.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(Kernel::make(Kernel::Kind::Smooth, 0.0), ValidationError);
}

TEST_CASE("masked convolution") {
  const Grid g = Grid::with_cells(20, 20);
  const PixelMask all(g.num_cells(), 1);
  SUBCASE("constant field is reproduced on the eroded region") {
    const MaskedImage out = convolve_masked(CellField(g, 3.0), Kernel::make(Kernel::Kind::Smooth, 1.0), all);
    CHECK(out.valid_count() == 16 * 16);
    for (std::size_t c = 0; c < out.values.size(); ++c) {
      if (out.valid[c]) CHECK(out.values[c] == doctest::Approx(3.0).epsilon(1e-14));
    }
  }
  SUBCASE("gradient of a ramp is its slope in physical units") {
    CellField ramp(g);
    for (std::size_t c = 0; c < ramp.size(); ++c) {
      ramp[c] = 2.0 * g.cell_x(g.cell_i(c)) - 3.0 * g.cell_y(g.cell_j(c)) + 1.0;
    }
    const auto gx = convolve_masked(ramp, Kernel::make(Kernel::Kind::GradientX, 1.5, g.hx()), all);
    const auto gy = convolve_masked(ramp, Kernel::make(Kernel::Kind::GradientY, 1.5, g.hx()), all);
    REQUIRE(gx.valid_count() > 0);
    for (std::size_t c = 0; c < ramp.size(); ++c) {
      if (!gx.valid[c]) continue;
      CHECK(std::abs(gx.values[c] - 2.0) < 1e-6);
      CHECK(std::abs(gy.values[c] + 3.0) < 1e-6);
    }
  }
  SUBCASE("output is valid exactly where the window fits in the valid region") {
    PixelMask valid = all;
    for (std::size_t c : {45UL, 210UL, 213UL, 399UL}) valid[c] = 0;
    const Kernel k = Kernel::make(Kernel::Kind::Smooth, 0.5);
    const MaskedImage out = convolve_masked(test::random_cells(g, 0.0, 1.0, 1), k, valid);
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      const long i = static_cast<long>(g.cell_i(c)), j = static_cast<long>(g.cell_j(c));
      bool fits = true;
      for (long b = -k.radius; b <= k.radius; ++b) {
        for (long a = -k.radius; a <= k.radius; ++a) {
          const long ii = i + a, jj = j + b;
          if (ii < 0 || jj < 0 || ii >= 20 || jj >= 20 || !valid[static_cast<std::size_t>(jj * 20 + ii)]) fits = false;
        }
      }
      CHECK(static_cast<bool>(out.valid[c]) == fits);
    }
  }
  SUBCASE("degenerate erosion leaves nothing valid") {
    PixelMask valid(g.num_cells(), 0);
    for (std::size_t j = 8; j < 11; ++j)
      for (std::size_t i = 8; i < 11; ++i) valid[g.cell(i, j)] = 1;
    const MaskedImage out = convolve_masked(CellField(g, 1.0), Kernel::make(Kernel::Kind::Smooth, 1.0), valid);
    CHECK(out.valid_count() == 0);
  }
  SUBCASE("kernel larger than the image") {
    CHECK_THROWS_AS(convolve_masked(CellField(Grid::with_cells(6, 6), 1.0), Kernel::make(Kernel::Kind::Smooth, 2.0), PixelMask(36, 1)),
                    ValidationError);
  }
}

TEST_CASE("gradient magnitude uses central and one-sided differences") {
  // Rows are identical, so only the x differences contribute.
  const Grid g = Grid::with_cells(5, 3);
  CellField f(g);
  for (std::size_t c = 0; c < f.size(); ++c) {
    const double i = static_cast<double>(g.cell_i(c));
    f[c] = i * i;
  }
  const CellField m = gradient_magnitude(f, PixelMask(f.size(), 1));
  CHECK(m.at(0, 1) == 1.0);
  CHECK(m.at(2, 1) == 4.0);
  CHECK(m.at(4, 1) == 7.0);
  PixelMask holes(f.size(), 1);
  for (std::size_t j = 0; j < 3; ++j) holes[g.cell(2, j)] = 0;
  const CellField h = gradient_magnitude(f, holes);
  CHECK(h.at(1, 1) == 1.0);
  CHECK(h.at(2, 1) == 0.0);
  CHECK(h.at(3, 1) == 7.0);
}

TEST_CASE("single stage on simple fields") {
  const Grid g = Grid::with_cells(60, 60);
  const PixelMask all(g.num_cells(), 1);
  const EdgeParams p;
  for (auto stage : {EdgeStage::Value, EdgeStage::Gradient, EdgeStage::Laplacian}) {
    CHECK(count(detect_stage(CellField(g, 2.5), stage, 1.0, 1e-8, all, p).edges) == 0);
  }
  const CellField step = disk_step(g, 2.5, 2.5, 1.2);
  const PixelMask truth = jump_pixels({&step});
  const PixelMask band = detect_stage(step, EdgeStage::Value, 0.5, 0.1, all, p).edges;
  CHECK(fraction_within(g, truth, band, 2.0) >= 0.9);
  CHECK(outside(g, band, truth, 2.0) == 0);
  CHECK(count(detect_stage(step, EdgeStage::Value, 0.5, 1e300, all, p).edges) == 0);
}

TEST_CASE("nonpositive values are floored before the logarithm") {
  const Grid g = Grid::with_cells(30, 30);
  CellField f(g, 1.0);
  for (std::size_t c = 0; c < 300; ++c) f[c] = -1.0;
  const StageOutput out = detect_stage(f, EdgeStage::Value, 0.5, 0.1, PixelMask(f.size(), 1), EdgeParams{});
  for (std::size_t c = 0; c < f.size(); ++c) {
    if (out.valid[c]) CHECK(std::isfinite(out.transformed[c]));
  }
  CHECK(count(out.edges) > 0);
}

TEST_CASE("staged detector basics") {
  const Grid g = Grid::with_cells(40, 40);
  CHECK(detect_edges(CellField(g, 0.4), edge_params_noise_free()).count() == 0);
  EdgeParams bad = edge_params_noise_free();
  bad.xi[1] = 0.0;
  CHECK_THROWS_AS(detect_edges(CellField(g, 0.4), bad), ValidationError);
  bad = edge_params_noise_free();
  bad.gamma = 0.0;
  CHECK_THROWS_AS(detect_edges(CellField(g, 0.4), bad), ValidationError);
  // On a 17x17 image a rho = 8 window fits only at the center, which stage 0
  // edges then exclude.
  EdgeParams wide = edge_params_noise_free();
  wide.sigma = {0.5, 4.0, 4.0};
  const CellField small = disk_step(Grid::with_cells(17, 17), 2.5, 2.5, 1.0);
  CHECK(detect_stage(small, EdgeStage::Gradient, 4.0, 0.1, PixelMask(small.size(), 1), wide).valid[8 * 17 + 8] == 1);
  CHECK_THROWS_AS(detect_edges(small, wide), ValidationError);
}

TEST_CASE("noise-free phantom A: true jumps are covered") {
  const SimulatedData data = simulate_data(example_phantom_a(), 200, 100, 0.0, 1);
  const EdgeMask mask = detect_edges(data.sample.noisy, edge_params_noise_free());
  const PixelMask truth = jump_pixels({&data.truth.mu, &data.truth.d});
  CHECK(fraction_within(mask.grid, truth, mask.flags(), 2.0) >= 0.9);

  SUBCASE("later stages avoid the boundary and earlier edges") {
    const EdgeParams p = edge_params_noise_free();
    const Grid& gr = mask.grid;
    const long w = static_cast<long>(gr.cx());
    for (std::size_t c = 0; c < mask.stage.size(); ++c) {
      if (!mask.flagged(c)) continue;
      const int k = mask.stage[c] - 1;
      const long rho = 2 * static_cast<long>(std::ceil(p.sigma[static_cast<std::size_t>(k)]));
      const long i = static_cast<long>(gr.cell_i(c)), j = static_cast<long>(gr.cell_j(c));
      bool ok = i - rho >= 0 && j - rho >= 0 && i + rho < w && j + rho < w;
      for (long b = -rho; ok && b <= rho; ++b) {
        for (long a = -rho; ok && a <= rho; ++a) {
          const auto q = static_cast<std::size_t>((j + b) * w + (i + a));
          if (mask.stage[q] != 0 && mask.stage[q] - 1 < k) ok = false;
        }
      }
      CHECK(ok);
    }
  }
}

TEST_CASE("high noise, value stage only: D-only interfaces stay undetected") {
  const SimulatedData data = simulate_data(example_phantom_a(), 200, 100, 0.10, 1);
  const EdgeMask mask = detect_edges(data.sample.noisy, edge_params_high_noise());
  const Grid& g = mask.grid;
  const PixelMask mu_jumps = jump_pixels({&data.truth.mu});
  const PixelMask d_jumps = jump_pixels({&data.truth.d});
  // D jumps that are not next to an absorption jump.
  const PixelMask near_mu = dilate(g, mu_jumps, 3);
  PixelMask d_only(d_jumps.size(), 0);
  for (std::size_t c = 0; c < d_only.size(); ++c) d_only[c] = d_jumps[c] && !near_mu[c];
  REQUIRE(count(d_only) > 100);
  const PixelMask flags = mask.flags();
  CHECK(fraction_within(g, d_only, flags, 2.0) == 0.0);
  CHECK(fraction_within(g, mu_jumps, flags, 2.0) >= 0.9);
  for (auto s : mask.stage) CHECK(s <= 1);
}

TEST_CASE("detected band widens with scale and keeps the edge") {
  const Grid g = Grid::with_cells(80, 40);
  CellField f(g, 1.0);
  for (std::size_t c = 0; c < f.size(); ++c) {
    if (g.cell_i(c) >= 40) f[c] = 3.0;
  }
  const PixelMask all(f.size(), 1);
  std::size_t previous = 0;
  for (double sigma : {0.5, 1.0, 2.0, 3.0}) {
    const PixelMask e = detect_stage(f, EdgeStage::Value, sigma, 0.05, all, EdgeParams{}).edges;
    // Width along the middle row.
    std::size_t width = 0;
    for (std::size_t i = 0; i < 80; ++i) width += e[g.cell(i, 20)] != 0;
    CHECK(width > previous);
    CHECK((e[g.cell(39, 20)] != 0 || e[g.cell(40, 20)] != 0));
    previous = width;
  }
}

TEST_CASE("masks are invariant under scaling of the data") {
  const SimulatedData data = simulate_data(example_phantom_b(), 120, 60, 0.001, 3);
  for (EdgeParams p : {edge_params_noise_free(), edge_params_low_noise(), edge_params_rectangles_noise_free()}) {
    const double c = 7.3;
    CellField scaled = data.sample.noisy;
    for (double& v : scaled.values) v *= c;
    const EdgeMask a = detect_edges(data.sample.noisy, p);
    p.gamma *= c * c;
    const EdgeMask b = detect_edges(scaled, p);
    // Equal up to rounding of the threshold comparison.
    std::size_t differ = 0;
    for (std::size_t k = 0; k < a.stage.size(); ++k) differ += a.stage[k] != b.stage[k];
    CHECK(differ <= a.stage.size() / 10000);
  }
}

TEST_CASE("detection is deterministic") {
  const SimulatedData data = simulate_data(example_phantom_a(), 120, 60, 0.001, 3);
  CHECK(detect_edges(data.sample.noisy, edge_params_low_noise()).stage ==
        detect_edges(data.sample.noisy, edge_params_low_noise()).stage);
}

TEST_CASE("mask utilities") {
  const Grid g = Grid::with_cells(7, 7);
  PixelMask m(g.num_cells(), 0);
  m[g.cell(3, 3)] = 1;
  CHECK(count(dilate(g, m, 1)) == 9);
  CHECK(count(dilate(g, m, 2)) == 25);
  CellField f(g, 0.0);
  f.at(3, 3) = 1.0;
  CHECK(count(jump_pixels({&f})) == 5);
  PixelMask far(g.num_cells(), 0);
  far[g.cell(6, 3)] = 1;
  CHECK(fraction_within(g, far, m, 3.0) == 1.0);
  CHECK(fraction_within(g, far, m, 2.9) == 0.0);
}

}  // TEST_SUITE
