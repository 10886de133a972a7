#include "qpat/edge_detect.hpp"

#include <algorithm>
#include <cmath>

namespace qpat {

std::size_t EdgeMask::count() const {
  return static_cast<std::size_t>(std::count_if(stage.begin(), stage.end(), [](auto s) { return s != 0; }));
}

PixelMask EdgeMask::flags() const {
  PixelMask out(stage.size());
  for (std::size_t c = 0; c < stage.size(); ++c) out[c] = stage[c] != 0;
  return out;
}

CellField EdgeMask::as_field() const {
  CellField f(grid);
  for (std::size_t c = 0; c < stage.size(); ++c) f[c] = stage[c] != 0 ? 1.0 : 0.0;
  return f;
}

EdgeMask EdgeMask::from_flags(const Grid& g, const PixelMask& flags, std::uint8_t tag) {
  EdgeMask m(g);
  for (std::size_t c = 0; c < flags.size(); ++c) m.stage[c] = flags[c] ? tag : 0;
  return m;
}

double Kernel::sum() const {
  double s = 0.0;
  for (double t : taps) s += t;
  return s;
}

Kernel Kernel::make(Kind kind, double sigma, double pixel) {
  if (!(sigma > 0.0)) throw ValidationError("kernel scale must be positive");
  Kernel k;
  k.kind = kind;
  k.sigma = sigma;
  k.radius = 2 * static_cast<int>(std::ceil(sigma));
  const int r = k.radius;
  const double s2 = sigma * sigma;
  k.taps.assign(static_cast<std::size_t>(k.side() * k.side()), 0.0);
  auto idx = [&](int a, int b) { return static_cast<std::size_t>((b + r) * k.side() + (a + r)); };
  for (int b = -r; b <= r; ++b) {
    for (int a = -r; a <= r; ++a) {
      const double q2 = static_cast<double>(a * a + b * b);
      const double g = std::exp(-q2 / (2.0 * s2));
      double v = 0.0;
      switch (kind) {
        case Kind::Smooth: v = g; break;
        case Kind::GradientX: v = -a * g / s2; break;
        case Kind::GradientY: v = -b * g / s2; break;
        case Kind::Laplacian: v = (q2 / s2 - 2.0) * g / s2; break;
      }
      k.taps[idx(a, b)] = v;
    }
  }
  switch (kind) {
    case Kind::Smooth: {
      const double s = k.sum();
      for (double& t : k.taps) t /= s;
      break;
    }
    case Kind::GradientX:
    case Kind::GradientY: {
      // Antisymmetrize, then scale so that a unit ramp has unit slope.
      std::vector<double> anti(k.taps.size());
      double moment = 0.0;
      for (int b = -r; b <= r; ++b) {
        for (int a = -r; a <= r; ++a) {
          const double t = 0.5 * (k.taps[idx(a, b)] - k.taps[idx(-a, -b)]);
          anti[idx(a, b)] = t;
          moment += (kind == Kind::GradientX ? a : b) * t;
        }
      }
      for (double& t : anti) t /= -moment * pixel;
      k.taps = std::move(anti);
      break;
    }
    case Kind::Laplacian: {
      const double m = k.sum() / static_cast<double>(k.taps.size());
      double moment = 0.0;
      for (int b = -r; b <= r; ++b) {
        for (int a = -r; a <= r; ++a) {
          k.taps[idx(a, b)] -= m;
          moment += (a * a + b * b) * k.taps[idx(a, b)];
        }
      }
      for (double& t : k.taps) t *= 4.0 / (moment * pixel * pixel);
      break;
    }
  }
  return k;
}

std::size_t MaskedImage::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

MaskedImage convolve_masked(const CellField& f, const Kernel& k, const PixelMask& valid) {
  const Grid& g = f.grid;
  const auto w = static_cast<long>(g.cx());
  const auto h = static_cast<long>(g.cy());
  if (k.side() > w || k.side() > h) throw ValidationError("kernel window larger than the image");
  if (valid.size() != f.size()) throw ValidationError("validity mask does not match the image");

  // Erosion via a summed-area table over invalid pixels.
  std::vector<long> sat(static_cast<std::size_t>((w + 1) * (h + 1)), 0);
  auto at = [&](long i, long j) -> long& { return sat[static_cast<std::size_t>(j * (w + 1) + i)]; };
  for (long j = 0; j < h; ++j) {
    for (long i = 0; i < w; ++i) {
      const long bad = valid[static_cast<std::size_t>(j * w + i)] ? 0 : 1;
      at(i + 1, j + 1) = bad + at(i, j + 1) + at(i + 1, j) - at(i, j);
    }
  }

  MaskedImage out{CellField(g), PixelMask(f.size(), 0)};
  const long r = k.radius;
  for (long j = r; j < h - r; ++j) {
    for (long i = r; i < w - r; ++i) {
      const long bad = at(i + r + 1, j + r + 1) - at(i - r, j + r + 1) - at(i + r + 1, j - r) + at(i - r, j - r);
      if (bad != 0) continue;
      double s = 0.0;
      for (long b = -r; b <= r; ++b) {
        for (long a = -r; a <= r; ++a) {
          s += f.values[static_cast<std::size_t>((j - b) * w + (i - a))] * k.tap(static_cast<int>(a), static_cast<int>(b));
        }
      }
      const auto c = static_cast<std::size_t>(j * w + i);
      out.values[c] = s;
      out.valid[c] = 1;
    }
  }
  return out;
}

CellField gradient_magnitude(const CellField& f, const PixelMask& valid) {
  const Grid& g = f.grid;
  const std::size_t w = g.cx();
  const std::size_t h = g.cy();
  CellField out(g);
  auto ok = [&](std::size_t i, std::size_t j) { return valid[j * w + i] != 0; };
  for (std::size_t j = 0; j < h; ++j) {
    for (std::size_t i = 0; i < w; ++i) {
      if (!ok(i, j)) continue;
      const double fc = f.at(i, j);
      const bool left = i > 0 && ok(i - 1, j);
      const bool right = i + 1 < w && ok(i + 1, j);
      const bool down = j > 0 && ok(i, j - 1);
      const bool up = j + 1 < h && ok(i, j + 1);
      double dx = 0.0;
      if (left && right) dx = 0.5 * (f.at(i + 1, j) - f.at(i - 1, j));
      else if (right) dx = f.at(i + 1, j) - fc;
      else if (left) dx = fc - f.at(i - 1, j);
      double dy = 0.0;
      if (down && up) dy = 0.5 * (f.at(i, j + 1) - f.at(i, j - 1));
      else if (up) dy = f.at(i, j + 1) - fc;
      else if (down) dy = fc - f.at(i, j - 1);
      out.at(i, j) = std::hypot(dx, dy);
    }
  }
  return out;
}

void EdgeParams::validate() const {
  for (int k = 0; k < 3; ++k) {
    if (!stages[k]) continue;
    if (!(sigma[k] > 0.0) || !(xi[k] > 0.0)) {
      throw ValidationError("active edge stages need positive sigma and xi");
    }
  }
  if (stages[1] && !(gamma > 0.0)) throw ValidationError("gradient stage needs gamma > 0");
  if (!(log_floor > 0.0)) throw ValidationError("log floor must be positive");
}

StageOutput detect_stage(const CellField& data, EdgeStage stage, double sigma, double xi,
                         const PixelMask& valid, const EdgeParams& params) {
  const Grid& g = data.grid;
  const double pixel = g.hx();
  StageOutput out{CellField(g), {}, PixelMask(data.size(), 0)};
  switch (stage) {
    case EdgeStage::Value: {
      const auto sm = convolve_masked(data, Kernel::make(Kernel::Kind::Smooth, sigma, pixel), valid);
      out.valid = sm.valid;
      for (std::size_t c = 0; c < data.size(); ++c) {
        if (!sm.valid[c]) continue;
        if (!(sm.values[c] > 0.0) && params.log_floor <= 0.0) {
          throw ValidationError("nonpositive value before logarithm");
        }
        out.transformed[c] = std::log(std::max(sm.values[c], params.log_floor));
      }
      break;
    }
    case EdgeStage::Gradient: {
      const auto gx = convolve_masked(data, Kernel::make(Kernel::Kind::GradientX, sigma, pixel), valid);
      const auto gy = convolve_masked(data, Kernel::make(Kernel::Kind::GradientY, sigma, pixel), valid);
      out.valid = gx.valid;
      for (std::size_t c = 0; c < data.size(); ++c) {
        if (!gx.valid[c]) continue;
        const double m2 = gx.values[c] * gx.values[c] + gy.values[c] * gy.values[c];
        out.transformed[c] = std::log(std::max(m2, params.gamma));
      }
      break;
    }
    case EdgeStage::Laplacian: {
      const auto lap = convolve_masked(data, Kernel::make(Kernel::Kind::Laplacian, sigma, pixel), valid);
      out.valid = lap.valid;
      for (std::size_t c = 0; c < data.size(); ++c) {
        if (!lap.valid[c]) continue;
        out.transformed[c] = std::log(std::max(std::abs(lap.values[c]), params.log_floor));
      }
      break;
    }
  }
  const CellField grad = gradient_magnitude(out.transformed, out.valid);
  for (std::size_t c = 0; c < data.size(); ++c) {
    out.edges[c] = (out.valid[c] && grad[c] >= xi) ? 1 : 0;
  }
  return out;
}

EdgeMask detect_edges(const CellField& data, const EdgeParams& params) {
  params.validate();
  const Grid& g = data.grid;
  EdgeMask mask(g);
  PixelMask valid(data.size(), 1);
  for (int k = 0; k < 3; ++k) {
    if (!params.stages[k]) continue;
    const auto res = detect_stage(data, static_cast<EdgeStage>(k), params.sigma[k], params.xi[k], valid, params);
    if (std::none_of(res.valid.begin(), res.valid.end(), [](auto v) { return v != 0; })) {
      throw ValidationError("edge stage " + std::to_string(k) + " has no valid pixels after erosion");
    }
    for (std::size_t c = 0; c < data.size(); ++c) {
      if (res.edges[c] && !mask.flagged(c)) mask.stage[c] = static_cast<std::uint8_t>(k + 1);
    }
    for (std::size_t c = 0; c < data.size(); ++c) {
      if (mask.flagged(c)) valid[c] = 0;
    }
  }
  return mask;
}

EdgeParams edge_params_noise_free() {
  EdgeParams p;
  p.sigma = {0.5, 0.5, 0.5};
  p.xi = {0.1, 0.1, 0.1};
  p.gamma = 1e-4;
  p.stages = {true, true, true};
  return p;
}

EdgeParams edge_params_low_noise() {
  EdgeParams p;
  p.sigma = {0.5, 2.0, 0.5};
  p.xi = {0.05, 0.06, 0.1};
  p.gamma = 1e-5;
  p.stages = {true, true, false};
  return p;
}

EdgeParams edge_params_high_noise() {
  EdgeParams p;
  p.sigma = {1.5, 0.5, 0.5};
  p.xi = {0.05, 0.1, 0.1};
  p.gamma = 1e-4;
  p.stages = {true, false, false};
  return p;
}

EdgeParams edge_params_rectangles_noise_free() {
  EdgeParams p = edge_params_noise_free();
  p.gamma = 1e-6;
  return p;
}

EdgeParams edge_params_rectangles_low_noise() {
  EdgeParams p = edge_params_low_noise();
  p.sigma[1] = 2.4;
  p.gamma = 1e-7;
  return p;
}

EdgeParams edge_params_rectangles_high_noise() {
  EdgeParams p = edge_params_high_noise();
  p.xi[0] = 0.03;
  return p;
}

PixelMask dilate(const Grid& g, const PixelMask& m, int steps) {
  const auto w = static_cast<long>(g.cx());
  const auto h = static_cast<long>(g.cy());
  PixelMask cur = m;
  for (int s = 0; s < steps; ++s) {
    PixelMask next = cur;
    for (long j = 0; j < h; ++j) {
      for (long i = 0; i < w; ++i) {
        if (!cur[static_cast<std::size_t>(j * w + i)]) continue;
        for (long b = -1; b <= 1; ++b) {
          for (long a = -1; a <= 1; ++a) {
            const long ii = i + a;
            const long jj = j + b;
            if (ii >= 0 && jj >= 0 && ii < w && jj < h) next[static_cast<std::size_t>(jj * w + ii)] = 1;
          }
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

PixelMask jump_pixels(const std::vector<const CellField*>& fields) {
  if (fields.empty()) return {};
  const Grid& g = fields.front()->grid;
  const std::size_t w = g.cx();
  const std::size_t h = g.cy();
  PixelMask out(g.num_cells(), 0);
  for (const CellField* f : fields) {
    require_same_grid(g, f->grid, "jump fields");
    for (std::size_t j = 0; j < h; ++j) {
      for (std::size_t i = 0; i < w; ++i) {
        const double v = f->at(i, j);
        const bool differs = (i > 0 && f->at(i - 1, j) != v) || (i + 1 < w && f->at(i + 1, j) != v) ||
                             (j > 0 && f->at(i, j - 1) != v) || (j + 1 < h && f->at(i, j + 1) != v);
        if (differs) out[j * w + i] = 1;
      }
    }
  }
  return out;
}

double fraction_within(const Grid& g, const PixelMask& target, const PixelMask& reference, double radius) {
  const auto w = static_cast<long>(g.cx());
  const auto h = static_cast<long>(g.cy());
  const long r = static_cast<long>(std::floor(radius));
  const double r2 = radius * radius;
  std::size_t total = 0;
  std::size_t hit = 0;
  for (long j = 0; j < h; ++j) {
    for (long i = 0; i < w; ++i) {
      if (!target[static_cast<std::size_t>(j * w + i)]) continue;
      ++total;
      bool found = false;
      for (long b = -r; b <= r && !found; ++b) {
        for (long a = -r; a <= r && !found; ++a) {
          const long ii = i + a;
          const long jj = j + b;
          if (ii < 0 || jj < 0 || ii >= w || jj >= h) continue;
          if (static_cast<double>(a * a + b * b) <= r2 && reference[static_cast<std::size_t>(jj * w + ii)]) found = true;
        }
      }
      if (found) ++hit;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace qpat
