#include "qpat/output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <png.h>

namespace qpat {

namespace fs = std::filesystem;

std::array<std::uint8_t, 3> colormap(double t) {
  static constexpr std::uint8_t anchors[9][3] = {{68, 1, 84},    {71, 44, 122},  {59, 81, 139},
                                                 {44, 113, 142}, {33, 144, 141}, {39, 173, 129},
                                                 {92, 200, 99},  {170, 220, 50}, {253, 231, 37}};
  if (!std::isfinite(t)) t = 0.0;
  t = std::clamp(t, 0.0, 1.0) * 8.0;
  const int k = std::min(static_cast<int>(t), 7);
  const double w = t - k;
  std::array<std::uint8_t, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    rgb[static_cast<std::size_t>(c)] =
        static_cast<std::uint8_t>(std::lround((1.0 - w) * anchors[k][c] + w * anchors[k + 1][c]));
  }
  return rgb;
}

namespace {

void write_rgb_png(const fs::path& path, std::size_t width, std::size_t height, const std::vector<std::uint8_t>& rgb) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw ValidationError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ValidationError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ValidationError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + r * width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_heatmap_png(const fs::path& path, const CellField& f, double lo, double hi) {
  if (!(hi > lo)) throw ValidationError("heatmap range needs lo < hi");
  const std::size_t w = f.width(), h = f.height();
  std::vector<std::uint8_t> rgb(w * h * 3);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t j = h - 1 - r;
    for (std::size_t i = 0; i < w; ++i) {
      const auto c = colormap((f.at(i, j) - lo) / (hi - lo));
      std::copy(c.begin(), c.end(), rgb.begin() + static_cast<long>((r * w + i) * 3));
    }
  }
  write_rgb_png(path, w, h, rgb);
}

void write_mask_png(const fs::path& path, const EdgeMask& m) {
  const std::size_t w = m.grid.cx(), h = m.grid.cy();
  std::vector<std::uint8_t> rgb(w * h * 3, 0);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t j = h - 1 - r;
    for (std::size_t i = 0; i < w; ++i) {
      if (m.flagged(m.grid.cell(i, j))) std::fill_n(rgb.begin() + static_cast<long>((r * w + i) * 3), 3, 255);
    }
  }
  write_rgb_png(path, w, h, rgb);
}

namespace {

void check_series(const std::vector<ProfileSeries>& series) {
  if (series.empty()) throw ValidationError("no profile series");
  for (const auto& s : series) {
    if (s.profile.t != series.front().profile.t || s.profile.values.size() != s.profile.t.size()) {
      throw ValidationError("profile series are not sampled alike");
    }
  }
}

}  // namespace

void write_profile_csv(const fs::path& path, const std::vector<ProfileSeries>& series) {
  check_series(series);
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "t";
  for (const auto& s : series) out << ',' << s.name;
  out << '\n';
  char buf[32];
  const auto& t = series.front().profile.t;
  for (std::size_t k = 0; k < t.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", t[k]);
    out << buf;
    for (const auto& s : series) {
      std::snprintf(buf, sizeof buf, "%.17g", s.profile.values[k]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

void write_profile_svg(const fs::path& path, const std::string& title, const std::vector<ProfileSeries>& series) {
  check_series(series);
  const double width = 640, height = 360, left = 60, right = 20, top = 30, bottom = 40;
  const auto& t = series.front().profile.t;
  double vmin = INFINITY, vmax = -INFINITY;
  for (const auto& s : series) {
    for (double v : s.profile.values) {
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  if (!(vmax > vmin)) {
    vmin -= 0.5;
    vmax += 0.5;
  }
  const double pad = 0.05 * (vmax - vmin);
  vmin -= pad;
  vmax += pad;
  const double tmax = t.empty() || t.back() <= 0.0 ? 1.0 : t.back();
  const auto px = [&](double x) { return left + (width - left - right) * x / tmax; };
  const auto py = [&](double v) { return top + (height - top - bottom) * (vmax - v) / (vmax - vmin); };
  static const char* colors[] = {"#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd"};

  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  char buf[256];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"#888\"/>\n", left, top,
                width - left - right, height - top - bottom);
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"5\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\">%.3g</text>\n"
                "<text x=\"5\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\">%.3g</text>\n",
                top + 10, vmax, height - bottom, vmin);
  out << buf;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 5];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t k = 0; k < t.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(t[k]), py(series[s].profile.values[k]));
      out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"12\" fill=\"%s\">",
                  width - right - 120, top + 16.0 * static_cast<double>(s + 1), color);
    out << buf << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw ValidationError("sha256 unavailable");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char byte[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(byte, sizeof byte, "%02x", md[k]);
    hex += byte;
  }
  return hex;
}

Manifest Manifest::load(const fs::path& dir) {
  Manifest m;
  m.dir_ = dir;
  const fs::path file = dir / "manifest.json";
  if (!fs::exists(file)) return m;
  std::ifstream in(file);
  try {
    const auto j = nlohmann::json::parse(in);
    m.files_ = j.at("files").get<std::map<std::string, std::string>>();
    m.meta_ = j.value("meta", std::map<std::string, std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("corrupt manifest " + file.string() + ": " + e.what());
  }
  return m;
}

void Manifest::save() const {
  nlohmann::json j;
  j["files"] = files_;
  j["meta"] = meta_;
  std::ofstream out(dir_ / "manifest.json");
  if (!out) throw ValidationError("cannot write manifest in " + dir_.string());
  out << j.dump(2) << '\n';
}

void Manifest::record(const std::string& name) { files_[name] = sha256_file(dir_ / name); }

void Manifest::verify(const std::string& name) const {
  const auto it = files_.find(name);
  if (it == files_.end()) throw ValidationError("manifest has no entry for " + name + " (run the producing step first)");
  const fs::path file = dir_ / name;
  if (!fs::exists(file)) throw ValidationError("missing input " + file.string());
  if (sha256_file(file) != it->second) throw ValidationError("checksum mismatch for " + file.string());
}

}  // namespace qpat
