#include "qpat/grid.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace qpat {

Grid::Grid(std::size_t nodes_x, std::size_t nodes_y, double length_x, double length_y)
    : nx(nodes_x), ny(nodes_y), lx(length_x), ly(length_y) {
  if (nx < 3 || ny < 3) {
    throw ValidationError("grid needs at least 3 nodes per axis");
  }
  if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly)) {
    throw ValidationError("grid extents must be positive and finite");
  }
}

Grid Grid::with_cells(std::size_t cx, std::size_t cy, double length_x, double length_y) {
  return Grid(cx + 1, cy + 1, length_x, length_y);
}

bool Grid::is_boundary_node(std::size_t k) const {
  const std::size_t i = node_i(k);
  const std::size_t j = node_j(k);
  return i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
}

std::array<std::size_t, 4> Grid::cell_nodes(std::size_t c) const {
  const std::size_t i = cell_i(c);
  const std::size_t j = cell_j(c);
  return {node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)};
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) {
    throw ValidationError(std::string("grid mismatch: ") + what);
  }
}

CellField nodes_to_cells(const NodeField& f) {
  const Grid& g = f.grid;
  CellField out(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    double s = 0.0;
    for (std::size_t k : g.cell_nodes(c)) s += f[k];
    out[c] = 0.25 * s;
  }
  return out;
}

NodeField cells_to_nodes(const CellField& f) {
  const Grid& g = f.grid;
  NodeField sum(g);
  std::vector<int> count(g.num_nodes(), 0);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    for (std::size_t k : g.cell_nodes(c)) {
      sum[k] += f[c];
      ++count[k];
    }
  }
  for (std::size_t k = 0; k < g.num_nodes(); ++k) sum[k] /= count[k];
  return sum;
}

NodeField spread_cells_to_nodes(const CellField& f) {
  const Grid& g = f.grid;
  NodeField out(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    for (std::size_t k : g.cell_nodes(c)) out[k] += 0.25 * f[c];
  }
  return out;
}

NodeField boundary_field(const Grid& g, double value) {
  NodeField out(g);
  for (std::size_t k = 0; k < g.num_nodes(); ++k) {
    if (g.is_boundary_node(k)) out[k] = value;
  }
  return out;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

namespace {

std::string format_csv(std::size_t w, std::size_t h, double lx, double ly,
                       std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 24 + 64);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g\n", w, h, lx, ly);
  out += buf;
  for (std::size_t j = 0; j < h; ++j) {
    for (std::size_t i = 0; i < w; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[j * w + i]);
      out += buf;
      out += (i + 1 == w) ? '\n' : ',';
    }
  }
  return out;
}

struct ParsedCsv {
  std::size_t w = 0, h = 0;
  double lx = 0.0, ly = 0.0;
  std::vector<double> values;
};

double parse_double(const std::string& tok) {
  // strtod round-trips %.17g output exactly.
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str()) throw ValidationError("csv: bad number '" + tok + "'");
  return v;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

ParsedCsv parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv: empty input");
  const auto head = split_commas(line);
  if (head.size() != 4) throw ValidationError("csv: header must be nx,ny,lx,ly");
  ParsedCsv p;
  p.w = std::stoul(head[0]);
  p.h = std::stoul(head[1]);
  p.lx = parse_double(head[2]);
  p.ly = parse_double(head[3]);
  p.values.reserve(p.w * p.h);
  for (std::size_t j = 0; j < p.h; ++j) {
    if (!std::getline(in, line)) throw ValidationError("csv: missing rows");
    const auto toks = split_commas(line);
    if (toks.size() != p.w) throw ValidationError("csv: row has wrong length");
    for (const auto& t : toks) p.values.push_back(parse_double(t));
  }
  return p;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string to_csv(const NodeField& f) {
  return format_csv(f.grid.nx, f.grid.ny, f.grid.lx, f.grid.ly, f.values);
}

std::string to_csv(const CellField& f) {
  return format_csv(f.grid.cx(), f.grid.cy(), f.grid.lx, f.grid.ly, f.values);
}

NodeField node_field_from_csv(const std::string& text) {
  auto p = parse_csv(text);
  return NodeField(Grid(p.w, p.h, p.lx, p.ly), std::move(p.values));
}

CellField cell_field_from_csv(const std::string& text) {
  auto p = parse_csv(text);
  return CellField(Grid::with_cells(p.w, p.h, p.lx, p.ly), std::move(p.values));
}

void write_csv(const std::filesystem::path& path, const NodeField& f) { write_file(path, to_csv(f)); }
void write_csv(const std::filesystem::path& path, const CellField& f) { write_file(path, to_csv(f)); }
NodeField read_node_csv(const std::filesystem::path& path) { return node_field_from_csv(read_file(path)); }
CellField read_cell_csv(const std::filesystem::path& path) { return cell_field_from_csv(read_file(path)); }

}  // namespace qpat
