#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qpat {

/// Input that violates a documented precondition (grid mismatch, bad config, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform tensor grid over [0,lx] x [0,ly].
///
/// `nx`, `ny` count nodes. Cells are the (nx-1) x (ny-1) rectangles between
/// them. Node (i,j) has index j*nx + i and cell (i,j) has index j*(nx-1) + i,
/// so row j = 0 is the bottom of the domain.
struct Grid {
  std::size_t nx = 3;
  std::size_t ny = 3;
  double lx = 5.0;
  double ly = 5.0;

  Grid() = default;
  Grid(std::size_t nodes_x, std::size_t nodes_y, double length_x = 5.0, double length_y = 5.0);

  /// Grid with `cx` x `cy` cells (i.e. an image of that many pixels).
  static Grid with_cells(std::size_t cx, std::size_t cy, double length_x = 5.0, double length_y = 5.0);

  double hx() const { return lx / static_cast<double>(nx - 1); }
  double hy() const { return ly / static_cast<double>(ny - 1); }
  /// Spacing along x; the grids used by the toolkit have square cells.
  double h() const { return hx(); }
  double cell_area() const { return hx() * hy(); }

  std::size_t cx() const { return nx - 1; }
  std::size_t cy() const { return ny - 1; }
  std::size_t num_nodes() const { return nx * ny; }
  std::size_t num_cells() const { return cx() * cy(); }

  std::size_t node(std::size_t i, std::size_t j) const { return j * nx + i; }
  std::size_t cell(std::size_t i, std::size_t j) const { return j * cx() + i; }
  std::size_t node_i(std::size_t k) const { return k % nx; }
  std::size_t node_j(std::size_t k) const { return k / nx; }
  std::size_t cell_i(std::size_t c) const { return c % cx(); }
  std::size_t cell_j(std::size_t c) const { return c / cx(); }

  bool is_boundary_node(std::size_t k) const;

  /// Corner nodes of a cell in counterclockwise order starting bottom-left.
  std::array<std::size_t, 4> cell_nodes(std::size_t c) const;

  double node_x(std::size_t i) const { return static_cast<double>(i) * hx(); }
  double node_y(std::size_t j) const { return static_cast<double>(j) * hy(); }
  double cell_x(std::size_t i) const { return (static_cast<double>(i) + 0.5) * hx(); }
  double cell_y(std::size_t j) const { return (static_cast<double>(j) + 0.5) * hy(); }

  friend bool operator==(const Grid&, const Grid&) = default;
};

enum class Location { Node, Cell };

/// Real values attached to either the nodes or the cells of a grid.
template <Location L>
struct Field {
  Grid grid;
  std::vector<double> values;

  Field() = default;
  explicit Field(const Grid& g, double fill = 0.0) : grid(g), values(count(g), fill) {}
  Field(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != count(grid)) {
      throw ValidationError("field size does not match grid");
    }
  }

  static std::size_t count(const Grid& g) {
    return L == Location::Node ? g.num_nodes() : g.num_cells();
  }
  std::size_t width() const { return L == Location::Node ? grid.nx : grid.cx(); }
  std::size_t height() const { return L == Location::Node ? grid.ny : grid.cy(); }

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t k) { return values[k]; }
  double operator[](std::size_t k) const { return values[k]; }
  double& at(std::size_t i, std::size_t j) { return values[j * width() + i]; }
  double at(std::size_t i, std::size_t j) const { return values[j * width() + i]; }

  std::span<double> span() { return values; }
  std::span<const double> span() const { return values; }
};

/// Nodal field (fluence u, phase fields v).
using NodeField = Field<Location::Node>;
/// Cell-wise constant field (coefficients, absorbed-energy images, masks).
using CellField = Field<Location::Cell>;
/// Piecewise constant mu or D, one value per cell.
using CoefficientField = CellField;

void require_same_grid(const Grid& a, const Grid& b, const char* what);

/// Arithmetic mean of the corner values of every cell.
CellField nodes_to_cells(const NodeField& f);
/// Arithmetic mean of the cells adjacent to every node.
NodeField cells_to_nodes(const CellField& f);
/// Transpose of `nodes_to_cells`: each cell spreads a quarter of its value to its corners.
NodeField spread_cells_to_nodes(const CellField& f);

/// Node field that equals `value` on the boundary ring and zero inside.
NodeField boundary_field(const Grid& g, double value);

double mean(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

// CSV grid format: "nx,ny,lx,ly" then ny rows of nx values, bottom row first.
// For cell fields nx, ny are the cell counts. Values use 17 significant digits.
std::string to_csv(const NodeField& f);
std::string to_csv(const CellField& f);
NodeField node_field_from_csv(const std::string& text);
CellField cell_field_from_csv(const std::string& text);

void write_csv(const std::filesystem::path& path, const NodeField& f);
void write_csv(const std::filesystem::path& path, const CellField& f);
NodeField read_node_csv(const std::filesystem::path& path);
CellField read_cell_csv(const std::filesystem::path& path);

}  // namespace qpat
