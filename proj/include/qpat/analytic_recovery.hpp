#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qpat/edge_detect.hpp"
#include "qpat/grid.hpp"

namespace qpat {

// Two-step recovery of piecewise constant (mu, D) from noise-free E with a
// known partition: mu from boundary values and jump ratios of E across
// interfaces, then D from the identity Delta E / E = mu / D inside each region.
// All samples are taken on the cell (pixel) image of E.

class RecoveryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One cell face on an interface, oriented from region `first` into region `second`.
struct InterfaceFace {
  std::size_t cell_first;
  std::size_t cell_second;
  int di, dj;  // unit step from cell_first to cell_second
};

struct Partition {
  Grid grid;
  std::vector<int> label;  // region index per cell, 0..regions-1
  int regions = 0;
  std::vector<std::size_t> boundary_contact;  // number of cells on the domain boundary, per region
  std::map<std::pair<int, int>, std::vector<InterfaceFace>> interfaces;  // key (m, n) with m < n

  bool touches_boundary(int m) const { return boundary_contact[static_cast<std::size_t>(m)] > 0; }
  std::vector<int> neighbors(int m) const;
};

/// Connected components (4-neighborhood) of the non-edge cells with at least
/// `min_cells` cells; edge cells and smaller components are then attached to
/// the nearest kept component.
Partition segment(const EdgeMask& edges, std::size_t min_cells = 1);

/// Partition whose regions are the 4-connected components of equal labels.
Partition partition_from_labels(const Grid& g, const std::vector<int>& labels);

enum class Propagation { BreadthFirst, DepthFirst };

struct RegionEstimate {
  double mu = 0.0;
  double d = 0.0;
  int parent = -1;               // region the mu value was propagated from, -1 for the anchor
  std::size_t mu_samples = 0;    // boundary or interface samples used
  double ratio_spread = 0.0;     // interquartile range of the sampled ratios, relative to their median
  std::size_t d_samples = 0;
  double laplace_spread = 0.0;   // interquartile range of Delta E / E, relative to its median
};

struct RecoveryResult {
  int anchor = -1;
  std::vector<RegionEstimate> regions;

  std::string to_json() const;
};

/// Fills mu, parent, mu_samples and ratio_spread. The anchor is the region with
/// the longest boundary contact; its value is the median of E / g extrapolated
/// to the boundary. Other regions follow by propagating median interface ratios.
RecoveryResult recover_mu(const CellField& e, const Partition& part, const NodeField& boundary,
                          Propagation order = Propagation::BreadthFirst);

/// Fills d and its diagnostics using the 5-point Laplacian at cells at least
/// `margin` cells from any interface and from the domain boundary.
void recover_d(const CellField& e, const Partition& part, RecoveryResult& result, int margin = 3);

/// recover_mu followed by recover_d.
RecoveryResult recover(const CellField& e, const Partition& part, const NodeField& boundary,
                       Propagation order = Propagation::BreadthFirst);

/// Cell fields of the recovered values.
CellField region_field(const Partition& part, const RecoveryResult& r, bool diffusion);

}  // namespace qpat
