#pragma once

#include <vector>

#include "qpat/edge_detect.hpp"
#include "qpat/grid.hpp"
#include "qpat/phantom.hpp"

namespace qpat {

/// ||est - truth||_2 / ||truth||_2 over cells.
double relative_l2(const CellField& est, const CellField& truth);

/// 2|A n B| / (|A| + |B|); 1 when both are empty.
double dice(const PixelMask& a, const PixelMask& b);

struct InclusionScore {
  int shape = 0;          // index into PhantomSpec::shapes
  double threshold = 0.0; // midpoint between background and inclusion absorption
  double dice = 0.0;
};

/// For every shape whose absorption differs from the background: threshold
/// mu_est at the midpoint of the two values and compare the resulting set with
/// the shape's cells. Only the shape and the background cells take part, so
/// other inclusions do not count as false positives.
std::vector<InclusionScore> inclusion_dice(const CellField& mu_est, const PhantomSpec& spec,
                                           const std::vector<int>& labels);

struct Profile {
  std::vector<double> t;       // arc length from the first cell center
  std::vector<double> values;
};

/// Values along the main diagonal (bottom-left to top-right) and, with
/// `anti`, the other one (top-left to bottom-right). Needs a square image.
Profile diagonal_profile(const CellField& f, bool anti = false);

/// Total variation of a cell field over the interior faces whose end nodes
/// both have v >= threshold.
double total_variation_outside(const CellField& f, const NodeField& v, double threshold = 0.5);

}  // namespace qpat
