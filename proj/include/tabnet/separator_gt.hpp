#pragma once

#include <stdexcept>
#include <vector>

#include "tabnet/annotation.hpp"
#include "tabnet/raster.hpp"

namespace tabnet::splitter {

/// Column-resolution reduction of the row mask and row-resolution reduction
/// of the column mask.
inline constexpr int kMaskReduction = 8;

class AnnotationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A separation region: the annotated center polyline translated rigidly by
/// `before` (up / left) and `after` (down / right).
struct SeparatorRegion {
  Polyline center;
  double before = 0.0;
  double after = 0.0;

  double thickness() const { return before + after; }
};

struct SeparatorGT {
  BinaryMask row;  ///< H x W/8
  BinaryMask col;  ///< H/8 x W
  std::vector<SeparatorRegion> row_regions;
  std::vector<SeparatorRegion> col_regions;
};

/// Piecewise-linear value of a polyline parameterized along x (row lines)
/// or y (column lines); constant beyond the end points.
double polyline_at(const Polyline& line, double t, bool along_x);
/// Extremes of the polyline value over t in [t0, t1].
double polyline_min(const Polyline& line, double t0, double t1, bool along_x);
double polyline_max(const Polyline& line, double t0, double t1, bool along_x);

/// Grows every annotated separator until it touches text of a cell it does
/// not cross (or the table boundary), then widens regions thinner than
/// `min_thickness` symmetrically about the line. `table` must be in crop
/// coordinates; masks are rasterized for a height x width crop.
SeparatorGT make_separator_gt(const TableAnnotation& table, int height, int width,
                              double min_thickness = 8.0);

/// Marks every mask pixel whose footprint overlaps a region.
BinaryMask rasterize_row_regions(const std::vector<SeparatorRegion>& regions, const Box& table,
                                 int height, int width);
BinaryMask rasterize_col_regions(const std::vector<SeparatorRegion>& regions, const Box& table,
                                 int height, int width);

}  // namespace tabnet::splitter
