#pragma once

#include <string>
#include <vector>

#include "tabnet/annotation.hpp"
#include "tabnet/raster.hpp"

// Separator masks to a grid of shrunk cells.
//
// All fitting happens in a "row layout": the fitted axis runs along mask
// columns and the thickness axis along mask rows. Column masks are
// transposed into this layout, fitted by the same code, and transposed back.
//
// Coordinates inside this module are pixel-index coordinates of the crop:
// pixel i has its center at i, so the crop spans [-0.5, size - 0.5]. The
// CellGrid returned by intersect_grid/assemble is converted to continuous
// image coordinates (pixel i spans [i, i + 1)).

namespace tabnet::grid {

enum class Orientation { Row, Col };

/// Crop pixels per mask pixel along the fitted axis and across it.
struct MaskScale {
  double along = 8.0;
  double across = 1.0;
};

struct MaskPixel {
  int r = 0;
  int c = 0;
  friend bool operator==(const MaskPixel&, const MaskPixel&) = default;
};

struct Component {
  std::vector<MaskPixel> pixels;   ///< raster order
  std::vector<MaskPixel> contour;  ///< pixels with a 4-neighbor outside the component
  int min_r = 0, max_r = 0, min_c = 0, max_c = 0;
};

/// Monomial coefficients c0 + c1 t + c2 t^2 + ...
struct Polynomial {
  std::vector<double> coeffs;
  double operator()(double t) const;
};

struct SeparatorLine {
  Orientation orientation = Orientation::Row;
  Polynomial center;  ///< y = f(x) for rows, x = g(y) for columns
  double thickness = 0.0;
  double extent_min = 0.0;
  double extent_max = 0.0;

  /// Center evaluated with the argument clamped to the extent.
  double center_at(double t) const;
};

/// Upper/lower (row) or left/right (column) border polylines sampled at the
/// same positions `t`.
struct BorderPair {
  std::vector<double> t;
  std::vector<double> lo;
  std::vector<double> hi;

  double lo_at(double s) const;
  double hi_at(double s) const;
  double mid_at(double s) const { return 0.5 * (lo_at(s) + hi_at(s)); }
};

struct CellGrid {
  int rows = 0;  ///< M
  int cols = 0;  ///< N
  std::vector<QuadBox> cells;  ///< M x N, row-major
  std::vector<Point> points;   ///< (M+1) x (N+1) center-line intersections
  std::vector<BorderPair> row_borders;  ///< M + 1, top to bottom (index coords)
  std::vector<BorderPair> col_borders;  ///< N + 1, left to right (index coords)

  const QuadBox& cell(int r, int c) const { return cells[static_cast<std::size_t>(r) * cols + c]; }
  const Point& point(int r, int c) const { return points[static_cast<std::size_t>(r) * (cols + 1) + c]; }
};

struct AssemblerConfig {
  float score_threshold = 0.8f;
  int min_component_pixels = 4;
  int max_degree = 3;
  double scan_stride = 8.0;
  double sample_step = 2.0;
  double border_margin = 4.0;
  int reduction = 8;
};

struct AssemblyResult {
  CellGrid grid;
  std::vector<SeparatorLine> row_lines;
  std::vector<SeparatorLine> col_lines;
  std::vector<std::string> diagnostics;
};

/// value >= threshold -> 1.
BinaryMask binarize(const ProbMap& mask, float threshold = 0.8f);

/// 8-connected components; those under `min_pixels` are dropped.
std::vector<Component> extract_components(const BinaryMask& mask, int min_pixels = 4);

/// Least-squares center line through per-column midpoints of a row-layout
/// component. Throws std::invalid_argument when the component covers fewer
/// than three scan positions.
SeparatorLine fit_center_line(const Component& component, Orientation orientation,
                              const MaskScale& scale = {}, int max_degree = 3);

/// Mean length of scan segments taken every `scan_stride` crop pixels.
double estimate_thickness(const Component& component, const SeparatorLine& line,
                          double scan_stride = 8.0, const MaskScale& scale = {});

/// Center +/- thickness/2 sampled every `step` pixels over [-0.5, length - 0.5].
BorderPair border_lines(const SeparatorLine& line, double length, double step = 2.0);

/// Zero-thickness separator at a fixed position.
BorderPair flat_border(double position, double length, double step = 2.0);

/// Intersection of a row border y = r(x) with a column border x = c(y).
Point intersect_borders(const BorderPair& row, bool row_hi, const BorderPair& col, bool col_hi);

/// Builds the cell grid from sorted-or-not border pairs; adds implicit crop
/// borders and merges overlapping same-orientation borders (diagnostics are
/// appended).
CellGrid intersect_grid(std::vector<BorderPair> rows, std::vector<BorderPair> cols, int width,
                        int height, const AssemblerConfig& config,
                        std::vector<std::string>* diagnostics = nullptr);

/// Full post-processing of predicted masks for a width x height crop. The
/// masks may be padded beyond the crop; the excess is ignored.
AssemblyResult assemble(const ProbMap& row_mask, const ProbMap& col_mask, int width, int height,
                        const AssemblerConfig& config = {});

/// Same as assemble() for already-binarized masks.
AssemblyResult assemble_binary(const BinaryMask& row_mask, const BinaryMask& col_mask, int width,
                               int height, const AssemblerConfig& config = {});

}  // namespace tabnet::grid
