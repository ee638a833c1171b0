#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tabnet/geometry.hpp"

namespace tabnet {

using Polyline = std::vector<Point>;

/// Grid spans are inclusive: a 1x1 cell has start_row == end_row.
struct CellSpan {
  int start_row = 0;
  int end_row = 0;
  int start_col = 0;
  int end_col = 0;

  int row_span() const { return end_row - start_row + 1; }
  int col_span() const { return end_col - start_col + 1; }
  bool covers(int r, int c) const {
    return r >= start_row && r <= end_row && c >= start_col && c <= end_col;
  }
  friend bool operator==(const CellSpan&, const CellSpan&) = default;
};

struct CellAnnotation {
  CellSpan span;
  QuadBox quad;
  std::vector<Box> text_boxes;
};

/// Two-pass sinusoidal displacement:
///   x' = x + amp_x * sin(2*pi*y / wavelength + phase_x)
///   y' = y + amp_y * sin(2*pi*x' / wavelength + phase_y)
/// The second pass reads the already displaced x, so the inverse is exact.
struct WarpParams {
  double amp_x = 0.0;
  double amp_y = 0.0;
  double wavelength = 1.0;
  double phase_x = 0.0;
  double phase_y = 0.0;

  bool identity() const { return amp_x == 0.0 && amp_y == 0.0; }
  Point forward(Point p) const;
  Point inverse(Point p) const;
};

struct TableAnnotation {
  QuadBox quad;
  Box bbox;
  int rows = 0;
  int cols = 0;
  /// Interior separators only, one polyline per boundary between adjacent
  /// grid rows (top to bottom) or columns (left to right). Row polylines run
  /// left to right across the table, column polylines top to bottom.
  std::vector<Polyline> row_separators;
  std::vector<Polyline> col_separators;
  std::vector<CellAnnotation> cells;
  WarpParams warp;
};

struct DocAnnotation {
  int width = 0;
  int height = 0;
  std::vector<TableAnnotation> tables;
  /// Paragraph-like text lines outside every table.
  std::vector<Box> distractors;
};

/// Affine map restricted to per-axis scale plus translation:
/// dst = (src - origin) * scale.
struct CropTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double scale = 1.0;

  Point to_crop(Point p) const { return {(p.x - origin_x) * scale, (p.y - origin_y) * scale}; }
  Point to_image(Point p) const { return {p.x / scale + origin_x, p.y / scale + origin_y}; }
  Box to_crop(const Box& b) const;
  Box to_image(const Box& b) const;
  QuadBox to_crop(const QuadBox& q) const;
  QuadBox to_image(const QuadBox& q) const;
};

TableAnnotation transform_table(const TableAnnotation& t, const CropTransform& tf);

/// Structural checks: spans partition the grid, separator counts match the
/// grid, text boxes sit inside their cell hulls (with `tolerance` px slack),
/// warp round-trips. Returns human-readable violations; empty when valid.
std::vector<std::string> validate(const DocAnnotation& doc, double tolerance = 1.0);

void to_json(nlohmann::json& j, const Point& p);
void from_json(const nlohmann::json& j, Point& p);
void to_json(nlohmann::json& j, const Box& b);
void from_json(const nlohmann::json& j, Box& b);
void to_json(nlohmann::json& j, const QuadBox& q);
void from_json(const nlohmann::json& j, QuadBox& q);
void to_json(nlohmann::json& j, const CellSpan& s);
void from_json(const nlohmann::json& j, CellSpan& s);
void to_json(nlohmann::json& j, const CellAnnotation& c);
void from_json(const nlohmann::json& j, CellAnnotation& c);
void to_json(nlohmann::json& j, const WarpParams& w);
void from_json(const nlohmann::json& j, WarpParams& w);
void to_json(nlohmann::json& j, const TableAnnotation& t);
void from_json(const nlohmann::json& j, TableAnnotation& t);
void to_json(nlohmann::json& j, const DocAnnotation& d);
void from_json(const nlohmann::json& j, DocAnnotation& d);

DocAnnotation load_annotation(const std::string& path);
void save_annotation(const DocAnnotation& doc, const std::string& path);

}  // namespace tabnet
