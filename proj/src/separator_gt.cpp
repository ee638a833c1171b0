#include "tabnet/separator_gt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tabnet::splitter {

namespace {

double along(const Point& p, bool along_x) { return along_x ? p.x : p.y; }
double across(const Point& p, bool along_x) { return along_x ? p.y : p.x; }

struct Interval {
  double lo;
  double hi;
};

/// Text box footprint in (along, across) terms.
Interval along_range(const Box& b, bool along_x) {
  return along_x ? Interval{b.x, b.right()} : Interval{b.y, b.bottom()};
}
Interval across_range(const Box& b, bool along_x) {
  return along_x ? Interval{b.y, b.bottom()} : Interval{b.x, b.right()};
}

std::vector<SeparatorRegion> grow_regions(const TableAnnotation& table, bool rows,
                                          double min_thickness) {
  const bool along_x = rows;
  const auto& lines = rows ? table.row_separators : table.col_separators;
  const Interval table_along = along_range(table.bbox, along_x);
  const Interval table_across = across_range(table.bbox, along_x);

  std::vector<SeparatorRegion> regions;
  regions.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const Polyline& line = lines[i];
    if (line.size() < 2) throw AnnotationError("separator polyline needs at least two points");
    const int boundary = static_cast<int>(i);  // between grid index i and i + 1
    double before = std::numeric_limits<double>::infinity();
    double after = std::numeric_limits<double>::infinity();
    for (const CellAnnotation& cell : table.cells) {
      const int first = rows ? cell.span.start_row : cell.span.start_col;
      const int last = rows ? cell.span.end_row : cell.span.end_col;
      const bool is_before = last <= boundary;
      const bool is_after = first >= boundary + 1;
      if (!is_before && !is_after) continue;  // cell crosses this line
      for (const Box& text : cell.text_boxes) {
        const Interval t = along_range(text, along_x);
        const Interval v = across_range(text, along_x);
        const double lo = polyline_min(line, t.lo, t.hi, along_x);
        const double hi = polyline_max(line, t.lo, t.hi, along_x);
        if (hi > v.lo && lo < v.hi) {
          throw AnnotationError(std::string(rows ? "row" : "column") + " separator " +
                                std::to_string(i) + " intersects text of a non-spanning cell");
        }
        if (is_before && v.hi <= lo) before = std::min(before, lo - v.hi);
        if (is_after && v.lo >= hi) after = std::min(after, v.lo - hi);
      }
    }
    if (!std::isfinite(before))
      before = std::max(0.0, polyline_min(line, table_along.lo, table_along.hi, along_x) - table_across.lo);
    if (!std::isfinite(after))
      after = std::max(0.0, table_across.hi - polyline_max(line, table_along.lo, table_along.hi, along_x));
    if (before + after < min_thickness) {
      before = 0.5 * min_thickness;
      after = 0.5 * min_thickness;
    }
    regions.push_back({line, before, after});
  }
  return regions;
}

}  // namespace

double polyline_at(const Polyline& line, double t, bool along_x) {
  if (line.empty()) throw std::invalid_argument("empty polyline");
  if (t <= along(line.front(), along_x)) return across(line.front(), along_x);
  if (t >= along(line.back(), along_x)) return across(line.back(), along_x);
  for (std::size_t k = 1; k < line.size(); ++k) {
    const double t1 = along(line[k], along_x);
    if (t <= t1) {
      const double t0 = along(line[k - 1], along_x);
      const double v0 = across(line[k - 1], along_x);
      const double v1 = across(line[k], along_x);
      if (t1 <= t0) return v1;
      return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
    }
  }
  return across(line.back(), along_x);
}

namespace {

template <typename Pick>
double polyline_extreme(const Polyline& line, double t0, double t1, bool along_x, Pick pick) {
  double best = pick(polyline_at(line, t0, along_x), polyline_at(line, t1, along_x));
  for (const Point& p : line) {
    const double t = along(p, along_x);
    if (t > t0 && t < t1) best = pick(best, across(p, along_x));
  }
  return best;
}

}  // namespace

double polyline_min(const Polyline& line, double t0, double t1, bool along_x) {
  return polyline_extreme(line, t0, t1, along_x, [](double a, double b) { return std::min(a, b); });
}

double polyline_max(const Polyline& line, double t0, double t1, bool along_x) {
  return polyline_extreme(line, t0, t1, along_x, [](double a, double b) { return std::max(a, b); });
}

BinaryMask rasterize_row_regions(const std::vector<SeparatorRegion>& regions, const Box& table,
                                 int height, int width) {
  const int cols = width / kMaskReduction;
  BinaryMask mask(height, cols, 0);
  for (const SeparatorRegion& reg : regions) {
    for (int c = 0; c < cols; ++c) {
      const double x0 = std::max<double>(c * kMaskReduction, table.x);
      const double x1 = std::min<double>((c + 1) * kMaskReduction, table.right());
      if (x1 <= x0) continue;
      const double top = polyline_min(reg.center, x0, x1, true) - reg.before;
      const double bottom = polyline_max(reg.center, x0, x1, true) + reg.after;
      const int r0 = std::max(0, static_cast<int>(std::floor(top)));
      const int r1 = std::min(height - 1, static_cast<int>(std::ceil(bottom)) - 1);
      for (int r = r0; r <= r1; ++r)
        if (r + 1 > top && r < bottom) mask.at(r, c) = 1;
    }
  }
  return mask;
}

BinaryMask rasterize_col_regions(const std::vector<SeparatorRegion>& regions, const Box& table,
                                 int height, int width) {
  const int rows = height / kMaskReduction;
  BinaryMask mask(rows, width, 0);
  for (const SeparatorRegion& reg : regions) {
    for (int r = 0; r < rows; ++r) {
      const double y0 = std::max<double>(r * kMaskReduction, table.y);
      const double y1 = std::min<double>((r + 1) * kMaskReduction, table.bottom());
      if (y1 <= y0) continue;
      const double left = polyline_min(reg.center, y0, y1, false) - reg.before;
      const double right = polyline_max(reg.center, y0, y1, false) + reg.after;
      const int c0 = std::max(0, static_cast<int>(std::floor(left)));
      const int c1 = std::min(width - 1, static_cast<int>(std::ceil(right)) - 1);
      for (int c = c0; c <= c1; ++c)
        if (c + 1 > left && c < right) mask.at(r, c) = 1;
    }
  }
  return mask;
}

SeparatorGT make_separator_gt(const TableAnnotation& table, int height, int width,
                              double min_thickness) {
  SeparatorGT gt;
  gt.row_regions = grow_regions(table, true, min_thickness);
  gt.col_regions = grow_regions(table, false, min_thickness);
  gt.row = rasterize_row_regions(gt.row_regions, table.bbox, height, width);
  gt.col = rasterize_col_regions(gt.col_regions, table.bbox, height, width);
  return gt;
}

}  // namespace tabnet::splitter
