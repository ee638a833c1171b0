#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace tabnet {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned box; (x, y) is the top-left corner, all values in pixels.
/// Construction rejects non-positive extents.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  Box() = default;
  Box(double x, double y, double w, double h);

  static Box from_corners(double x0, double y0, double x1, double y1);

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  Point center() const { return {x + 0.5 * w, y + 0.5 * h}; }
  bool contains(const Box& other) const;

  friend bool operator==(const Box&, const Box&) = default;
};

/// Quadrilateral with corners ordered clockwise in image coordinates
/// (y pointing down): top-left, top-right, bottom-right, bottom-left.
struct QuadBox {
  std::array<Point, 4> pts{};

  QuadBox() = default;
  explicit QuadBox(const std::array<Point, 4>& corners);
  explicit QuadBox(const Box& box);

  /// Shoelace area, positive for the clockwise-on-screen winding above.
  double signed_area() const;
  bool is_simple() const;
  Box hull() const;
  std::array<double, 8> flat() const;
  static QuadBox from_flat(std::span<const double> v);

  friend bool operator==(const QuadBox&, const QuadBox&) = default;
};

struct ScoredBox {
  Box box;
  double score = 0.0;
};

double intersection_area(const Box& a, const Box& b);
Box union_box(const Box& a, const Box& b);

/// Open-interval IoU: touching boxes score 0.
double iou(const Box& a, const Box& b);

/// Greedy NMS. Candidates are visited by descending score, ties by lower
/// index. Returns kept indices in visiting order.
std::vector<std::size_t> nms(std::span<const ScoredBox> boxes, double iou_threshold);

using BoxDelta = std::array<double, 6>;
using SpatialFeature = std::array<double, 18>;

/// (t_x^ij, t_y^ij, t_w^ij, t_h^ij, t_x^ji, t_y^ji) with top-left anchors.
BoxDelta box_delta(const Box& bi, const Box& bj);

/// [delta(bi, bj); delta(bi, bij); delta(bj, bij)] with bij = union_box(bi, bj).
SpatialFeature spatial_compat_feature(const Box& bi, const Box& bj);

/// Axis-aligned hull of a point set; throws on fewer than one point or a
/// degenerate extent.
Box hull_of(std::span<const Point> pts);

/// Shoelace area of a simple polygon, sign dropped.
double polygon_area(std::span<const Point> poly);

/// Sutherland-Hodgman: `subject` clipped to the convex polygon `clip`
/// (either winding).
std::vector<Point> clip_to_convex(std::span<const Point> subject, std::span<const Point> clip);

/// Area of a ∩ b; `b` is treated as convex.
double intersection_area(const QuadBox& a, const QuadBox& b);

}  // namespace tabnet
