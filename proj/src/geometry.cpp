#include "tabnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tabnet {

Box::Box(double x_, double y_, double w_, double h_) : x(x_), y(y_), w(w_), h(h_) {
  if (!(w > 0.0) || !(h > 0.0)) {
    throw std::invalid_argument("Box requires positive width and height, got w=" +
                                std::to_string(w) + " h=" + std::to_string(h));
  }
}

Box Box::from_corners(double x0, double y0, double x1, double y1) {
  return Box(x0, y0, x1 - x0, y1 - y0);
}

bool Box::contains(const Box& o) const {
  return o.x >= x && o.y >= y && o.right() <= right() && o.bottom() <= bottom();
}

QuadBox::QuadBox(const std::array<Point, 4>& corners) : pts(corners) {}

QuadBox::QuadBox(const Box& b)
    : pts{Point{b.x, b.y}, Point{b.right(), b.y}, Point{b.right(), b.bottom()},
          Point{b.x, b.bottom()}} {}

double QuadBox::signed_area() const {
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const Point& p = pts[i];
    const Point& q = pts[(i + 1) % 4];
    s += p.x * q.y - q.x * p.y;
  }
  return 0.5 * s;
}

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool segments_cross(const Point& a, const Point& b, const Point& c, const Point& d) {
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 &&
         d3 != 0 && d4 != 0;
}

}  // namespace

bool QuadBox::is_simple() const {
  return !segments_cross(pts[0], pts[1], pts[2], pts[3]) &&
         !segments_cross(pts[1], pts[2], pts[3], pts[0]);
}

Box QuadBox::hull() const { return hull_of(pts); }

std::array<double, 8> QuadBox::flat() const {
  std::array<double, 8> v{};
  for (std::size_t i = 0; i < 4; ++i) {
    v[2 * i] = pts[i].x;
    v[2 * i + 1] = pts[i].y;
  }
  return v;
}

QuadBox QuadBox::from_flat(std::span<const double> v) {
  if (v.size() != 8) throw std::invalid_argument("quad needs 8 coordinates");
  QuadBox q;
  for (std::size_t i = 0; i < 4; ++i) q.pts[i] = {v[2 * i], v[2 * i + 1]};
  return q;
}

double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

Box union_box(const Box& a, const Box& b) {
  return Box::from_corners(std::min(a.x, b.x), std::min(a.y, b.y),
                           std::max(a.right(), b.right()), std::max(a.bottom(), b.bottom()));
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

std::vector<std::size_t> nms(std::span<const ScoredBox> boxes, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw std::invalid_argument("nms threshold must lie in (0, 1)");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes[a].score > boxes[b].score;
  });
  std::vector<std::size_t> kept;
  std::vector<bool> suppressed(boxes.size(), false);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!suppressed[j] && iou(boxes[i].box, boxes[j].box) > iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

BoxDelta box_delta(const Box& bi, const Box& bj) {
  return {(bi.x - bj.x) / bi.w,       (bi.y - bj.y) / bi.h,
          std::log(bi.w / bj.w),      std::log(bi.h / bj.h),
          (bj.x - bi.x) / bj.w,       (bj.y - bi.y) / bj.h};
}

SpatialFeature spatial_compat_feature(const Box& bi, const Box& bj) {
  const Box bij = union_box(bi, bj);
  SpatialFeature out{};
  const BoxDelta parts[3] = {box_delta(bi, bj), box_delta(bi, bij), box_delta(bj, bij)};
  for (std::size_t k = 0; k < 3; ++k) std::copy(parts[k].begin(), parts[k].end(), out.begin() + 6 * k);
  return out;
}

Box hull_of(std::span<const Point> pts) {
  if (pts.empty()) throw std::invalid_argument("hull of an empty point set");
  double x0 = pts[0].x, x1 = pts[0].x, y0 = pts[0].y, y1 = pts[0].y;
  for (const Point& p : pts) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return Box::from_corners(x0, y0, x1, y1);
}

double polygon_area(std::span<const Point> poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % poly.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(a);
}

std::vector<Point> clip_to_convex(std::span<const Point> subject, std::span<const Point> clip) {
  std::vector<Point> out(subject.begin(), subject.end());
  if (clip.size() < 3) return {};
  double orient = 0.0;
  for (std::size_t i = 0; i < clip.size(); ++i) {
    const Point& p = clip[i];
    const Point& q = clip[(i + 1) % clip.size()];
    orient += p.x * q.y - q.x * p.y;
  }
  const double sign = orient >= 0.0 ? 1.0 : -1.0;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Point a = clip[e];
    const Point b = clip[(e + 1) % clip.size()];
    auto side = [&](const Point& p) { return sign * cross(a, b, p); };
    std::vector<Point> in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Point& cur = in[i];
      const Point& nxt = in[(i + 1) % in.size()];
      const double sc = side(cur), sn = side(nxt);
      if (sc >= 0.0) out.push_back(cur);
      if ((sc >= 0.0) != (sn >= 0.0)) {
        const double t = sc / (sc - sn);
        out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
      }
    }
  }
  return out;
}

double intersection_area(const QuadBox& a, const QuadBox& b) {
  const auto clipped = clip_to_convex(a.pts, b.pts);
  return clipped.size() < 3 ? 0.0 : polygon_area(clipped);
}

}  // namespace tabnet
