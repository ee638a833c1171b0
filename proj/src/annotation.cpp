#include "tabnet/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace tabnet {

Point WarpParams::forward(Point p) const {
  const double k = 2.0 * std::numbers::pi / wavelength;
  const double x = p.x + amp_x * std::sin(k * p.y + phase_x);
  const double y = p.y + amp_y * std::sin(k * x + phase_y);
  return {x, y};
}

Point WarpParams::inverse(Point p) const {
  const double k = 2.0 * std::numbers::pi / wavelength;
  const double y = p.y - amp_y * std::sin(k * p.x + phase_y);
  const double x = p.x - amp_x * std::sin(k * y + phase_x);
  return {x, y};
}

Box CropTransform::to_crop(const Box& b) const {
  const Point a = to_crop(Point{b.x, b.y});
  return Box(a.x, a.y, b.w * scale, b.h * scale);
}

Box CropTransform::to_image(const Box& b) const {
  const Point a = to_image(Point{b.x, b.y});
  return Box(a.x, a.y, b.w / scale, b.h / scale);
}

QuadBox CropTransform::to_crop(const QuadBox& q) const {
  QuadBox out;
  for (std::size_t i = 0; i < 4; ++i) out.pts[i] = to_crop(q.pts[i]);
  return out;
}

QuadBox CropTransform::to_image(const QuadBox& q) const {
  QuadBox out;
  for (std::size_t i = 0; i < 4; ++i) out.pts[i] = to_image(q.pts[i]);
  return out;
}

TableAnnotation transform_table(const TableAnnotation& t, const CropTransform& tf) {
  TableAnnotation out = t;
  out.quad = tf.to_crop(t.quad);
  out.bbox = tf.to_crop(t.bbox);
  auto map_lines = [&](std::vector<Polyline>& lines) {
    for (auto& line : lines)
      for (auto& p : line) p = tf.to_crop(p);
  };
  map_lines(out.row_separators);
  map_lines(out.col_separators);
  for (auto& c : out.cells) {
    c.quad = tf.to_crop(c.quad);
    for (auto& b : c.text_boxes) b = tf.to_crop(b);
  }
  return out;
}

std::vector<std::string> validate(const DocAnnotation& doc, double tolerance) {
  std::vector<std::string> errors;
  auto fail = [&](std::size_t ti, const std::string& msg) {
    errors.push_back("table " + std::to_string(ti) + ": " + msg);
  };
  for (std::size_t ti = 0; ti < doc.tables.size(); ++ti) {
    const TableAnnotation& t = doc.tables[ti];
    if (t.rows < 1 || t.cols < 1) {
      fail(ti, "empty grid");
      continue;
    }
    if (static_cast<int>(t.row_separators.size()) != t.rows - 1)
      fail(ti, "row separator count does not match rows");
    if (static_cast<int>(t.col_separators.size()) != t.cols - 1)
      fail(ti, "column separator count does not match cols");
    std::vector<int> cover(static_cast<std::size_t>(t.rows * t.cols), 0);
    for (const auto& c : t.cells) {
      const CellSpan& s = c.span;
      if (s.start_row < 0 || s.start_col < 0 || s.end_row >= t.rows || s.end_col >= t.cols ||
          s.start_row > s.end_row || s.start_col > s.end_col) {
        fail(ti, "cell span out of range");
        continue;
      }
      for (int r = s.start_row; r <= s.end_row; ++r)
        for (int col = s.start_col; col <= s.end_col; ++col) ++cover[r * t.cols + col];
      const Box hull = c.quad.hull();
      for (const Box& b : c.text_boxes) {
        if (b.x < hull.x - tolerance || b.y < hull.y - tolerance ||
            b.right() > hull.right() + tolerance || b.bottom() > hull.bottom() + tolerance)
          fail(ti, "text box outside its cell");
      }
    }
    if (std::any_of(cover.begin(), cover.end(), [](int v) { return v != 1; }))
      fail(ti, "cell spans do not partition the grid");
    if (t.bbox.x < -tolerance || t.bbox.y < -tolerance || t.bbox.right() > doc.width + tolerance ||
        t.bbox.bottom() > doc.height + tolerance)
      fail(ti, "table outside the page");
    if (!t.quad.is_simple() || t.quad.signed_area() <= 0.0) fail(ti, "table quad not simple");
    for (const Point& p : t.quad.pts) {
      const Point back = t.warp.forward(t.warp.inverse(p));
      if (std::hypot(back.x - p.x, back.y - p.y) > 1e-6) fail(ti, "warp not invertible");
    }
  }
  return errors;
}

void to_json(nlohmann::json& j, const Point& p) { j = nlohmann::json::array({p.x, p.y}); }
void from_json(const nlohmann::json& j, Point& p) { p = {j.at(0).get<double>(), j.at(1).get<double>()}; }

void to_json(nlohmann::json& j, const Box& b) { j = nlohmann::json::array({b.x, b.y, b.w, b.h}); }
void from_json(const nlohmann::json& j, Box& b) {
  b = Box(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>());
}

void to_json(nlohmann::json& j, const QuadBox& q) {
  const auto f = q.flat();
  j = nlohmann::json(std::vector<double>(f.begin(), f.end()));
}
void from_json(const nlohmann::json& j, QuadBox& q) {
  const auto v = j.get<std::vector<double>>();
  q = QuadBox::from_flat(v);
}

void to_json(nlohmann::json& j, const CellSpan& s) {
  j = {{"start_row", s.start_row}, {"end_row", s.end_row}, {"start_col", s.start_col},
       {"end_col", s.end_col}};
}
void from_json(const nlohmann::json& j, CellSpan& s) {
  j.at("start_row").get_to(s.start_row);
  j.at("end_row").get_to(s.end_row);
  j.at("start_col").get_to(s.start_col);
  j.at("end_col").get_to(s.end_col);
}

void to_json(nlohmann::json& j, const CellAnnotation& c) {
  j = c.span;
  j["quad"] = c.quad;
  j["text_boxes"] = c.text_boxes;
}
void from_json(const nlohmann::json& j, CellAnnotation& c) {
  from_json(j, c.span);
  j.at("quad").get_to(c.quad);
  j.at("text_boxes").get_to(c.text_boxes);
}

void to_json(nlohmann::json& j, const WarpParams& w) {
  j = {{"amp_x", w.amp_x}, {"amp_y", w.amp_y}, {"wavelength", w.wavelength},
       {"phase_x", w.phase_x}, {"phase_y", w.phase_y}};
}
void from_json(const nlohmann::json& j, WarpParams& w) {
  j.at("amp_x").get_to(w.amp_x);
  j.at("amp_y").get_to(w.amp_y);
  j.at("wavelength").get_to(w.wavelength);
  j.at("phase_x").get_to(w.phase_x);
  j.at("phase_y").get_to(w.phase_y);
}

void to_json(nlohmann::json& j, const TableAnnotation& t) {
  j = {{"quad", t.quad},
       {"bbox", t.bbox},
       {"rows", t.rows},
       {"cols", t.cols},
       {"row_separators", t.row_separators},
       {"col_separators", t.col_separators},
       {"cells", t.cells},
       {"warp", t.warp}};
}
void from_json(const nlohmann::json& j, TableAnnotation& t) {
  j.at("quad").get_to(t.quad);
  j.at("bbox").get_to(t.bbox);
  j.at("rows").get_to(t.rows);
  j.at("cols").get_to(t.cols);
  j.at("row_separators").get_to(t.row_separators);
  j.at("col_separators").get_to(t.col_separators);
  j.at("cells").get_to(t.cells);
  j.at("warp").get_to(t.warp);
}

void to_json(nlohmann::json& j, const DocAnnotation& d) {
  j = {{"width", d.width}, {"height", d.height}, {"tables", d.tables}, {"distractors", d.distractors}};
}
void from_json(const nlohmann::json& j, DocAnnotation& d) {
  j.at("width").get_to(d.width);
  j.at("height").get_to(d.height);
  j.at("tables").get_to(d.tables);
  if (j.contains("distractors")) j.at("distractors").get_to(d.distractors);
}

DocAnnotation load_annotation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation " + path);
  return nlohmann::json::parse(in).get<DocAnnotation>();
}

void save_annotation(const DocAnnotation& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write annotation " + path);
  out << nlohmann::json(doc).dump(1) << '\n';
}

}  // namespace tabnet
