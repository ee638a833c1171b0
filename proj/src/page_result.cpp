#include "tabnet/page_result.hpp"

#include <algorithm>
#include <stdexcept>

namespace tabnet {

std::vector<int> assign_content(std::span<const Box> text_boxes, std::vector<TableStructure*> tables,
                                double min_ratio) {
  for (TableStructure* t : tables)
    for (auto& c : t->cells) c.content_ids.clear();
  std::vector<int> unassigned;
  for (std::size_t i = 0; i < text_boxes.size(); ++i) {
    const QuadBox text(text_boxes[i]);
    StructureCell* best_cell = nullptr;
    double best = min_ratio;
    for (TableStructure* t : tables) {
      for (auto& c : t->cells) {
        const double ratio = intersection_area(text, c.quad) / text_boxes[i].area();
        if (ratio > best || (ratio == best && best_cell == nullptr)) {
          best = ratio;
          best_cell = &c;
        }
      }
    }
    if (best_cell == nullptr) {
      unassigned.push_back(static_cast<int>(i));
    } else {
      best_cell->content_ids.push_back(static_cast<int>(i));
    }
  }
  return unassigned;
}

std::vector<int> assign_content(std::span<const Box> text_boxes, TableStructure& table, double min_ratio) {
  return assign_content(text_boxes, std::vector<TableStructure*>{&table}, min_ratio);
}

namespace {

QuadBox clamp_quad(const QuadBox& q, int width, int height) {
  QuadBox out = q;
  for (auto& p : out.pts) {
    p.x = std::clamp(p.x, 0.0, static_cast<double>(width));
    p.y = std::clamp(p.y, 0.0, static_cast<double>(height));
  }
  return out;
}

}  // namespace

void clamp_to_image(PageResult& r, int width, int height) {
  for (auto& t : r.tables) {
    t.quad = clamp_quad(t.quad, width, height);
    for (auto& c : t.structure.cells) c.quad = clamp_quad(c.quad, width, height);
  }
}

void to_json(nlohmann::json& j, const StructureCell& c) {
  j = nlohmann::json{{"start_row", c.span.start_row}, {"end_row", c.span.end_row},
                     {"start_col", c.span.start_col}, {"end_col", c.span.end_col},
                     {"quad", c.quad},                {"content_ids", c.content_ids}};
}

void from_json(const nlohmann::json& j, StructureCell& c) {
  c.span.start_row = j.at("start_row").get<int>();
  c.span.end_row = j.at("end_row").get<int>();
  c.span.start_col = j.at("start_col").get<int>();
  c.span.end_col = j.at("end_col").get<int>();
  c.quad = j.at("quad").get<QuadBox>();
  c.content_ids = j.at("content_ids").get<std::vector<int>>();
}

void to_json(nlohmann::json& j, const TableResult& t) {
  j = nlohmann::json{{"quad", t.quad},
                     {"score", t.score},
                     {"grid", {{"rows", t.structure.rows}, {"cols", t.structure.cols}}},
                     {"cells", t.structure.cells}};
}

void from_json(const nlohmann::json& j, TableResult& t) {
  t.quad = j.at("quad").get<QuadBox>();
  t.score = j.at("score").get<double>();
  t.structure.rows = j.at("grid").at("rows").get<int>();
  t.structure.cols = j.at("grid").at("cols").get<int>();
  t.structure.cells = j.at("cells").get<std::vector<StructureCell>>();
  if (auto err = t.structure.partition_error(); !err.empty())
    throw std::invalid_argument("table structure: " + err);
}

void to_json(nlohmann::json& j, const PageResult& r) {
  j = nlohmann::json{{"image", r.image}, {"tables", r.tables}};
}

void from_json(const nlohmann::json& j, PageResult& r) {
  r.image = j.at("image").get<std::string>();
  r.tables = j.at("tables").get<std::vector<TableResult>>();
}

}  // namespace tabnet
