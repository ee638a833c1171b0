#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabnet/structure.hpp"

namespace tabnet {

struct TableResult {
  QuadBox quad;
  double score = 0.0;
  TableStructure structure;  ///< original-image coordinates
};

struct PageResult {
  std::string image;
  std::vector<TableResult> tables;
};

/// Assigns each text box to the cell holding at least `min_ratio` of its
/// area (largest share wins, earlier table/cell on ties) and fills the cells'
/// content_ids with text-box indices. Returns the indices left unassigned.
std::vector<int> assign_content(std::span<const Box> text_boxes, std::vector<TableStructure*> tables,
                                double min_ratio = 0.8);
std::vector<int> assign_content(std::span<const Box> text_boxes, TableStructure& table,
                                double min_ratio = 0.8);

/// Clamps every quad of the result to [0, width] x [0, height].
void clamp_to_image(PageResult& r, int width, int height);

void to_json(nlohmann::json& j, const StructureCell& c);
void from_json(const nlohmann::json& j, StructureCell& c);
void to_json(nlohmann::json& j, const TableResult& t);
void from_json(const nlohmann::json& j, TableResult& t);
void to_json(nlohmann::json& j, const PageResult& r);
void from_json(const nlohmann::json& j, PageResult& r);

}  // namespace tabnet
