#pragma once

#include <array>
#include <compare>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabnet/annotation.hpp"
#include "tabnet/page_result.hpp"
#include "tabnet/structure.hpp"

namespace tabnet::metrics {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero denominators give zero.
PRF prf_from_counts(std::size_t matches, std::size_t predicted, std::size_t actual);

/// Greedy one-to-one matching: predictions by descending score (ties to the
/// lower index) take the unmatched ground truth of highest IoU, provided
/// IoU >= threshold.
std::size_t count_matches(std::span<const ScoredBox> preds, std::span<const Box> gts, double iou_threshold);
PRF detection_prf(std::span<const ScoredBox> preds, std::span<const Box> gts, double iou_threshold);

inline constexpr std::array<double, 4> kIouThresholds{0.6, 0.7, 0.8, 0.9};

/// sum(t_i * f1_i) / sum(t_i).
double wavg_f1(std::span<const double> f1_per_threshold,
               std::span<const double> thresholds = kIouThresholds);

enum class Direction { Horizontal, Vertical };

struct AdjacencyRelation {
  int source = 0;  ///< index into TableStructure::cells
  int target = 0;
  Direction direction = Direction::Horizontal;
  auto operator<=>(const AdjacencyRelation&) const = default;
};

/// For every non-empty cell, the nearest non-empty cell to the right along
/// each spanned row and below along each spanned column. Sorted, unique.
std::vector<AdjacencyRelation> adjacency_relations(const TableStructure& s,
                                                   const std::vector<bool>& non_empty);

/// Non-empty means at least one content id.
std::vector<bool> non_empty_cells(const TableStructure& s);

/// Relations keyed by the sorted content-id sets of their two cells and
/// compared as multisets.
PRF adjacency_prf(const TableStructure& pred, const TableStructure& gt);

struct TreeNode {
  std::string label;  ///< "table", "tr" or "td"
  int rowspan = 1;
  int colspan = 1;
  std::vector<TreeNode> children;
  bool same_label(const TreeNode& o) const {
    return label == o.label && rowspan == o.rowspan && colspan == o.colspan;
  }
};

/// table -> one tr per grid row -> td per cell starting on that row.
TreeNode struct_tree(const TableStructure& s);
std::size_t tree_size(const TreeNode& t);

/// Zhang-Shasha, unit insert/delete, substitution 0 on equal labels else 1.
std::size_t tree_edit_distance(const TreeNode& a, const TreeNode& b);

double teds_struct(const TreeNode& pred, const TreeNode& gt);
double teds_struct(const TableStructure& pred, const TableStructure& gt);

/// Ground truth as a page result: every text box of the page numbered in
/// table/cell order, table scores 1.
PageResult page_result_from_annotation(const DocAnnotation& doc, const std::string& image);
/// Text boxes of all tables in the numbering used above.
std::vector<Box> table_text_boxes(const DocAnnotation& doc);

struct PageEval {
  std::string image;
  std::array<std::size_t, 4> matches{};
  std::size_t predicted = 0;
  std::size_t actual = 0;
  std::vector<double> adjacency_f1;  ///< one per ground-truth table
  std::vector<double> teds;
};

/// Prediction content ids are recomputed from the ground-truth text boxes.
/// Each ground-truth table is paired with the unused prediction of highest
/// IoU (>= 0.5); unpaired tables score 0.
PageEval evaluate_page(const PageResult& pred, const PageResult& gt, std::span<const Box> gt_text_boxes);

struct EvalReport {
  std::array<PRF, 4> detection{};
  double wavg_f1 = 0.0;
  double mean_adjacency_f1 = 0.0;
  double mean_teds_struct = 0.0;
  std::vector<PageEval> pages;
};

EvalReport summarize(std::vector<PageEval> pages);
nlohmann::json to_json(const EvalReport& r);

}  // namespace tabnet::metrics
