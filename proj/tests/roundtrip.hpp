#pragma once

// Annotation -> separator masks -> assembler -> oracle merges, shared by the
// unit tests and the acceptance suite.

#include <algorithm>
#include <string>
#include <vector>

#include "tabnet/imaging.hpp"
#include "tabnet/separator_gt.hpp"
#include "tabnet/structure.hpp"

namespace tabnet::testing {

struct RoundTrip {
  bool counts_match = false;
  bool spans_match = false;
  int rows = 0, cols = 0;
  std::string detail;
};

inline std::vector<CellSpan> sorted_spans(std::vector<CellSpan> s) {
  std::sort(s.begin(), s.end(), [](const CellSpan& a, const CellSpan& b) {
    return std::tie(a.start_row, a.start_col) < std::tie(b.start_row, b.start_col);
  });
  return s;
}

inline RoundTrip round_trip(const cv::Mat& page, const TableAnnotation& table, int longer_side) {
  RoundTrip out;
  const TableCrop tc = crop_table(page, table, longer_side);
  const auto gt = splitter::make_separator_gt(tc.table, tc.padded_height, tc.padded_width);
  const auto res = grid::assemble_binary(gt.row, gt.col, tc.crop.image.cols, tc.crop.image.rows);
  out.rows = res.grid.rows;
  out.cols = res.grid.cols;
  out.counts_match = res.grid.rows == table.rows && res.grid.cols == table.cols;
  if (!out.counts_match) {
    out.detail = "grid " + std::to_string(res.grid.rows) + "x" + std::to_string(res.grid.cols) + " vs " +
                 std::to_string(table.rows) + "x" + std::to_string(table.cols);
    return out;
  }
  std::vector<QuadBox> gt_cells;
  for (const auto& c : tc.table.cells) gt_cells.push_back(c.quad);
  std::vector<double> scores;
  for (auto l : merger::label_pairs(res.grid, gt_cells)) scores.push_back(l == merger::PairLabel::Positive ? 1.0 : 0.0);
  const TableStructure s = merger::apply_merges(res.grid, scores);
  std::vector<CellSpan> got, want;
  for (const auto& c : s.cells) got.push_back(c.span);
  for (const auto& c : table.cells) want.push_back(c.span);
  out.spans_match = sorted_spans(got) == sorted_spans(want);
  if (!out.spans_match) out.detail = "spans differ";
  return out;
}

}  // namespace tabnet::testing
