#pragma once

#include <span>
#include <string>
#include <vector>

#include "tabnet/annotation.hpp"
#include "tabnet/grid_assembler.hpp"

namespace tabnet {

struct StructureCell {
  CellSpan span;
  QuadBox quad;
  std::vector<int> content_ids;
};

/// Cells partition the rows x cols grid; kept in row-major order of
/// (start_row, start_col).
struct TableStructure {
  int rows = 0;
  int cols = 0;
  std::vector<StructureCell> cells;

  /// Empty when the spans partition the grid exactly.
  std::string partition_error() const;
};

/// Structure straight from an annotated table (crop or page coordinates).
/// Content ids number the table's text boxes in cell order starting at
/// `first_content_id`.
TableStructure structure_from_annotation(const TableAnnotation& table, int first_content_id = 0);

/// <table><tr><td ...></td></tr></table> with rowspan/colspan attributes.
std::string to_html(const TableStructure& s);

}  // namespace tabnet

namespace tabnet::merger {

/// A 4-adjacent pair of grid cells; (r1, c1) is right of or below (r0, c0).
struct CellPair {
  int r0 = 0, c0 = 0, r1 = 0, c1 = 0;
  bool horizontal() const { return r0 == r1; }
  friend bool operator==(const CellPair&, const CellPair&) = default;
};

/// Horizontal pairs in row-major order, then vertical pairs in row-major
/// order: M(N-1) + N(M-1) entries.
std::vector<CellPair> adjacent_pairs(int rows, int cols);

enum class PairLabel { Positive, Negative, Ignore };

/// Index of the ground-truth cell each detected cell is assigned to, or -1.
/// Assignment requires Area(det ∩ gt) / Area(det) > 0.5; the largest ratio
/// wins, ties to the lower index. Ground-truth quads are treated as convex.
std::vector<int> assign_cells(std::span<const QuadBox> detected, std::span<const QuadBox> gt_cells);

std::vector<PairLabel> label_pairs(const grid::CellGrid& grid, std::span<const QuadBox> gt_cells);

/// Merges pairs scoring >= threshold, rectangularizes each merged component
/// and re-merges overlapping rectangles until the spans are disjoint.
TableStructure apply_merges(const grid::CellGrid& grid, std::span<const double> scores,
                            double threshold = 0.8);

}  // namespace tabnet::merger
