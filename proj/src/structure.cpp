#include "tabnet/structure.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tabnet {

std::string TableStructure::partition_error() const {
  if (rows < 1 || cols < 1) return "empty grid";
  std::vector<int> cover(static_cast<std::size_t>(rows * cols), 0);
  for (const auto& c : cells) {
    const CellSpan& s = c.span;
    if (s.start_row < 0 || s.start_col < 0 || s.end_row >= rows || s.end_col >= cols ||
        s.start_row > s.end_row || s.start_col > s.end_col)
      return "span out of range";
    for (int r = s.start_row; r <= s.end_row; ++r)
      for (int k = s.start_col; k <= s.end_col; ++k) ++cover[r * cols + k];
  }
  for (int v : cover)
    if (v != 1) return "spans do not partition the grid";
  return {};
}

TableStructure structure_from_annotation(const TableAnnotation& table, int first_content_id) {
  TableStructure s;
  s.rows = table.rows;
  s.cols = table.cols;
  int next = first_content_id;
  for (const auto& c : table.cells) {
    StructureCell cell{c.span, c.quad, {}};
    for (std::size_t k = 0; k < c.text_boxes.size(); ++k) cell.content_ids.push_back(next++);
    s.cells.push_back(std::move(cell));
  }
  std::stable_sort(s.cells.begin(), s.cells.end(), [](const StructureCell& a, const StructureCell& b) {
    return a.span.start_row != b.span.start_row ? a.span.start_row < b.span.start_row
                                                : a.span.start_col < b.span.start_col;
  });
  return s;
}

std::string to_html(const TableStructure& s) {
  std::ostringstream out;
  out << "<table>";
  for (int r = 0; r < s.rows; ++r) {
    out << "<tr>";
    for (const auto& c : s.cells) {
      if (c.span.start_row != r) continue;
      out << "<td";
      if (c.span.row_span() > 1) out << " rowspan=\"" << c.span.row_span() << '"';
      if (c.span.col_span() > 1) out << " colspan=\"" << c.span.col_span() << '"';
      out << "></td>";
    }
    out << "</tr>";
  }
  out << "</table>";
  return out.str();
}

}  // namespace tabnet

namespace tabnet::merger {

std::vector<CellPair> adjacent_pairs(int rows, int cols) {
  std::vector<CellPair> pairs;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c + 1 < cols; ++c) pairs.push_back({r, c, r, c + 1});
  for (int r = 0; r + 1 < rows; ++r)
    for (int c = 0; c < cols; ++c) pairs.push_back({r, c, r + 1, c});
  return pairs;
}

std::vector<int> assign_cells(std::span<const QuadBox> detected, std::span<const QuadBox> gt_cells) {
  std::vector<int> out(detected.size(), -1);
  for (std::size_t i = 0; i < detected.size(); ++i) {
    const double area = polygon_area(detected[i].pts);
    if (area < 1.0) continue;
    double best = 0.5;
    for (std::size_t g = 0; g < gt_cells.size(); ++g) {
      const double ratio = intersection_area(detected[i], gt_cells[g]) / area;
      if (ratio > best) {
        best = ratio;
        out[i] = static_cast<int>(g);
      }
    }
  }
  return out;
}

std::vector<PairLabel> label_pairs(const grid::CellGrid& grid, std::span<const QuadBox> gt_cells) {
  const std::vector<int> assigned = assign_cells(grid.cells, gt_cells);
  std::vector<PairLabel> labels;
  for (const CellPair& p : adjacent_pairs(grid.rows, grid.cols)) {
    const int a = assigned[static_cast<std::size_t>(p.r0 * grid.cols + p.c0)];
    const int b = assigned[static_cast<std::size_t>(p.r1 * grid.cols + p.c1)];
    if (a < 0 || b < 0) {
      labels.push_back(PairLabel::Ignore);
    } else {
      labels.push_back(a == b ? PairLabel::Positive : PairLabel::Negative);
    }
  }
  return labels;
}

namespace {

struct Rect {
  int r0, c0, r1, c1;
  bool overlaps(const Rect& o) const {
    return r0 <= o.r1 && o.r0 <= r1 && c0 <= o.c1 && o.c0 <= c1;
  }
  Rect merged(const Rect& o) const {
    return {std::min(r0, o.r0), std::min(c0, o.c0), std::max(r1, o.r1), std::max(c1, o.c1)};
  }
};

int find(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

TableStructure apply_merges(const grid::CellGrid& grid, std::span<const double> scores,
                            double threshold) {
  const auto pairs = adjacent_pairs(grid.rows, grid.cols);
  if (scores.size() != pairs.size())
    throw std::invalid_argument("expected " + std::to_string(pairs.size()) + " pair scores, got " +
                                std::to_string(scores.size()));
  const int n = grid.rows * grid.cols;
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (scores[k] < threshold) continue;
    const int a = find(parent, pairs[k].r0 * grid.cols + pairs[k].c0);
    const int b = find(parent, pairs[k].r1 * grid.cols + pairs[k].c1);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  std::vector<Rect> rects;
  std::vector<int> rect_of_root(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    const int root = find(parent, i);
    const int r = i / grid.cols, c = i % grid.cols;
    if (rect_of_root[root] < 0) {
      rect_of_root[root] = static_cast<int>(rects.size());
      rects.push_back({r, c, r, c});
    } else {
      rects[rect_of_root[root]] = rects[rect_of_root[root]].merged({r, c, r, c});
    }
  }

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < rects.size() && !changed; ++i) {
      for (std::size_t j = i + 1; j < rects.size() && !changed; ++j) {
        if (rects[i].overlaps(rects[j])) {
          rects[i] = rects[i].merged(rects[j]);
          rects.erase(rects.begin() + static_cast<std::ptrdiff_t>(j));
          changed = true;
        }
      }
    }
  }

  TableStructure s;
  s.rows = grid.rows;
  s.cols = grid.cols;
  for (const Rect& rc : rects) {
    StructureCell cell;
    cell.span = {rc.r0, rc.r1, rc.c0, rc.c1};
    cell.quad = QuadBox(std::array<Point, 4>{grid.cell(rc.r0, rc.c0).pts[0], grid.cell(rc.r0, rc.c1).pts[1],
                                             grid.cell(rc.r1, rc.c1).pts[2], grid.cell(rc.r1, rc.c0).pts[3]});
    s.cells.push_back(std::move(cell));
  }
  std::sort(s.cells.begin(), s.cells.end(), [](const StructureCell& a, const StructureCell& b) {
    return a.span.start_row != b.span.start_row ? a.span.start_row < b.span.start_row
                                                : a.span.start_col < b.span.start_col;
  });
  return s;
}

}  // namespace tabnet::merger
