#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "tabnet/structure.hpp"

using namespace tabnet;
using namespace tabnet::merger;

namespace {

grid::CellGrid unit_grid(int rows, int cols, double size = 10.0) {
  grid::CellGrid g;
  g.rows = rows;
  g.cols = cols;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) g.cells.emplace_back(Box(c * size + 1, r * size + 1, size - 2, size - 2));
  return g;
}

std::vector<double> scores_for(int rows, int cols, const std::vector<CellPair>& merged) {
  std::vector<double> s;
  for (const auto& p : adjacent_pairs(rows, cols))
    s.push_back(std::find(merged.begin(), merged.end(), p) != merged.end() ? 0.9 : 0.1);
  return s;
}

}  // namespace

TEST_CASE("adjacent pair count") {
  for (int m = 1; m <= 5; ++m)
    for (int n = 1; n <= 5; ++n) CHECK(adjacent_pairs(m, n).size() == std::size_t(m * (n - 1) + n * (m - 1)));
}

TEST_CASE("apply_merges examples") {
  const auto g = unit_grid(2, 3);
  SUBCASE("nothing above threshold") {
    const auto s = apply_merges(g, scores_for(2, 3, {}));
    CHECK(s.cells.size() == 6);
  }
  SUBCASE("single horizontal merge") {
    const auto s = apply_merges(g, scores_for(2, 3, {{0, 0, 0, 1}}));
    REQUIRE(s.cells.size() == 5);
    CHECK(s.cells[0].span == CellSpan{0, 0, 0, 1});
    CHECK(s.cells[0].quad.pts[0] == g.cell(0, 0).pts[0]);
    CHECK(s.cells[0].quad.pts[1] == g.cell(0, 1).pts[1]);
  }
  SUBCASE("L-shaped component becomes a rectangle") {
    const auto s = apply_merges(g, scores_for(2, 3, {{0, 0, 0, 1}, {0, 1, 1, 1}}));
    REQUIRE(s.cells.size() == 3);
    CHECK(s.cells[0].span == CellSpan{0, 1, 0, 1});
  }
  SUBCASE("threshold is inclusive") {
    std::vector<double> sc(7, 0.0);
    sc[0] = 0.8;
    CHECK(apply_merges(g, sc).cells.size() == 5);
  }
  CHECK_THROWS(apply_merges(g, std::vector<double>(3, 0.0)));
}

TEST_CASE("apply_merges always partitions the grid") {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = 1 + trial % 6, n = 1 + (trial / 6) % 6;
    const auto g = unit_grid(m, n);
    std::vector<double> sc;
    for (std::size_t k = 0; k < adjacent_pairs(m, n).size(); ++k) sc.push_back(u(rng) < 0.25 ? 0.95 : 0.05);
    const auto s = apply_merges(g, sc);
    CHECK(s.partition_error().empty());
    for (std::size_t k = 1; k < s.cells.size(); ++k) {
      const auto& a = s.cells[k - 1].span;
      const auto& b = s.cells[k].span;
      CHECK((a.start_row < b.start_row || (a.start_row == b.start_row && a.start_col < b.start_col)));
    }
  }
}

TEST_CASE("pair labels") {
  SUBCASE("2x2 grid over a GT with a spanning top row") {
    const auto g = unit_grid(2, 2);
    const std::vector<QuadBox> gt{QuadBox(Box(0, 0, 20, 10)), QuadBox(Box(0, 10, 10, 10)),
                                  QuadBox(Box(10, 10, 10, 10))};
    const auto labels = label_pairs(g, gt);
    int pos = 0, neg = 0;
    for (auto l : labels) pos += l == PairLabel::Positive, neg += l == PairLabel::Negative;
    CHECK(pos == 1);
    CHECK(neg == 3);
    CHECK(labels[0] == PairLabel::Positive);
  }
  SUBCASE("ratio exactly one half is not assigned") {
    const std::vector<QuadBox> det{QuadBox(Box(0, 0, 10, 10))};
    const std::vector<QuadBox> gt{QuadBox(Box(5, 0, 10, 10))};
    CHECK(assign_cells(det, gt)[0] == -1);
    const std::vector<QuadBox> inside{QuadBox(Box(0, 0, 20, 20))};
    CHECK(assign_cells(det, inside)[0] == 0);
  }
  SUBCASE("unassigned cells make pairs ignored") {
    const auto g = unit_grid(1, 2);
    const std::vector<QuadBox> gt{QuadBox(Box(0, 0, 10, 10))};
    CHECK(label_pairs(g, gt)[0] == PairLabel::Ignore);
  }
}

TEST_CASE("positive labels agree with a brute-force assignment") {
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> jitter(-2, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 2 + trial % 4, n = 2 + (trial / 4) % 4;
    // Random GT partition from random merges on a unit grid.
    const auto base = unit_grid(m, n);
    std::vector<double> sc;
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t k = 0; k < adjacent_pairs(m, n).size(); ++k) sc.push_back(u(rng) < 0.3 ? 1.0 : 0.0);
    const auto truth = apply_merges(base, sc);
    std::vector<QuadBox> gt;
    for (const auto& c : truth.cells)
      gt.emplace_back(Box(c.span.start_col * 10.0, c.span.start_row * 10.0, c.span.col_span() * 10.0,
                          c.span.row_span() * 10.0));
    grid::CellGrid det = unit_grid(m, n);
    for (auto& q : det.cells)
      for (auto& p : q.pts) p.x += jitter(rng) * 0.5, p.y += jitter(rng) * 0.5;
    const auto labels = label_pairs(det, gt);
    const auto pairs = adjacent_pairs(m, n);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      int ga = -1, gb = -1;
      for (std::size_t c = 0; c < truth.cells.size(); ++c) {
        if (truth.cells[c].span.covers(pairs[k].r0, pairs[k].c0)) ga = int(c);
        if (truth.cells[c].span.covers(pairs[k].r1, pairs[k].c1)) gb = int(c);
      }
      CHECK(labels[k] == (ga == gb ? PairLabel::Positive : PairLabel::Negative));
    }
  }
}

TEST_CASE("html export") {
  TableStructure one{1, 1, {{CellSpan{0, 0, 0, 0}, QuadBox(Box(0, 0, 1, 1)), {}}}};
  CHECK(to_html(one) == "<table><tr><td></td></tr></table>");
  TableStructure two{2, 2,
                     {{CellSpan{0, 0, 0, 1}, QuadBox(Box(0, 0, 2, 1)), {}},
                      {CellSpan{1, 1, 0, 0}, QuadBox(Box(0, 1, 1, 1)), {}},
                      {CellSpan{1, 1, 1, 1}, QuadBox(Box(1, 1, 1, 1)), {}}}};
  CHECK(to_html(two) == "<table><tr><td colspan=\"2\"></td></tr><tr><td></td><td></td></tr></table>");
}
