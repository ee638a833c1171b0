#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "tabnet/grid_assembler.hpp"

using namespace tabnet;
using namespace tabnet::grid;

namespace {

Component bar(int r0, int r1, int c0, int c1) {
  BinaryMask m(r1 + 4, c1 + 4, 0);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) m.at(r, c) = 1;
  auto comps = extract_components(m);
  REQUIRE(comps.size() == 1);
  return comps[0];
}

// Full-resolution row layout: one mask column per crop column.
const MaskScale kUnit{1.0, 1.0};

}  // namespace

TEST_CASE("binarize is inclusive") {
  ProbMap p(1, 3);
  p.data = {0.79f, 0.8f, 0.9f};
  const BinaryMask b = binarize(p, 0.8f);
  CHECK(b.data == std::vector<std::uint8_t>{0, 1, 1});
  ProbMap hi(4, 4, 0.9f);
  for (auto v : binarize(hi).data) CHECK(v == 1);
}

TEST_CASE("components use 8-connectivity and drop noise") {
  BinaryMask m(10, 10, 0);
  CHECK(extract_components(m).empty());
  for (int c = 0; c < 10; ++c) m.at(1, c) = m.at(5, c) = 1;
  CHECK(extract_components(m).size() == 2);
  BinaryMask d(6, 6, 0);
  for (int k = 0; k < 6; ++k) d.at(k, k) = 1;
  CHECK(extract_components(d).size() == 1);
  BinaryMask speck(6, 6, 0);
  speck.at(2, 2) = speck.at(2, 3) = speck.at(3, 3) = 1;
  CHECK(extract_components(speck).empty());
}

TEST_CASE("horizontal bar fits a constant midpoint") {
  const Component c = bar(10, 17, 0, 40);
  SeparatorLine line = fit_center_line(c, Orientation::Row, kUnit);
  for (double x : {0.0, 10.0, 40.0}) CHECK(line.center(x) == doctest::Approx(13.5));
  line.thickness = estimate_thickness(c, line, 8.0, kUnit);
  CHECK(line.thickness == 8.0);
  const BorderPair b = border_lines(line, 41);
  for (std::size_t k = 0; k < b.t.size(); ++k) {
    CHECK(b.lo[k] == doctest::Approx(9.5));
    CHECK(b.hi[k] == doctest::Approx(17.5));
  }
}

TEST_CASE("degenerate components are rejected") {
  CHECK_THROWS_AS(fit_center_line(bar(0, 5, 0, 1), Orientation::Row, kUnit), std::invalid_argument);
}

TEST_CASE("sloped bar recovers the line") {
  BinaryMask m(40, 400, 0);
  for (int c = 0; c < 400; ++c) {
    const double y = 0.01 * c + 5;
    const int top = static_cast<int>(std::lround(y - 3.5));
    for (int r = top; r < top + 8; ++r) m.at(r, c) = 1;
  }
  const auto comps = extract_components(m);
  REQUIRE(comps.size() == 1);
  const SeparatorLine line = fit_center_line(comps[0], Orientation::Row, kUnit, 1);
  // Least-squares oracle on the same midpoints with a plain normal equation.
  Eigen::MatrixXd A(400, 2);
  Eigen::VectorXd b(400);
  for (int c = 0; c < 400; ++c) {
    int lo = 1000, hi = -1;
    for (int r = 0; r < 40; ++r)
      if (m.at(r, c)) lo = std::min(lo, r), hi = std::max(hi, r);
    A(c, 0) = 1.0;
    A(c, 1) = c;
    b(c) = 0.5 * (lo + hi);
  }
  const Eigen::VectorXd ref = (A.transpose() * A).ldlt().solve(A.transpose() * b);
  REQUIRE(line.center.coeffs.size() == 2);
  CHECK(std::abs(line.center.coeffs[1] - 0.01) < 1e-3);
  CHECK(line.center.coeffs[0] == doctest::Approx(ref(0)).epsilon(1e-9));
  CHECK(line.center.coeffs[1] == doctest::Approx(ref(1)).epsilon(1e-9));
}

TEST_CASE("sine-displaced bar fits within half the thickness") {
  BinaryMask m(60, 300, 0);
  std::vector<double> truth(300);
  for (int c = 0; c < 300; ++c) {
    truth[c] = 30 + 3 * std::sin(2 * M_PI * c / 600.0);
    const int top = static_cast<int>(std::lround(truth[c] - 4));
    for (int r = top; r < top + 8; ++r) m.at(r, c) = 1;
  }
  const auto comps = extract_components(m);
  REQUIRE(comps.size() == 1);
  const SeparatorLine line = fit_center_line(comps[0], Orientation::Row, kUnit);
  for (int c = 0; c < 300; ++c) CHECK(std::abs(line.center(c) - truth[c]) < 4.0);
}

TEST_CASE("thickness is the mean of scan segments") {
  BinaryMask m(30, 64, 0);
  for (int c = 0; c < 64; ++c) {
    const int t = (c / 8) % 2 ? 10 : 6;
    for (int r = 10; r < 10 + t; ++r) m.at(r, c) = 1;
  }
  const auto comps = extract_components(m);
  const SeparatorLine line = fit_center_line(comps[0], Orientation::Row, kUnit);
  CHECK(estimate_thickness(comps[0], line, 8.0, kUnit) == doctest::Approx(8.0));

  // Random blobs against an exhaustive per-column count.
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    BinaryMask b(20, 48, 0);
    std::uniform_int_distribution<int> top(0, 9), len(1, 10);
    for (int c = 0; c < 48; ++c) {
      const int t = top(rng), l = len(rng);
      for (int r = t; r < t + l; ++r) b.at(r, c) = 1;
    }
    const auto cc = extract_components(b, 1);
    REQUIRE(cc.size() >= 1);
    if (cc.size() != 1) continue;  // random columns may disconnect
    const SeparatorLine ln = fit_center_line(cc[0], Orientation::Row, kUnit);
    double sum = 0;
    int n = 0;
    for (int c = 0; c < 48; c += 8) {
      int lo = 100, hi = -1;
      for (int r = 0; r < 20; ++r)
        if (b.at(r, c)) lo = std::min(lo, r), hi = std::max(hi, r);
      sum += hi - lo + 1;
      ++n;
    }
    CHECK(estimate_thickness(cc[0], ln, 8.0, kUnit) == doctest::Approx(sum / n));
  }
}

TEST_CASE("curved borders are pointwise offsets") {
  SeparatorLine line;
  line.center.coeffs = {20.0, 0.05, -1e-4};
  line.thickness = 6.0;
  line.extent_min = 0;
  line.extent_max = 199;
  const BorderPair b = border_lines(line, 200);
  for (std::size_t k = 0; k < b.t.size(); ++k) {
    const double c = line.center_at(b.t[k]);
    CHECK(b.lo[k] == doctest::Approx(c - 3.0));
    CHECK(b.hi[k] == doctest::Approx(c + 3.0));
  }
}

TEST_CASE("straight separators give the expected grid") {
  AssemblerConfig cfg;
  std::vector<BorderPair> rows{flat_border(-0.5, 100), flat_border(49.5, 100), flat_border(99.5, 100)};
  std::vector<BorderPair> cols{flat_border(-0.5, 100), flat_border(30, 100), flat_border(60, 100),
                               flat_border(99.5, 100)};
  const CellGrid g = intersect_grid(rows, cols, 100, 100, cfg);
  CHECK(g.rows == 2);
  CHECK(g.cols == 3);
  CHECK(g.cells.size() == 6);
  CHECK(g.points.size() == 12);
  CHECK(g.cell(0, 0).pts[0].x == doctest::Approx(0.0));
  CHECK(g.cell(1, 2).pts[2].x == doctest::Approx(100.0));
  CHECK(g.cell(1, 2).pts[2].y == doctest::Approx(100.0));
  CHECK(g.cell(0, 1).pts[0].x == doctest::Approx(30.5));
}

TEST_CASE("implicit borders close a mask without edge separators") {
  BinaryMask row(64, 8, 0), col(8, 64, 0);
  for (int c = 0; c < 8; ++c)
    for (int r = 28; r < 36; ++r) row.at(r, c) = 1;
  for (int r = 0; r < 8; ++r)
    for (int c = 28; c < 36; ++c) col.at(r, c) = 1;
  const AssemblyResult res = assemble_binary(row, col, 64, 64);
  CHECK(res.grid.rows == 2);
  CHECK(res.grid.cols == 2);
  CHECK(res.grid.cell(0, 0).pts[2].y == doctest::Approx(28.0));
  CHECK(res.grid.cell(1, 0).pts[0].y == doctest::Approx(36.0));

  const AssemblyResult blank = assemble_binary(BinaryMask(64, 8, 0), BinaryMask(8, 64, 0), 64, 64);
  CHECK(blank.grid.rows == 1);
  CHECK(blank.grid.cols == 1);
}

TEST_CASE("overlapping same-orientation bands are merged") {
  BinaryMask row(64, 8, 0);
  for (int c = 0; c < 4; ++c)
    for (int r = 20; r < 28; ++r) row.at(r, c) = 1;
  for (int c = 5; c < 8; ++c)
    for (int r = 22; r < 30; ++r) row.at(r, c) = 1;
  const AssemblyResult res = assemble_binary(row, BinaryMask(8, 64, 0), 64, 64);
  CHECK(res.grid.rows == 2);
  CHECK_FALSE(res.diagnostics.empty());
}

TEST_CASE("transposed masks give the transposed grid") {
  BinaryMask row(96, 12, 0), col(12, 96, 0);
  for (int c = 0; c < 12; ++c)
    for (int r : {20, 21, 22, 23, 24, 25, 26, 27, 60, 61, 62, 63, 64, 65, 66, 67}) row.at(r, c) = 1;
  for (int r = 0; r < 12; ++r)
    for (int c : {40, 41, 42, 43, 44, 45, 46, 47}) col.at(r, c) = 1;
  const auto a = assemble_binary(row, col, 96, 96);
  const auto b = assemble_binary(transpose(col), transpose(row), 96, 96);
  REQUIRE(a.grid.rows == b.grid.cols);
  REQUIRE(a.grid.cols == b.grid.rows);
  for (int i = 0; i < a.grid.rows; ++i) {
    for (int j = 0; j < a.grid.cols; ++j) {
      const QuadBox& qa = a.grid.cell(i, j);
      const QuadBox& qb = b.grid.cell(j, i);
      // Transposition maps TL->TL, TR->BL, BR->BR, BL->TR.
      const int map[4] = {0, 3, 2, 1};
      for (int k = 0; k < 4; ++k) {
        CHECK(qa.pts[k].x == doctest::Approx(qb.pts[map[k]].y));
        CHECK(qa.pts[k].y == doctest::Approx(qb.pts[map[k]].x));
      }
    }
  }
}

TEST_CASE("curved intersections lie on both polylines") {
  SeparatorLine r;
  r.center.coeffs = {50.0, 0.02, -1e-4};
  r.thickness = 4;
  r.extent_min = 0;
  r.extent_max = 199;
  SeparatorLine c;
  c.center.coeffs = {80.0, -0.03, 2e-4};
  c.thickness = 6;
  c.extent_min = 0;
  c.extent_max = 199;
  const BorderPair rb = border_lines(r, 200), cb = border_lines(c, 200);
  for (bool rh : {false, true}) {
    for (bool ch : {false, true}) {
      const Point p = intersect_borders(rb, rh, cb, ch);
      CHECK(std::abs((rh ? rb.hi_at(p.x) : rb.lo_at(p.x)) - p.y) < 0.5);
      CHECK(std::abs((ch ? cb.hi_at(p.y) : cb.lo_at(p.y)) - p.x) < 0.5);
    }
  }
}
