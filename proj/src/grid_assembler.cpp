#include "tabnet/grid_assembler.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace tabnet::grid {

double Polynomial::operator()(double t) const {
  double v = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) v = v * t + *it;
  return v;
}

double SeparatorLine::center_at(double t) const {
  return center(std::clamp(t, extent_min, extent_max));
}

namespace {

double interp(const std::vector<double>& t, const std::vector<double>& v, double s) {
  if (s <= t.front()) return v.front();
  if (s >= t.back()) return v.back();
  const auto it = std::upper_bound(t.begin(), t.end(), s);
  const std::size_t k = static_cast<std::size_t>(it - t.begin());
  const double a = (s - t[k - 1]) / (t[k] - t[k - 1]);
  return v[k - 1] + a * (v[k] - v[k - 1]);
}

std::vector<double> sample_positions(double length, double step) {
  std::vector<double> t;
  const double end = length - 0.5;
  for (double s = -0.5; s < end; s += step) t.push_back(s);
  t.push_back(end);
  return t;
}

/// Per-column [min_r, max_r] of a component.
std::map<int, std::pair<int, int>> column_runs(const Component& comp) {
  std::map<int, std::pair<int, int>> runs;
  for (const MaskPixel& p : comp.pixels) {
    auto [it, inserted] = runs.try_emplace(p.c, p.r, p.r);
    if (!inserted) {
      it->second.first = std::min(it->second.first, p.r);
      it->second.second = std::max(it->second.second, p.r);
    }
  }
  return runs;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool bands_overlap(const BorderPair& a, const BorderPair& b) {
  for (std::size_t k = 0; k < a.t.size(); ++k) {
    const double s = a.t[k];
    if (std::max(a.lo[k], b.lo_at(s)) < std::min(a.hi[k], b.hi_at(s))) return true;
  }
  return false;
}

BorderPair merge_pair(const BorderPair& a, const BorderPair& b) {
  BorderPair m = a;
  for (std::size_t k = 0; k < m.t.size(); ++k) {
    m.lo[k] = std::min(a.lo[k], b.lo_at(m.t[k]));
    m.hi[k] = std::max(a.hi[k], b.hi_at(m.t[k]));
  }
  return m;
}

double pair_position(const BorderPair& p) { return 0.5 * (mean_of(p.lo) + mean_of(p.hi)); }

void sort_and_merge(std::vector<BorderPair>& pairs, const char* kind,
                    std::vector<std::string>* diagnostics) {
  std::sort(pairs.begin(), pairs.end(), [](const BorderPair& a, const BorderPair& b) {
    return pair_position(a) < pair_position(b);
  });
  for (std::size_t i = 0; i + 1 < pairs.size();) {
    if (bands_overlap(pairs[i], pairs[i + 1])) {
      if (diagnostics)
        diagnostics->push_back(std::string("merged overlapping ") + kind + " separators " +
                               std::to_string(i) + " and " + std::to_string(i + 1));
      pairs[i] = merge_pair(pairs[i], pairs[i + 1]);
      pairs.erase(pairs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      i = i > 0 ? i - 1 : 0;
    } else {
      ++i;
    }
  }
}

void add_implicit_borders(std::vector<BorderPair>& pairs, double length_along, double length_across,
                          const AssemblerConfig& config) {
  const double first = -0.5;
  const double last = length_across - 0.5;
  if (pairs.empty() ||
      *std::min_element(pairs.front().lo.begin(), pairs.front().lo.end()) > first + config.border_margin)
    pairs.insert(pairs.begin(), flat_border(first, length_along, config.sample_step));
  if (pairs.size() < 2 ||
      *std::max_element(pairs.back().hi.begin(), pairs.back().hi.end()) < last - config.border_margin)
    pairs.push_back(flat_border(last, length_along, config.sample_step));
}

BorderPair mid_pair(const BorderPair& p) {
  BorderPair m = p;
  for (std::size_t k = 0; k < p.t.size(); ++k) m.lo[k] = m.hi[k] = 0.5 * (p.lo[k] + p.hi[k]);
  return m;
}

Point shift_half(Point p) { return {p.x + 0.5, p.y + 0.5}; }

struct FittedComponent {
  Component comp;
  SeparatorLine line;
  BorderPair borders;
};

std::vector<FittedComponent> fit_layout(const BinaryMask& layout, Orientation orientation,
                                        double length_along, const AssemblerConfig& config,
                                        std::vector<std::string>& diagnostics) {
  const MaskScale scale{static_cast<double>(config.reduction), 1.0};
  const char* kind = orientation == Orientation::Row ? "row" : "column";
  auto fit_one = [&](const Component& comp) -> std::optional<FittedComponent> {
    try {
      SeparatorLine line = fit_center_line(comp, orientation, scale, config.max_degree);
      line.thickness = estimate_thickness(comp, line, config.scan_stride, scale);
      BorderPair borders = border_lines(line, length_along, config.sample_step);
      return FittedComponent{comp, line, std::move(borders)};
    } catch (const std::invalid_argument& e) {
      diagnostics.push_back(std::string("rejected ") + kind + " component: " + e.what());
      return std::nullopt;
    }
  };

  std::vector<FittedComponent> fitted;
  for (const Component& comp : extract_components(layout, config.min_component_pixels))
    if (auto f = fit_one(comp)) fitted.push_back(std::move(*f));

  // Components whose bands overlap describe one separator: union and refit.
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < fitted.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < fitted.size() && !merged; ++j) {
        if (!bands_overlap(fitted[i].borders, fitted[j].borders)) continue;
        Component u = fitted[i].comp;
        u.pixels.insert(u.pixels.end(), fitted[j].comp.pixels.begin(), fitted[j].comp.pixels.end());
        u.contour.insert(u.contour.end(), fitted[j].comp.contour.begin(), fitted[j].comp.contour.end());
        std::sort(u.pixels.begin(), u.pixels.end(), [](const MaskPixel& a, const MaskPixel& b) {
          return a.r != b.r ? a.r < b.r : a.c < b.c;
        });
        u.min_r = std::min(u.min_r, fitted[j].comp.min_r);
        u.max_r = std::max(u.max_r, fitted[j].comp.max_r);
        u.min_c = std::min(u.min_c, fitted[j].comp.min_c);
        u.max_c = std::max(u.max_c, fitted[j].comp.max_c);
        diagnostics.push_back(std::string("merged overlapping ") + kind + " components");
        auto f = fit_one(u);
        fitted.erase(fitted.begin() + static_cast<std::ptrdiff_t>(j));
        if (f) {
          fitted[i] = std::move(*f);
        } else {
          fitted.erase(fitted.begin() + static_cast<std::ptrdiff_t>(i));
        }
        merged = true;
      }
    }
  }
  return fitted;
}

}  // namespace

double BorderPair::lo_at(double s) const { return interp(t, lo, s); }
double BorderPair::hi_at(double s) const { return interp(t, hi, s); }

BinaryMask binarize(const ProbMap& mask, float threshold) {
  BinaryMask out(mask.height, mask.width, 0);
  for (std::size_t i = 0; i < mask.data.size(); ++i) out.data[i] = mask.data[i] >= threshold ? 1 : 0;
  return out;
}

std::vector<Component> extract_components(const BinaryMask& mask, int min_pixels) {
  std::vector<Component> out;
  Grid2D<int> label(mask.height, mask.width, -1);
  int next = 0;
  for (int r0 = 0; r0 < mask.height; ++r0) {
    for (int c0 = 0; c0 < mask.width; ++c0) {
      if (!mask.at(r0, c0) || label.at(r0, c0) >= 0) continue;
      Component comp;
      comp.min_r = comp.max_r = r0;
      comp.min_c = comp.max_c = c0;
      std::deque<MaskPixel> queue{{r0, c0}};
      label.at(r0, c0) = next;
      while (!queue.empty()) {
        const MaskPixel p = queue.front();
        queue.pop_front();
        comp.pixels.push_back(p);
        comp.min_r = std::min(comp.min_r, p.r);
        comp.max_r = std::max(comp.max_r, p.r);
        comp.min_c = std::min(comp.min_c, p.c);
        comp.max_c = std::max(comp.max_c, p.c);
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int r = p.r + dr, c = p.c + dc;
            if ((dr || dc) && mask.inside(r, c) && mask.at(r, c) && label.at(r, c) < 0) {
              label.at(r, c) = next;
              queue.push_back({r, c});
            }
          }
        }
      }
      ++next;
      if (static_cast<int>(comp.pixels.size()) < min_pixels) continue;
      std::sort(comp.pixels.begin(), comp.pixels.end(), [](const MaskPixel& a, const MaskPixel& b) {
        return a.r != b.r ? a.r < b.r : a.c < b.c;
      });
      const int id = next - 1;
      for (const MaskPixel& p : comp.pixels) {
        const bool boundary = !mask.inside(p.r - 1, p.c) || label.at(p.r - 1, p.c) != id ||
                              !mask.inside(p.r + 1, p.c) || label.at(p.r + 1, p.c) != id ||
                              !mask.inside(p.r, p.c - 1) || label.at(p.r, p.c - 1) != id ||
                              !mask.inside(p.r, p.c + 1) || label.at(p.r, p.c + 1) != id;
        if (boundary) comp.contour.push_back(p);
      }
      out.push_back(std::move(comp));
    }
  }
  return out;
}

SeparatorLine fit_center_line(const Component& component, Orientation orientation,
                              const MaskScale& scale, int max_degree) {
  const auto runs = column_runs(component);
  if (runs.size() < 3)
    throw std::invalid_argument("component spans " + std::to_string(runs.size()) +
                                " scan positions, need at least 3");
  std::vector<double> ts, vs;
  for (const auto& [c, run] : runs) {
    ts.push_back(scale.along * c + 0.5 * (scale.along - 1.0));
    const double lo = scale.across * run.first + 0.5 * (scale.across - 1.0);
    const double hi = scale.across * run.second + 0.5 * (scale.across - 1.0);
    vs.push_back(0.5 * (lo + hi));
  }
  const int n = static_cast<int>(ts.size());
  const int degree = std::clamp(max_degree, 0, n - 1);
  const double t_mid = 0.5 * (ts.front() + ts.back());
  const double t_half = std::max(0.5 * (ts.back() - ts.front()), 1e-9);

  Eigen::MatrixXd A(n, degree + 1);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    const double s = (ts[i] - t_mid) / t_half;
    double pw = 1.0;
    for (int k = 0; k <= degree; ++k, pw *= s) A(i, k) = pw;
    b(i) = vs[i];
  }
  const Eigen::VectorXd a = A.colPivHouseholderQr().solve(b);

  // Expand sum_k a_k ((t - m)/h)^k into monomials of t.
  std::vector<double> coeffs(static_cast<std::size_t>(degree) + 1, 0.0);
  for (int k = 0; k <= degree; ++k) {
    const double ak = a(k) / std::pow(t_half, k);
    double binom = 1.0;
    for (int j = 0; j <= k; ++j) {
      coeffs[static_cast<std::size_t>(j)] += ak * binom * std::pow(-t_mid, k - j);
      binom = binom * (k - j) / (j + 1);
    }
  }

  SeparatorLine line;
  line.orientation = orientation;
  line.center.coeffs = std::move(coeffs);
  line.extent_min = scale.along * runs.begin()->first;
  line.extent_max = scale.along * runs.rbegin()->first + scale.along - 1.0;
  return line;
}

double estimate_thickness(const Component& component, const SeparatorLine& line,
                          double scan_stride, const MaskScale& scale) {
  if (!(scan_stride > 0.0)) throw std::invalid_argument("scan stride must be positive");
  const auto runs = column_runs(component);
  double total = 0.0;
  int count = 0;
  for (double t = line.extent_min; t <= line.extent_max + 1e-9; t += scan_stride) {
    const int c = static_cast<int>(std::floor(t / scale.along + 1e-9));
    const auto it = runs.find(c);
    if (it == runs.end()) continue;
    total += scale.across * (it->second.second - it->second.first + 1);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("no scan line hits the component");
  return total / count;
}

BorderPair border_lines(const SeparatorLine& line, double length, double step) {
  BorderPair p;
  p.t = sample_positions(length, step);
  p.lo.reserve(p.t.size());
  p.hi.reserve(p.t.size());
  for (double s : p.t) {
    const double c = line.center_at(s);
    p.lo.push_back(c - 0.5 * line.thickness);
    p.hi.push_back(c + 0.5 * line.thickness);
  }
  return p;
}

BorderPair flat_border(double position, double length, double step) {
  BorderPair p;
  p.t = sample_positions(length, step);
  p.lo.assign(p.t.size(), position);
  p.hi.assign(p.t.size(), position);
  return p;
}

Point intersect_borders(const BorderPair& row, bool row_hi, const BorderPair& col, bool col_hi) {
  auto r = [&](double x) { return row_hi ? row.hi_at(x) : row.lo_at(x); };
  auto c = [&](double y) { return col_hi ? col.hi_at(y) : col.lo_at(y); };
  auto h = [&](double x) { return c(r(x)) - x; };
  double lo = row.t.front();
  double hi = row.t.back();
  double hlo = h(lo);
  const double hhi = h(hi);
  if (hlo == 0.0) return {lo, r(lo)};
  if (hhi == 0.0) return {hi, r(hi)};
  if ((hlo > 0.0) == (hhi > 0.0)) {
    const double x = std::abs(hlo) < std::abs(hhi) ? lo : hi;
    return {x, r(x)};
  }
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double hm = h(mid);
    if ((hm > 0.0) == (hlo > 0.0)) {
      lo = mid;
      hlo = hm;
    } else {
      hi = mid;
    }
  }
  const double x = 0.5 * (lo + hi);
  return {x, r(x)};
}

CellGrid intersect_grid(std::vector<BorderPair> rows, std::vector<BorderPair> cols, int width,
                        int height, const AssemblerConfig& config,
                        std::vector<std::string>* diagnostics) {
  sort_and_merge(rows, "row", diagnostics);
  sort_and_merge(cols, "column", diagnostics);
  add_implicit_borders(rows, width, height, config);
  add_implicit_borders(cols, height, width, config);

  CellGrid g;
  g.rows = static_cast<int>(rows.size()) - 1;
  g.cols = static_cast<int>(cols.size()) - 1;
  g.cells.reserve(static_cast<std::size_t>(g.rows * g.cols));
  for (int i = 0; i < g.rows; ++i) {
    for (int j = 0; j < g.cols; ++j) {
      const BorderPair& top = rows[i];
      const BorderPair& bottom = rows[i + 1];
      const BorderPair& left = cols[j];
      const BorderPair& right = cols[j + 1];
      g.cells.emplace_back(std::array<Point, 4>{
          shift_half(intersect_borders(top, true, left, true)),
          shift_half(intersect_borders(top, true, right, false)),
          shift_half(intersect_borders(bottom, false, right, false)),
          shift_half(intersect_borders(bottom, false, left, true))});
    }
  }
  std::vector<BorderPair> row_mid, col_mid;
  for (const auto& p : rows) row_mid.push_back(mid_pair(p));
  for (const auto& p : cols) col_mid.push_back(mid_pair(p));
  for (const auto& r : row_mid)
    for (const auto& c : col_mid) g.points.push_back(shift_half(intersect_borders(r, false, c, false)));
  g.row_borders = std::move(rows);
  g.col_borders = std::move(cols);
  return g;
}

AssemblyResult assemble_binary(const BinaryMask& row_mask, const BinaryMask& col_mask, int width,
                               int height, const AssemblerConfig& config) {
  if (width < 1 || height < 1) throw std::invalid_argument("crop must be non-empty");
  const int red = config.reduction;
  AssemblyResult result;
  const BinaryMask row_layout = crop_top_left(row_mask, height, (width + red - 1) / red);
  const BinaryMask col_layout = transpose(crop_top_left(col_mask, (height + red - 1) / red, width));

  auto row_fits = fit_layout(row_layout, Orientation::Row, width, config, result.diagnostics);
  auto col_fits = fit_layout(col_layout, Orientation::Col, height, config, result.diagnostics);

  std::vector<BorderPair> row_pairs, col_pairs;
  for (auto& f : row_fits) {
    result.row_lines.push_back(f.line);
    row_pairs.push_back(std::move(f.borders));
  }
  for (auto& f : col_fits) {
    result.col_lines.push_back(f.line);
    col_pairs.push_back(std::move(f.borders));
  }
  result.grid = intersect_grid(std::move(row_pairs), std::move(col_pairs), width, height, config,
                               &result.diagnostics);
  return result;
}

AssemblyResult assemble(const ProbMap& row_mask, const ProbMap& col_mask, int width, int height,
                        const AssemblerConfig& config) {
  return assemble_binary(binarize(row_mask, config.score_threshold),
                         binarize(col_mask, config.score_threshold), width, height, config);
}

}  // namespace tabnet::grid
