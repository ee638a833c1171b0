#include "tabnet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tabnet/version.hpp"

namespace fs = std::filesystem;

namespace tabnet::datagen {

void SynthConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid synth config: ") + what);
  };
  require(page_width >= 128 && page_height >= 128, "page must be at least 128x128");
  require(min_tables >= 1 && max_tables <= 3 && min_tables <= max_tables, "table count must lie in 1..3");
  require(min_rows >= 2 && max_rows <= 12 && min_rows <= max_rows, "rows must lie in 2..12");
  require(min_cols >= 2 && max_cols <= 8 && min_cols <= max_cols, "cols must lie in 2..8");
  require(max_row_span >= 1 && max_row_span <= max_rows, "max_row_span exceeds the grid");
  require(max_col_span >= 1 && max_col_span <= max_cols, "max_col_span exceeds the grid");
  require(cell_padding >= 4, "cell_padding must be at least 4");
  require(blank_space_scale >= 1.0, "blank_space_scale must be >= 1");
  require(min_distractors >= 0 && min_distractors <= max_distractors, "distractor range");
  require(warp_amplitude >= 0.0 && warp_wavelength > 0.0, "warp parameters");
  require(warp_amplitude < warp_wavelength / 8.0, "warp amplitude must stay below wavelength/8");
  require(margin > warp_amplitude + 1.0, "margin must exceed the warp amplitude");
  for (double p : {ruling_prob, span_prob, empty_prob, wide_column_prob, multiline_prob, warp_prob})
    require(p >= 0.0 && p <= 1.0, "probabilities must lie in [0, 1]");
}

#define TABNET_SYNTH_FIELDS(X)                                                               \
  X(page_width) X(page_height) X(margin) X(min_tables) X(max_tables) X(min_rows) X(max_rows) \
  X(min_cols) X(max_cols) X(max_row_span) X(max_col_span) X(ruling_prob) X(span_prob)       \
  X(empty_prob) X(blank_space_scale) X(wide_column_prob) X(multiline_prob)                   \
  X(min_distractors) X(max_distractors) X(cell_padding) X(warp_prob) X(warp_amplitude)      \
  X(warp_wavelength)

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json::object();
#define X(name) j[#name] = c.name;
  TABNET_SYNTH_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(name)                    \
  if (key == #name) {              \
    value.get_to(c.name);          \
    known = true;                  \
  }
    TABNET_SYNTH_FIELDS(X)
#undef X
    if (!known) throw std::invalid_argument("unknown synth config key: " + key);
  }
}

#undef TABNET_SYNTH_FIELDS

std::uint64_t page_seed(std::uint64_t base_seed, std::uint64_t index) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = base_seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  bool chance(double p) { return real(0.0, 1.0) < p; }

 private:
  std::mt19937_64 eng_;
};

enum class Align { Left, Center, Right };

struct CellPlan {
  CellSpan span;
  bool empty = false;
  int lines = 1;
};

struct TablePlan {
  int rows = 0;
  int cols = 0;
  int line_h = 8;
  std::vector<int> col_w;
  std::vector<int> row_h;
  std::vector<int> row_lines;
  std::vector<Align> align;
  std::vector<CellPlan> cells;
  bool ruled = false;
  bool rules = false;  // three-line style rules for borderless tables
  int width() const { return std::accumulate(col_w.begin(), col_w.end(), 0); }
  int height() const { return std::accumulate(row_h.begin(), row_h.end(), 0); }
};

bool spans_valid(const std::vector<CellPlan>& cells, int rows, int cols) {
  std::vector<bool> row_ok(rows, false), col_ok(cols, false);
  for (const auto& c : cells) {
    if (c.span.row_span() == 1 && c.span.col_span() == 1 && !c.empty) {
      row_ok[c.span.start_row] = true;
      col_ok[c.span.start_col] = true;
    }
  }
  return std::all_of(row_ok.begin(), row_ok.end(), [](bool b) { return b; }) &&
         std::all_of(col_ok.begin(), col_ok.end(), [](bool b) { return b; });
}

std::vector<CellPlan> plan_spans(Rng& rng, int rows, int cols, const SynthConfig& cfg) {
  for (int attempt = 0; attempt < 20; ++attempt) {
    std::vector<int> owner(static_cast<std::size_t>(rows * cols), -1);
    std::vector<CellPlan> cells;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        if (owner[r * cols + c] >= 0) continue;
        int rs = 1, cs = 1;
        if (rng.chance(cfg.span_prob)) {
          rs = rng.integer(1, cfg.max_row_span);
          cs = rng.integer(1, cfg.max_col_span);
          if (rs == 1 && cs == 1) cs = 2;
          rs = std::min(rs, rows - r);
          cs = std::min(cs, cols - c);
          bool free = true;
          for (int rr = r; rr < r + rs; ++rr)
            for (int cc = c; cc < c + cs; ++cc) free = free && owner[rr * cols + cc] < 0;
          if (!free) rs = cs = 1;
        }
        const int id = static_cast<int>(cells.size());
        for (int rr = r; rr < r + rs; ++rr)
          for (int cc = c; cc < c + cs; ++cc) owner[rr * cols + cc] = id;
        cells.push_back({CellSpan{r, r + rs - 1, c, c + cs - 1}, false, 1});
      }
    }
    if (spans_valid(cells, rows, cols)) return cells;
  }
  std::vector<CellPlan> cells;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) cells.push_back({CellSpan{r, r, c, c}, false, 1});
  return cells;
}

TablePlan plan_table(Rng& rng, const SynthConfig& cfg, int max_width, int max_height) {
  TablePlan t;
  const int pad = cfg.cell_padding;
  t.line_h = rng.integer(7, 9);
  const int single_row_h = t.line_h + 2 * pad;
  const int rows_fit = std::max(1, max_height / single_row_h);
  t.rows = std::min(rng.integer(cfg.min_rows, cfg.max_rows), rows_fit);
  t.cols = std::min(rng.integer(cfg.min_cols, cfg.max_cols), std::max(1, max_width / (2 * pad + 8)));
  t.ruled = rng.chance(cfg.ruling_prob);
  t.rules = !t.ruled && rng.chance(0.6);

  for (int c = 0; c < t.cols; ++c) {
    double w = rng.real(34.0, 84.0);
    if (rng.chance(cfg.wide_column_prob)) w *= rng.real(1.0, cfg.blank_space_scale);
    t.col_w.push_back(static_cast<int>(w));
    t.align.push_back(static_cast<Align>(rng.integer(0, 2)));
  }
  if (t.width() > max_width) {
    const double f = static_cast<double>(max_width) / t.width();
    for (int& w : t.col_w) w = std::max(2 * pad + 8, static_cast<int>(w * f));
    while (t.width() > max_width) {
      auto it = std::max_element(t.col_w.begin(), t.col_w.end());
      --*it;
    }
  }

  for (int r = 0; r < t.rows; ++r) t.row_lines.push_back(rng.chance(cfg.multiline_prob) ? 2 : 1);
  auto row_height = [&](int lines) { return lines * t.line_h + (lines - 1) * 3 + 2 * pad; };
  t.row_h.clear();
  for (int lines : t.row_lines) t.row_h.push_back(row_height(lines));
  for (int r = 0; r < t.rows && t.height() > max_height; ++r) {
    t.row_lines[r] = 1;
    t.row_h[r] = row_height(1);
  }

  SynthConfig span_cfg = cfg;
  span_cfg.max_row_span = std::min(cfg.max_row_span, t.rows);
  span_cfg.max_col_span = std::min(cfg.max_col_span, t.cols);
  t.cells = plan_spans(rng, t.rows, t.cols, span_cfg);
  for (auto& cell : t.cells) {
    if (cell.span.row_span() == 1 && cell.span.col_span() == 1) {
      cell.lines = t.row_lines[cell.span.start_row] == 2 ? rng.integer(1, 2) : 1;
      if (rng.chance(cfg.empty_prob)) {
        cell.empty = true;
        if (!spans_valid(t.cells, t.rows, t.cols)) cell.empty = false;
      }
    }
  }
  return t;
}

void draw_text_line(cv::Mat& img, int x, int y, int w, int h, Rng& rng, int ink) {
  // Glyph-like boxes; the first and last pixel columns are full height so the
  // line's bounding box is exactly (x, y, w, h).
  const cv::Scalar color(ink, ink, ink);
  auto glyph = [&](int gx, int gw, bool full) {
    const int top = full ? y : y + std::min(2, h - 1);
    cv::rectangle(img, cv::Point(gx, top), cv::Point(gx + gw - 1, y + h - 1), color, cv::FILLED);
  };
  int cx = x;
  int word = rng.integer(2, 6);
  bool first = true;
  while (true) {
    int gw = rng.integer(2, 5);
    if (cx + gw >= x + w) {
      glyph(cx, x + w - cx, true);
      break;
    }
    glyph(cx, gw, first || rng.chance(0.6));
    first = false;
    cx += gw;
    int space = 1;
    if (--word == 0) {
      space = rng.integer(3, 4);
      word = rng.integer(2, 6);
    }
    if (cx + space >= x + w) {
      glyph(x + w - 1, 1, true);
      break;
    }
    cx += space;
  }
}

Polyline sample_segment(Point a, Point b, double step) {
  Polyline out;
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    const double f = static_cast<double>(i) / n;
    out.push_back({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)});
  }
  return out;
}

struct Placed {
  TablePlan plan;
  int x0 = 0;
  int y0 = 0;
};

TableAnnotation render_table(cv::Mat& img, const Placed& p, Rng& rng, int pad) {
  const TablePlan& t = p.plan;
  std::vector<int> xs{p.x0}, ys{p.y0};
  for (int w : t.col_w) xs.push_back(xs.back() + w);
  for (int h : t.row_h) ys.push_back(ys.back() + h);
  const int ink = rng.integer(10, 70);
  const cv::Scalar rule_color(rng.integer(0, 90), rng.integer(0, 90), rng.integer(0, 90));
  const int x1 = xs.back() - 1;
  const int y1 = ys.back() - 1;

  TableAnnotation ann;
  ann.rows = t.rows;
  ann.cols = t.cols;
  ann.bbox = Box::from_corners(xs.front(), ys.front(), xs.back(), ys.back());
  ann.quad = QuadBox(ann.bbox);
  for (int r = 1; r < t.rows; ++r)
    ann.row_separators.push_back(sample_segment({double(xs.front()), double(ys[r])},
                                                {double(xs.back()), double(ys[r])}, 4.0));
  for (int c = 1; c < t.cols; ++c)
    ann.col_separators.push_back(sample_segment({double(xs[c]), double(ys.front())},
                                                {double(xs[c]), double(ys.back())}, 4.0));

  for (const CellPlan& cp : t.cells) {
    const CellSpan& s = cp.span;
    const int cx0 = xs[s.start_col], cx1 = xs[s.end_col + 1];
    const int cy0 = ys[s.start_row], cy1 = ys[s.end_row + 1];
    CellAnnotation cell;
    cell.span = s;
    cell.quad = QuadBox(Box::from_corners(cx0, cy0, cx1, cy1));
    if (t.ruled) {
      cv::line(img, {cx0, cy0}, {std::min(cx1, x1), cy0}, rule_color, 1);
      cv::line(img, {cx0, cy0}, {cx0, std::min(cy1, y1)}, rule_color, 1);
      cv::line(img, {cx0, std::min(cy1, y1)}, {std::min(cx1, x1), std::min(cy1, y1)}, rule_color, 1);
      cv::line(img, {std::min(cx1, x1), cy0}, {std::min(cx1, x1), std::min(cy1, y1)}, rule_color, 1);
    }
    if (!cp.empty) {
      const int avail = cx1 - cx0 - 2 * pad;
      const int spanned = s.col_span() > 1 || s.row_span() > 1;
      const Align align = spanned ? Align::Center : t.align[s.start_col];
      const int block_h = cp.lines * t.line_h + (cp.lines - 1) * 3;
      int ty = cy0 + (cy1 - cy0 - block_h) / 2;
      for (int l = 0; l < cp.lines; ++l) {
        const int tw = rng.integer(std::min(10, avail), avail);
        int tx = cx0 + pad;
        if (align == Align::Center) tx = cx0 + pad + (avail - tw) / 2;
        if (align == Align::Right) tx = cx1 - pad - tw;
        draw_text_line(img, tx, ty, tw, t.line_h, rng, ink);
        cell.text_boxes.emplace_back(tx, ty, tw, t.line_h);
        ty += t.line_h + 3;
      }
    }
    ann.cells.push_back(std::move(cell));
  }
  if (t.rules) {
    cv::line(img, {xs.front(), ys.front()}, {x1, ys.front()}, rule_color, 1);
    cv::line(img, {xs.front(), y1}, {x1, y1}, rule_color, 1);
    if (t.rows > 1) cv::line(img, {xs.front(), ys[1]}, {x1, ys[1]}, rule_color, 1);
  }
  return ann;
}

Polyline resample(const Polyline& line, double step) {
  Polyline out;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    Polyline seg = sample_segment(line[i], line[i + 1], step);
    if (!out.empty()) seg.erase(seg.begin());
    out.insert(out.end(), seg.begin(), seg.end());
  }
  if (line.size() == 1) out = line;
  return out;
}

Box warp_box(const Box& b, const WarpParams& w) {
  std::vector<Point> pts;
  const QuadBox q(b);
  for (std::size_t i = 0; i < 4; ++i)
    for (const Point& p : sample_segment(q.pts[i], q.pts[(i + 1) % 4], 2.0)) pts.push_back(w.forward(p));
  return hull_of(pts);
}

}  // namespace

Page warp_curved(const Page& page, const WarpParams& warp) {
  for (const auto& t : page.annotation.tables)
    if (!t.warp.identity()) throw std::invalid_argument("annotation is already warped");
  Page out;
  out.annotation = page.annotation;
  if (warp.identity()) {
    out.image = page.image.clone();
    return out;
  }
  const cv::Mat& src = page.image;
  cv::Mat map_x(src.rows, src.cols, CV_32F), map_y(src.rows, src.cols, CV_32F);
  for (int y = 0; y < src.rows; ++y) {
    for (int x = 0; x < src.cols; ++x) {
      const Point s = warp.inverse({x + 0.5, y + 0.5});
      map_x.at<float>(y, x) = static_cast<float>(s.x - 0.5);
      map_y.at<float>(y, x) = static_cast<float>(s.y - 0.5);
    }
  }
  cv::remap(src, out.image, map_x, map_y, cv::INTER_LINEAR, cv::BORDER_CONSTANT,
            cv::Scalar(255, 255, 255));

  DocAnnotation& doc = out.annotation;
  for (auto& t : doc.tables) {
    t.warp = warp;
    for (auto* lines : {&t.row_separators, &t.col_separators}) {
      for (auto& line : *lines) {
        line = resample(line, 4.0);
        for (auto& p : line) p = warp.forward(p);
      }
    }
    std::vector<Point> outline;
    for (std::size_t i = 0; i < 4; ++i)
      for (const Point& p : sample_segment(t.quad.pts[i], t.quad.pts[(i + 1) % 4], 2.0))
        outline.push_back(warp.forward(p));
    const Box hull = hull_of(outline);
    t.bbox = Box::from_corners(std::max(0.0, hull.x), std::max(0.0, hull.y),
                               std::min<double>(doc.width, hull.right()),
                               std::min<double>(doc.height, hull.bottom()));
    for (auto& p : t.quad.pts) p = warp.forward(p);
    for (auto& c : t.cells) {
      for (auto& p : c.quad.pts) p = warp.forward(p);
      for (auto& b : c.text_boxes) b = warp_box(b, warp);
    }
  }
  for (auto& d : doc.distractors) d = warp_box(d, warp);
  return out;
}

Page warp_curved(const Page& page, double amplitude, double wavelength) {
  WarpParams w;
  w.amp_x = amplitude;
  w.amp_y = amplitude;
  w.wavelength = wavelength;
  return warp_curved(page, w);
}

Page synthesize_page(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Page page;
  page.image = cv::Mat(cfg.page_height, cfg.page_width, CV_8UC3, cv::Scalar(255, 255, 255));
  DocAnnotation& doc = page.annotation;
  doc.width = cfg.page_width;
  doc.height = cfg.page_height;

  const int avail_w = cfg.page_width - 2 * cfg.margin;
  const int avail_h = cfg.page_height - 2 * cfg.margin;
  const int gap = 24;
  const int n_tables = rng.integer(cfg.min_tables, cfg.max_tables);
  const int per_table_h = (avail_h - gap * (n_tables - 1)) / n_tables;

  std::vector<Placed> placed;
  int used_h = 0;
  for (int i = 0; i < n_tables; ++i) {
    const int max_h = std::min(per_table_h, avail_h - used_h - gap * i);
    Placed p;
    p.plan = plan_table(rng, cfg, avail_w, max_h);
    used_h += p.plan.height();
    placed.push_back(std::move(p));
  }

  // distribute the vertical slack between tables
  int slack = avail_h - used_h - gap * (n_tables - 1);
  std::vector<int> gaps(n_tables + 1, 0);
  for (int i = 0; i <= n_tables && slack > 0; ++i) {
    const int g = i == n_tables ? slack : rng.integer(0, slack);
    gaps[i] = g;
    slack -= g;
  }
  int y = cfg.margin;
  std::vector<std::pair<int, int>> free_bands;  // [y0, y1) without tables
  for (int i = 0; i < n_tables; ++i) {
    free_bands.emplace_back(y, y + gaps[i] + (i > 0 ? gap : 0));
    y += gaps[i] + (i > 0 ? gap : 0);
    placed[i].y0 = y;
    placed[i].x0 = cfg.margin + rng.integer(0, std::max(0, avail_w - placed[i].plan.width()));
    y += placed[i].plan.height();
  }
  free_bands.emplace_back(y, cfg.page_height - cfg.margin);

  for (const Placed& p : placed) doc.tables.push_back(render_table(page.image, p, rng, cfg.cell_padding));

  // distractor paragraphs in the free bands, kept clear of tables
  const int n_paragraphs = rng.integer(cfg.min_distractors, cfg.max_distractors);
  const int ink = rng.integer(10, 70);
  for (int k = 0; k < n_paragraphs; ++k) {
    const auto& band = free_bands[static_cast<std::size_t>(rng.integer(0, static_cast<int>(free_bands.size()) - 1))];
    const int top = band.first + 10;
    const int bottom = band.second - 10;
    const int line_h = rng.integer(7, 9);
    const int lines_fit = (bottom - top + 4) / (line_h + 4);
    if (lines_fit < 1) continue;
    const int lines = rng.integer(1, std::min(4, lines_fit));
    int ly = rng.integer(top, bottom - lines * (line_h + 4) + 4);
    bool overlaps = false;
    for (const Box& d : doc.distractors)
      if (d.bottom() + 4 > ly && d.y < ly + lines * (line_h + 4)) overlaps = true;
    if (overlaps) continue;
    for (int l = 0; l < lines; ++l) {
      const int w = rng.integer(avail_w / 2, avail_w);
      const int x = cfg.margin + (l == 0 ? rng.integer(0, avail_w - w) : 0);
      draw_text_line(page.image, x, ly, std::min(w, avail_w - (x - cfg.margin)), line_h, rng, ink);
      doc.distractors.emplace_back(x, ly, std::min(w, avail_w - (x - cfg.margin)), line_h);
      ly += line_h + 4;
    }
  }

  if (rng.chance(cfg.warp_prob) && cfg.warp_amplitude > 0.0) {
    WarpParams w;
    w.amp_y = rng.real(0.5, 1.0) * cfg.warp_amplitude;
    w.amp_x = rng.real(0.0, 0.5) * cfg.warp_amplitude;
    w.wavelength = rng.real(0.85, 1.15) * cfg.warp_wavelength;
    w.phase_x = rng.real(0.0, 2.0 * std::numbers::pi);
    w.phase_y = rng.real(0.0, 2.0 * std::numbers::pi);
    return warp_curved(page, w);
  }
  return page;
}

void write_corpus(const std::string& out_dir, const SynthConfig& config, int count,
                  std::uint64_t seed) {
  config.validate();
  const fs::path root(out_dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "annotations");
  nlohmann::json manifest = {{"config", config},
                             {"seed", seed},
                             {"count", count},
                             {"tool_version", kVersion}};
  {
    std::ofstream m(root / "manifest.json");
    m << manifest.dump(2) << '\n';
  }
  for (int i = 0; i < count; ++i) {
    const Page page = synthesize_page(config, page_seed(seed, static_cast<std::uint64_t>(i)));
    char name[16];
    std::snprintf(name, sizeof(name), "%04d", i);
    cv::imwrite((root / "images" / (std::string(name) + ".png")).string(), page.image);
    save_annotation(page.annotation, (root / "annotations" / (std::string(name) + ".json")).string());
  }
}

std::vector<CorpusEntry> list_corpus(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root / "images")) throw std::runtime_error("not a corpus directory: " + dir);
  std::vector<CorpusEntry> entries;
  for (const auto& f : fs::directory_iterator(root / "images")) {
    if (f.path().extension() != ".png") continue;
    const fs::path ann = root / "annotations" / (f.path().stem().string() + ".json");
    if (!fs::exists(ann)) throw std::runtime_error("missing annotation for " + f.path().string());
    entries.push_back({f.path().string(), ann.string()});
  }
  std::sort(entries.begin(), entries.end(),
            [](const CorpusEntry& a, const CorpusEntry& b) { return a.image_path < b.image_path; });
  return entries;
}

}  // namespace tabnet::datagen
