#include "tabnet/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace tabnet::metrics {

PRF prf_from_counts(std::size_t matches, std::size_t predicted, std::size_t actual) {
  PRF r;
  r.precision = predicted == 0 ? 0.0 : static_cast<double>(matches) / static_cast<double>(predicted);
  r.recall = actual == 0 ? 0.0 : static_cast<double>(matches) / static_cast<double>(actual);
  const double denom = r.precision + r.recall;
  r.f1 = denom == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / denom;
  return r;
}

std::size_t count_matches(std::span<const ScoredBox> preds, std::span<const Box> gts, double iou_threshold) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  std::vector<bool> taken(gts.size(), false);
  std::size_t matches = 0;
  for (std::size_t p : order) {
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(preds[p].box, gts[g]);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      ++matches;
    }
  }
  return matches;
}

PRF detection_prf(std::span<const ScoredBox> preds, std::span<const Box> gts, double iou_threshold) {
  return prf_from_counts(count_matches(preds, gts, iou_threshold), preds.size(), gts.size());
}

double wavg_f1(std::span<const double> f1_per_threshold, std::span<const double> thresholds) {
  if (f1_per_threshold.size() != thresholds.size() || thresholds.empty())
    throw std::invalid_argument("wavg_f1: one F1 per threshold required");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    num += thresholds[i] * f1_per_threshold[i];
    den += thresholds[i];
  }
  return num / den;
}

std::vector<bool> non_empty_cells(const TableStructure& s) {
  std::vector<bool> out;
  for (const auto& c : s.cells) out.push_back(!c.content_ids.empty());
  return out;
}

std::vector<AdjacencyRelation> adjacency_relations(const TableStructure& s,
                                                   const std::vector<bool>& non_empty) {
  if (non_empty.size() != s.cells.size()) throw std::invalid_argument("one emptiness flag per cell required");
  if (auto err = s.partition_error(); !err.empty()) throw std::invalid_argument(err);
  std::vector<int> owner(static_cast<std::size_t>(s.rows * s.cols), -1);
  for (std::size_t k = 0; k < s.cells.size(); ++k) {
    const auto& sp = s.cells[k].span;
    for (int r = sp.start_row; r <= sp.end_row; ++r)
      for (int c = sp.start_col; c <= sp.end_col; ++c) owner[r * s.cols + c] = static_cast<int>(k);
  }
  std::vector<AdjacencyRelation> rel;
  for (std::size_t k = 0; k < s.cells.size(); ++k) {
    if (!non_empty[k]) continue;
    const auto& sp = s.cells[k].span;
    for (int r = sp.start_row; r <= sp.end_row; ++r) {
      for (int c = sp.end_col + 1; c < s.cols; ++c) {
        const int o = owner[r * s.cols + c];
        if (non_empty[o]) {
          rel.push_back({static_cast<int>(k), o, Direction::Horizontal});
          break;
        }
      }
    }
    for (int c = sp.start_col; c <= sp.end_col; ++c) {
      for (int r = sp.end_row + 1; r < s.rows; ++r) {
        const int o = owner[r * s.cols + c];
        if (non_empty[o]) {
          rel.push_back({static_cast<int>(k), o, Direction::Vertical});
          break;
        }
      }
    }
  }
  std::sort(rel.begin(), rel.end());
  rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
  return rel;
}

namespace {

using ContentKey = std::vector<int>;
using RelationKey = std::tuple<ContentKey, ContentKey, Direction>;

std::map<RelationKey, std::size_t> relation_keys(const TableStructure& s) {
  std::map<RelationKey, std::size_t> out;
  for (const auto& r : adjacency_relations(s, non_empty_cells(s))) {
    ContentKey a = s.cells[r.source].content_ids;
    ContentKey b = s.cells[r.target].content_ids;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    ++out[{a, b, r.direction}];
  }
  return out;
}

}  // namespace

PRF adjacency_prf(const TableStructure& pred, const TableStructure& gt) {
  const auto p = relation_keys(pred);
  const auto g = relation_keys(gt);
  std::size_t np = 0, ng = 0, matched = 0;
  for (const auto& [k, n] : p) np += n;
  for (const auto& [k, n] : g) {
    ng += n;
    if (auto it = p.find(k); it != p.end()) matched += std::min(n, it->second);
  }
  return prf_from_counts(matched, np, ng);
}

TreeNode struct_tree(const TableStructure& s) {
  TreeNode table{"table", 1, 1, {}};
  for (int r = 0; r < s.rows; ++r) {
    std::vector<const StructureCell*> starting;
    for (const auto& c : s.cells)
      if (c.span.start_row == r) starting.push_back(&c);
    std::stable_sort(starting.begin(), starting.end(), [](const StructureCell* a, const StructureCell* b) {
      return a->span.start_col < b->span.start_col;
    });
    TreeNode row{"tr", 1, 1, {}};
    for (const StructureCell* c : starting) row.children.push_back({"td", c->span.row_span(), c->span.col_span(), {}});
    table.children.push_back(std::move(row));
  }
  return table;
}

std::size_t tree_size(const TreeNode& t) {
  std::size_t n = 1;
  for (const auto& c : t.children) n += tree_size(c);
  return n;
}

namespace {

struct Flat {
  std::vector<const TreeNode*> nodes;  ///< postorder
  std::vector<std::size_t> leftmost;   ///< postorder index of the leftmost leaf
  std::vector<std::size_t> keyroots;
};

std::size_t flatten(const TreeNode& n, Flat& f) {
  std::size_t first = SIZE_MAX;
  for (const auto& c : n.children) {
    const std::size_t l = flatten(c, f);
    if (first == SIZE_MAX) first = l;
  }
  f.nodes.push_back(&n);
  f.leftmost.push_back(first == SIZE_MAX ? f.nodes.size() - 1 : first);
  return f.leftmost.back();
}

Flat make_flat(const TreeNode& t) {
  Flat f;
  flatten(t, f);
  std::vector<bool> seen(f.nodes.size(), false);
  for (std::size_t i = f.nodes.size(); i-- > 0;) {
    if (!seen[f.leftmost[i]]) {
      seen[f.leftmost[i]] = true;
      f.keyroots.push_back(i);
    }
  }
  std::sort(f.keyroots.begin(), f.keyroots.end());
  return f;
}

}  // namespace

std::size_t tree_edit_distance(const TreeNode& a, const TreeNode& b) {
  const Flat fa = make_flat(a);
  const Flat fb = make_flat(b);
  const std::size_t n = fa.nodes.size(), m = fb.nodes.size();
  std::vector<std::size_t> td(n * m, 0);
  std::vector<std::size_t> fd;
  for (std::size_t i : fa.keyroots) {
    for (std::size_t j : fb.keyroots) {
      const std::size_t li = fa.leftmost[i], lj = fb.leftmost[j];
      const std::size_t rows = i - li + 2, cols = j - lj + 2;
      fd.assign(rows * cols, 0);
      auto at = [&](std::size_t di, std::size_t dj) -> std::size_t& { return fd[di * cols + dj]; };
      for (std::size_t di = 1; di < rows; ++di) at(di, 0) = at(di - 1, 0) + 1;
      for (std::size_t dj = 1; dj < cols; ++dj) at(0, dj) = at(0, dj - 1) + 1;
      for (std::size_t di = 1; di < rows; ++di) {
        for (std::size_t dj = 1; dj < cols; ++dj) {
          const std::size_t i1 = li + di - 1, j1 = lj + dj - 1;
          const std::size_t del = at(di - 1, dj) + 1, ins = at(di, dj - 1) + 1;
          if (fa.leftmost[i1] == li && fb.leftmost[j1] == lj) {
            const std::size_t sub = at(di - 1, dj - 1) + (fa.nodes[i1]->same_label(*fb.nodes[j1]) ? 0 : 1);
            at(di, dj) = std::min({del, ins, sub});
            td[i1 * m + j1] = at(di, dj);
          } else {
            const std::size_t sub = at(fa.leftmost[i1] - li, fb.leftmost[j1] - lj) + td[i1 * m + j1];
            at(di, dj) = std::min({del, ins, sub});
          }
        }
      }
    }
  }
  return td[(n - 1) * m + (m - 1)];
}

double teds_struct(const TreeNode& pred, const TreeNode& gt) {
  const double denom = static_cast<double>(std::max(tree_size(pred), tree_size(gt)));
  return 1.0 - static_cast<double>(tree_edit_distance(pred, gt)) / denom;
}

double teds_struct(const TableStructure& pred, const TableStructure& gt) {
  return teds_struct(struct_tree(pred), struct_tree(gt));
}

std::vector<Box> table_text_boxes(const DocAnnotation& doc) {
  std::vector<Box> out;
  for (const auto& t : doc.tables)
    for (const auto& c : t.cells) out.insert(out.end(), c.text_boxes.begin(), c.text_boxes.end());
  return out;
}

PageResult page_result_from_annotation(const DocAnnotation& doc, const std::string& image) {
  PageResult r;
  r.image = image;
  int next = 0;
  for (const auto& t : doc.tables) {
    TableResult tr;
    tr.quad = t.quad;
    tr.score = 1.0;
    tr.structure = structure_from_annotation(t, next);
    for (const auto& c : t.cells) next += static_cast<int>(c.text_boxes.size());
    r.tables.push_back(std::move(tr));
  }
  return r;
}

PageEval evaluate_page(const PageResult& pred, const PageResult& gt, std::span<const Box> gt_text_boxes) {
  PageEval e;
  e.image = gt.image;
  std::vector<ScoredBox> pboxes;
  std::vector<Box> gboxes;
  for (const auto& t : pred.tables) pboxes.push_back({t.quad.hull(), t.score});
  for (const auto& t : gt.tables) gboxes.push_back(t.quad.hull());
  for (std::size_t k = 0; k < kIouThresholds.size(); ++k)
    e.matches[k] = count_matches(pboxes, gboxes, kIouThresholds[k]);
  e.predicted = pboxes.size();
  e.actual = gboxes.size();

  std::vector<TableStructure> pred_structs;
  for (const auto& t : pred.tables) pred_structs.push_back(t.structure);
  std::vector<TableStructure*> ptrs;
  for (auto& s : pred_structs) ptrs.push_back(&s);
  assign_content(gt_text_boxes, ptrs);

  std::vector<bool> used(pred.tables.size(), false);
  for (std::size_t g = 0; g < gt.tables.size(); ++g) {
    int best = -1;
    double best_iou = 0.5;
    for (std::size_t p = 0; p < pred.tables.size(); ++p) {
      if (used[p]) continue;
      const double v = iou(pboxes[p].box, gboxes[g]);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(p);
        best_iou = v;
      }
    }
    if (best < 0) {
      e.adjacency_f1.push_back(0.0);
      e.teds.push_back(0.0);
      continue;
    }
    used[static_cast<std::size_t>(best)] = true;
    e.adjacency_f1.push_back(adjacency_prf(pred_structs[best], gt.tables[g].structure).f1);
    e.teds.push_back(teds_struct(pred_structs[best], gt.tables[g].structure));
  }
  return e;
}

EvalReport summarize(std::vector<PageEval> pages) {
  EvalReport r;
  std::size_t predicted = 0, actual = 0, tables = 0;
  std::array<std::size_t, 4> matches{};
  double adj = 0.0, teds = 0.0;
  for (const auto& p : pages) {
    predicted += p.predicted;
    actual += p.actual;
    for (std::size_t k = 0; k < matches.size(); ++k) matches[k] += p.matches[k];
    for (double v : p.adjacency_f1) adj += v;
    for (double v : p.teds) teds += v;
    tables += p.teds.size();
  }
  std::array<double, 4> f1s{};
  for (std::size_t k = 0; k < matches.size(); ++k) {
    r.detection[k] = prf_from_counts(matches[k], predicted, actual);
    f1s[k] = r.detection[k].f1;
  }
  r.wavg_f1 = wavg_f1(f1s);
  r.mean_adjacency_f1 = tables == 0 ? 0.0 : adj / static_cast<double>(tables);
  r.mean_teds_struct = tables == 0 ? 0.0 : teds / static_cast<double>(tables);
  r.pages = std::move(pages);
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  nlohmann::json det = nlohmann::json::array();
  for (std::size_t k = 0; k < kIouThresholds.size(); ++k) {
    det.push_back({{"iou", kIouThresholds[k]},
                   {"precision", r.detection[k].precision},
                   {"recall", r.detection[k].recall},
                   {"f1", r.detection[k].f1}});
  }
  j["detection"] = det;
  j["wavg_f1"] = r.wavg_f1;
  j["mean_adjacency_f1"] = r.mean_adjacency_f1;
  j["mean_teds_struct"] = r.mean_teds_struct;
  nlohmann::json pages = nlohmann::json::array();
  for (const auto& p : r.pages) {
    nlohmann::json pj;
    pj["image"] = p.image;
    pj["predicted"] = p.predicted;
    pj["actual"] = p.actual;
    pj["matches"] = p.matches;
    pj["adjacency_f1"] = p.adjacency_f1;
    pj["teds_struct"] = p.teds;
    pages.push_back(pj);
  }
  j["pages"] = pages;
  return j;
}

}  // namespace tabnet::metrics
