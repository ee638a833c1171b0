#include "tabnet/nn/merger.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "tabnet/nn/ops.hpp"

namespace tabnet::merger {

namespace F = torch::nn::functional;

void MergerConfig::validate() const {
  if (roi_size < 1 || cell_dim < 1 || grid_channels < 1 || relation_hidden < 1)
    throw std::invalid_argument("merger sizes must be positive");
  if (ohem_per_class < 1) throw std::invalid_argument("ohem_per_class must be positive");
}

void to_json(nlohmann::json& j, const MergerConfig& c) {
  j = nlohmann::json{{"roi_size", c.roi_size},
                     {"cell_dim", c.cell_dim},
                     {"grid_channels", c.grid_channels},
                     {"relation_hidden", c.relation_hidden},
                     {"ohem_per_class", c.ohem_per_class}};
}

void from_json(const nlohmann::json& j, MergerConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "roi_size") value.get_to(c.roi_size);
    else if (key == "cell_dim") value.get_to(c.cell_dim);
    else if (key == "grid_channels") value.get_to(c.grid_channels);
    else if (key == "relation_hidden") value.get_to(c.relation_hidden);
    else if (key == "ohem_per_class") value.get_to(c.ohem_per_class);
    else throw std::invalid_argument("unknown merger key: " + key);
  }
  c.validate();
}

Box cell_box(const QuadBox& q) {
  double x0 = q.pts[0].x, x1 = x0, y0 = q.pts[0].y, y1 = y0;
  for (const Point& p : q.pts) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  const double w = std::max(1.0, x1 - x0), h = std::max(1.0, y1 - y0);
  return Box(cx - 0.5 * w, cy - 0.5 * h, w, h);
}

MergeHeadImpl::MergeHeadImpl(int channels, const MergerConfig& cfg) : config(cfg) {
  config.validate();
  const int roi = config.roi_size;
  fc1 = register_module("fc1", torch::nn::Linear(channels * roi * roi, config.cell_dim));
  fc2 = register_module("fc2", torch::nn::Linear(config.cell_dim, config.cell_dim));
  auto gconv = [](int in, int out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
  };
  g1 = register_module("grid1", gconv(config.cell_dim, config.grid_channels));
  g2 = register_module("grid2", gconv(config.grid_channels, config.grid_channels));
  g3 = register_module("grid3", gconv(config.grid_channels, config.grid_channels));
  r1 = register_module("rel1", torch::nn::Linear(2 * config.grid_channels + kSpatialDims, config.relation_hidden));
  r2 = register_module("rel2", torch::nn::Linear(config.relation_hidden, config.relation_hidden));
  r3 = register_module("rel3", torch::nn::Linear(config.relation_hidden, 1));
  nn::init_he(*this);
  nn::init_gaussian(*r3);
}

torch::Tensor MergeHeadImpl::grid_features(const torch::Tensor& p2, const grid::CellGrid& grid,
                                           std::vector<std::string>* diagnostics) {
  TORCH_CHECK(p2.dim() == 4 && p2.size(0) == 1, "grid features take a single-image P2 map");
  TORCH_CHECK(grid.rows >= 1 && grid.cols >= 1, "empty grid");
  std::vector<Box> boxes;
  std::vector<int64_t> valid;
  for (int k = 0; k < grid.rows * grid.cols; ++k) {
    const QuadBox& q = grid.cells[static_cast<std::size_t>(k)];
    if (polygon_area(q.pts) < 1.0) {
      if (diagnostics)
        diagnostics->push_back("degenerate cell (" + std::to_string(k / grid.cols) + ", " +
                               std::to_string(k % grid.cols) + ") gets a zero feature");
      continue;
    }
    boxes.push_back(cell_box(q));
    valid.push_back(k);
  }
  auto flat = torch::zeros({static_cast<int64_t>(grid.rows) * grid.cols, config.cell_dim}, p2.options());
  if (!boxes.empty()) {
    const auto roi = nn::roi_align(p2, boxes, std::vector<std::int64_t>(boxes.size(), 0), kP2Stride, config.roi_size);
    const auto h = torch::relu(fc2->forward(torch::relu(fc1->forward(roi.flatten(1)))));
    flat = flat.index_copy(0, torch::tensor(valid, torch::kLong), h);
  }
  return flat.t().reshape({1, config.cell_dim, grid.rows, grid.cols});
}

torch::Tensor MergeHeadImpl::grid_cnn(const torch::Tensor& f) {
  return g3->forward(torch::relu(g2->forward(torch::relu(g1->forward(f)))));
}

torch::Tensor MergeHeadImpl::relation(const torch::Tensor& x) {
  return torch::sigmoid(r3->forward(torch::relu(r2->forward(torch::relu(r1->forward(x)))))).squeeze(1);
}

torch::Tensor MergeHeadImpl::score_pairs(const torch::Tensor& refined, const grid::CellGrid& grid) {
  const auto pairs = adjacent_pairs(grid.rows, grid.cols);
  if (pairs.empty()) return torch::zeros({0}, refined.options());
  const auto cells = refined[0].flatten(1).t();  // [M*N, C]
  std::vector<int64_t> a, b;
  std::vector<double> geom_ab, geom_ba;
  for (const CellPair& p : pairs) {
    const int i = p.r0 * grid.cols + p.c0, j = p.r1 * grid.cols + p.c1;
    a.push_back(i);
    b.push_back(j);
    const Box bi = cell_box(grid.cells[static_cast<std::size_t>(i)]);
    const Box bj = cell_box(grid.cells[static_cast<std::size_t>(j)]);
    const auto lij = spatial_compat_feature(bi, bj), lji = spatial_compat_feature(bj, bi);
    geom_ab.insert(geom_ab.end(), lij.begin(), lij.end());
    geom_ba.insert(geom_ba.end(), lji.begin(), lji.end());
  }
  const int64_t P = static_cast<int64_t>(pairs.size());
  const auto fa = cells.index_select(0, torch::tensor(a, torch::kLong));
  const auto fb = cells.index_select(0, torch::tensor(b, torch::kLong));
  const auto opts = refined.options().requires_grad(false);
  const auto lab = torch::tensor(geom_ab, torch::kDouble).to(opts.dtype()).view({P, kSpatialDims});
  const auto lba = torch::tensor(geom_ba, torch::kDouble).to(opts.dtype()).view({P, kSpatialDims});
  const auto s_ab = relation(torch::cat({fa, lab, fb}, 1));
  const auto s_ba = relation(torch::cat({fb, lba, fa}, 1));
  return torch::maximum(s_ab, s_ba);
}

torch::Tensor MergeHeadImpl::forward(const torch::Tensor& p2, const grid::CellGrid& grid,
                                     std::vector<std::string>* diagnostics) {
  return score_pairs(grid_cnn(grid_features(p2, grid, diagnostics)), grid);
}

torch::Tensor merge_loss(const torch::Tensor& scores, const std::vector<PairLabel>& labels, int per_class) {
  TORCH_CHECK(scores.dim() == 1 && scores.size(0) == static_cast<int64_t>(labels.size()),
              "one label per pair score");
  const auto p = scores.clamp(1e-6, 1.0 - 1e-6);
  std::vector<int64_t> pos, neg;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == PairLabel::Positive) pos.push_back(static_cast<int64_t>(k));
    if (labels[k] == PairLabel::Negative) neg.push_back(static_cast<int64_t>(k));
  }
  if (pos.empty() && neg.empty()) return torch::zeros({}, scores.options());
  const auto pd = p.detach().to(torch::kDouble).contiguous();
  const auto pa = pd.accessor<double, 1>();
  auto hardest = [&](std::vector<int64_t>& idx, bool positive) {
    // Hardest first; ties keep pair order.
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t x, int64_t y) {
      const double lx = positive ? -std::log(pa[x]) : -std::log(1.0 - pa[x]);
      const double ly = positive ? -std::log(pa[y]) : -std::log(1.0 - pa[y]);
      return lx > ly;
    });
    if (idx.size() > static_cast<std::size_t>(per_class)) idx.resize(static_cast<std::size_t>(per_class));
  };
  hardest(pos, true);
  hardest(neg, false);
  std::vector<int64_t> idx = pos;
  idx.insert(idx.end(), neg.begin(), neg.end());
  std::vector<float> y(pos.size(), 1.0f);
  y.resize(idx.size(), 0.0f);
  const auto sel = p.index_select(0, torch::tensor(idx, torch::kLong));
  return F::binary_cross_entropy(sel, torch::tensor(y).to(sel.dtype()));
}

}  // namespace tabnet::merger
