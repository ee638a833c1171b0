#include "tabnet/nn/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <opencv2/imgproc.hpp>

#include "tabnet/imaging.hpp"

namespace tabnet::detector {

namespace F = torch::nn::functional;

namespace {

double overlap_1d(double lo_a, double hi_a, double lo_b, double hi_b) {
  return std::max(0.0, std::min(hi_a, hi_b) - std::max(lo_a, lo_b));
}

/// Minimum IoU over every corner displacement in {-r, 0, r}^4. IoU is a ratio
/// of piecewise-linear terms in each edge coordinate with kinks only at zero
/// displacement, so the minimum over the square is attained on this lattice.
double worst_iou(double w, double h, double r) {
  const double d[3] = {-r, 0.0, r};
  double worst = 1.0;
  for (double dx0 : d)
    for (double dy0 : d)
      for (double dx1 : d)
        for (double dy1 : d) {
          const double x0 = dx0, y0 = dy0, x1 = w + dx1, y1 = h + dy1;
          if (x1 <= x0 || y1 <= y0) return 0.0;
          const double inter = overlap_1d(0.0, w, x0, x1) * overlap_1d(0.0, h, y0, y1);
          const double uni = w * h + (x1 - x0) * (y1 - y0) - inter;
          worst = std::min(worst, inter / uni);
        }
  return worst;
}

}  // namespace

double corner_radius(double w, double h, double min_iou) {
  if (!(w > 0.0) || !(h > 0.0)) throw std::invalid_argument("corner_radius needs a positive box");
  if (!(min_iou > 0.0 && min_iou < 1.0)) throw std::invalid_argument("min_iou must lie in (0, 1)");
  double lo = 0.0, hi = 0.5 * std::min(w, h);
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (worst_iou(w, h, mid) >= min_iou) lo = mid;
    else hi = mid;
  }
  return lo;
}

CornerTargets make_corner_targets(const std::vector<Box>& boxes, int height, int width, double stride,
                                  CornerKind kind) {
  if (height < 1 || width < 1 || !(stride > 0.0)) throw std::invalid_argument("invalid target map size");
  CornerTargets t{torch::zeros({height, width}), torch::zeros({2, height, width}), torch::zeros({height, width})};
  auto heat = t.heat.accessor<float, 2>();
  auto off = t.offsets.accessor<float, 3>();
  auto mask = t.mask.accessor<float, 2>();
  for (const Box& b : boxes) {
    const double qx = kind == CornerKind::TopLeft ? b.x : b.right();
    const double qy = kind == CornerKind::TopLeft ? b.y : b.bottom();
    const double fx = qx / stride, fy = qy / stride;
    const int px = std::clamp(static_cast<int>(std::floor(fx)), 0, width - 1);
    const int py = std::clamp(static_cast<int>(std::floor(fy)), 0, height - 1);
    const int r = static_cast<int>(std::floor(corner_radius(b.w / stride, b.h / stride)));
    if (r > 0) {
      const double sigma = r / 3.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int x = px + dx, y = py + dy;
          if (x < 0 || y < 0 || x >= width || y >= height) continue;
          const float v = static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)));
          heat[y][x] = std::max(heat[y][x], v);
        }
    }
    heat[py][px] = 1.0f;
    mask[py][px] = 1.0f;
    // Sub-cell offsets stay in [0, 1) even when the corner was clamped.
    off[0][py][px] = static_cast<float>(std::clamp(fx - px, 0.0, 1.0 - 1e-6));
    off[1][py][px] = static_cast<float>(std::clamp(fy - py, 0.0, 1.0 - 1e-6));
  }
  return t;
}

std::vector<CornerPoint> decode_corners(const torch::Tensor& heat, const torch::Tensor& offsets, double stride,
                                        int top_k, double score_threshold, CornerKind kind) {
  TORCH_CHECK(heat.dim() == 2 && offsets.dim() == 3 && offsets.size(0) == 2, "decode expects [H,W] and [2,H,W]");
  const auto h = heat.detach().to(torch::kDouble).contiguous();
  const auto peaks = F::max_pool2d(h.unsqueeze(0).unsqueeze(0), F::MaxPool2dFuncOptions(3).stride(1).padding(1))
                         .squeeze(0)
                         .squeeze(0);
  const auto o = offsets.detach().to(torch::kDouble).contiguous();
  auto ha = h.accessor<double, 2>();
  auto pa = peaks.accessor<double, 2>();
  auto oa = o.accessor<double, 3>();
  struct Cand {
    double score;
    int64_t index;
  };
  std::vector<Cand> cands;
  const int64_t H = h.size(0), W = h.size(1);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      if (ha[y][x] == pa[y][x] && ha[y][x] >= score_threshold) cands.push_back({ha[y][x], y * W + x});
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
  if (top_k >= 0 && cands.size() > static_cast<std::size_t>(top_k)) cands.resize(static_cast<std::size_t>(top_k));
  std::vector<CornerPoint> out;
  for (const Cand& c : cands) {
    const int64_t y = c.index / W, x = c.index % W;
    out.push_back({kind, (static_cast<double>(x) + oa[0][y][x]) * stride,
                   (static_cast<double>(y) + oa[1][y][x]) * stride, c.score});
  }
  return out;
}

std::vector<ScoredBox> enumerate_proposals(const std::vector<CornerPoint>& tl, const std::vector<CornerPoint>& br,
                                           double nms_threshold) {
  std::vector<ScoredBox> all;
  for (const auto& a : tl)
    for (const auto& b : br)
      if (a.x < b.x && a.y < b.y) all.push_back({Box::from_corners(a.x, a.y, b.x, b.y), 0.5 * (a.score + b.score)});
  std::vector<ScoredBox> kept;
  for (std::size_t i : nms(all, nms_threshold)) kept.push_back(all[i]);
  return kept;
}

ProposalAssignment assign_proposal_labels(const std::vector<Box>& proposals, const std::vector<Box>& gts,
                                          double positive_iou, double negative_iou) {
  ProposalAssignment out;
  for (const Box& p : proposals) {
    double best = 0.0;
    int arg = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(p, gts[g]);
      if (arg < 0 || v > best) {
        best = v;
        arg = static_cast<int>(g);
      }
    }
    out.gt_index.push_back(arg);
    if (arg >= 0 && best > positive_iou) out.labels.push_back(ProposalLabel::Positive);
    else if (best < negative_iou) out.labels.push_back(ProposalLabel::Negative);
    else out.labels.push_back(ProposalLabel::Ignore);
  }
  return out;
}

std::array<double, 8> quad_offsets(const Box& proposal, const QuadBox& target) {
  const std::array<Point, 4> anchor{Point{proposal.x, proposal.y}, Point{proposal.right(), proposal.y},
                                    Point{proposal.right(), proposal.bottom()}, Point{proposal.x, proposal.bottom()}};
  std::array<double, 8> t{};
  for (int k = 0; k < 4; ++k) {
    t[2 * k] = (target.pts[k].x - anchor[k].x) / proposal.w;
    t[2 * k + 1] = (target.pts[k].y - anchor[k].y) / proposal.h;
  }
  return t;
}

QuadBox decode_quad(const Box& proposal, std::span<const double> offsets) {
  if (offsets.size() != 8) throw std::invalid_argument("decode_quad needs 8 offsets");
  const std::array<Point, 4> anchor{Point{proposal.x, proposal.y}, Point{proposal.right(), proposal.y},
                                    Point{proposal.right(), proposal.bottom()}, Point{proposal.x, proposal.bottom()}};
  std::array<Point, 4> pts{};
  for (int k = 0; k < 4; ++k)
    pts[k] = {anchor[k].x + offsets[2 * k] * proposal.w, anchor[k].y + offsets[2 * k + 1] * proposal.h};
  return QuadBox(pts);
}

namespace {

torch::nn::Conv2d conv(int in, int out, int k, bool bias = true) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).padding(k / 2).bias(bias));
}

/// Prior 0.1 for the corner heat logits.
constexpr double kHeatBias = -2.19;

}  // namespace

CornerHeadImpl::CornerHeadImpl(int c, CornerKind k) : kind(k) {
  pre = register_module("pre", conv(c, c, 3));
  pooled_conv = register_module("pooled_conv", conv(c, c, 3, false));
  pooled_bn = register_module("pooled_bn", torch::nn::BatchNorm2d(c));
  skip_conv = register_module("skip_conv", conv(c, c, 1, false));
  skip_bn = register_module("skip_bn", torch::nn::BatchNorm2d(c));
  fuse_conv = register_module("fuse_conv", conv(c, c, 3));
  heat_conv = register_module("heat_conv", conv(c, c, 3));
  heat_out = register_module("heat_out", conv(c, 1, 1));
  off_conv = register_module("off_conv", conv(c, c, 3));
  off_out = register_module("off_out", conv(c, 2, 1));
  for (auto* m : {&pre, &pooled_conv, &skip_conv, &fuse_conv, &heat_conv, &heat_out, &off_conv, &off_out})
    nn::init_gaussian(**m);
  torch::NoGradGuard guard;
  heat_out->bias.fill_(kHeatBias);
}

CornerOutput CornerHeadImpl::forward(const torch::Tensor& x) {
  const auto a = torch::relu(pre->forward(x));
  const auto pooled = pooled_bn->forward(pooled_conv->forward(nn::corner_pool(a, kind)));
  const auto fused = torch::relu(pooled + skip_bn->forward(skip_conv->forward(x)));
  const auto f = torch::relu(fuse_conv->forward(fused));
  return {torch::sigmoid(heat_out->forward(torch::relu(heat_conv->forward(f)))),
          off_out->forward(torch::relu(off_conv->forward(f)))};
}

FrcnHeadImpl::FrcnHeadImpl(int channels, int roi_size, int hidden) {
  fc1 = register_module("fc1", torch::nn::Linear(channels * roi_size * roi_size, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, hidden));
  score = register_module("score", torch::nn::Linear(hidden, 1));
  offsets = register_module("offsets", torch::nn::Linear(hidden, 8));
  nn::init_gaussian(*this);
}

std::pair<torch::Tensor, torch::Tensor> FrcnHeadImpl::forward(const torch::Tensor& roi) {
  auto h = torch::relu(fc1->forward(roi.flatten(1)));
  h = torch::relu(fc2->forward(h));
  return {torch::sigmoid(score->forward(h)).squeeze(1), offsets->forward(h)};
}

void DetectorConfig::validate() const {
  backbone.validate();
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(fc_dim > 0 && roi_size > 0, "fc_dim and roi_size must be positive");
  require(top_k > 0, "top_k must be positive");
  require(corner_threshold >= 0.0 && corner_threshold <= 1.0, "corner_threshold must lie in [0, 1]");
  require(score_threshold >= 0.0 && score_threshold <= 1.0, "score_threshold must lie in [0, 1]");
  require(proposal_nms > 0.0 && proposal_nms <= 1.0, "proposal_nms must lie in (0, 1]");
  require(final_nms > 0.0 && final_nms <= 1.0, "final_nms must lie in (0, 1]");
  require(shorter_side >= 32 && longer_cap >= shorter_side, "need 32 <= shorter_side <= longer_cap");
}

void to_json(nlohmann::json& j, const DetectorConfig& c) {
  j = nlohmann::json{{"backbone", c.backbone},         {"fc_dim", c.fc_dim},
                     {"roi_size", c.roi_size},         {"top_k", c.top_k},
                     {"corner_threshold", c.corner_threshold}, {"proposal_nms", c.proposal_nms},
                     {"final_nms", c.final_nms},       {"score_threshold", c.score_threshold},
                     {"shorter_side", c.shorter_side}, {"longer_cap", c.longer_cap}};
}

void from_json(const nlohmann::json& j, DetectorConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "backbone") value.get_to(c.backbone);
    else if (key == "fc_dim") value.get_to(c.fc_dim);
    else if (key == "roi_size") value.get_to(c.roi_size);
    else if (key == "top_k") value.get_to(c.top_k);
    else if (key == "corner_threshold") value.get_to(c.corner_threshold);
    else if (key == "proposal_nms") value.get_to(c.proposal_nms);
    else if (key == "final_nms") value.get_to(c.final_nms);
    else if (key == "score_threshold") value.get_to(c.score_threshold);
    else if (key == "shorter_side") value.get_to(c.shorter_side);
    else if (key == "longer_cap") value.get_to(c.longer_cap);
    else throw std::invalid_argument("unknown detector key: " + key);
  }
  c.validate();
}

TableDetectorImpl::TableDetectorImpl(const DetectorConfig& cfg) : config(cfg) {
  config.validate();
  const int c = config.backbone.feature_channels;
  backbone = register_module("backbone", nn::DetectorBackbone(config.backbone));
  pre = register_module("pre", conv(c, c, 3));
  nn::init_gaussian(*pre);
  tl = register_module("tl", CornerHead(c, CornerKind::TopLeft));
  br = register_module("br", CornerHead(c, CornerKind::BottomRight));
  frcn = register_module("frcn", FrcnHead(c, config.roi_size, config.fc_dim));
}

DetectorOutput TableDetectorImpl::forward(const torch::Tensor& image) {
  const auto feature = backbone->forward(image);
  const auto c5 = torch::relu(pre->forward(feature));
  return {feature, tl->forward(c5), br->forward(c5)};
}

std::pair<torch::Tensor, torch::Tensor> TableDetectorImpl::frcn_forward(
    const torch::Tensor& feature, const std::vector<Box>& boxes, const std::vector<std::int64_t>& batch_index) {
  return frcn->forward(nn::roi_align(feature, boxes, batch_index, kDetectorStride, config.roi_size));
}

double detector_input_scale(int height, int width, const DetectorConfig& config) {
  if (height < 1 || width < 1) throw std::invalid_argument("empty page");
  double s = static_cast<double>(config.shorter_side) / std::min(height, width);
  if (std::max(height, width) * s > config.longer_cap) s = static_cast<double>(config.longer_cap) / std::max(height, width);
  return s;
}

std::vector<Detection> detect_tables(TableDetector& model, const cv::Mat& image) {
  const DetectorConfig& cfg = model->config;
  const double s = detector_input_scale(image.rows, image.cols, cfg);
  cv::Mat resized;
  const cv::Size size(std::max(1, static_cast<int>(std::lround(image.cols * s))),
                      std::max(1, static_cast<int>(std::lround(image.rows * s))));
  cv::resize(image, resized, size, 0, 0, s < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
  const cv::Mat padded = pad_to_multiple(resized, 32);
  // Scale per axis after rounding so detections map back exactly.
  const double sx = static_cast<double>(size.width) / image.cols;
  const double sy = static_cast<double>(size.height) / image.rows;

  // Only toggle when needed so concurrent eval-mode callers never write.
  const bool was_training = model->is_training();
  if (was_training) model->eval();
  torch::NoGradGuard guard;
  const auto out = model->forward(nn::image_to_tensor(padded));
  const auto tl = decode_corners(out.tl.heat[0][0], out.tl.offsets[0], kDetectorStride, cfg.top_k,
                                 cfg.corner_threshold, CornerKind::TopLeft);
  const auto br = decode_corners(out.br.heat[0][0], out.br.offsets[0], kDetectorStride, cfg.top_k,
                                 cfg.corner_threshold, CornerKind::BottomRight);
  const auto proposals = enumerate_proposals(tl, br, cfg.proposal_nms);
  std::vector<Detection> result;
  if (!proposals.empty()) {
    std::vector<Box> boxes;
    for (const auto& p : proposals) boxes.push_back(p.box);
    const auto [scores, offsets] = model->frcn_forward(out.feature, boxes, std::vector<std::int64_t>(boxes.size(), 0));
    const auto sc = scores.to(torch::kDouble).contiguous();
    const auto of = offsets.to(torch::kDouble).contiguous();
    auto sa = sc.accessor<double, 1>();
    auto oa = of.accessor<double, 2>();
    std::vector<QuadBox> quads;
    std::vector<ScoredBox> hulls;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const double score = sa[static_cast<int64_t>(i)];
      if (score < cfg.score_threshold) continue;
      std::array<double, 8> d{};
      for (int k = 0; k < 8; ++k) d[k] = oa[static_cast<int64_t>(i)][k];
      QuadBox q = decode_quad(boxes[i], d);
      for (auto& p : q.pts) p = {p.x / sx, p.y / sy};
      Box hull;
      try {
        hull = q.hull();
      } catch (const std::invalid_argument&) {
        continue;  // collapsed regression
      }
      quads.push_back(q);
      hulls.push_back({hull, score});
    }
    for (std::size_t i : nms(hulls, cfg.final_nms)) result.push_back({quads[i], hulls[i].score});
  }
  if (was_training) model->train();
  return result;
}

torch::Tensor focal_loss_sum(const torch::Tensor& pred, const torch::Tensor& target) {
  const auto p = pred.clamp(1e-4, 1.0 - 1e-4);
  const auto pos = target.eq(1.0).to(p.dtype());
  const auto neg = 1.0 - pos;
  const auto pos_term = -torch::pow(1.0 - p, 2) * torch::log(p) * pos;
  const auto neg_term = -torch::pow(1.0 - target, 4) * torch::pow(p, 2) * torch::log(1.0 - p) * neg;
  return (pos_term + neg_term).sum();
}

BatchTargets stack_targets(const std::vector<CornerTargets>& per_image) {
  if (per_image.empty()) throw std::invalid_argument("no targets to stack");
  std::vector<torch::Tensor> h, o, m;
  for (const auto& t : per_image) {
    h.push_back(t.heat);
    o.push_back(t.offsets);
    m.push_back(t.mask);
  }
  return {torch::stack(h), torch::stack(o), torch::stack(m)};
}

torch::Tensor corner_loss(const CornerOutput& tl, const BatchTargets& tl_t, const CornerOutput& br,
                          const BatchTargets& br_t, int num_tables) {
  auto loss = torch::zeros({}, tl.heat.options());
  if (num_tables > 0)
    loss = loss + (focal_loss_sum(tl.heat.squeeze(1), tl_t.heat) + focal_loss_sum(br.heat.squeeze(1), br_t.heat)) /
                      static_cast<double>(num_tables);
  const double positives = (tl_t.mask.sum() + br_t.mask.sum()).item<double>();
  if (positives > 0) {
    const auto opts = F::SmoothL1LossFuncOptions().reduction(torch::kNone).beta(1.0);
    const auto off = (F::smooth_l1_loss(tl.offsets, tl_t.offsets, opts) * tl_t.mask.unsqueeze(1)).sum() +
                     (F::smooth_l1_loss(br.offsets, br_t.offsets, opts) * br_t.mask.unsqueeze(1)).sum();
    loss = loss + off / positives;
  }
  return loss;
}

torch::Tensor frcn_loss(const torch::Tensor& scores, const torch::Tensor& labels, const torch::Tensor& offsets,
                        const torch::Tensor& offset_targets) {
  TORCH_CHECK(scores.dim() == 1 && labels.sizes() == scores.sizes(), "frcn_loss expects [N] scores and labels");
  if (scores.size(0) == 0) return torch::zeros({}, scores.options());
  const auto p = scores.clamp(1e-6, 1.0 - 1e-6);
  const auto cls = F::binary_cross_entropy(p, labels.to(p.dtype()));
  const auto fg = labels.gt(0.5).to(offsets.dtype());
  const double n_fg = fg.sum().item<double>();
  if (n_fg == 0) return cls;
  const auto reg = ((offsets - offset_targets).abs().sum(1) * fg).sum() / n_fg;
  return cls + reg;
}

torch::Tensor detector_loss(const torch::Tensor& corner, const torch::Tensor& frcn) {
  return kCornerLossWeight * corner + frcn;
}

}  // namespace tabnet::detector
