#include "tabnet/nn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tabnet/imaging.hpp"
#include "tabnet/nn/splitter.hpp"
#include "tabnet/separator_gt.hpp"

namespace tabnet::trainer {

namespace F = torch::nn::functional;

double TrainConfig::effective_lr() const { return scale_lr ? base_lr * images_per_step / 32.0 : base_lr; }

double TrainConfig::lr_at(int iteration) const {
  double lr = effective_lr();
  for (int step : decay_steps)
    if (iteration >= step) lr /= 10.0;
  return lr;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(base_lr > 0.0, "base_lr must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(iterations >= 1, "iterations must be at least 1");
  for (int s : decay_steps) require(s >= 1 && s < iterations, "decay steps must lie inside (0, iterations)");
  require(std::is_sorted(decay_steps.begin(), decay_steps.end()), "decay steps must be increasing");
  require(images_per_step >= 1, "images_per_step must be at least 1");
  require(!scales.empty(), "scales must not be empty");
  for (int s : scales) require(s >= 64, "scales must be at least 64");
  require(rotation_prob >= 0.0 && rotation_prob <= 1.0, "rotation_prob must lie in [0, 1]");
  require(rotation_jitter_deg >= 0.0, "rotation_jitter_deg must be non-negative");
  require(ohem_positives >= 1 && ohem_negatives >= 1, "OHEM sizes must be at least 1");
  require(jitter_per_gt >= 1 && random_negatives >= 0, "proposal sampling counts are invalid");
  require(jitter_fraction >= 0.0 && jitter_fraction < 0.5, "jitter_fraction must lie in [0, 0.5)");
  require(train_top_k >= 1, "train_top_k must be at least 1");
  require(train_corner_threshold >= 0.0 && train_corner_threshold <= 1.0, "train_corner_threshold must lie in [0, 1]");
  require(split_pixels >= 1 && merge_pairs >= 1 && max_merge_cells >= 4, "sampling sizes are invalid");
  require(grad_clip > 0.0, "grad_clip must be positive");
}

#define TABNET_TRAIN_FIELDS(X)                                                                             \
  X(base_lr) X(scale_lr) X(momentum) X(weight_decay) X(iterations) X(decay_steps) X(images_per_step)      \
  X(scales) X(rotation_prob) X(rotation_jitter_deg) X(ohem_positives) X(ohem_negatives) X(jitter_per_gt)  \
  X(jitter_fraction) X(random_negatives) X(train_top_k) X(train_corner_threshold) X(split_pixels)         \
  X(merge_pairs) X(max_merge_cells) X(grad_clip) X(seed)

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json::object();
#define X(name) j[#name] = c.name;
  TABNET_TRAIN_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(name)           \
  if (key == #name) {     \
    value.get_to(c.name); \
    known = true;         \
  }
    TABNET_TRAIN_FIELDS(X)
#undef X
    if (!known) throw std::invalid_argument("unknown train config key: " + key);
  }
  c.validate();
}

#undef TABNET_TRAIN_FIELDS

void TrainTrace::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration";
  for (const auto& c : columns) out << ',' << c;
  out << ",lr\n" << std::setprecision(9);
  for (const auto& r : records) {
    out << r.iteration;
    for (double v : r.terms) out << ',' << v;
    out << ',' << r.lr << '\n';
  }
}

namespace {

QuadBox start_top_left(const QuadBox& q) {
  int first = 0;
  for (int k = 1; k < 4; ++k)
    if (q.pts[k].x + q.pts[k].y < q.pts[first].x + q.pts[first].y) first = k;
  std::array<Point, 4> pts{};
  for (int k = 0; k < 4; ++k) pts[k] = q.pts[(first + k) % 4];
  return QuadBox(pts);
}

}  // namespace

datagen::Page rotate_page(const datagen::Page& page, double degrees) {
  const cv::Point2f center(page.image.cols / 2.0f, page.image.rows / 2.0f);
  cv::Mat m = cv::getRotationMatrix2D(center, degrees, 1.0);
  const cv::Rect2f bounds =
      cv::RotatedRect(center, cv::Size2f(static_cast<float>(page.image.cols), static_cast<float>(page.image.rows)),
                      static_cast<float>(degrees))
          .boundingRect2f();
  m.at<double>(0, 2) += bounds.width / 2.0 - center.x;
  m.at<double>(1, 2) += bounds.height / 2.0 - center.y;
  datagen::Page out;
  const cv::Size size(static_cast<int>(std::lround(bounds.width)), static_cast<int>(std::lround(bounds.height)));
  cv::warpAffine(page.image, out.image, m, size, cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar::all(255));
  auto map = [&](Point p) {
    return Point{m.at<double>(0, 0) * p.x + m.at<double>(0, 1) * p.y + m.at<double>(0, 2),
                 m.at<double>(1, 0) * p.x + m.at<double>(1, 1) * p.y + m.at<double>(1, 2)};
  };
  out.annotation.width = size.width;
  out.annotation.height = size.height;
  for (const auto& t : page.annotation.tables) {
    TableAnnotation r;
    std::array<Point, 4> pts{};
    for (int k = 0; k < 4; ++k) pts[k] = map(t.quad.pts[k]);
    r.quad = start_top_left(QuadBox(pts));
    r.bbox = r.quad.hull();
    r.rows = t.rows;
    r.cols = t.cols;
    out.annotation.tables.push_back(std::move(r));
  }
  return out;
}

Box jitter_box(const Box& box, double fraction, double clip_w, double clip_h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-fraction, fraction);
  double x0 = box.x + u(rng) * box.w, x1 = box.right() + u(rng) * box.w;
  double y0 = box.y + u(rng) * box.h, y1 = box.bottom() + u(rng) * box.h;
  x0 = std::clamp(x0, 0.0, clip_w - 1.0);
  y0 = std::clamp(y0, 0.0, clip_h - 1.0);
  x1 = std::clamp(x1, x0 + 1.0, clip_w);
  y1 = std::clamp(y1, y0 + 1.0, clip_h);
  return Box::from_corners(x0, y0, x1, y1);
}

torch::Tensor recognizer_loss(const torch::Tensor& split, const torch::Tensor& merge) { return split + merge; }

namespace {

datagen::Page load_page(const datagen::CorpusEntry& e) {
  datagen::Page p{cv::imread(e.image_path, cv::IMREAD_COLOR), load_annotation(e.annotation_path)};
  if (p.image.empty()) throw std::runtime_error("cannot read " + e.image_path);
  return p;
}

/// Epoch-shuffled index stream.
class Sampler {
 public:
  Sampler(std::size_t n, std::mt19937_64& rng) : order_(n), rng_(rng) {
    if (n == 0) throw std::invalid_argument("empty training set");
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  std::size_t next() {
    if (pos_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64& rng_;
  std::size_t pos_ = 0;
};

torch::optim::SGD make_optimizer(torch::nn::Module& model, const TrainConfig& c) {
  return torch::optim::SGD(model.parameters(),
                           torch::optim::SGDOptions(c.effective_lr()).momentum(c.momentum).weight_decay(c.weight_decay));
}

void set_lr(torch::optim::SGD& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
}

void check_finite(double v, int iteration, const std::string& what) {
  if (!std::isfinite(v))
    throw TrainingDiverged(what + " became non-finite at iteration " + std::to_string(iteration));
}

struct DetSample {
  cv::Mat image;  // resized, not yet padded
  std::vector<Box> boxes;
  std::vector<QuadBox> quads;
};

DetSample prepare_detector_sample(const datagen::Page& page, int shorter, int longer_cap) {
  const int h = page.image.rows, w = page.image.cols;
  double s = static_cast<double>(shorter) / std::min(h, w);
  if (std::max(h, w) * s > longer_cap) s = static_cast<double>(longer_cap) / std::max(h, w);
  const cv::Size size(std::max(32, static_cast<int>(std::lround(w * s))), std::max(32, static_cast<int>(std::lround(h * s))));
  DetSample d;
  cv::resize(page.image, d.image, size, 0, 0, s < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
  const double sx = static_cast<double>(size.width) / w, sy = static_cast<double>(size.height) / h;
  for (const auto& t : page.annotation.tables) {
    QuadBox q = t.quad;
    for (auto& p : q.pts) p = {p.x * sx, p.y * sy};
    d.quads.push_back(q);
    d.boxes.push_back(q.hull());
  }
  return d;
}

std::optional<Box> clip_box(const Box& b, double w, double h) {
  const double x0 = std::max(0.0, b.x), y0 = std::max(0.0, b.y);
  const double x1 = std::min(w, b.right()), y1 = std::min(h, b.bottom());
  if (x1 - x0 < 1.0 || y1 - y0 < 1.0) return std::nullopt;
  return Box::from_corners(x0, y0, x1, y1);
}

struct Candidate {
  Box box;
  std::int64_t image = 0;
  bool positive = false;
  std::array<double, 8> target{};
  double hardness = 0.0;
};

}  // namespace

TrainTrace train_detector(detector::TableDetector& model, const std::vector<datagen::CorpusEntry>& corpus,
                          const TrainConfig& config, const Progress& progress) {
  using namespace detector;
  config.validate();
  torch::manual_seed(config.seed);
  std::mt19937_64 rng(config.seed);
  Sampler sampler(corpus.size(), rng);
  auto opt = make_optimizer(*model, config);
  model->train();
  const DetectorConfig& dcfg = model->config;
  TrainTrace trace{{"corner", "frcn", "total"}, {}};

  for (int it = 0; it < config.iterations; ++it) {
    const double lr = config.lr_at(it);
    set_lr(opt, lr);
    const int shorter = config.scales[std::uniform_int_distribution<std::size_t>(0, config.scales.size() - 1)(rng)];

    std::vector<DetSample> batch;
    int max_h = 0, max_w = 0;
    for (int b = 0; b < config.images_per_step; ++b) {
      datagen::Page page = load_page(corpus[sampler.next()]);
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.rotation_prob) {
        const double quarter = 90.0 * std::uniform_int_distribution<int>(0, 3)(rng);
        const double jitter = std::uniform_real_distribution<double>(-config.rotation_jitter_deg,
                                                                     config.rotation_jitter_deg)(rng);
        page = rotate_page(page, quarter + jitter);
      }
      batch.push_back(prepare_detector_sample(page, shorter, dcfg.longer_cap));
      max_h = std::max(max_h, batch.back().image.rows);
      max_w = std::max(max_w, batch.back().image.cols);
    }
    const int ph = (max_h + 31) / 32 * 32, pw = (max_w + 31) / 32 * 32;
    std::vector<torch::Tensor> images;
    std::vector<CornerTargets> tl_targets, br_targets;
    int num_tables = 0;
    const int mh = ph / static_cast<int>(kDetectorStride), mw = pw / static_cast<int>(kDetectorStride);
    for (const auto& s : batch) {
      cv::Mat padded;
      cv::copyMakeBorder(s.image, padded, 0, ph - s.image.rows, 0, pw - s.image.cols, cv::BORDER_CONSTANT,
                         cv::Scalar::all(255));
      images.push_back(nn::image_to_tensor(padded));
      tl_targets.push_back(make_corner_targets(s.boxes, mh, mw, kDetectorStride, CornerKind::TopLeft));
      br_targets.push_back(make_corner_targets(s.boxes, mh, mw, kDetectorStride, CornerKind::BottomRight));
      num_tables += static_cast<int>(s.boxes.size());
    }
    const auto out = model->forward(torch::cat(images));
    const auto corner = corner_loss(out.tl, stack_targets(tl_targets), out.br, stack_targets(br_targets), num_tables);

    // Candidate proposals: current decodes, jittered ground truth, random boxes.
    std::vector<Candidate> selected;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& s = batch[b];
      const double W = s.image.cols, H = s.image.rows;
      std::vector<Box> cands;
      const auto tl = decode_corners(out.tl.heat[static_cast<int64_t>(b)][0], out.tl.offsets[static_cast<int64_t>(b)],
                                     kDetectorStride, config.train_top_k, config.train_corner_threshold,
                                     CornerKind::TopLeft);
      const auto br = decode_corners(out.br.heat[static_cast<int64_t>(b)][0], out.br.offsets[static_cast<int64_t>(b)],
                                     kDetectorStride, config.train_top_k, config.train_corner_threshold,
                                     CornerKind::BottomRight);
      for (const auto& p : enumerate_proposals(tl, br, dcfg.proposal_nms))
        if (auto c = clip_box(p.box, W, H)) cands.push_back(*c);
      for (const Box& g : s.boxes)
        for (int k = 0; k < config.jitter_per_gt; ++k) cands.push_back(jitter_box(g, config.jitter_fraction, W, H, rng));
      std::uniform_real_distribution<double> frac(0.05, 0.9), pos(0.0, 1.0);
      for (int k = 0; k < config.random_negatives; ++k) {
        const double w = frac(rng) * W, h = frac(rng) * H;
        cands.push_back(Box(pos(rng) * (W - w), pos(rng) * (H - h), w, h));
      }
      const auto labels = assign_proposal_labels(cands, s.boxes);
      std::vector<Candidate> pool;
      for (std::size_t k = 0; k < cands.size(); ++k) {
        if (labels.labels[k] == ProposalLabel::Ignore) continue;
        Candidate c{cands[k], static_cast<std::int64_t>(b), labels.labels[k] == ProposalLabel::Positive, {}, 0.0};
        if (c.positive) c.target = quad_offsets(c.box, s.quads[static_cast<std::size_t>(labels.gt_index[k])]);
        pool.push_back(c);
      }
      if (pool.empty()) continue;
      {
        torch::NoGradGuard guard;
        std::vector<Box> boxes;
        for (const auto& c : pool) boxes.push_back(c.box);
        const auto [sc, of] = model->frcn_forward(out.feature.detach(), boxes,
                                                  std::vector<std::int64_t>(boxes.size(), static_cast<std::int64_t>(b)));
        const auto sd = sc.to(torch::kDouble).contiguous();
        const auto od = of.to(torch::kDouble).contiguous();
        auto sa = sd.accessor<double, 1>();
        auto oa = od.accessor<double, 2>();
        for (std::size_t k = 0; k < pool.size(); ++k) {
          const double p = std::clamp(sa[static_cast<int64_t>(k)], 1e-6, 1.0 - 1e-6);
          Candidate& c = pool[k];
          c.hardness = c.positive ? -std::log(p) : -std::log(1.0 - p);
          if (c.positive)
            for (int d = 0; d < 8; ++d) c.hardness += std::abs(oa[static_cast<int64_t>(k)][d] - c.target[d]);
        }
      }
      for (bool positive : {true, false}) {
        std::vector<Candidate> cls;
        for (const auto& c : pool)
          if (c.positive == positive) cls.push_back(c);
        std::stable_sort(cls.begin(), cls.end(), [](const Candidate& a, const Candidate& b) { return a.hardness > b.hardness; });
        const std::size_t keep = static_cast<std::size_t>(positive ? config.ohem_positives : config.ohem_negatives);
        if (cls.size() > keep) cls.resize(keep);
        selected.insert(selected.end(), cls.begin(), cls.end());
      }
    }
    torch::Tensor frcn = torch::zeros({});
    if (!selected.empty()) {
      std::vector<Box> boxes;
      std::vector<std::int64_t> index;
      std::vector<float> labels;
      std::vector<double> targets;
      for (const auto& c : selected) {
        boxes.push_back(c.box);
        index.push_back(c.image);
        labels.push_back(c.positive ? 1.0f : 0.0f);
        targets.insert(targets.end(), c.target.begin(), c.target.end());
      }
      const auto [scores, offsets] = model->frcn_forward(out.feature, boxes, index);
      const auto t = torch::tensor(targets, torch::kDouble).to(torch::kFloat).view({static_cast<int64_t>(boxes.size()), 8});
      frcn = frcn_loss(scores, torch::tensor(labels), offsets, t);
    }
    const auto total = detector_loss(corner, frcn);
    const double total_v = total.item<double>();
    check_finite(total_v, it, "detector loss");
    opt.zero_grad();
    total.backward();
    torch::nn::utils::clip_grad_norm_(model->parameters(), config.grad_clip);
    opt.step();
    LossRecord rec{it, {corner.item<double>(), frcn.item<double>(), total_v}, lr};
    trace.records.push_back(rec);
    if (progress) progress(rec);
  }
  model->eval();
  return trace;
}

TrainTrace train_tsr(tsr::TsrModel& model, const std::vector<datagen::CorpusEntry>& corpus, const TrainConfig& config,
                     const Progress& progress) {
  config.validate();
  torch::manual_seed(config.seed);
  std::mt19937_64 rng(config.seed);
  std::vector<std::pair<std::size_t, std::size_t>> tables;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto ann = load_annotation(corpus[i].annotation_path);
    for (std::size_t t = 0; t < ann.tables.size(); ++t) tables.emplace_back(i, t);
  }
  Sampler sampler(tables.size(), rng);
  auto opt = make_optimizer(*model, config);
  model->train();
  grid::AssemblerConfig acfg;
  acfg.score_threshold = model->config.mask_threshold;
  TrainTrace trace{{"split", "merge", "total"}, {}};

  for (int it = 0; it < config.iterations; ++it) {
    const double lr = config.lr_at(it);
    set_lr(opt, lr);
    const int longer = config.scales[std::uniform_int_distribution<std::size_t>(0, config.scales.size() - 1)(rng)];
    opt.zero_grad();
    double split_sum = 0.0, merge_sum = 0.0;
    for (int b = 0; b < config.images_per_step; ++b) {
      const auto [page_index, table_index] = tables[sampler.next()];
      const datagen::Page page = load_page(corpus[page_index]);
      const TableCrop tc = crop_table(page.image, page.annotation.tables[table_index], longer);
      const auto gt = splitter::make_separator_gt(tc.table, tc.padded_height, tc.padded_width);
      const cv::Mat padded = pad_to_multiple(tc.crop.image, 32);
      const int ch = tc.crop.image.rows, cw = tc.crop.image.cols;
      const auto out = model->split(nn::image_to_tensor(padded));
      const std::uint64_t s1 = rng(), s2 = rng();
      const auto rs = splitter::sample_split_pixels(gt.row, config.split_pixels, s1, ch, (cw + 7) / 8);
      const auto cs = splitter::sample_split_pixels(gt.col, config.split_pixels, s2, (ch + 7) / 8, cw);
      const auto split = splitter::split_loss(out, {gt.row}, {gt.col}, {rs}, {cs});
      torch::Tensor merge = torch::zeros({});
      const auto assembly = grid::assemble(splitter::to_prob_map(out.row[0][0]),
                                           splitter::to_prob_map(out.col[0][0]), cw, ch, acfg);
      const auto& g = assembly.grid;
      if (g.rows >= 2 && g.cols >= 2 && g.rows * g.cols <= config.max_merge_cells) {
        std::vector<QuadBox> gt_cells;
        for (const auto& c : tc.table.cells) gt_cells.push_back(c.quad);
        const auto labels = merger::label_pairs(g, gt_cells);
        merge = merger::merge_loss(model->merge->forward(out.p2, g), labels, config.merge_pairs);
      }
      const auto loss = recognizer_loss(split, merge) / static_cast<double>(config.images_per_step);
      check_finite(loss.item<double>(), it, "recognizer loss");
      loss.backward();
      split_sum += split.item<double>();
      merge_sum += merge.item<double>();
    }
    torch::nn::utils::clip_grad_norm_(model->parameters(), config.grad_clip);
    opt.step();
    const double n = config.images_per_step;
    LossRecord rec{it, {split_sum / n, merge_sum / n, (split_sum + merge_sum) / n}, lr};
    trace.records.push_back(rec);
    if (progress) progress(rec);
  }
  model->eval();
  return trace;
}

}  // namespace tabnet::trainer
