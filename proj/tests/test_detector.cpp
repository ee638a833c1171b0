#include "torch_doctest.hpp"

#include <chrono>
#include <random>

#include "decode_oracle.hpp"
#include "gradcheck.hpp"
#include "tabnet/nn/detector.hpp"

using namespace tabnet;
using namespace tabnet::detector;

namespace {

double box_iou(double ax0, double ay0, double ax1, double ay1, double bx0, double by0, double bx1, double by1) {
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = iw * ih;
  return inter / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter);
}

/// Worst IoU over a dense grid of corner displacements bounded by r.
double dense_worst(double w, double h, double r, int steps) {
  double worst = 1.0;
  std::vector<double> d;
  for (int i = 0; i <= steps; ++i) d.push_back(-r + 2.0 * r * i / steps);
  for (double a : d)
    for (double b : d)
      for (double c : d)
        for (double e : d) worst = std::min(worst, box_iou(0, 0, w, h, a, b, w + c, h + e));
  return worst;
}

}  // namespace

TEST_CASE("corner radius is the largest safe displacement") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> size(2.0, 60.0);
  for (int t = 0; t < 30; ++t) {
    const double w = size(rng), h = size(rng);
    const double r = corner_radius(w, h);
    CHECK(dense_worst(w, h, r, 8) >= 0.3 - 1e-9);
    CHECK(dense_worst(w, h, r * 1.01 + 1e-9, 8) < 0.3);
  }
  CHECK_THROWS_AS(corner_radius(0.0, 3.0), std::invalid_argument);
}

TEST_CASE("corner targets place a unit peak with sub-cell offsets") {
  const std::vector<Box> boxes{Box(35.0, 20.0, 200.0, 120.0)};
  const auto tl = make_corner_targets(boxes, 16, 20, 16.0, CornerKind::TopLeft);
  CHECK(tl.mask.sum().item<float>() == 1.0f);
  CHECK(tl.heat[1][2].item<float>() == 1.0f);
  CHECK(tl.offsets[0][1][2].item<float>() == doctest::Approx(35.0 / 16 - 2));
  CHECK(tl.offsets[1][1][2].item<float>() == doctest::Approx(20.0 / 16 - 1));
  const int r = static_cast<int>(corner_radius(200.0 / 16, 120.0 / 16));
  REQUIRE(r >= 1);
  const double sigma = r / 3.0;
  CHECK(tl.heat[1][3].item<float>() == doctest::Approx(std::exp(-1.0 / (2 * sigma * sigma))));
  CHECK(tl.heat[1][2 + r + 1].item<float>() == 0.0f);
  CHECK(tl.heat.max().item<float>() == 1.0f);
  const auto br = make_corner_targets(boxes, 16, 20, 16.0, CornerKind::BottomRight);
  CHECK(br.heat[8][14].item<float>() == 1.0f);  // (235, 140) / 16
  // Corners past the map clamp to the border.
  const auto clamped = make_corner_targets({Box(300.0, 10.0, 60.0, 40.0)}, 16, 20, 16.0, CornerKind::BottomRight);
  CHECK(clamped.mask[3][19].item<float>() == 1.0f);
  CHECK(clamped.offsets[0][3][19].item<float>() < 1.0f);
}

TEST_CASE("decoding keeps 3x3 local maxima above threshold, best first") {
  std::mt19937 rng(8);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int trial = 0; trial < 20; ++trial) {
    const int H = 9, W = 11;
    auto heat = torch::empty({H, W});
    auto off = torch::empty({2, H, W});
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        heat[y][x] = std::round(u(rng) * 20.0f) / 20.0f;  // coarse values produce ties
        off[0][y][x] = u(rng);
        off[1][y][x] = u(rng);
      }
    const int top_k = 6;
    const auto got = decode_corners(heat, off, 16.0, top_k, 0.3, CornerKind::TopLeft);
    const auto expect = testing::scan_peaks(heat, off, 16.0, top_k, 0.3, CornerKind::TopLeft);
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].score == expect[i].score);
      CHECK(got[i].x == doctest::Approx(expect[i].x));
      CHECK(got[i].y == doctest::Approx(expect[i].y));
    }
  }
}

TEST_CASE("proposal enumeration matches brute force") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> pos(0.0, 200.0), sc(0.3, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<CornerPoint> tl, br;
    for (int i = 0; i < 6; ++i) tl.push_back({CornerKind::TopLeft, pos(rng), pos(rng), sc(rng)});
    for (int i = 0; i < 6; ++i) br.push_back({CornerKind::BottomRight, pos(rng), pos(rng), sc(rng)});
    std::vector<ScoredBox> all;
    for (const auto& a : tl)
      for (const auto& b : br)
        if (b.x > a.x && b.y > a.y) all.push_back({Box::from_corners(a.x, a.y, b.x, b.y), (a.score + b.score) / 2});
    // Pairwise NMS oracle: kept iff no higher-ranked kept box overlaps above 0.7.
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return all[i].score > all[j].score; });
    std::vector<ScoredBox> expect;
    for (std::size_t i : order) {
      bool keep = true;
      for (const auto& k : expect) keep = keep && iou(k.box, all[i].box) <= 0.7;
      if (keep) expect.push_back(all[i]);
    }
    const auto got = enumerate_proposals(tl, br, 0.7);
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].box == expect[i].box);
      CHECK(got[i].score == doctest::Approx(expect[i].score));
    }
  }
}

TEST_CASE("proposal labels follow the IoU bands") {
  const std::vector<Box> gts{Box(0, 0, 100, 100)};
  const std::vector<Box> props{Box(0, 0, 100, 90), Box(0, 0, 100, 60), Box(0, 0, 100, 40), Box(300, 300, 5, 5)};
  const auto a = assign_proposal_labels(props, gts);
  CHECK(a.labels[0] == ProposalLabel::Positive);  // 0.9
  CHECK(a.labels[1] == ProposalLabel::Ignore);    // 0.6
  CHECK(a.labels[2] == ProposalLabel::Negative);  // 0.4
  CHECK(a.labels[3] == ProposalLabel::Negative);
  CHECK(a.gt_index[0] == 0);
  const auto none = assign_proposal_labels(props, {});
  CHECK(none.labels[0] == ProposalLabel::Negative);
  CHECK(none.gt_index[0] == -1);
}

TEST_CASE("quad offsets invert through decode") {
  const Box p(10, 20, 50, 40);
  const QuadBox q(std::array<Point, 4>{Point{12, 18}, Point{61, 22}, Point{58, 63}, Point{9, 59}});
  const auto t = quad_offsets(p, q);
  CHECK(t[0] == doctest::Approx(2.0 / 50));
  CHECK(t[1] == doctest::Approx(-2.0 / 40));
  const QuadBox back = decode_quad(p, t);
  for (int k = 0; k < 4; ++k) {
    CHECK(back.pts[k].x == doctest::Approx(q.pts[k].x));
    CHECK(back.pts[k].y == doctest::Approx(q.pts[k].y));
  }
  const std::array<double, 8> zero{};
  CHECK(decode_quad(p, zero) == QuadBox(p));
}

TEST_CASE("focal loss equals the direct per-pixel sum") {
  std::mt19937 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pred = torch::empty({2, 5, 6}, torch::kDouble);
  auto target = torch::empty({2, 5, 6}, torch::kDouble);
  double expect = 0.0;
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 6; ++j) {
        const double p = u(rng) < 0.05 ? 0.0 : u(rng);  // exercises the clamp
        const double y = u(rng) < 0.1 ? 1.0 : u(rng) * 0.9;
        pred[n][i][j] = p;
        target[n][i][j] = y;
        const double pc = std::clamp(p, 1e-4, 1 - 1e-4);
        expect += y == 1.0 ? -std::pow(1 - pc, 2) * std::log(pc)
                           : -std::pow(1 - y, 4) * std::pow(pc, 2) * std::log(1 - pc);
      }
  CHECK(focal_loss_sum(pred, target).item<double>() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("corner loss normalizes by tables and positives") {
  const std::vector<Box> boxes{Box(16, 16, 64, 48)};
  auto tl_t = stack_targets({make_corner_targets(boxes, 8, 8, 16.0, CornerKind::TopLeft)});
  auto br_t = stack_targets({make_corner_targets(boxes, 8, 8, 16.0, CornerKind::BottomRight)});
  CornerOutput tl{tl_t.heat.unsqueeze(1).clone(), tl_t.offsets.clone()};
  CornerOutput br{br_t.heat.unsqueeze(1).clone(), br_t.offsets.clone()};
  const double perfect = corner_loss(tl, tl_t, br, br_t, 1).item<double>();
  tl.offsets = tl.offsets + 0.5 * tl_t.mask.unsqueeze(1);
  const double shifted = corner_loss(tl, tl_t, br, br_t, 1).item<double>();
  // Smooth-L1 of 0.5 in both offset channels at one of two positives.
  CHECK(shifted - perfect == doctest::Approx(2 * 0.5 * 0.25 / 2.0).epsilon(1e-5));
  tl.heat = torch::full_like(tl.heat, 0.2);
  const double focal = (focal_loss_sum(tl.heat.squeeze(1), tl_t.heat) + focal_loss_sum(br.heat.squeeze(1), br_t.heat))
                           .item<double>();
  const double one = corner_loss(tl, tl_t, br, br_t, 1).item<double>();
  const double two = corner_loss(tl, tl_t, br, br_t, 2).item<double>();
  CHECK(one - two == doctest::Approx(focal / 2).epsilon(1e-6));
}

TEST_CASE("FRCN loss on a single positive at score 0.5") {
  const auto scores = torch::tensor({0.5}, torch::kDouble);
  const auto labels = torch::tensor({1.0}, torch::kDouble);
  const auto off = torch::tensor({0.1, -0.2, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0}, torch::kDouble).view({1, 8});
  const auto zero = torch::zeros({1, 8}, torch::kDouble);
  CHECK(frcn_loss(scores, labels, off, zero).item<double>() == doctest::Approx(std::log(2.0) + 0.6));
  // Background samples contribute no regression term.
  const auto neg = frcn_loss(scores, torch::tensor({0.0}, torch::kDouble), off, zero).item<double>();
  CHECK(neg == doctest::Approx(std::log(2.0)));
  CHECK(detector_loss(torch::tensor(1.0), torch::tensor(2.0)).item<double>() == doctest::Approx(2.2));
  torch::manual_seed(11);
  const auto s = torch::rand({5}, torch::kDouble) * 0.8 + 0.1;
  const auto l = torch::tensor({1.0, 0.0, 1.0, 0.0, 0.0}, torch::kDouble);
  const auto o = torch::randn({5, 8}, torch::kDouble);
  const auto t = torch::randn({5, 8}, torch::kDouble);
  auto fs = [&](const torch::Tensor& x) { return frcn_loss(x, l, o, t); };
  auto fo = [&](const torch::Tensor& x) { return frcn_loss(s, l, x, t); };
  CHECK(testing::max_grad_error(fs, s) < 1e-6);
  CHECK(testing::max_grad_error(fo, o) < 1e-6);
}

TEST_CASE("corner head starts near the 0.1 prior and reads 0.5 with zero weights") {
  torch::manual_seed(12);
  CornerHead head(8, CornerKind::TopLeft);
  head->eval();
  const auto x = torch::randn({1, 8, 6, 7});
  const auto out = head->forward(x);
  CHECK(out.heat.sizes() == torch::IntArrayRef({1, 1, 6, 7}));
  CHECK(out.offsets.sizes() == torch::IntArrayRef({1, 2, 6, 7}));
  CHECK(out.heat.mean().item<float>() == doctest::Approx(0.1).epsilon(0.05));
  {
    torch::NoGradGuard guard;
    for (auto& p : head->parameters()) p.zero_();
  }
  CHECK(torch::allclose(head->forward(x).heat, torch::full({1, 1, 6, 7}, 0.5)));
}

TEST_CASE("detector forward, FRCN and one training step") {
  torch::manual_seed(13);
  DetectorConfig cfg;
  cfg.fc_dim = 128;
  TableDetector model(cfg);
  const auto x = torch::randn({2, 3, 256, 320});
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = model->forward(x);
  CHECK(out.feature.sizes() == torch::IntArrayRef({2, 64, 16, 20}));
  CHECK(out.tl.heat.sizes() == torch::IntArrayRef({2, 1, 16, 20}));
  const std::vector<Box> boxes{Box(10, 10, 100, 80), Box(50, 40, 200, 150)};
  auto [scores, offsets] = model->frcn_forward(out.feature, boxes, {0, 1});
  CHECK(scores.sizes() == torch::IntArrayRef({2}));
  CHECK(offsets.sizes() == torch::IntArrayRef({2, 8}));
  const auto tl_t = stack_targets({make_corner_targets({boxes[0]}, 16, 20, kDetectorStride, CornerKind::TopLeft),
                                   make_corner_targets({boxes[1]}, 16, 20, kDetectorStride, CornerKind::TopLeft)});
  const auto br_t = stack_targets({make_corner_targets({boxes[0]}, 16, 20, kDetectorStride, CornerKind::BottomRight),
                                   make_corner_targets({boxes[1]}, 16, 20, kDetectorStride, CornerKind::BottomRight)});
  const auto loss = detector_loss(corner_loss(out.tl, tl_t, out.br, br_t, 2),
                                  frcn_loss(scores, torch::ones({2}), offsets, torch::zeros({2, 8})));
  loss.backward();
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("detector forward+backward at 2x256x320: " << ms << " ms");
  CHECK(std::isfinite(loss.item<double>()));
  CHECK(model->tl->heat_out->weight.grad().defined());

  cv::Mat page(300, 240, CV_8UC3, cv::Scalar::all(255));
  const auto dets = detect_tables(model, page);
  for (const auto& d : dets) CHECK(d.score >= cfg.score_threshold);
  CHECK(model->is_training());
  CHECK(detector_input_scale(300, 240, cfg) == doctest::Approx(512.0 / 240));
  CHECK(detector_input_scale(2000, 240, cfg) == doctest::Approx(1024.0 / 2000));
  CHECK_THROWS_AS(nlohmann::json({{"fc", 3}}).get<DetectorConfig>(), std::invalid_argument);
  const nlohmann::json j = cfg;
  CHECK(j.get<DetectorConfig>().fc_dim == 128);
}

TEST_CASE("corner target arithmetic and the decode round trip") {
  const auto t = make_corner_targets({Box(37, 21, 100, 80)}, 10, 12, 16.0, CornerKind::TopLeft);
  CHECK(t.heat[1][2].item<float>() == 1.0f);
  CHECK(t.offsets[0][1][2].item<float>() == doctest::Approx(0.3125));
  CHECK(t.offsets[1][1][2].item<float>() == doctest::Approx(0.3125));
  const auto z = make_corner_targets({Box(32, 16, 100, 80)}, 10, 12, 16.0, CornerKind::TopLeft);
  CHECK(z.offsets[0][1][2].item<float>() == 0.0f);
  CHECK(z.offsets[1][1][2].item<float>() == 0.0f);

  auto single = torch::zeros({4, 4});
  single[2][1] = 0.9;
  auto off = torch::zeros({2, 4, 4});
  off[0][2][1] = 0.25;
  off[1][2][1] = 0.5;
  const auto one = decode_corners(single, off, 16.0, 100, 0.3, CornerKind::TopLeft);
  REQUIRE(one.size() == 1);
  CHECK(one[0].x == doctest::Approx(20.0));
  CHECK(one[0].y == doctest::Approx(40.0));
  single[2][1] = 0.2;
  CHECK(decode_corners(single, off, 16.0, 100, 0.3, CornerKind::TopLeft).empty());

  std::mt19937 rng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Box b(u(rng) * 150, u(rng) * 100, 60 + u(rng) * 200, 50 + u(rng) * 150);
    for (auto kind : {CornerKind::TopLeft, CornerKind::BottomRight}) {
      const auto tg = make_corner_targets({b}, 24, 28, 16.0, kind);
      const auto pts = decode_corners(tg.heat, tg.offsets, 16.0, 100, 0.999, kind);
      REQUIRE(pts.size() == 1);
      const double qx = kind == CornerKind::TopLeft ? b.x : b.right();
      const double qy = kind == CornerKind::TopLeft ? b.y : b.bottom();
      CHECK(std::abs(pts[0].x - qx) <= 1.0);
      CHECK(std::abs(pts[0].y - qy) <= 1.0);
    }
  }
}

TEST_CASE("proposal examples") {
  const auto p = enumerate_proposals({{CornerKind::TopLeft, 10, 10, 0.9}}, {{CornerKind::BottomRight, 100, 50, 0.8}});
  REQUIRE(p.size() == 1);
  CHECK(p[0].box == Box(10, 10, 90, 40));
  CHECK(p[0].score == doctest::Approx(0.85));
  CHECK(enumerate_proposals({{CornerKind::TopLeft, 100, 50, 0.9}}, {{CornerKind::BottomRight, 10, 10, 0.8}}).empty());
}
