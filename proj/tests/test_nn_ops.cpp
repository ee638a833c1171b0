#include "torch_doctest.hpp"

#include <random>

#include "gradcheck.hpp"
#include "tabnet/nn/ops.hpp"

using namespace tabnet;
using namespace tabnet::nn;

namespace {

torch::Tensor corner_pool_oracle(const torch::Tensor& x, CornerKind kind) {
  auto out = torch::zeros_like(x);
  const auto a = x.accessor<double, 4>();
  auto o = out.accessor<double, 4>();
  const int64_t H = x.size(2), W = x.size(3);
  for (int64_t n = 0; n < x.size(0); ++n)
    for (int64_t c = 0; c < x.size(1); ++c)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          double vert = -1e300, horz = -1e300;
          if (kind == CornerKind::TopLeft) {
            for (int64_t k = i; k < H; ++k) vert = std::max(vert, a[n][c][k][j]);
            for (int64_t k = j; k < W; ++k) horz = std::max(horz, a[n][c][i][k]);
          } else {
            for (int64_t k = 0; k <= i; ++k) vert = std::max(vert, a[n][c][k][j]);
            for (int64_t k = 0; k <= j; ++k) horz = std::max(horz, a[n][c][i][k]);
          }
          o[n][c][i][j] = vert + horz;
        }
  return out;
}

}  // namespace

TEST_CASE("corner pooling matches the nested-loop definition") {
  torch::manual_seed(1);
  for (auto kind : {CornerKind::TopLeft, CornerKind::BottomRight}) {
    const auto x = torch::randn({2, 3, 7, 5}, torch::kDouble);
    CHECK(torch::allclose(corner_pool(x, kind), corner_pool_oracle(x, kind)));
  }
  // Top-left example: max over the column below plus the row to the right.
  const auto x = torch::tensor({1.0, 5.0, 2.0, 3.0}, torch::kDouble).view({1, 1, 2, 2});
  const auto y = corner_pool(x, CornerKind::TopLeft);
  CHECK(y[0][0][0][0].item<double>() == doctest::Approx(2.0 + 5.0));
}

TEST_CASE("corner pooling gradient matches finite differences") {
  torch::manual_seed(2);
  const auto w = torch::randn({1, 2, 4, 5}, torch::kDouble);
  const auto x = torch::randn({1, 2, 4, 5}, torch::kDouble);
  for (auto kind : {CornerKind::TopLeft, CornerKind::BottomRight}) {
    auto f = [&](const torch::Tensor& t) { return (corner_pool(t, kind) * w).sum(); };
    CHECK(testing::max_grad_error(f, x) < 1e-6);
  }
}

TEST_CASE("roi_align reproduces a linear ramp exactly") {
  const int64_t H = 12, W = 16;
  const double a = 0.7, b = -1.3, c = 2.0, stride = 4.0;
  auto f = torch::empty({1, 1, H, W}, torch::kDouble);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) f[0][0][y][x] = a * x + b * y + c;
  const Box box(10.0, 6.0, 28.0, 20.0);
  const int bins = 7;
  const auto out = roi_align(f, {box}, {0}, stride, bins, 2);
  REQUIRE(out.sizes() == torch::IntArrayRef({1, 1, bins, bins}));
  const double u0 = box.x / stride - 0.5, v0 = box.y / stride - 0.5;
  const double bw = box.w / stride / bins, bh = box.h / stride / bins;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      const double expected = a * (u0 + (j + 0.5) * bw) + b * (v0 + (i + 0.5) * bh) + c;
      CHECK(out[0][0][i][j].item<double>() == doctest::Approx(expected).epsilon(1e-12));
    }
  CHECK_THROWS_AS(roi_align(f, {Box(500, 500, 10, 10)}, {0}, stride), std::invalid_argument);
}

TEST_CASE("roi_align keeps per-box batch order and differentiates") {
  torch::manual_seed(3);
  const auto f = torch::randn({2, 3, 6, 6}, torch::kDouble);
  const std::vector<Box> boxes{Box(2, 3, 10, 9), Box(1, 1, 20, 20), Box(5, 4, 6, 8)};
  const std::vector<std::int64_t> batch{1, 0, 1};
  const auto all = roi_align(f, boxes, batch, 4.0, 3);
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const auto one = roi_align(f[batch[k]].unsqueeze(0), {boxes[k]}, {0}, 4.0, 3);
    CHECK(torch::allclose(all[static_cast<int64_t>(k)], one[0]));
  }
  const auto w = torch::randn({3, 3, 3, 3}, torch::kDouble);
  auto fn = [&](const torch::Tensor& t) { return (roi_align(t, boxes, batch, 4.0, 3) * w).sum(); };
  CHECK(testing::max_grad_error(fn, f) < 1e-6);
}

namespace {

/// Slice-by-slice recursion with explicit loops over channels and taps.
torch::Tensor scnn_oracle(const torch::Tensor& x, const torch::Tensor& weight, Direction d) {
  const bool horizontal = d == Direction::LeftToRight || d == Direction::RightToLeft;
  const bool reverse = d == Direction::RightToLeft || d == Direction::BottomToTop;
  const int64_t C = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t n = horizontal ? W : H, len = horizontal ? H : W;
  const int64_t k = horizontal ? weight.size(2) : weight.size(3);
  auto out = x.clone();
  auto o = out.accessor<double, 4>();
  const auto wa = weight.accessor<double, 4>();
  auto at = [&](int64_t c, int64_t slice, int64_t pos) -> double& {
    return horizontal ? o[0][c][pos][slice] : o[0][c][slice][pos];
  };
  for (int64_t step = 1; step < n; ++step) {
    const int64_t s = reverse ? n - 1 - step : step;
    const int64_t prev = reverse ? s + 1 : s - 1;
    for (int64_t co = 0; co < C; ++co)
      for (int64_t p = 0; p < len; ++p) {
        double acc = 0.0;
        for (int64_t ci = 0; ci < C; ++ci)
          for (int64_t t = 0; t < k; ++t) {
            const int64_t q = p + t - k / 2;
            if (q < 0 || q >= len) continue;
            acc += (horizontal ? wa[co][ci][t][0] : wa[co][ci][0][t]) * at(ci, prev, q);
          }
        at(co, s, p) += std::max(0.0, acc);
      }
  }
  return out;
}

}  // namespace

TEST_CASE("SCNN propagation matches the slice recursion in all directions") {
  torch::manual_seed(4);
  const auto x = torch::randn({1, 2, 5, 6}, torch::kDouble);
  for (auto d : {Direction::LeftToRight, Direction::RightToLeft, Direction::TopToBottom, Direction::BottomToTop}) {
    const bool horizontal = d == Direction::LeftToRight || d == Direction::RightToLeft;
    const auto w = horizontal ? torch::randn({2, 2, 3, 1}, torch::kDouble) : torch::randn({2, 2, 1, 3}, torch::kDouble);
    CHECK(torch::allclose(scnn_propagate(x, w, d), scnn_oracle(x, w, d)));
    const auto probe = torch::randn({1, 2, 5, 6}, torch::kDouble);
    auto fx = [&](const torch::Tensor& t) { return (scnn_propagate(t, w, d) * probe).sum(); };
    auto fw = [&](const torch::Tensor& t) { return (scnn_propagate(x, t, d) * probe).sum(); };
    CHECK(testing::max_grad_error(fx, x) < 1e-6);
    CHECK(testing::max_grad_error(fw, w) < 1e-6);
  }
}

TEST_CASE("downsample blocks halve one axis with replicate padding") {
  torch::manual_seed(5);
  DownsampleBlock wblock(4, Axis::Width), hblock(4, Axis::Height);
  const auto x = torch::randn({1, 4, 9, 11});
  CHECK(wblock->forward(x).sizes() == torch::IntArrayRef({1, 4, 9, 6}));
  CHECK(hblock->forward(x).sizes() == torch::IntArrayRef({1, 4, 5, 11}));
}

TEST_CASE("backbones produce the documented strides") {
  torch::manual_seed(6);
  BackboneConfig cfg;
  DetectorBackbone det(cfg);
  TsrBackbone tsr(cfg);
  const auto x = torch::randn({1, 3, 96, 128});
  CHECK(det->forward(x).sizes() == torch::IntArrayRef({1, 64, 6, 8}));
  CHECK(tsr->forward(x).sizes() == torch::IntArrayRef({1, 64, 24, 32}));
  CHECK_THROWS_AS(tsr->forward(torch::randn({1, 3, 96, 100})), std::invalid_argument);
  CHECK_THROWS_AS(det->forward(torch::randn({1, 3, 16, 64})), std::invalid_argument);
  BackboneConfig bad;
  bad.variant = "vgg";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(nlohmann::json({{"depth", 3}}).get<BackboneConfig>(), std::invalid_argument);
}

TEST_CASE("image tensors are RGB in [-1, 1]") {
  cv::Mat img(2, 3, CV_8UC3, cv::Scalar(0, 128, 255));  // BGR
  const auto t = image_to_tensor(img);
  CHECK(t.sizes() == torch::IntArrayRef({1, 3, 2, 3}));
  CHECK(t[0][0][0][0].item<float>() == doctest::Approx(1.0));
  CHECK(t[0][2][1][2].item<float>() == doctest::Approx(-1.0));
}
