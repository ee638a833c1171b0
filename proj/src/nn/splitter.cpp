#include "tabnet/nn/splitter.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tabnet::splitter {

namespace F = torch::nn::functional;

SplitBranchImpl::SplitBranchImpl(int channels, bool is_row, int kernel_width) : row(is_row) {
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  nn::init_he(*conv);
  const nn::Axis axis = row ? nn::Axis::Width : nn::Axis::Height;
  for (int k = 0; k < 3; ++k)
    down.push_back(register_module("down" + std::to_string(k + 1), nn::DownsampleBlock(channels, axis)));
  forward_pass = register_module(
      "scnn_forward",
      nn::Scnn(channels, row ? nn::Direction::LeftToRight : nn::Direction::TopToBottom, kernel_width));
  backward_pass = register_module(
      "scnn_backward",
      nn::Scnn(channels, row ? nn::Direction::RightToLeft : nn::Direction::BottomToTop, kernel_width));
  out = register_module("out", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 1, 1)));
  nn::init_gaussian(*out);
}

torch::Tensor SplitBranchImpl::forward(const torch::Tensor& p2) {
  auto y = torch::relu(conv->forward(p2));
  for (auto& d : down) y = d->forward(y);
  y = backward_pass->forward(forward_pass->forward(y));
  y = F::interpolate(y, F::InterpolateFuncOptions()
                            .scale_factor(std::vector<double>{4.0, 4.0})
                            .mode(torch::kBilinear)
                            .align_corners(false));
  return torch::sigmoid(out->forward(y));
}

PixelSamples sample_split_pixels(const BinaryMask& gt, int per_class, std::uint64_t seed, int valid_h,
                                 int valid_w) {
  if (per_class < 0) throw std::invalid_argument("per_class must be non-negative");
  const int h = valid_h < 0 ? gt.height : std::min(valid_h, gt.height);
  const int w = valid_w < 0 ? gt.width : std::min(valid_w, gt.width);
  std::vector<std::int64_t> pos, neg;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      (gt.at(r, c) ? pos : neg).push_back(static_cast<std::int64_t>(r) * gt.width + c);
  std::mt19937_64 rng(seed);
  PixelSamples s;
  std::sample(pos.begin(), pos.end(), std::back_inserter(s.positive), per_class, rng);
  std::sample(neg.begin(), neg.end(), std::back_inserter(s.negative), per_class, rng);
  return s;
}

torch::Tensor sampled_bce(const torch::Tensor& pred, const std::vector<BinaryMask>& gt,
                          const std::vector<PixelSamples>& samples) {
  TORCH_CHECK(pred.dim() == 4 && pred.size(1) == 1, "expected [N, 1, h, w] predictions");
  TORCH_CHECK(gt.size() == static_cast<std::size_t>(pred.size(0)) && samples.size() == gt.size(),
              "one mask and sample set per image");
  std::vector<torch::Tensor> picked, labels;
  for (std::size_t n = 0; n < gt.size(); ++n) {
    TORCH_CHECK(gt[n].height == pred.size(2) && gt[n].width == pred.size(3), "mask shape mismatch");
    std::vector<std::int64_t> idx = samples[n].positive;
    idx.insert(idx.end(), samples[n].negative.begin(), samples[n].negative.end());
    if (idx.empty()) continue;
    std::vector<float> y(samples[n].positive.size(), 1.0f);
    y.resize(idx.size(), 0.0f);
    picked.push_back(pred[static_cast<int64_t>(n)].flatten().index_select(0, torch::tensor(idx, torch::kLong)));
    labels.push_back(torch::tensor(y, pred.options().requires_grad(false)));
  }
  if (picked.empty()) return torch::zeros({}, pred.options());
  const auto p = torch::cat(picked).clamp(1e-6, 1.0 - 1e-6);
  return F::binary_cross_entropy(p, torch::cat(labels));
}

torch::Tensor split_loss(const SplitOutput& out, const std::vector<BinaryMask>& row_gt,
                         const std::vector<BinaryMask>& col_gt, const std::vector<PixelSamples>& row_samples,
                         const std::vector<PixelSamples>& col_samples) {
  return sampled_bce(out.row, row_gt, row_samples) + sampled_bce(out.col, col_gt, col_samples);
}

ProbMap to_prob_map(const torch::Tensor& mask) {
  TORCH_CHECK(mask.dim() == 2, "expected an [h, w] mask");
  const auto m = mask.detach().to(torch::kFloat).contiguous();
  ProbMap out(static_cast<int>(m.size(0)), static_cast<int>(m.size(1)));
  std::copy(m.data_ptr<float>(), m.data_ptr<float>() + m.numel(), out.data.begin());
  return out;
}

}  // namespace tabnet::splitter
