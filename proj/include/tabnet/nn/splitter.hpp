#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "tabnet/nn/ops.hpp"
#include "tabnet/raster.hpp"

namespace tabnet::splitter {

/// One separator branch over P2 (stride 4). Row branches pool the width and
/// propagate left/right; column branches pool the height and propagate
/// up/down. Output is a sigmoid map at H x W/8 (row) or H/8 x W (column).
class SplitBranchImpl : public torch::nn::Module {
 public:
  SplitBranchImpl(int channels, bool row, int kernel_width = 9);
  torch::Tensor forward(const torch::Tensor& p2);

  bool row;
  torch::nn::Conv2d conv{nullptr};
  std::vector<nn::DownsampleBlock> down;
  nn::Scnn forward_pass{nullptr}, backward_pass{nullptr};
  torch::nn::Conv2d out{nullptr};
};
TORCH_MODULE(SplitBranch);

struct SplitOutput {
  torch::Tensor p2;   ///< [N, C, H/4, W/4]
  torch::Tensor row;  ///< [N, 1, H, W/8]
  torch::Tensor col;  ///< [N, 1, H/8, W]
};

/// Flat indices (row-major) of sampled separator and background pixels.
struct PixelSamples {
  std::vector<std::int64_t> positive;
  std::vector<std::int64_t> negative;
};

/// Up to `per_class` separator and `per_class` background pixels drawn
/// uniformly without replacement from the top-left valid_h x valid_w block
/// (negative extents mean the whole mask). Deterministic in `seed`.
PixelSamples sample_split_pixels(const BinaryMask& gt, int per_class, std::uint64_t seed, int valid_h = -1,
                                 int valid_w = -1);

/// Mean BCE over every sampled pixel of a batch of [N, 1, h, w] predictions.
/// Zero when nothing was sampled.
torch::Tensor sampled_bce(const torch::Tensor& pred, const std::vector<BinaryMask>& gt,
                          const std::vector<PixelSamples>& samples);

/// Row term plus column term.
torch::Tensor split_loss(const SplitOutput& out, const std::vector<BinaryMask>& row_gt,
                         const std::vector<BinaryMask>& col_gt, const std::vector<PixelSamples>& row_samples,
                         const std::vector<PixelSamples>& col_samples);

/// [h, w] tensor to a probability map.
ProbMap to_prob_map(const torch::Tensor& mask);

}  // namespace tabnet::splitter
