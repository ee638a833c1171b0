#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "tabnet/geometry.hpp"

namespace tabnet::nn {

enum class CornerKind { TopLeft, BottomRight };
enum class Direction { LeftToRight, RightToLeft, TopToBottom, BottomToTop };
enum class Axis { Width, Height };

// Directional running maxima over NCHW maps. "top" looks downwards from
// each location (max over rows >= i), "left" looks rightwards.
torch::Tensor pool_top(const torch::Tensor& x);
torch::Tensor pool_left(const torch::Tensor& x);
torch::Tensor pool_bottom(const torch::Tensor& x);
torch::Tensor pool_right(const torch::Tensor& x);

/// Top-left: pool_top + pool_left. Bottom-right: pool_bottom + pool_right.
torch::Tensor corner_pool(const torch::Tensor& x, CornerKind kind);

/// Bilinear RoI features. Boxes are in image pixels and map to feature
/// coordinates as u = x / stride - 0.5 (feature cell k centered at u = k).
/// Each of the output_size^2 bins averages sampling^2 points. Throws when a
/// box lies entirely outside the feature extent.
torch::Tensor roi_align(const torch::Tensor& feature, const std::vector<Box>& boxes,
                        const std::vector<std::int64_t>& batch_index, double stride, int output_size = 7,
                        int sampling = 2);

/// Sequential slice update out_k = x_k + relu(conv(out_{k-1})). `weight` is
/// [C, C, k, 1] for horizontal directions (slices are columns) and
/// [C, C, 1, k] for vertical ones.
torch::Tensor scnn_propagate(const torch::Tensor& x, const torch::Tensor& weight, Direction direction);

class ScnnImpl : public torch::nn::Module {
 public:
  ScnnImpl(int channels, Direction direction, int kernel_width = 9);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor weight;
  Direction direction;
};
TORCH_MODULE(Scnn);

/// 1x2 (or 2x1) max pooling along `axis`, then 3x3 conv + ReLU. Odd extents
/// are padded by replication first.
class DownsampleBlockImpl : public torch::nn::Module {
 public:
  DownsampleBlockImpl(int channels, Axis axis);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv2d conv{nullptr};
  Axis axis;
};
TORCH_MODULE(DownsampleBlock);

struct BackboneConfig {
  std::string variant = "tiny";              ///< "resnet18" or "tiny"
  std::vector<int> channels{16, 32, 48, 64};  ///< per stage, used by "tiny"
  int stem_channels = 16;
  int blocks_per_stage = 1;
  int feature_channels = 64;  ///< output channels of the detector/TSR maps

  /// Expands "resnet18" into its channel/block layout.
  BackboneConfig resolved() const;
  void validate() const;
};
void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int in, int out, int stride, int dilation, bool image_stats = false);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, down{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, down_bn{nullptr};
};
TORCH_MODULE(BasicBlock);

/// Residual network returning C2..C5 (strides 4, 8, 16, 32; C5 at stride 16
/// when `dilate_last`). With `image_stats` every BatchNorm normalizes with
/// the statistics of the current batch in eval mode too, keeping no running
/// averages; callers that always forward one image get per-image statistics
/// in training and inference alike.
class ResNetImpl : public torch::nn::Module {
 public:
  ResNetImpl(const BackboneConfig& config, bool dilate_last, bool image_stats = false);
  std::vector<torch::Tensor> forward(const torch::Tensor& x);
  std::vector<int> stage_channels;
  torch::nn::Sequential stem{nullptr};
  std::vector<torch::nn::Sequential> stages;
};
TORCH_MODULE(ResNet);

/// Dilated C5 reduced to `feature_channels`, stride 16.
class DetectorBackboneImpl : public torch::nn::Module {
 public:
  explicit DetectorBackboneImpl(const BackboneConfig& config);
  torch::Tensor forward(const torch::Tensor& x);
  ResNet body{nullptr};
  torch::nn::Conv2d reduce{nullptr};
};
TORCH_MODULE(DetectorBackbone);

/// Feature pyramid over C2..C5; exposes only P2 (stride 4).
class TsrBackboneImpl : public torch::nn::Module {
 public:
  explicit TsrBackboneImpl(const BackboneConfig& config);
  torch::Tensor forward(const torch::Tensor& x);
  ResNet body{nullptr};
  std::vector<torch::nn::Conv2d> lateral;
  torch::nn::Conv2d smooth{nullptr};
};
TORCH_MODULE(TsrBackbone);

/// Gaussian(0, std) weights and zero bias.
void init_gaussian(torch::nn::Module& m, double std = 0.01);

/// He-normal (fan-in, ReLU gain) weights and zero bias on every parameter of
/// `m`, itself included. Deep stacks initialised at 0.01 lose the signal.
void init_he(torch::nn::Module& m);

/// 8-bit BGR image to a [1, 3, H, W] float tensor in [-1, 1], RGB order.
torch::Tensor image_to_tensor(const cv::Mat& bgr);

}  // namespace tabnet::nn
