#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "tabnet/geometry.hpp"
#include "tabnet/nn/ops.hpp"

namespace tabnet::detector {

using nn::CornerKind;

struct CornerPoint {
  CornerKind kind = CornerKind::TopLeft;
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

/// Single-image targets for one corner kind on an H x W map.
struct CornerTargets {
  torch::Tensor heat;     ///< [H, W], 1 exactly at positives
  torch::Tensor offsets;  ///< [2, H, W], (dx, dy) in [0, 1) at positives
  torch::Tensor mask;     ///< [H, W], 1 at positives
};

/// Largest radius (map cells) such that both corners displaced by it in
/// each axis still give IoU >= min_iou with the w x h box.
double corner_radius(double w, double h, double min_iou = 0.3);

/// Boxes in image pixels. Corners outside the map clamp to the border.
CornerTargets make_corner_targets(const std::vector<Box>& boxes, int height, int width, double stride,
                                  CornerKind kind);

/// Heat [H, W] and offsets [2, H, W] for one image.
std::vector<CornerPoint> decode_corners(const torch::Tensor& heat, const torch::Tensor& offsets, double stride,
                                        int top_k, double score_threshold, CornerKind kind);

/// Every strictly ordered (top-left, bottom-right) pair, scored by the mean
/// corner score, then NMS.
std::vector<ScoredBox> enumerate_proposals(const std::vector<CornerPoint>& tl, const std::vector<CornerPoint>& br,
                                           double nms_threshold = 0.7);

enum class ProposalLabel { Positive, Negative, Ignore };

struct ProposalAssignment {
  std::vector<ProposalLabel> labels;
  std::vector<int> gt_index;  ///< best-IoU ground truth, -1 when there is none
};

/// IoU > 0.7 positive, max IoU < 0.5 negative, else ignored.
ProposalAssignment assign_proposal_labels(const std::vector<Box>& proposals, const std::vector<Box>& gts,
                                          double positive_iou = 0.7, double negative_iou = 0.5);

/// Corner displacements (TL, TR, BR, BL) normalized by proposal w and h.
std::array<double, 8> quad_offsets(const Box& proposal, const QuadBox& target);
QuadBox decode_quad(const Box& proposal, std::span<const double> offsets);

struct CornerOutput {
  torch::Tensor heat;     ///< [N, 1, H, W], post-sigmoid
  torch::Tensor offsets;  ///< [N, 2, H, W]
};

/// 3x3 conv, corner pooling, residual fusion, then parallel heat and
/// offset branches (3x3 conv + 1x1 conv each).
class CornerHeadImpl : public torch::nn::Module {
 public:
  CornerHeadImpl(int channels, CornerKind kind);
  CornerOutput forward(const torch::Tensor& x);

  CornerKind kind;
  torch::nn::Conv2d pre{nullptr}, pooled_conv{nullptr}, skip_conv{nullptr}, fuse_conv{nullptr};
  torch::nn::BatchNorm2d pooled_bn{nullptr}, skip_bn{nullptr};
  torch::nn::Conv2d heat_conv{nullptr}, heat_out{nullptr}, off_conv{nullptr}, off_out{nullptr};
};
TORCH_MODULE(CornerHead);

class FrcnHeadImpl : public torch::nn::Module {
 public:
  FrcnHeadImpl(int channels, int roi_size, int hidden);
  /// RoI features [N, C, roi, roi] -> (scores [N] in [0, 1], offsets [N, 8]).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& roi);
  torch::nn::Linear fc1{nullptr}, fc2{nullptr}, score{nullptr}, offsets{nullptr};
};
TORCH_MODULE(FrcnHead);

struct DetectorConfig {
  nn::BackboneConfig backbone;
  int fc_dim = 1024;
  int roi_size = 7;
  int top_k = 100;
  double corner_threshold = 0.3;
  double proposal_nms = 0.7;
  double final_nms = 0.3;
  double score_threshold = 0.5;
  int shorter_side = 512;
  int longer_cap = 1024;

  void validate() const;
};
void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);

inline constexpr double kDetectorStride = 16.0;

struct DetectorOutput {
  torch::Tensor feature;  ///< Dilated-C5 reduced, [N, C, H/16, W/16]
  CornerOutput tl;
  CornerOutput br;
};

class TableDetectorImpl : public torch::nn::Module {
 public:
  explicit TableDetectorImpl(const DetectorConfig& config);
  DetectorOutput forward(const torch::Tensor& image);
  std::pair<torch::Tensor, torch::Tensor> frcn_forward(const torch::Tensor& feature, const std::vector<Box>& boxes,
                                                       const std::vector<std::int64_t>& batch_index);

  DetectorConfig config;
  nn::DetectorBackbone backbone{nullptr};
  torch::nn::Conv2d pre{nullptr};
  CornerHead tl{nullptr}, br{nullptr};
  FrcnHead frcn{nullptr};
};
TORCH_MODULE(TableDetector);

struct Detection {
  QuadBox quad;
  double score = 0.0;
};

/// Scale factor that maps a page to the detector's input resolution.
double detector_input_scale(int height, int width, const DetectorConfig& config);

/// Inference on one page image (original pixels in, original pixels out).
std::vector<Detection> detect_tables(TableDetector& model, const cv::Mat& image);

/// Sum of the focal terms over all pixels (not normalized).
torch::Tensor focal_loss_sum(const torch::Tensor& pred, const torch::Tensor& target);

/// Batched targets: heat/offsets/mask stacked over images.
struct BatchTargets {
  torch::Tensor heat;     ///< [N, H, W]
  torch::Tensor offsets;  ///< [N, 2, H, W]
  torch::Tensor mask;     ///< [N, H, W]
};
BatchTargets stack_targets(const std::vector<CornerTargets>& per_image);

/// Focal terms of both kinds over num_tables plus Smooth-L1 offsets over the
/// positive count. Normalizers of zero drop their term.
torch::Tensor corner_loss(const CornerOutput& tl, const BatchTargets& tl_t, const CornerOutput& br,
                          const BatchTargets& br_t, int num_tables);

/// Mean BCE over all samples plus the L1 offset error summed per sample and
/// averaged over the positives.
torch::Tensor frcn_loss(const torch::Tensor& scores, const torch::Tensor& labels, const torch::Tensor& offsets,
                        const torch::Tensor& offset_targets);

inline constexpr double kCornerLossWeight = 0.2;
torch::Tensor detector_loss(const torch::Tensor& corner, const torch::Tensor& frcn);

}  // namespace tabnet::detector
