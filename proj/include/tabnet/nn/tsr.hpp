#pragma once

#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "tabnet/grid_assembler.hpp"
#include "tabnet/nn/merger.hpp"
#include "tabnet/nn/ops.hpp"
#include "tabnet/nn/splitter.hpp"
#include "tabnet/structure.hpp"

namespace tabnet::tsr {

struct TsrConfig {
  nn::BackboneConfig backbone;
  int kernel_width = 9;
  merger::MergerConfig merger;
  int longer_side = 1024;  ///< crops are scaled so the longer side equals this
  float mask_threshold = 0.8f;
  double merge_threshold = 0.8;

  void validate() const;
};
void to_json(nlohmann::json& j, const TsrConfig& c);
void from_json(const nlohmann::json& j, TsrConfig& c);

/// Split branches and merge head on one shared feature pyramid.
class TsrModelImpl : public torch::nn::Module {
 public:
  explicit TsrModelImpl(const TsrConfig& config);
  /// Image sides must be multiples of 32.
  splitter::SplitOutput split(const torch::Tensor& image);

  TsrConfig config;
  nn::TsrBackbone backbone{nullptr};
  splitter::SplitBranch row{nullptr}, col{nullptr};
  merger::MergeHead merge{nullptr};
};
TORCH_MODULE(TsrModel);

struct Recognition {
  TableStructure structure;  ///< crop coordinates
  grid::CellGrid grid;
  std::vector<std::string> diagnostics;
};

/// Split, assemble and merge on an already cropped and scaled table image.
Recognition recognize_structure(TsrModel& model, const cv::Mat& crop);

/// Structure of a grid without any merges.
TableStructure unit_structure(const grid::CellGrid& grid);

}  // namespace tabnet::tsr
