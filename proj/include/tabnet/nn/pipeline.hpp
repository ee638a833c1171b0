#pragma once

#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "tabnet/nn/detector.hpp"
#include "tabnet/nn/tsr.hpp"
#include "tabnet/page_result.hpp"

namespace tabnet::pipeline {

/// Crops the hull of `quad`, recognizes its structure and maps every cell
/// back to page coordinates.
TableResult recognize_table(tsr::TsrModel& model, const cv::Mat& page, const QuadBox& quad, double score,
                            std::vector<std::string>* diagnostics = nullptr);

struct PageOutput {
  PageResult result;
  std::vector<int> unassigned;  ///< text-box indices outside every cell
  std::vector<std::string> diagnostics;
};

/// Detect, crop, split, assemble, merge, map back, clamp and assign
/// `text_boxes` (page coordinates) to cells.
PageOutput run_page(detector::TableDetector& det, tsr::TsrModel& tsr, const cv::Mat& image, const std::string& image_id,
                    std::span<const Box> text_boxes = {});

}  // namespace tabnet::pipeline
