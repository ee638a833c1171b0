#pragma once

#include <opencv2/core.hpp>

#include "tabnet/annotation.hpp"

namespace tabnet {

struct Crop {
  cv::Mat image;
  Box region;  ///< integer-aligned source rectangle, clamped to the image
  CropTransform transform;
};

/// Crops the axis-aligned hull of `quad` and scales it so the longer side
/// equals `longer_side`, keeping the aspect ratio.
Crop crop_and_resize(const cv::Mat& image, const QuadBox& quad, int longer_side = 1024);

/// Scales the whole image so its longer side equals `longer_side`.
Crop resize_longer_side(const cv::Mat& image, int longer_side);

/// Pads right and bottom with `value` up to multiples of `multiple`.
cv::Mat pad_to_multiple(const cv::Mat& image, int multiple, const cv::Scalar& value = cv::Scalar::all(255));

struct TableCrop {
  Crop crop;
  TableAnnotation table;  ///< crop coordinates
  int padded_width = 0;   ///< crop size rounded up to a multiple of 32
  int padded_height = 0;
};

/// Crops an annotated table the way inference crops a detection.
TableCrop crop_table(const cv::Mat& page, const TableAnnotation& table, int longer_side);

}  // namespace tabnet
