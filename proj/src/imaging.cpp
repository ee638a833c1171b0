#include "tabnet/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <opencv2/imgproc.hpp>

namespace tabnet {

namespace {

Crop scale_region(const cv::Mat& image, const cv::Rect& roi, int longer_side) {
  if (longer_side < 1) throw std::invalid_argument("longer_side must be positive");
  const double scale = static_cast<double>(longer_side) / std::max(roi.width, roi.height);
  const int out_w = std::max(1, static_cast<int>(std::lround(roi.width * scale)));
  const int out_h = std::max(1, static_cast<int>(std::lround(roi.height * scale)));
  Crop c;
  c.region = Box(roi.x, roi.y, roi.width, roi.height);
  c.transform = {static_cast<double>(roi.x), static_cast<double>(roi.y), scale};
  cv::resize(image(roi), c.image, cv::Size(out_w, out_h), 0, 0,
             scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
  return c;
}

}  // namespace

Crop crop_and_resize(const cv::Mat& image, const QuadBox& quad, int longer_side) {
  if (image.empty()) throw std::invalid_argument("empty image");
  const Box hull = quad.hull();
  const int x0 = std::clamp(static_cast<int>(std::floor(hull.x)), 0, image.cols - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(hull.y)), 0, image.rows - 1);
  const int x1 = std::clamp(static_cast<int>(std::ceil(hull.right())), x0 + 1, image.cols);
  const int y1 = std::clamp(static_cast<int>(std::ceil(hull.bottom())), y0 + 1, image.rows);
  return scale_region(image, cv::Rect(x0, y0, x1 - x0, y1 - y0), longer_side);
}

Crop resize_longer_side(const cv::Mat& image, int longer_side) {
  if (image.empty()) throw std::invalid_argument("empty image");
  return scale_region(image, cv::Rect(0, 0, image.cols, image.rows), longer_side);
}

cv::Mat pad_to_multiple(const cv::Mat& image, int multiple, const cv::Scalar& value) {
  if (multiple < 1) throw std::invalid_argument("multiple must be positive");
  const int h = (image.rows + multiple - 1) / multiple * multiple;
  const int w = (image.cols + multiple - 1) / multiple * multiple;
  cv::Mat out;
  cv::copyMakeBorder(image, out, 0, h - image.rows, 0, w - image.cols, cv::BORDER_CONSTANT, value);
  return out;
}

TableCrop crop_table(const cv::Mat& page, const TableAnnotation& table, int longer_side) {
  TableCrop out;
  out.crop = crop_and_resize(page, table.quad, longer_side);
  out.table = transform_table(table, out.crop.transform);
  out.padded_width = (out.crop.image.cols + 31) / 32 * 32;
  out.padded_height = (out.crop.image.rows + 31) / 32 * 32;
  return out;
}

}  // namespace tabnet
