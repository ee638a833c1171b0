#include "tabnet/nn/pipeline.hpp"

#include "tabnet/imaging.hpp"

namespace tabnet::pipeline {

TableResult recognize_table(tsr::TsrModel& model, const cv::Mat& page, const QuadBox& quad, double score,
                            std::vector<std::string>* diagnostics) {
  const Crop crop = crop_and_resize(page, quad, model->config.longer_side);
  auto rec = tsr::recognize_structure(model, crop.image);
  TableResult t{quad, score, std::move(rec.structure)};
  for (auto& cell : t.structure.cells) cell.quad = crop.transform.to_image(cell.quad);
  if (diagnostics)
    diagnostics->insert(diagnostics->end(), rec.diagnostics.begin(), rec.diagnostics.end());
  return t;
}

PageOutput run_page(detector::TableDetector& det, tsr::TsrModel& tsr, const cv::Mat& image, const std::string& image_id,
                    std::span<const Box> text_boxes) {
  PageOutput out;
  out.result.image = image_id;
  for (const auto& d : detector::detect_tables(det, image)) {
    try {
      out.result.tables.push_back(recognize_table(tsr, image, d.quad, d.score, &out.diagnostics));
    } catch (const std::invalid_argument& e) {
      out.diagnostics.push_back(std::string("skipped detection: ") + e.what());
    }
  }
  clamp_to_image(out.result, image.cols, image.rows);
  std::vector<TableStructure*> tables;
  for (auto& t : out.result.tables) tables.push_back(&t.structure);
  out.unassigned = assign_content(text_boxes, tables);
  return out;
}

}  // namespace tabnet::pipeline
