#include "tabnet/nn/tsr.hpp"

#include <stdexcept>

#include "tabnet/imaging.hpp"

namespace tabnet::tsr {

void TsrConfig::validate() const {
  backbone.validate();
  merger.validate();
  if (kernel_width < 1 || kernel_width % 2 == 0) throw std::invalid_argument("kernel_width must be odd");
  if (longer_side < 32) throw std::invalid_argument("longer_side must be at least 32");
  if (!(mask_threshold > 0.0f && mask_threshold < 1.0f)) throw std::invalid_argument("mask_threshold must lie in (0, 1)");
  if (!(merge_threshold > 0.0 && merge_threshold <= 1.0)) throw std::invalid_argument("merge_threshold must lie in (0, 1]");
}

void to_json(nlohmann::json& j, const TsrConfig& c) {
  j = nlohmann::json{{"backbone", c.backbone},         {"kernel_width", c.kernel_width},
                     {"merger", c.merger},             {"longer_side", c.longer_side},
                     {"mask_threshold", c.mask_threshold}, {"merge_threshold", c.merge_threshold}};
}

void from_json(const nlohmann::json& j, TsrConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "backbone") value.get_to(c.backbone);
    else if (key == "kernel_width") value.get_to(c.kernel_width);
    else if (key == "merger") value.get_to(c.merger);
    else if (key == "longer_side") value.get_to(c.longer_side);
    else if (key == "mask_threshold") value.get_to(c.mask_threshold);
    else if (key == "merge_threshold") value.get_to(c.merge_threshold);
    else throw std::invalid_argument("unknown tsr key: " + key);
  }
  c.validate();
}

TsrModelImpl::TsrModelImpl(const TsrConfig& cfg) : config(cfg) {
  config.validate();
  const int c = config.backbone.feature_channels;
  backbone = register_module("backbone", nn::TsrBackbone(config.backbone));
  row = register_module("row", splitter::SplitBranch(c, true, config.kernel_width));
  col = register_module("col", splitter::SplitBranch(c, false, config.kernel_width));
  merge = register_module("merge", merger::MergeHead(c, config.merger));
}

splitter::SplitOutput TsrModelImpl::split(const torch::Tensor& image) {
  const auto p2 = backbone->forward(image);
  return {p2, row->forward(p2), col->forward(p2)};
}

TableStructure unit_structure(const grid::CellGrid& grid) {
  const std::vector<double> none(merger::adjacent_pairs(grid.rows, grid.cols).size(), 0.0);
  return merger::apply_merges(grid, none, 1.0);
}

Recognition recognize_structure(TsrModel& model, const cv::Mat& crop) {
  // Only toggle when needed so concurrent eval-mode callers never write.
  const bool was_training = model->is_training();
  if (was_training) model->eval();
  torch::NoGradGuard guard;
  const cv::Mat padded = pad_to_multiple(crop, 32);
  const auto out = model->split(nn::image_to_tensor(padded));
  grid::AssemblerConfig acfg;
  acfg.score_threshold = model->config.mask_threshold;
  auto assembly = grid::assemble(splitter::to_prob_map(out.row[0][0]), splitter::to_prob_map(out.col[0][0]),
                                 crop.cols, crop.rows, acfg);
  Recognition r;
  r.grid = std::move(assembly.grid);
  r.diagnostics = std::move(assembly.diagnostics);
  if (r.grid.rows * r.grid.cols <= 1) {
    r.diagnostics.push_back("no interior separators: single-cell table");
    r.structure = unit_structure(r.grid);
  } else {
    const auto scores = model->merge->forward(out.p2, r.grid, &r.diagnostics).to(torch::kDouble).contiguous();
    const std::vector<double> s(scores.data_ptr<double>(), scores.data_ptr<double>() + scores.numel());
    r.structure = merger::apply_merges(r.grid, s, model->config.merge_threshold);
  }
  if (was_training) model->train();
  return r;
}

}  // namespace tabnet::tsr
