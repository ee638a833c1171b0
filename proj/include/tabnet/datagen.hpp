#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "tabnet/annotation.hpp"

namespace tabnet::datagen {

struct SynthConfig {
  int page_width = 512;
  int page_height = 640;
  int margin = 16;
  int min_tables = 1;
  int max_tables = 2;
  int min_rows = 2;
  int max_rows = 8;
  int min_cols = 2;
  int max_cols = 6;
  int max_row_span = 2;
  int max_col_span = 3;
  double ruling_prob = 0.5;     ///< fully ruled grid; otherwise borderless
  double span_prob = 0.15;      ///< per grid position, chance to open a spanning cell
  double empty_prob = 0.1;      ///< per 1x1 cell
  double blank_space_scale = 2.5;  ///< upper bound of the width factor for wide-gap columns
  double wide_column_prob = 0.25;
  double multiline_prob = 0.15;  ///< per row
  int min_distractors = 1;
  int max_distractors = 3;
  int cell_padding = 7;
  double warp_prob = 0.0;
  double warp_amplitude = 3.0;   ///< max displacement, pixels
  double warp_wavelength = 700.0;

  /// Throws std::invalid_argument naming the first violated bound.
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
/// Unknown keys are rejected with std::invalid_argument naming the key.
void from_json(const nlohmann::json& j, SynthConfig& c);

struct Page {
  cv::Mat image;  ///< CV_8UC3
  DocAnnotation annotation;
};

/// Deterministic in (config, seed).
Page synthesize_page(const SynthConfig& config, std::uint64_t seed);

/// Applies the displacement field to the image and every annotated geometry.
/// Polylines are re-sampled every 4 px before warping. The input annotation
/// must not already carry a warp.
Page warp_curved(const Page& page, const WarpParams& warp);
Page warp_curved(const Page& page, double amplitude, double wavelength);

/// Seed of the i-th page of a corpus generated from `base_seed`.
std::uint64_t page_seed(std::uint64_t base_seed, std::uint64_t index);

/// images/NNNN.png + annotations/NNNN.json + manifest.json.
void write_corpus(const std::string& out_dir, const SynthConfig& config, int count,
                  std::uint64_t seed);

struct CorpusEntry {
  std::string image_path;
  std::string annotation_path;
};
std::vector<CorpusEntry> list_corpus(const std::string& dir);

}  // namespace tabnet::datagen
