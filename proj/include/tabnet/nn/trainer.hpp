#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "tabnet/annotation.hpp"
#include "tabnet/datagen.hpp"
#include "tabnet/nn/detector.hpp"
#include "tabnet/nn/tsr.hpp"

namespace tabnet::trainer {

struct TrainConfig {
  double base_lr = 0.032;
  /// Multiply base_lr by images_per_step / 32 (the reference step size).
  bool scale_lr = true;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int iterations = 2000;
  std::vector<int> decay_steps{1400, 1800};
  int images_per_step = 2;
  /// Detector: shorter page side. Recognizer: longer crop side.
  std::vector<int> scales{320, 416, 512, 608, 704, 800};
  double rotation_prob = 0.5;  ///< detector only: quarter turn plus jitter
  double rotation_jitter_deg = 5.0;
  int ohem_positives = 32;
  int ohem_negatives = 32;
  int jitter_per_gt = 4;
  double jitter_fraction = 0.1;
  int random_negatives = 16;
  int train_top_k = 20;
  double train_corner_threshold = 0.1;
  int split_pixels = 1024;
  int merge_pairs = 64;
  int max_merge_cells = 400;  ///< larger predicted grids skip the merge term
  double grad_clip = 10.0;
  std::uint64_t seed = 0;

  double effective_lr() const;
  double lr_at(int iteration) const;
  void validate() const;
};
void to_json(nlohmann::json& j, const TrainConfig& c);
/// Unknown keys throw std::invalid_argument naming the key.
void from_json(const nlohmann::json& j, TrainConfig& c);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossRecord {
  int iteration = 0;
  std::vector<double> terms;  ///< matches TrainTrace::columns
  double lr = 0.0;
};

struct TrainTrace {
  std::vector<std::string> columns;
  std::vector<LossRecord> records;

  /// iteration,<columns...>,lr
  void write_csv(const std::string& path) const;
};

using Progress = std::function<void(const LossRecord&)>;

/// Page rotated by `degrees` (counter-clockwise) on an expanded white canvas,
/// with every table quad and bbox carried along. Quads keep their clockwise
/// order starting from the corner nearest the top-left.
datagen::Page rotate_page(const datagen::Page& page, double degrees);

/// Each corner moved by up to `fraction` of the box extent; stays inside
/// the clip rectangle and keeps a 1 px minimum size.
Box jitter_box(const Box& box, double fraction, double clip_w, double clip_h, std::mt19937_64& rng);

/// Losses used by the recognizer objective.
torch::Tensor recognizer_loss(const torch::Tensor& split, const torch::Tensor& merge);

/// Loss columns: corner, frcn, total.
TrainTrace train_detector(detector::TableDetector& model, const std::vector<datagen::CorpusEntry>& corpus,
                          const TrainConfig& config, const Progress& progress = {});

/// Loss columns: split, merge, total.
TrainTrace train_tsr(tsr::TsrModel& model, const std::vector<datagen::CorpusEntry>& corpus,
                     const TrainConfig& config, const Progress& progress = {});

}  // namespace tabnet::trainer
