#pragma once

#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "tabnet/grid_assembler.hpp"
#include "tabnet/structure.hpp"

namespace tabnet::merger {

inline constexpr double kP2Stride = 4.0;
inline constexpr int kSpatialDims = 18;

struct MergerConfig {
  int roi_size = 7;
  int cell_dim = 512;      ///< per-cell feature after the two fc layers
  int grid_channels = 512;  ///< width of the grid convolutions
  int relation_hidden = 512;
  int ohem_per_class = 64;

  void validate() const;
};
void to_json(nlohmann::json& j, const MergerConfig& c);
void from_json(const nlohmann::json& j, MergerConfig& c);

/// Axis-aligned hull of a cell quad widened to at least 1 px per side, so
/// degenerate cells still yield a valid box.
Box cell_box(const QuadBox& q);

class MergeHeadImpl : public torch::nn::Module {
 public:
  MergeHeadImpl(int channels, const MergerConfig& config);

  /// [1, cell_dim, M, N]. Degenerate cells (area < 1 px) get a zero vector and
  /// a diagnostic.
  torch::Tensor grid_features(const torch::Tensor& p2, const grid::CellGrid& grid,
                              std::vector<std::string>* diagnostics = nullptr);
  /// Three 3x3 convolutions, ReLU between, shape preserved.
  torch::Tensor grid_cnn(const torch::Tensor& f);
  /// Relation MLP on [P, 2 * grid_channels + 18] inputs -> [P] in [0, 1].
  torch::Tensor relation(const torch::Tensor& x);
  /// Scores of adjacent_pairs(M, N): max of both cell orders.
  torch::Tensor score_pairs(const torch::Tensor& refined, const grid::CellGrid& grid);
  /// grid_features -> grid_cnn -> score_pairs.
  torch::Tensor forward(const torch::Tensor& p2, const grid::CellGrid& grid,
                        std::vector<std::string>* diagnostics = nullptr);

  MergerConfig config;
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
  torch::nn::Conv2d g1{nullptr}, g2{nullptr}, g3{nullptr};
  torch::nn::Linear r1{nullptr}, r2{nullptr}, r3{nullptr};
};
TORCH_MODULE(MergeHead);

/// Mean BCE over the hardest `per_class` positive and negative pairs
/// (hardness = per-pair BCE). Ignored pairs never contribute. Zero when no
/// pair is labeled.
torch::Tensor merge_loss(const torch::Tensor& scores, const std::vector<PairLabel>& labels, int per_class = 64);

}  // namespace tabnet::merger
