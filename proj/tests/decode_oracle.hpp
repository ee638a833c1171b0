#pragma once

// Exhaustive peak scan used as the reference for corner decoding.

#include <algorithm>
#include <vector>

#include <torch/torch.h>

#include "tabnet/nn/detector.hpp"

namespace tabnet::testing {

/// Pixels not exceeded by any 3x3 neighbour and at least `threshold`, by
/// descending score with ties in row-major order, truncated to `top_k`.
inline std::vector<detector::CornerPoint> scan_peaks(const torch::Tensor& heat, const torch::Tensor& offsets,
                                                     double stride, int top_k, double threshold,
                                                     detector::CornerKind kind) {
  const auto h = heat.to(torch::kDouble).contiguous();
  const auto o = offsets.to(torch::kDouble).contiguous();
  const int64_t H = h.size(0), W = h.size(1);
  auto at = [&](int64_t y, int64_t x) { return h.data_ptr<double>()[y * W + x]; };
  std::vector<detector::CornerPoint> out;
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      const double v = at(y, x);
      bool peak = v >= threshold;
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          const int64_t yy = y + dy, xx = x + dx;
          if (yy >= 0 && xx >= 0 && yy < H && xx < W && at(yy, xx) > v) peak = false;
        }
      if (!peak) continue;
      const double ox = o.data_ptr<double>()[y * W + x];
      const double oy = o.data_ptr<double>()[H * W + y * W + x];
      out.push_back({kind, (static_cast<double>(x) + ox) * stride, (static_cast<double>(y) + oy) * stride, v});
    }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  if (out.size() > static_cast<std::size_t>(top_k)) out.resize(static_cast<std::size_t>(top_k));
  return out;
}

}  // namespace tabnet::testing
