#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace tabnet {

/// Dense row-major 2D array.
template <typename T>
struct Grid2D {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid2D() = default;
  Grid2D(int h, int w, T fill = T{})
      : height(h), width(w), data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {
    if (h < 0 || w < 0) throw std::invalid_argument("negative grid extent");
  }

  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  bool inside(int r, int c) const { return r >= 0 && c >= 0 && r < height && c < width; }
  std::size_t size() const { return data.size(); }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;
};

using ProbMap = Grid2D<float>;
using BinaryMask = Grid2D<std::uint8_t>;

template <typename T>
Grid2D<T> transpose(const Grid2D<T>& g) {
  Grid2D<T> out(g.width, g.height);
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c) out.at(c, r) = g.at(r, c);
  return out;
}

/// Top-left sub-block [0, h) x [0, w), clamped to the source extent.
template <typename T>
Grid2D<T> crop_top_left(const Grid2D<T>& g, int h, int w) {
  h = std::min(h, g.height);
  w = std::min(w, g.width);
  Grid2D<T> out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.at(r, c) = g.at(r, c);
  return out;
}

}  // namespace tabnet
