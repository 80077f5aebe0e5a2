#pragma once

#include <cstdint>
#include <vector>

#include "retreg/image.hpp"
#include "retreg/transform.hpp"

namespace retreg {

struct WarpResult {
  Image image;
  // 1 where the backward-mapped source location falls inside the input.
  std::vector<std::uint8_t> mask;

  double valid_fraction() const;
};

// True when (x, y) lies inside [0, w-1] x [0, h-1].
inline bool inside(const Image& img, double x, double y) {
  return x >= 0.0 && y >= 0.0 && x <= img.width() - 1 && y <= img.height() - 1;
}

// Bilinear interpolation; (x, y) must satisfy inside().
inline double sample_bilinear(const Image& img, double x, double y) {
  const int w = img.width(), h = img.height();
  int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const double fx = x - x0, fy = y - y0;
  const int x1 = x0 + 1 < w ? x0 + 1 : x0;
  const int y1 = y0 + 1 < h ? y0 + 1 : y0;
  const double* d = img.data().data();
  const std::size_t r0 = static_cast<std::size_t>(y0) * static_cast<std::size_t>(w);
  const std::size_t r1 = static_cast<std::size_t>(y1) * static_cast<std::size_t>(w);
  const double top = (1.0 - fx) * d[r0 + static_cast<std::size_t>(x0)] + fx * d[r0 + static_cast<std::size_t>(x1)];
  const double bot = (1.0 - fx) * d[r1 + static_cast<std::size_t>(x0)] + fx * d[r1 + static_cast<std::size_t>(x1)];
  return (1.0 - fy) * top + fy * bot;
}

// Backward warping: out(x, y) = img(tf(x, y)), bilinear. Pixels whose source
// falls outside the input are 0 and flagged invalid in the mask.
WarpResult warp(const Image& img, const Transform& tf, int out_width, int out_height);

}  // namespace retreg
