#include "retreg/warp.hpp"

#include <numeric>

#include "retreg/error.hpp"

namespace retreg {

double WarpResult::valid_fraction() const {
  if (mask.empty()) return 0.0;
  const auto n = std::accumulate(mask.begin(), mask.end(), std::size_t{0});
  return static_cast<double>(n) / static_cast<double>(mask.size());
}

WarpResult warp(const Image& img, const Transform& tf, int out_width, int out_height) {
  if (out_width < 0 || out_height < 0) throw InvalidArgument("warp: negative output size");
  check_invertible(tf);
  WarpResult r{Image(out_width, out_height, 0.0, img.modality()),
               std::vector<std::uint8_t>(static_cast<std::size_t>(out_width) *
                                             static_cast<std::size_t>(out_height),
                                         0)};
  std::size_t k = 0;
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x, ++k) {
      const Vec2 s = apply_transform(tf, Vec2{static_cast<double>(x), static_cast<double>(y)});
      if (inside(img, s.x, s.y)) {
        r.image.data()[k] = sample_bilinear(img, s.x, s.y);
        r.mask[k] = 1;
      }
    }
  }
  return r;
}

}  // namespace retreg
