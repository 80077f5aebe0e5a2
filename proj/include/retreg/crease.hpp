#pragma once

#include <cstdint>
#include <vector>

#include "retreg/geometry.hpp"
#include "retreg/image.hpp"

namespace retreg {

// Valleys are dark creases (vessels in retinography), ridges bright ones
// (vessels in angiography).
enum class Polarity { Valley, Ridge };

Polarity vessel_polarity(Modality m);

struct CreaseConfig {
  double derivation_scale = 1.0;   // px^2
  double integration_scale = 4.0;  // px^2
  double threshold = 0.3;          // relative to the map maximum
  int min_segment_length = 10;     // px
  int end_window = 8;              // px used to fit end directions
  int max_gap = 6;                 // px bridged ahead of skeleton endpoints
  // Creaseness is damped where the tensor anisotropy lambda1 - lambda2 is
  // small compared with confidence_factor times its image median. 0 disables.
  double confidence_factor = 8.0;

  void validate() const;
};

struct CreasenessMap {
  int width = 0;
  int height = 0;
  Polarity polarity = Polarity::Valley;
  std::vector<double> values;
  // Orientation of the dominant structure-tensor eigenvector, i.e. the
  // direction across the crease.
  std::vector<double> normal_angle;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double max_value() const;
};

struct Pixel {
  int x = 0;
  int y = 0;
  friend constexpr bool operator==(Pixel, Pixel) = default;
  Vec2 vec() const { return {static_cast<double>(x), static_cast<double>(y)}; }
};

struct VesselSkeleton {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> mask;

  VesselSkeleton() = default;
  VesselSkeleton(int w, int h) : width(w), height(h), mask(static_cast<std::size_t>(w) * h, 0) {}

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool at(int x, int y) const { return in_bounds(x, y) && mask[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { mask[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  int neighbor_count(int x, int y) const;
  std::size_t foreground_count() const;
};

struct Segment {
  std::vector<Pixel> points;
  // Unit vectors pointing outward at points.front() and points.back(); zero
  // for single-pixel segments.
  Vec2 start_direction{};
  Vec2 end_direction{};
  bool closed = false;

  std::size_t length() const { return points.size(); }
  double start_angle() const { return wrap_angle(angle_of(start_direction)); }
  double end_angle() const { return wrap_angle(angle_of(end_direction)); }
};

// MLSEC-ST creaseness: kappa = -div(w), w the dominant structure-tensor
// eigenvector aligned with the gradient. Valley polarity evaluates the
// measure on the inverted image so that high values always mark the requested
// crease type.
CreasenessMap creaseness(const Image& img, Polarity polarity, const CreaseConfig& cfg = {});

// Non-maximum suppression across the crease, thresholding at
// `threshold * max(kappa)`, thinning to one pixel, closing of end gaps up to
// max_gap px and removal of components shorter than min_segment_length.
VesselSkeleton extract_skeleton(const CreasenessMap& kappa, double threshold,
                                int min_segment_length = CreaseConfig{}.min_segment_length,
                                int max_gap = CreaseConfig{}.max_gap);

// Thinning alone (used by extract_skeleton); keeps 8-connectivity and removes
// staircase pixels so that junctions collapse to a single pixel.
void thin(VesselSkeleton& sk);

std::vector<Segment> trace_segments(const VesselSkeleton& sk, int end_window = CreaseConfig{}.end_window);

// Least-squares direction of `pts` (principal axis), oriented from the last
// point towards the first.
Vec2 fit_direction(const std::vector<Pixel>& pts);

}  // namespace retreg
