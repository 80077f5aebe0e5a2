#pragma once

#include <cstdint>
#include <span>

#include "retreg/image.hpp"
#include "retreg/transform.hpp"

namespace retreg {

// Rectified vessel response. Values are >= 0.
struct EnhancedImage {
  Image values;
  Modality source = Modality::Synthetic;

  int width() const { return values.width(); }
  int height() const { return values.height(); }
};

struct VeNccScore {
  double value = 0.0;             // [-1, 1]
  double overlap_fraction = 0.0;  // [0, 1]
};

inline constexpr double kMinOverlap = 0.25;

// Scale-normalized Laplacian of the image smoothed at variance t:
// L = t * lap(G_t * I). With t the Gaussian variance this is the
// sigma^2-normalized Laplacian, whose magnitude peaks at t = t0 for a
// Gaussian blob of variance t0.
Image normalized_laplacian(const Image& img, double t);

// Sign applied to the Laplacian response so that vessel interiors come out
// positive: dark vessels (retinography) have a positive Laplacian, bright
// vessels (angiography) a negative one.
double vessel_sign(Modality m);

// Per pixel max over scales of the half-wave rectified signed response.
EnhancedImage vessel_enhance(const Image& img, Modality modality, const ScaleSpaceConfig& scales = {});

// Running sums for a zero-mean (Pearson) correlation.
struct NccAccumulator {
  double n = 0.0, sf = 0.0, sm = 0.0, sff = 0.0, smm = 0.0, sfm = 0.0;

  void add(double f, double m) {
    n += 1.0;
    sf += f;
    sm += m;
    sff += f * f;
    smm += m * m;
    sfm += f * m;
  }
  void remove(double f, double m) {
    n -= 1.0;
    sf -= f;
    sm -= m;
    sff -= f * f;
    smm -= m * m;
    sfm -= f * m;
  }
  // Throws MetricError(ZeroVariance) when either operand is flat.
  double correlation() const;
};

// Zero-mean NCC over the pixels where mask != 0 (empty mask = all pixels).
double masked_ncc(std::span<const double> fixed, std::span<const double> moving,
                  std::span<const std::uint8_t> mask = {});

// VE-NCC between a fixed and a moving image. Both images are enhanced once;
// evaluate() warps the enhanced moving image into the fixed frame and
// correlates over the validity mask.
class VeNccMetric {
 public:
  VeNccMetric(const Image& fixed, const Image& moving, const ScaleSpaceConfig& scales = {});
  VeNccMetric(EnhancedImage fixed, EnhancedImage moving);

  VeNccScore evaluate(const Transform& tf) const;
  const EnhancedImage& fixed() const { return fixed_; }
  const EnhancedImage& moving() const { return moving_; }

 private:
  EnhancedImage fixed_;
  EnhancedImage moving_;
};

// Converts accumulated sums into a score, enforcing the overlap guard.
VeNccScore finish_score(const NccAccumulator& acc, double total_pixels);

VeNccScore ve_ncc(const Image& fixed, const Image& moving, const Transform& tf,
                  const ScaleSpaceConfig& scales = {});

}  // namespace retreg
