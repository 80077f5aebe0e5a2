#include "retreg/enhance.hpp"

#include <algorithm>
#include <cmath>

#include "retreg/error.hpp"
#include "retreg/warp.hpp"

namespace retreg {

Image normalized_laplacian(const Image& img, double t) {
  if (!(t > 0.0)) throw InvalidArgument("normalized_laplacian: scale must be positive");
  Image out = laplacian(gaussian_smooth(img, t));
  for (double& v : out.data()) v *= t;
  return out;
}

double vessel_sign(Modality m) {
  switch (m) {
    case Modality::Retinography:
      return 1.0;
    case Modality::Angiography:
      return -1.0;
    default:
      throw InvalidArgument("vessel enhancement needs a retinography or angiography image");
  }
}

EnhancedImage vessel_enhance(const Image& img, Modality modality, const ScaleSpaceConfig& scales) {
  scales.validate();
  const double sign = vessel_sign(modality);
  EnhancedImage out{Image(img.width(), img.height(), 0.0, Modality::Enhanced), modality};
  auto dst = out.values.data();
  for (double t : scales.scales) {
    const Image l = normalized_laplacian(img, t);
    const auto src = l.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], sign * src[i]);
  }
  return out;
}

double NccAccumulator::correlation() const {
  if (n < 2.0) throw MetricError(MetricError::Kind::ZeroVariance, "too few pixels for a correlation");
  const double mf = sf / n, mm = sm / n;
  const double vf = sff / n - mf * mf;
  const double vm = smm / n - mm * mm;
  const double cov = sfm / n - mf * mm;
  // Relative floor: flat operands leave only rounding noise.
  const double eps_f = 1e-12 * std::max(sff / n, 1e-300);
  const double eps_m = 1e-12 * std::max(smm / n, 1e-300);
  if (!(vf > eps_f) || !(vm > eps_m))
    throw MetricError(MetricError::Kind::ZeroVariance, "zero variance inside the overlap");
  return std::clamp(cov / std::sqrt(vf * vm), -1.0, 1.0);
}

double masked_ncc(std::span<const double> fixed, std::span<const double> moving, std::span<const std::uint8_t> mask) {
  if (fixed.size() != moving.size() || (!mask.empty() && mask.size() != fixed.size()))
    throw InvalidArgument("masked_ncc: operand sizes differ");
  NccAccumulator acc;
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (mask.empty() || mask[i]) acc.add(fixed[i], moving[i]);
  return acc.correlation();
}

VeNccScore finish_score(const NccAccumulator& acc, double total_pixels) {
  VeNccScore s;
  s.overlap_fraction = total_pixels > 0.0 ? acc.n / total_pixels : 0.0;
  if (s.overlap_fraction < kMinOverlap)
    throw MetricError(MetricError::Kind::InsufficientOverlap, "insufficient overlap between images");
  s.value = acc.correlation();
  return s;
}

namespace {

void check_pair(Modality fixed, Modality moving) {
  const bool ok = (fixed == Modality::Retinography && moving == Modality::Angiography) ||
                  (fixed == Modality::Angiography && moving == Modality::Retinography);
  if (!ok)
    throw MetricError(MetricError::Kind::ModalityMismatch,
                      "VE-NCC expects one retinography and one angiography");
}

}  // namespace

VeNccMetric::VeNccMetric(const Image& fixed, const Image& moving, const ScaleSpaceConfig& scales) {
  check_pair(fixed.modality(), moving.modality());
  fixed_ = vessel_enhance(fixed, fixed.modality(), scales);
  moving_ = vessel_enhance(moving, moving.modality(), scales);
}

VeNccMetric::VeNccMetric(EnhancedImage fixed, EnhancedImage moving)
    : fixed_(std::move(fixed)), moving_(std::move(moving)) {
  check_pair(fixed_.source, moving_.source);
}

VeNccScore VeNccMetric::evaluate(const Transform& tf) const {
  check_invertible(tf);
  const Image& f = fixed_.values;
  const Image& m = moving_.values;
  NccAccumulator acc;
  const int w = f.width(), h = f.height();
  if (const auto* grid = std::get_if<FFDGrid>(&tf)) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Vec2 s = grid->apply({static_cast<double>(x), static_cast<double>(y)});
        if (inside(m, s.x, s.y)) acc.add(f(x, y), sample_bilinear(m, s.x, s.y));
      }
  } else {
    const Affine6 a = affine_part(tf);
    for (int y = 0; y < h; ++y) {
      double sx = a.a12 * y + a.tx;
      double sy = a.a22 * y + a.ty;
      for (int x = 0; x < w; ++x) {
        const double px = sx + a.a11 * x, py = sy + a.a21 * x;
        if (inside(m, px, py)) acc.add(f(x, y), sample_bilinear(m, px, py));
      }
    }
  }
  return finish_score(acc, static_cast<double>(f.size()));
}

VeNccScore ve_ncc(const Image& fixed, const Image& moving, const Transform& tf, const ScaleSpaceConfig& scales) {
  return VeNccMetric(fixed, moving, scales).evaluate(tf);
}

}  // namespace retreg
