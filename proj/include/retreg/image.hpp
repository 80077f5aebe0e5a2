#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace retreg {

enum class Modality { Retinography, Angiography, Enhanced, Synthetic };

std::string_view to_string(Modality m);

// Single-channel raster stored row-major in double precision. Intensities
// loaded from disk are normalized to [0, 1]; derived images (Laplacians,
// creaseness) may hold arbitrary finite values.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0, Modality modality = Modality::Synthetic);
  Image(int width, int height, std::vector<double> data, Modality modality);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  Modality modality() const noexcept { return modality_; }
  void set_modality(Modality m) noexcept { modality_ = m; }

  double operator()(int x, int y) const { return data_[index(x, y)]; }
  double& operator()(int x, int y) { return data_[index(x, y)]; }

  // Read with mirror (reflect-101) border handling.
  double at_mirrored(int x, int y) const;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  bool same_shape(const Image& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_;
  }

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
  Modality modality_ = Modality::Synthetic;
};

// Reflect-101 index mapping (... c b | a b c d | c b ...), valid for any
// offset magnitude.
int mirror_index(int i, int n);

// Scale set for the Laplacian scale-space. Scales are Gaussian variances
// (sigma = sqrt(t)), in px^2.
struct ScaleSpaceConfig {
  std::vector<double> scales{1.0, 2.0, 4.0, 8.0, 16.0};
  double derivative_step = 1.0;

  void validate() const;
};

struct TensorField {
  int width = 0;
  int height = 0;
  std::vector<double> xx, xy, yy;
  double derivation_scale = 0.0;
  double integration_scale = 0.0;

  std::size_t size() const noexcept { return xx.size(); }
  // Eigenvalues (largest first) of the tensor at pixel i.
  std::pair<double, double> eigenvalues(std::size_t i) const;
  // Angle of the dominant eigenvector at pixel i, in (-pi/2, pi/2].
  double dominant_angle(std::size_t i) const;
};

Image load_image(const std::filesystem::path& path, Modality modality);

// Writes an 8-bit grayscale PNG, clamping to [0, 1].
void save_png(const Image& img, const std::filesystem::path& path);
// Linearly stretches [min, max] to [0, 1] before writing.
void save_png_stretched(const Image& img, const std::filesystem::path& path);

std::vector<double> gaussian_kernel(double t);

// Convolution with a sampled Gaussian of variance t, truncated at 4 sigma,
// separable, mirror borders. t = 0 returns the input unchanged.
Image gaussian_smooth(const Image& img, double t);

// Five-point Laplacian with mirror borders.
Image laplacian(const Image& img);

// Central-difference derivatives with mirror borders.
Image derivative_x(const Image& img);
Image derivative_y(const Image& img);

// Gradient outer product at derivation scale, component-wise smoothed at the
// integration scale.
TensorField structure_tensor(const Image& img, double derivation_t, double integration_t);

// Smooth (t = 1) then keep every second pixel. Pixel (i, j) of the result
// sits at (2i, 2j) of the input.
Image downsample2(const Image& img);

// Rotates the raster 90 degrees counter-clockwise in image coordinates:
// out(y, W - 1 - x) = in(x, y). Used by symmetry tests and tools.
Image rotate90(const Image& img);

Image scaled(const Image& img, double a, double b);

}  // namespace retreg
