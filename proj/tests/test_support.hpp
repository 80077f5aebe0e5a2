#pragma once

// Synthetic images and small helpers shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "retreg/geometry.hpp"
#include "retreg/image.hpp"

namespace testsupport {

using retreg::Image;
using retreg::Modality;
using retreg::Vec2;

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double l2 = retreg::dot(ab, ab);
  const double t = l2 > 0.0 ? std::clamp(retreg::dot(p - a, ab) / l2, 0.0, 1.0) : 0.0;
  return retreg::distance(p, a + t * ab);
}

struct Stroke {
  Vec2 a, b;
};

// Gaussian-profile curves (sigma = 0.42 * width) composited by max, drawn as
// bg + sign * contrast * profile.
inline Image render_strokes(int w, int h, const std::vector<Stroke>& strokes, double width, double bg,
                            double contrast, Modality m = Modality::Retinography) {
  Image img(w, h, bg, m);
  const double s = 0.42 * width;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (const auto& st : strokes) {
        const double d = point_segment_distance({double(x), double(y)}, st.a, st.b);
        v = std::max(v, std::exp(-0.5 * d * d / (s * s)));
      }
      img(x, y) = bg + contrast * v;
    }
  return img;
}

// Dark horizontal valley along row `row` from x0 to x1 on a bright background.
inline Image dark_line(int w, int h, double row, double x0, double x1, double width) {
  return render_strokes(w, h, {{{x0, row}, {x1, row}}}, width, 0.7, -0.4);
}

// "Y": stem going down from the centre, two arms going up at +-35 degrees
// from vertical.
inline Image y_junction(int w, int h, double arm, double width) {
  const Vec2 c{0.5 * (w - 1), 0.5 * (h - 1)};
  const double a = retreg::deg2rad(35.0);
  return render_strokes(w, h,
                        {{c, c + Vec2{0.0, arm}},
                         {c, c + arm * Vec2{-std::sin(a), -std::cos(a)}},
                         {c, c + arm * Vec2{std::sin(a), -std::cos(a)}}},
                        width, 0.7, -0.4);
}

// Isotropic Gaussian blob of variance t0 (peak 1) centred in the image.
inline Image gaussian_blob(int size, double t0) {
  Image img(size, size, 0.0, Modality::Synthetic);
  const double c = 0.5 * (size - 1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double r2 = (x - c) * (x - c) + (y - c) * (y - c);
      img(x, y) = std::exp(-0.5 * r2 / t0);
    }
  return img;
}

inline Image random_image(int w, int h, std::uint64_t seed, Modality m = Modality::Synthetic) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, 0.0, m);
  for (double& v : img.data()) v = u(rng);
  return img;
}

// Smooth image: a sum of low-frequency cosines mapped into [0.1, 0.9].
inline Image smooth_image(int w, int h, std::uint64_t seed, Modality m = Modality::Synthetic) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double kx[4], ky[4], ph[4];
  for (int k = 0; k < 4; ++k) {
    const double lambda = 25.0 + 40.0 * u(rng);
    const double dir = retreg::kTwoPi * u(rng);
    kx[k] = retreg::kTwoPi / lambda * std::cos(dir);
    ky[k] = retreg::kTwoPi / lambda * std::sin(dir);
    ph[k] = retreg::kTwoPi * u(rng);
  }
  Image img(w, h, 0.0, m);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (int k = 0; k < 4; ++k) v += std::cos(kx[k] * x + ky[k] * y + ph[k]);
      img(x, y) = 0.5 + 0.1 * v;
    }
  return img;
}

inline Image inverted(const Image& img, Modality m) {
  Image out = retreg::scaled(img, -1.0, 1.0);
  out.set_modality(m);
  return out;
}

// Minimal 24-bit BMP writer for colour test inputs. `rgb` holds r, g, b
// triplets row by row from the top.
inline void write_bmp(const std::filesystem::path& path, int w, int h, const std::vector<std::uint8_t>& rgb) {
  const int row = (3 * w + 3) & ~3;
  const std::uint32_t data_size = static_cast<std::uint32_t>(row * h);
  std::vector<std::uint8_t> buf(54 + data_size, 0);
  auto put32 = [&buf](std::size_t at, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf[at + k] = static_cast<std::uint8_t>(v >> (8 * k));
  };
  auto put16 = [&buf](std::size_t at, std::uint16_t v) {
    buf[at] = static_cast<std::uint8_t>(v);
    buf[at + 1] = static_cast<std::uint8_t>(v >> 8);
  };
  buf[0] = 'B';
  buf[1] = 'M';
  put32(2, 54 + data_size);
  put32(10, 54);
  put32(14, 40);
  put32(18, static_cast<std::uint32_t>(w));
  put32(22, static_cast<std::uint32_t>(h));
  put16(26, 1);
  put16(28, 24);
  put32(34, data_size);
  for (int y = 0; y < h; ++y) {
    const std::size_t dst = 54 + static_cast<std::size_t>(h - 1 - y) * row;
    for (int x = 0; x < w; ++x) {
      const std::size_t src = 3 * (static_cast<std::size_t>(y) * w + x);
      buf[dst + 3 * x + 0] = rgb[src + 2];
      buf[dst + 3 * x + 1] = rgb[src + 1];
      buf[dst + 3 * x + 2] = rgb[src + 0];
    }
  }
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(buf.data()),
                                              static_cast<std::streamsize>(buf.size()));
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("retreg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testsupport
