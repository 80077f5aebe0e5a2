#include "retreg/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "retreg/error.hpp"

namespace retreg {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Retinography:
      return "retinography";
    case Modality::Angiography:
      return "angiography";
    case Modality::Enhanced:
      return "enhanced";
    case Modality::Synthetic:
      return "synthetic";
  }
  return "unknown";
}

Image::Image(int width, int height, double fill, Modality modality)
    : width_(width), height_(height), modality_(modality) {
  if (width < 0 || height < 0) throw InvalidArgument("negative image dimensions");
  data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

Image::Image(int width, int height, std::vector<double> data, Modality modality)
    : width_(width), height_(height), data_(std::move(data)), modality_(modality) {
  if (width < 0 || height < 0) throw InvalidArgument("negative image dimensions");
  if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw InvalidArgument("image data length does not match width x height");
}

int mirror_index(int i, int n) {
  if (n <= 1) return 0;
  const int period = 2 * (n - 1);
  int r = i % period;
  if (r < 0) r += period;
  return r < n ? r : period - r;
}

double Image::at_mirrored(int x, int y) const {
  return (*this)(mirror_index(x, width_), mirror_index(y, height_));
}

void ScaleSpaceConfig::validate() const {
  if (scales.empty()) throw InvalidArgument("scale set is empty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0)) throw InvalidArgument("scales must be positive");
    if (i > 0 && !(scales[i] > scales[i - 1]))
      throw InvalidArgument("scales must be strictly increasing");
  }
  if (!(derivative_step > 0.0)) throw InvalidArgument("derivative step must be positive");
}

std::pair<double, double> TensorField::eigenvalues(std::size_t i) const {
  const double a = xx[i], b = xy[i], c = yy[i];
  const double mean = 0.5 * (a + c);
  const double r = std::hypot(0.5 * (a - c), b);
  return {mean + r, mean - r};
}

double TensorField::dominant_angle(std::size_t i) const {
  return 0.5 * std::atan2(2.0 * xy[i], xx[i] - yy[i]);
}

Image load_image(const std::filesystem::path& path, Modality modality) {
  if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw IoError("cannot decode image: " + path.string());
  if (raw.cols == 0 || raw.rows == 0) throw IoError("zero-area image: " + path.string());

  double full_scale = 0.0;
  switch (raw.depth()) {
    case CV_8U:
      full_scale = 255.0;
      break;
    case CV_16U:
      full_scale = 65535.0;
      break;
    default:
      throw IoError("unsupported bit depth in " + path.string());
  }
  const int channels = raw.channels();
  if (channels != 1 && channels != 3 && channels != 4)
    throw IoError("unsupported channel count in " + path.string());

  cv::Mat planes;
  raw.convertTo(planes, CV_MAKETYPE(CV_64F, channels), 1.0 / full_scale);

  Image out(raw.cols, raw.rows, 0.0, modality);
  for (int y = 0; y < raw.rows; ++y) {
    const double* row = planes.ptr<double>(y);
    for (int x = 0; x < raw.cols; ++x) {
      const double* px = row + static_cast<std::ptrdiff_t>(x) * channels;
      double v = 0.0;
      if (channels == 1) {
        v = px[0];
      } else {
        // OpenCV stores colour as BGR(A).
        const double b = px[0], g = px[1], r = px[2];
        v = modality == Modality::Retinography ? g : 0.299 * r + 0.587 * g + 0.114 * b;
      }
      out(x, y) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

namespace {

void write_u8(const Image& img, const std::filesystem::path& path, double lo, double hi) {
  if (img.empty()) throw InvalidArgument("cannot write an empty image");
  cv::Mat m(img.height(), img.width(), CV_8UC1);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < img.height(); ++y) {
    auto* row = m.ptr<unsigned char>(y);
    for (int x = 0; x < img.width(); ++x) {
      const double v = std::clamp((img(x, y) - lo) / span, 0.0, 1.0);
      row[x] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw IoError("cannot write " + path.string());
}

}  // namespace

void save_png(const Image& img, const std::filesystem::path& path) { write_u8(img, path, 0.0, 1.0); }

void save_png_stretched(const Image& img, const std::filesystem::path& path) {
  const auto [mn, mx] = std::minmax_element(img.data().begin(), img.data().end());
  write_u8(img, path, *mn, *mx);
}

std::vector<double> gaussian_kernel(double t) {
  if (t < 0.0) throw InvalidArgument("negative scale");
  if (t == 0.0) return {1.0};
  const double sigma = std::sqrt(t);
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / t);
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

Image gaussian_smooth(const Image& img, double t) {
  if (t < 0.0) throw InvalidArgument("gaussian_smooth: negative scale");
  if (t == 0.0 || img.empty()) return img;
  const auto kernel = gaussian_kernel(t);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int w = img.width(), h = img.height();

  Image tmp(w, h, 0.0, img.modality());
  std::vector<double> line(static_cast<std::size_t>(w + 2 * radius));
  for (int y = 0; y < h; ++y) {
    for (int x = -radius; x < w + radius; ++x)
      line[static_cast<std::size_t>(x + radius)] = img(mirror_index(x, w), y);
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      const double* src = line.data() + x;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * src[k];
      tmp(x, y) = acc;
    }
  }

  Image out(w, h, 0.0, img.modality());
  std::vector<double> col(static_cast<std::size_t>(h + 2 * radius));
  for (int x = 0; x < w; ++x) {
    for (int y = -radius; y < h + radius; ++y)
      col[static_cast<std::size_t>(y + radius)] = tmp(x, mirror_index(y, h));
    for (int y = 0; y < h; ++y) {
      double acc = 0.0;
      const double* src = col.data() + y;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * src[k];
      out(x, y) = acc;
    }
  }
  return out;
}

Image laplacian(const Image& img) {
  const int w = img.width(), h = img.height();
  if (w < 3 || h < 3) throw InvalidArgument("laplacian: image smaller than 3x3");
  Image out(w, h, 0.0, img.modality());
  for (int y = 0; y < h; ++y) {
    const int ym = y == 0 ? 1 : y - 1;
    const int yp = y == h - 1 ? h - 2 : y + 1;
    for (int x = 0; x < w; ++x) {
      const int xm = x == 0 ? 1 : x - 1;
      const int xp = x == w - 1 ? w - 2 : x + 1;
      out(x, y) = (img(xm, y) + img(xp, y)) + (img(x, ym) + img(x, yp)) - 4.0 * img(x, y);
    }
  }
  return out;
}

Image derivative_x(const Image& img) {
  const int w = img.width(), h = img.height();
  Image out(w, h, 0.0, img.modality());
  if (w < 2) return out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out(x, y) = 0.5 * (img(mirror_index(x + 1, w), y) - img(mirror_index(x - 1, w), y));
  return out;
}

Image derivative_y(const Image& img) {
  const int w = img.width(), h = img.height();
  Image out(w, h, 0.0, img.modality());
  if (h < 2) return out;
  for (int y = 0; y < h; ++y) {
    const int ym = mirror_index(y - 1, h), yp = mirror_index(y + 1, h);
    for (int x = 0; x < w; ++x) out(x, y) = 0.5 * (img(x, yp) - img(x, ym));
  }
  return out;
}

TensorField structure_tensor(const Image& img, double derivation_t, double integration_t) {
  if (!(derivation_t > 0.0) || !(integration_t > 0.0))
    throw InvalidArgument("structure_tensor: scales must be positive");
  const Image smooth = gaussian_smooth(img, derivation_t);
  const Image gx = derivative_x(smooth);
  const Image gy = derivative_y(smooth);
  const int w = img.width(), h = img.height();
  Image xx(w, h), xy(w, h), yy(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double a = gx.data()[i], b = gy.data()[i];
    xx.data()[i] = a * a;
    xy.data()[i] = a * b;
    yy.data()[i] = b * b;
  }
  TensorField tf;
  tf.width = w;
  tf.height = h;
  tf.derivation_scale = derivation_t;
  tf.integration_scale = integration_t;
  const auto take = [](const Image& im) {
    return std::vector<double>(im.data().begin(), im.data().end());
  };
  tf.xx = take(gaussian_smooth(xx, integration_t));
  tf.xy = take(gaussian_smooth(xy, integration_t));
  tf.yy = take(gaussian_smooth(yy, integration_t));
  return tf;
}

Image downsample2(const Image& img) {
  const Image s = gaussian_smooth(img, 1.0);
  const int w = (img.width() + 1) / 2, h = (img.height() + 1) / 2;
  Image out(w, h, 0.0, img.modality());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(x, y) = s(2 * x, 2 * y);
  return out;
}

Image rotate90(const Image& img) {
  const int w = img.width(), h = img.height();
  Image out(h, w, 0.0, img.modality());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(y, w - 1 - x) = img(x, y);
  return out;
}

Image scaled(const Image& img, double a, double b) {
  Image out = img;
  for (double& v : out.data()) v = a * v + b;
  return out;
}

}  // namespace retreg
