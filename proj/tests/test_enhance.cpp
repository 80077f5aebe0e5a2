#include <cmath>
#include <random>

#include "doctest.h"
#include "retreg/enhance.hpp"
#include "retreg/error.hpp"
#include "test_support.hpp"

using namespace retreg;
using namespace testsupport;

namespace {

// Scale grid 2^(k/4), 0.5 .. 32.
std::vector<double> scale_grid() {
  std::vector<double> g;
  for (int k = -4; k <= 20; ++k) g.push_back(std::pow(2.0, k / 4.0));
  return g;
}

}  // namespace

TEST_CASE("normalized_laplacian: constants vanish, linearity, scale check") {
  const Image flat = normalized_laplacian(Image(30, 30, 0.4), 4.0);
  for (double v : flat.data()) CHECK(std::abs(v) < 1e-12);
  const Image img = random_image(40, 30, 12);
  const Image a = normalized_laplacian(scaled(img, 2.0, 0.0), 3.0);
  const Image b = normalized_laplacian(img, 3.0);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(std::abs(a.data()[i] - 2.0 * b.data()[i]) <= 1e-9);
  CHECK_THROWS_AS(normalized_laplacian(img, 0.0), InvalidArgument);
}

TEST_CASE("normalized_laplacian: blob response peaks at the blob's own scale") {
  const auto grid = scale_grid();
  for (double t0 : {2.0, 4.0, 8.0}) {
    CAPTURE(t0);
    const Image blob = gaussian_blob(97, t0);
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double v = std::abs(normalized_laplacian(blob, grid[k])(48, 48));
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    // Continuous oracle: |t lap G| at the centre is 2 t t0 / (t + t0)^2.
    std::size_t oracle = 0;
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (grid[k] * t0 / std::pow(grid[k] + t0, 2) > grid[oracle] * t0 / std::pow(grid[oracle] + t0, 2)) oracle = k;
    CHECK(grid[oracle] == doctest::Approx(t0));
    CHECK(std::abs(static_cast<int>(best) - static_cast<int>(oracle)) <= 1);
  }
}

TEST_CASE("vessel_enhance: sign conventions and modality checks") {
  CHECK(vessel_sign(Modality::Retinography) == 1.0);
  CHECK(vessel_sign(Modality::Angiography) == -1.0);
  CHECK_THROWS_AS(vessel_enhance(Image(10, 10), Modality::Synthetic), InvalidArgument);
  const EnhancedImage e = vessel_enhance(Image(20, 20, 0.3), Modality::Retinography);
  for (double v : e.values.data()) CHECK(v == 0.0);
}

TEST_CASE("vessel_enhance: dark vessel stands out against the background") {
  const Image img = dark_line(200, 80, 40.0, 10, 190, 4.0);
  const EnhancedImage e = vessel_enhance(img, Modality::Retinography);
  CHECK(e.source == Modality::Retinography);
  double centre = 0.0, background = 0.0;
  int nc = 0, nb = 0;
  for (int x = 30; x < 170; ++x) {
    centre += e.values(x, 40);
    ++nc;
    for (int y = 0; y < 80; ++y)
      if (std::abs(y - 40) > 12) {
        background += e.values(x, y);
        ++nb;
      }
  }
  CHECK(centre / nc >= 3.0 * (background / nb));
  CHECK(centre / nc > 0.0);
}

TEST_CASE("vessel_enhance: non-negative, homogeneous, modality symmetric") {
  const Image img = smooth_image(80, 60, 3, Modality::Retinography);
  const EnhancedImage e = vessel_enhance(img, Modality::Retinography);
  for (double v : e.values.data()) CHECK(v >= 0.0);

  const EnhancedImage s = vessel_enhance(scaled(img, 1.7, 0.2), Modality::Retinography);
  for (std::size_t i = 0; i < img.size(); ++i) REQUIRE(std::abs(s.values.data()[i] - 1.7 * e.values.data()[i]) <= 1e-8);

  const EnhancedImage a = vessel_enhance(inverted(img, Modality::Angiography), Modality::Angiography);
  for (std::size_t i = 0; i < img.size(); ++i) REQUIRE(std::abs(a.values.data()[i] - e.values.data()[i]) <= 1e-9);
}

TEST_CASE("vessel_enhance: more scales never lower a pixel") {
  const Image img = random_image(50, 40, 21, Modality::Angiography);
  ScaleSpaceConfig few;
  few.scales = {2.0, 8.0};
  ScaleSpaceConfig more;
  more.scales = {1.0, 2.0, 4.0, 8.0, 16.0};
  const EnhancedImage a = vessel_enhance(img, Modality::Angiography, few);
  const EnhancedImage b = vessel_enhance(img, Modality::Angiography, more);
  for (std::size_t i = 0; i < img.size(); ++i) REQUIRE(b.values.data()[i] >= a.values.data()[i]);
}

TEST_CASE("masked_ncc: Pearson form, bounds and degenerate input") {
  const std::vector<double> f = {1, 2, 3, 4, 5}, g = {2, 4, 6, 8, 10}, h = {5, 4, 3, 2, 1};
  CHECK(masked_ncc(f, g) == doctest::Approx(1.0));
  CHECK(masked_ncc(f, h) == doctest::Approx(-1.0));
  const std::vector<std::uint8_t> mask = {1, 1, 0, 0, 0};
  CHECK(masked_ncc(f, h, mask) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(masked_ncc(f, std::vector<double>(5, 3.0)), MetricError);
  CHECK_THROWS_AS(masked_ncc(f, std::vector<double>(4, 3.0)), InvalidArgument);
}

TEST_CASE("ve_ncc: self correlation is one") {
  const Image r = smooth_image(90, 70, 5, Modality::Retinography);
  const VeNccScore s = ve_ncc(r, inverted(r, Modality::Angiography), Affine6{});
  CHECK(s.value == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s.overlap_fraction == 1.0);
}

TEST_CASE("ve_ncc: independent noise fields are uncorrelated") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  Image a(400, 250, 0.0), b(400, 250, 0.0);
  for (double& v : a.data()) v = std::abs(n(rng));
  for (double& v : b.data()) v = std::abs(n(rng));
  const VeNccMetric m(EnhancedImage{a, Modality::Retinography}, EnhancedImage{b, Modality::Angiography});
  CHECK(std::abs(m.evaluate(Affine6{}).value) <= 0.02);
}

TEST_CASE("ve_ncc: bounded and invariant to positive intensity rescaling") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Image r = random_image(48, 40, seed, Modality::Retinography);
    const Image a = random_image(48, 40, seed + 1000, Modality::Angiography);
    const Similarity4 tf{1.05, 0.05, -2.0, 1.5};
    const double v = ve_ncc(r, a, tf).value;
    CHECK((v >= -1.0 && v <= 1.0));
    const double w = ve_ncc(scaled(r, 3.0, -0.5), scaled(a, 0.25, 0.6), tf).value;
    CHECK(std::abs(v - w) <= 1e-6);
  }
}

TEST_CASE("ve_ncc: overlap guard and modality pairing") {
  const Image r = smooth_image(100, 100, 6, Modality::Retinography);
  const Image a = inverted(r, Modality::Angiography);
  CHECK_NOTHROW(ve_ncc(r, a, Affine6{1, 0, 0, 1, 40, 0}));
  try {
    ve_ncc(r, a, Affine6{1, 0, 0, 1, 90, 0});
    FAIL("expected insufficient overlap");
  } catch (const MetricError& e) {
    CHECK(e.kind() == MetricError::Kind::InsufficientOverlap);
  }
  CHECK_THROWS_AS(ve_ncc(r, r, Affine6{}), MetricError);
}
