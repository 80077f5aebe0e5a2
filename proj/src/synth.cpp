#include "retreg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "retreg/error.hpp"
#include "retreg/warp.hpp"

namespace retreg {

namespace {

constexpr double kTwoPiL = 2.0 * kPi;

Mat2 base_jacobian(const Transform& tf, Vec2 p) {
  if (const auto* g = std::get_if<FFDGrid>(&tf)) return g->jacobian(p);
  return affine_part(tf).linear();
}

}  // namespace

Vec2 GroundTruthWarp::apply(Vec2 p) const {
  Vec2 q = apply_transform(base, p);
  if (sinusoid.amplitude != 0.0) {
    const double k = kTwoPiL / sinusoid.wavelength;
    q += sinusoid.amplitude * Vec2{std::sin(k * p.y), std::sin(k * p.x)};
  }
  return q;
}

Mat2 GroundTruthWarp::jacobian(Vec2 p) const {
  Mat2 j = base_jacobian(base, p);
  if (sinusoid.amplitude != 0.0) {
    const double k = kTwoPiL / sinusoid.wavelength;
    j.a12 += sinusoid.amplitude * k * std::cos(k * p.y);
    j.a21 += sinusoid.amplitude * k * std::cos(k * p.x);
  }
  return j;
}

Vec2 GroundTruthWarp::inverse(Vec2 q) const {
  Vec2 p = affine_part(base).inverse().apply(q);
  for (int iter = 0; iter < 50; ++iter) {
    const Vec2 r = apply(p) - q;
    if (norm(r) < 1e-10) return p;
    const Mat2 j = jacobian(p);
    const double d = j.det();
    if (std::abs(d) < 1e-12) break;
    p -= Vec2{(j.a22 * r.x - j.a12 * r.y) / d, (-j.a21 * r.x + j.a11 * r.y) / d};
  }
  if (norm(apply(p) - q) < 1e-6) return p;
  throw Error("ground-truth warp inversion did not converge");
}

Similarity4 similarity_about(Vec2 centre, double scale, double angle, Vec2 translation) {
  Similarity4 s{scale, angle, 0.0, 0.0};
  const Vec2 rc = s.apply(centre);
  s.tx = centre.x + translation.x - rc.x;
  s.ty = centre.y + translation.y - rc.y;
  return s;
}

SyntheticSceneConfig random_scene(std::uint64_t seed, const SceneDraw& draw, SyntheticSceneConfig base) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  auto uni = [&rng](double a, double b) { return a == b ? a : std::uniform_real_distribution<double>(a, b)(rng); };
  const Vec2 centre{0.5 * (base.width - 1), 0.5 * (base.height - 1)};
  const double s = uni(draw.scale_min, draw.scale_max);
  const double a = uni(-draw.angle_max, draw.angle_max);
  const double tm = uni(draw.translation_min, draw.translation_max);
  const double td = uni(0.0, kTwoPi);
  const Similarity4 sim = similarity_about(centre, s, a, tm * unit_from_angle(td));
  base.rng_seed = seed;
  if (draw.anisotropy > 0.0 || draw.shear > 0.0) {
    const double e = uni(-draw.anisotropy, draw.anisotropy);
    const double k = uni(-draw.shear, draw.shear);
    // Extra factor about the centre: x -> E (x - c) + c.
    Affine6 extra{1.0 + e, k, 0.0, 1.0 - e, 0.0, 0.0};
    const Vec2 ec = extra.apply(centre);
    extra.tx = centre.x - ec.x;
    extra.ty = centre.y - ec.y;
    base.applied_transform = sim.to_affine().compose(extra);
  } else {
    base.applied_transform = sim;
  }
  base.sinusoid = {draw.sinusoid_amplitude, draw.sinusoid_wavelength};
  return base;
}

double mean_registration_error(const Transform& estimate, const GroundTruthWarp& truth, const std::vector<Vec2>& points) {
  if (points.empty()) throw InvalidArgument("mean_registration_error: no points");
  double sum = 0.0;
  for (Vec2 p : points) sum += distance(apply_transform(estimate, p), truth.apply(p));
  return sum / static_cast<double>(points.size());
}

namespace {

struct Branch {
  std::vector<Vec2> pts;
  double width = 1.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const SyntheticSceneConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

  double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  double gauss(double s) { return std::normal_distribution<double>(0.0, s)(rng_); }

  void grow(Vec2 start, double angle, double width, double length, int depth) {
    Branch b;
    b.width = std::max(width, cfg_.vessel_width_min);
    b.pts.push_back(start);
    Vec2 p = start;
    double a = angle;
    const double bend = gauss(0.004);
    for (double run = 0.0; run < length; run += 2.0) {
      a += bend + gauss(0.03);
      p += 2.0 * unit_from_angle(a);
      b.pts.push_back(p);
    }
    branches.push_back(b);
    if (depth <= 1) return;

    const Vec2 end = b.pts.back();
    const Vec2 back_dir = normalized(b.pts[b.pts.size() - 4] - end);
    const double a1 = a + uni(deg2rad(18.0), deg2rad(38.0));
    const double a2 = a - uni(deg2rad(18.0), deg2rad(38.0));
    Landmark l;
    l.position = end;
    l.kind = LandmarkKind::Bifurcation;
    l.orientations = {wrap_angle(angle_of(back_dir)), wrap_angle(a1), wrap_angle(a2)};
    junctions.push_back(l);
    const double w1 = width * uni(0.72, 0.88), w2 = width * uni(0.72, 0.88);
    grow(end, a1, w1, length * uni(0.72, 0.9), depth - 1);
    grow(end, a2, w2, length * uni(0.72, 0.9), depth - 1);
  }

  std::vector<Branch> branches;
  std::vector<Landmark> junctions;

 private:
  const SyntheticSceneConfig& cfg_;
  std::mt19937_64& rng_;
};

bool segment_intersection(Vec2 a, Vec2 b, Vec2 c, Vec2 d, Vec2& out) {
  const Vec2 r = b - a, s = d - c;
  const double den = cross(r, s);
  if (std::abs(den) < 1e-12) return false;
  const double t = cross(c - a, s) / den;
  const double u = cross(c - a, r) / den;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return false;
  out = a + t * r;
  return true;
}

// Low-frequency illumination field, roughly in [-1, 1].
class Illumination {
 public:
  Illumination(std::mt19937_64& rng, int terms) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < terms; ++k) {
      const double lambda = 120.0 + 280.0 * u(rng);
      const double dir = kTwoPi * u(rng);
      waves_.push_back({kTwoPiL / lambda * std::cos(dir), kTwoPiL / lambda * std::sin(dir), kTwoPi * u(rng)});
    }
  }
  double operator()(Vec2 p) const {
    double v = 0.0;
    for (const auto& w : waves_) v += std::cos(w[0] * p.x + w[1] * p.y + w[2]);
    return waves_.empty() ? 0.0 : v / std::sqrt(static_cast<double>(waves_.size()));
  }

 private:
  std::vector<std::array<double, 3>> waves_;
};

}  // namespace

SyntheticPair synth_pair(const SyntheticSceneConfig& cfg) {
  if (cfg.width < 32 || cfg.height < 32) throw InvalidArgument("synthetic scene too small");
  if (cfg.tree_depth < 1 || cfg.trees < 1) throw InvalidArgument("synthetic tree needs depth and count >= 1");
  std::mt19937_64 rng(cfg.rng_seed);
  const double W = cfg.width, H = cfg.height;

  // Trees radiate from a disc-like hub on one side of the field.
  TreeBuilder tb(cfg, rng);
  const bool left = tb.uni(0.0, 1.0) < 0.5;
  const Vec2 hub{W * (left ? tb.uni(0.28, 0.38) : tb.uni(0.62, 0.72)), H * tb.uni(0.42, 0.58)};
  const double far = left ? 0.0 : kPi;
  for (int t = 0; t < cfg.trees; ++t) {
    double dir;
    if (cfg.trees == 4) {
      static constexpr double spread[4] = {-55.0, 55.0, -130.0, 130.0};
      dir = far + deg2rad(spread[t] + tb.uni(-10.0, 10.0));
    } else {
      dir = far + kTwoPi * (t + 0.5) / cfg.trees + deg2rad(tb.uni(-10.0, 10.0));
    }
    const Vec2 start = hub + 12.0 * unit_from_angle(dir);
    tb.grow(start, dir, cfg.vessel_width_max, W * tb.uni(0.16, 0.2), cfg.tree_depth);
  }

  // Crossings between branches that are not parent/child neighbours.
  std::vector<Landmark> crossings;
  for (std::size_t i = 0; i < tb.branches.size(); ++i) {
    for (std::size_t j = i + 1; j < tb.branches.size(); ++j) {
      const auto& bi = tb.branches[i].pts;
      const auto& bj = tb.branches[j].pts;
      for (std::size_t a = 0; a + 1 < bi.size(); ++a) {
        for (std::size_t b = 0; b + 1 < bj.size(); ++b) {
          Vec2 x;
          if (!segment_intersection(bi[a], bi[a + 1], bj[b], bj[b + 1], x)) continue;
          const auto near_end = [&x](const std::vector<Vec2>& pts) {
            return distance(x, pts.front()) < 6.0 || distance(x, pts.back()) < 6.0;
          };
          if (near_end(bi) || near_end(bj)) continue;
          const Vec2 di = normalized(bi[a + 1] - bi[a]), dj = normalized(bj[b + 1] - bj[b]);
          Landmark l;
          l.kind = LandmarkKind::Crossover;
          l.position = x;
          l.orientations = {wrap_angle(angle_of(di)), wrap_angle(angle_of(-di)), wrap_angle(angle_of(dj)),
                            wrap_angle(angle_of(-dj))};
          std::sort(l.orientations.begin(), l.orientations.end());
          crossings.push_back(l);
        }
      }
    }
  }

  // Vessel map on a canvas extending beyond the fixed field so that the
  // moving view sees vessels wherever it maps.
  const int margin = 320;
  const int cw = cfg.width + 2 * margin, ch = cfg.height + 2 * margin;
  Image canvas(cw, ch, 0.0);
  for (const Branch& b : tb.branches) {
    const double sigma = 0.42 * b.width;
    const double reach = 3.0 * sigma + 1.0;
    for (std::size_t k = 0; k + 1 < b.pts.size(); ++k) {
      const Vec2 a = b.pts[k] + Vec2{double(margin), double(margin)};
      const Vec2 c = b.pts[k + 1] + Vec2{double(margin), double(margin)};
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, c.x) - reach)));
      const int x1 = std::min(cw - 1, static_cast<int>(std::ceil(std::max(a.x, c.x) + reach)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, c.y) - reach)));
      const int y1 = std::min(ch - 1, static_cast<int>(std::ceil(std::max(a.y, c.y) + reach)));
      const Vec2 seg = c - a;
      const double len2 = dot(seg, seg);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const Vec2 p{double(x), double(y)};
          const double t = len2 > 0.0 ? std::clamp(dot(p - a, seg) / len2, 0.0, 1.0) : 0.0;
          const double d = distance(p, a + t * seg);
          const double v = std::exp(-0.5 * d * d / (sigma * sigma));
          canvas(x, y) = std::max(canvas(x, y), v);
        }
    }
  }

  SyntheticPair out;
  out.truth.base = cfg.applied_transform;
  out.truth.sinusoid = cfg.sinusoid;

  std::mt19937_64 bg_rng(cfg.rng_seed ^ 0xA5A5A5A5DEADBEEFULL);
  const Illumination illum_r(bg_rng, 5), illum_a(bg_rng, 5);
  std::normal_distribution<double> noise(0.0, 1.0);
  const Vec2 centre{0.5 * (W - 1), 0.5 * (H - 1)};
  const auto vignette = [&](Vec2 p) {
    const double r = distance(p, centre) / (0.6 * W);
    return r * r;
  };

  out.retinography = Image(cfg.width, cfg.height, 0.0, Modality::Retinography);
  out.angiography = Image(cfg.width, cfg.height, 0.0, Modality::Angiography);
  out.fixed_vessels = Image(cfg.width, cfg.height, 0.0);
  out.moving_vessels = Image(cfg.width, cfg.height, 0.0);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      const Vec2 p{double(x), double(y)};
      const double v = canvas(x + margin, y + margin);
      out.fixed_vessels(x, y) = v;
      const double bg = 0.62 + 0.07 * illum_r(p) - 0.12 * vignette(p);
      const double n = cfg.noise_sigma > 0.0 ? cfg.noise_sigma * noise(bg_rng) : 0.0;
      out.retinography(x, y) = std::clamp(bg - cfg.contrast * v + n, 0.0, 1.0);
    }
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      const Vec2 q{double(x), double(y)};
      const Vec2 p = out.truth.inverse(q) + Vec2{double(margin), double(margin)};
      const double v = inside(canvas, p.x, p.y) ? sample_bilinear(canvas, p.x, p.y) : 0.0;
      out.moving_vessels(x, y) = v;
      const double bg = 0.2 + 0.05 * illum_a(q) - 0.06 * vignette(q);
      const double n = cfg.noise_sigma > 0.0 ? cfg.noise_sigma * noise(bg_rng) : 0.0;
      out.angiography(x, y) = std::clamp(bg + 1.2 * cfg.contrast * v + n, 0.0, 1.0);
    }

  const auto in_field = [&](Vec2 p) { return p.x >= 10.0 && p.y >= 10.0 && p.x <= W - 11.0 && p.y <= H - 11.0; };
  for (const auto& l : tb.junctions)
    if (in_field(l.position)) out.landmarks.push_back(l);
  for (const auto& l : crossings)
    if (in_field(l.position)) out.landmarks.push_back(l);
  for (const Branch& b : tb.branches)
    for (std::size_t k = 0; k + 1 < b.pts.size(); ++k)
      for (const Vec2 q : {b.pts[k], 0.5 * (b.pts[k] + b.pts[k + 1])})
        if (in_field(q)) out.centerline.push_back(q);
  return out;
}

}  // namespace retreg
