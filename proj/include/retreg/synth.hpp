#pragma once

#include <cstdint>
#include <vector>

#include "retreg/image.hpp"
#include "retreg/landmarks.hpp"
#include "retreg/transform.hpp"

namespace retreg {

// Smooth non-rigid component: (a sin(2 pi y / L), a sin(2 pi x / L)).
struct SinusoidalWarp {
  double amplitude = 0.0;     // px
  double wavelength = 200.0;  // px
};

// Fixed (retinography) -> moving (angiography) ground-truth mapping:
// x -> base(x) + sinusoid(x).
struct GroundTruthWarp {
  Transform base = Affine6{};
  SinusoidalWarp sinusoid;

  Vec2 apply(Vec2 p) const;
  Mat2 jacobian(Vec2 p) const;
  // Newton inversion; throws when it does not converge.
  Vec2 inverse(Vec2 q) const;
};

struct SyntheticSceneConfig {
  std::uint64_t rng_seed = 1;
  int width = 720;
  int height = 576;
  int tree_depth = 5;
  int trees = 4;
  double vessel_width_min = 1.5;  // px
  double vessel_width_max = 7.0;  // px
  double contrast = 0.3;
  Transform applied_transform = Affine6{};
  SinusoidalWarp sinusoid;
  double noise_sigma = 0.01;
};

struct SyntheticPair {
  Image retinography;
  Image angiography;
  GroundTruthWarp truth;
  // Junctions of the rendered tree inside the fixed field, fixed frame.
  std::vector<Landmark> landmarks;
  // Noise-free vessel maps in [0, 1], fixed and moving frames.
  Image fixed_vessels;
  Image moving_vessels;
  // Vessel centerline samples, 1 px apart (fixed frame), inside the field.
  std::vector<Vec2> centerline;
};

SyntheticPair synth_pair(const SyntheticSceneConfig& cfg);

// Parameters for drawing random ground-truth transforms. Rotation and scale
// are drawn about the image centre; translation magnitude in
// [translation_min, translation_max].
struct SceneDraw {
  double scale_min = 1.0, scale_max = 1.0;
  double angle_max = 0.0;  // radians, symmetric
  double translation_min = 0.0, translation_max = 0.0;
  double anisotropy = 0.0;  // max |sx/sy - 1| of an extra affine factor
  double shear = 0.0;       // max |k| of an extra affine factor
  double sinusoid_amplitude = 0.0;
  double sinusoid_wavelength = 200.0;
};

// Similarity with given scale/rotation about `centre` followed by translation.
Similarity4 similarity_about(Vec2 centre, double scale, double angle, Vec2 translation);

SyntheticSceneConfig random_scene(std::uint64_t seed, const SceneDraw& draw, SyntheticSceneConfig base = {});

// Mean distance between estimated and true mappings of the given points.
double mean_registration_error(const Transform& estimate, const GroundTruthWarp& truth,
                               const std::vector<Vec2>& points);

}  // namespace retreg
