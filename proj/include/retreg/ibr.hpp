#pragma once

#include <array>
#include <vector>

#include "retreg/enhance.hpp"
#include "retreg/transform.hpp"

namespace retreg {

// Derivative-free coordinate descent settings. For the affine model the
// per-parameter vectors are ordered (tx, ty, rotation, scale_x, scale_y,
// shear); the FFD model uses a single entry for control displacements.
struct OptimizerConfig {
  int max_iterations = 200;
  std::vector<double> parameter_tolerance;  // step floors
  std::vector<double> initial_steps;
  int pyramid_levels = 1;

  static OptimizerConfig affine_defaults();
  static OptimizerConfig ffd_defaults();
  void validate(std::size_t n_params) const;
};

// Affine map written as x -> R(rotation) * [sx k; 0 sy] * (x - c) + d, with c a
// fixed pivot (the fixed-image centre) and d its image.
struct AffineParams {
  std::array<double, 6> v{};  // dx, dy, rotation, sx, sy, shear

  static AffineParams from_affine(const Affine6& a, Vec2 pivot);
  Affine6 to_affine(Vec2 pivot) const;
};

struct AffineResult {
  Affine6 transform;
  VeNccScore score;
  VeNccScore initial_score;
  int evaluations = 0;
};

struct FfdResult {
  FFDGrid grid;
  VeNccScore score;
  VeNccScore initial_score;
  int sweeps = 0;
  int accepted_moves = 0;
};

// Maximizes VE-NCC over the six affine parameters, coarse to fine. Only
// improving moves are accepted; the returned score is never below the score
// of `init`. Throws MetricError when `init` itself cannot be scored.
AffineResult optimize_affine(const VeNccMetric& metric, const Transform& init, const OptimizerConfig& cfg);
AffineResult optimize_affine(const Image& fixed, const Image& moving, const Transform& init,
                             const OptimizerConfig& cfg, const ScaleSpaceConfig& scales = {});

// Optimizes cubic B-spline control displacements one point at a time on top
// of `init`. Displacement magnitudes are projected onto the fold bound.
FfdResult optimize_ffd(const VeNccMetric& metric, const Affine6& init, const OptimizerConfig& cfg,
                       double grid_spacing);
FfdResult optimize_ffd(const Image& fixed, const Image& moving, const Affine6& init, const OptimizerConfig& cfg,
                       double grid_spacing, const ScaleSpaceConfig& scales = {});

inline constexpr double kDefaultGridSpacing = 64.0;

}  // namespace retreg
