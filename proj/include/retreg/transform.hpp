#pragma once

#include <array>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "retreg/geometry.hpp"

namespace retreg {

struct Affine6;

// x -> scale * R(angle) * x + (tx, ty)
struct Similarity4 {
  double scale = 1.0;
  double angle = 0.0;  // radians
  double tx = 0.0;
  double ty = 0.0;

  Vec2 apply(Vec2 p) const;
  Affine6 to_affine() const;
  Similarity4 inverse() const;
};

// x -> [a11 a12; a21 a22] x + (tx, ty)
struct Affine6 {
  double a11 = 1.0, a12 = 0.0, a21 = 0.0, a22 = 1.0;
  double tx = 0.0, ty = 0.0;

  static constexpr double kMinDeterminant = 1e-6;

  Mat2 linear() const { return {a11, a12, a21, a22}; }
  double det() const { return a11 * a22 - a12 * a21; }
  Vec2 apply(Vec2 p) const { return {a11 * p.x + a12 * p.y + tx, a21 * p.x + a22 * p.y + ty}; }
  Affine6 inverse() const;
  // (this o other)(x) = this(other(x))
  Affine6 compose(const Affine6& other) const;
};

// Cubic B-spline free-form deformation on a regular control lattice,
// composed with a base affine: x -> base(x + D(x)). D is interpolated from
// control-point displacements expressed in fixed-image pixels. The lattice
// starts one spacing before the domain origin so that every domain pixel has
// a full 4x4 support.
class FFDGrid {
 public:
  // Magnitude bound on displacements, as a fraction of the spacing.
  static constexpr double kFoldBound = 0.4;

  FFDGrid() = default;
  FFDGrid(int domain_width, int domain_height, double spacing, Affine6 base = {});
  FFDGrid(int nx, int ny, double spacing, Vec2 origin, Affine6 base, std::vector<Vec2> disp);

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double spacing() const noexcept { return spacing_; }
  Vec2 origin() const noexcept { return origin_; }
  const Affine6& base() const noexcept { return base_; }
  void set_base(const Affine6& a) { base_ = a; }

  Vec2 control_position(int i, int j) const {
    return {origin_.x + i * spacing_, origin_.y + j * spacing_};
  }
  Vec2 displacement_at(int i, int j) const { return disp_[index(i, j)]; }
  void set_displacement(int i, int j, Vec2 d) { disp_[index(i, j)] = d; }
  const std::vector<Vec2>& displacements() const noexcept { return disp_; }
  double max_bound() const noexcept { return kFoldBound * spacing_; }
  double max_displacement() const;

  // Interpolated displacement D(x) in fixed-image pixels.
  Vec2 displacement(Vec2 p) const;
  Vec2 apply(Vec2 p) const { return base_.apply(p + displacement(p)); }
  // Jacobian of apply() at p.
  Mat2 jacobian(Vec2 p) const;

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(i);
  }

  int nx_ = 0;
  int ny_ = 0;
  double spacing_ = 1.0;
  Vec2 origin_{};
  Affine6 base_{};
  std::vector<Vec2> disp_;
};

using Transform = std::variant<Similarity4, Affine6, FFDGrid>;

namespace bspline {
// Uniform cubic B-spline basis functions B0..B3 at local coordinate u in [0,1).
std::array<double, 4> weights(double u);
std::array<double, 4> derivatives(double u);
}  // namespace bspline

Vec2 apply_transform(const Transform& tf, Vec2 p);
std::string_view kind_name(const Transform& tf);
// Affine part of any transform (the base of an FFD).
Affine6 affine_part(const Transform& tf);
// Raises InvalidArgument when the affine part is not invertible (|det| < 1e-12).
void check_invertible(const Transform& tf);

nlohmann::json to_json(const Transform& tf);
Transform transform_from_json(const nlohmann::json& j);

}  // namespace retreg
