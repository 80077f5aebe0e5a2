#include "retreg/transform.hpp"

#include <algorithm>
#include <cmath>

#include "retreg/error.hpp"

namespace retreg {

Vec2 Similarity4::apply(Vec2 p) const {
  const double c = scale * std::cos(angle), s = scale * std::sin(angle);
  return {c * p.x - s * p.y + tx, s * p.x + c * p.y + ty};
}

Affine6 Similarity4::to_affine() const {
  const double c = scale * std::cos(angle), s = scale * std::sin(angle);
  return {c, -s, s, c, tx, ty};
}

Similarity4 Similarity4::inverse() const {
  if (!(scale > 0.0)) throw InvalidArgument("similarity with non-positive scale");
  Similarity4 inv;
  inv.scale = 1.0 / scale;
  inv.angle = -angle;
  const Vec2 t = inv.apply(Vec2{tx, ty});
  inv.tx = -t.x;
  inv.ty = -t.y;
  return inv;
}

Affine6 Affine6::inverse() const {
  const double d = det();
  if (std::abs(d) < 1e-12) throw InvalidArgument("affine transform is not invertible");
  Affine6 inv;
  inv.a11 = a22 / d;
  inv.a12 = -a12 / d;
  inv.a21 = -a21 / d;
  inv.a22 = a11 / d;
  inv.tx = -(inv.a11 * tx + inv.a12 * ty);
  inv.ty = -(inv.a21 * tx + inv.a22 * ty);
  return inv;
}

Affine6 Affine6::compose(const Affine6& o) const {
  Affine6 r;
  r.a11 = a11 * o.a11 + a12 * o.a21;
  r.a12 = a11 * o.a12 + a12 * o.a22;
  r.a21 = a21 * o.a11 + a22 * o.a21;
  r.a22 = a21 * o.a12 + a22 * o.a22;
  r.tx = a11 * o.tx + a12 * o.ty + tx;
  r.ty = a21 * o.tx + a22 * o.ty + ty;
  return r;
}

namespace bspline {

std::array<double, 4> weights(double u) {
  const double u2 = u * u, u3 = u2 * u;
  const double v = 1.0 - u;
  return {v * v * v / 6.0, (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
          (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0, u3 / 6.0};
}

std::array<double, 4> derivatives(double u) {
  const double u2 = u * u;
  const double v = 1.0 - u;
  return {-0.5 * v * v, 1.5 * u2 - 2.0 * u, -1.5 * u2 + u + 0.5, 0.5 * u2};
}

}  // namespace bspline

FFDGrid::FFDGrid(int domain_width, int domain_height, double spacing, Affine6 base)
    : spacing_(spacing), origin_{-spacing, -spacing}, base_(base) {
  if (!(spacing > 0.0)) throw InvalidArgument("FFD spacing must be positive");
  if (domain_width < 1 || domain_height < 1) throw InvalidArgument("FFD domain is empty");
  nx_ = static_cast<int>(std::floor((domain_width - 1) / spacing)) + 4;
  ny_ = static_cast<int>(std::floor((domain_height - 1) / spacing)) + 4;
  disp_.assign(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_), Vec2{});
}

FFDGrid::FFDGrid(int nx, int ny, double spacing, Vec2 origin, Affine6 base, std::vector<Vec2> disp)
    : nx_(nx), ny_(ny), spacing_(spacing), origin_(origin), base_(base), disp_(std::move(disp)) {
  if (!(spacing > 0.0) || nx < 1 || ny < 1) throw InvalidArgument("invalid FFD grid geometry");
  if (disp_.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny))
    throw InvalidArgument("FFD displacement count does not match grid");
}

double FFDGrid::max_displacement() const {
  double m = 0.0;
  for (const Vec2& d : disp_) m = std::max(m, norm(d));
  return m;
}

Vec2 FFDGrid::displacement(Vec2 p) const {
  const double gx = (p.x - origin_.x) / spacing_;
  const double gy = (p.y - origin_.y) / spacing_;
  const double fx = std::floor(gx), fy = std::floor(gy);
  const auto wx = bspline::weights(gx - fx);
  const auto wy = bspline::weights(gy - fy);
  const int ix = static_cast<int>(fx) - 1, iy = static_cast<int>(fy) - 1;
  Vec2 d{};
  for (int b = 0; b < 4; ++b) {
    const int j = iy + b;
    if (j < 0 || j >= ny_) continue;
    Vec2 row{};
    for (int a = 0; a < 4; ++a) {
      const int i = ix + a;
      if (i < 0 || i >= nx_) continue;
      row += wx[static_cast<std::size_t>(a)] * disp_[index(i, j)];
    }
    d += wy[static_cast<std::size_t>(b)] * row;
  }
  return d;
}

Mat2 FFDGrid::jacobian(Vec2 p) const {
  const double gx = (p.x - origin_.x) / spacing_;
  const double gy = (p.y - origin_.y) / spacing_;
  const double fx = std::floor(gx), fy = std::floor(gy);
  const auto wx = bspline::weights(gx - fx), dx = bspline::derivatives(gx - fx);
  const auto wy = bspline::weights(gy - fy), dy = bspline::derivatives(gy - fy);
  const int ix = static_cast<int>(fx) - 1, iy = static_cast<int>(fy) - 1;
  // Displacement gradient (d/dx, d/dy of each component).
  Vec2 ddx{}, ddy{};
  for (int b = 0; b < 4; ++b) {
    const int j = iy + b;
    if (j < 0 || j >= ny_) continue;
    for (int a = 0; a < 4; ++a) {
      const int i = ix + a;
      if (i < 0 || i >= nx_) continue;
      const Vec2 c = disp_[index(i, j)];
      ddx += (dx[static_cast<std::size_t>(a)] * wy[static_cast<std::size_t>(b)] / spacing_) * c;
      ddy += (wx[static_cast<std::size_t>(a)] * dy[static_cast<std::size_t>(b)] / spacing_) * c;
    }
  }
  const Mat2 inner{1.0 + ddx.x, ddy.x, ddx.y, 1.0 + ddy.y};
  return base_.linear() * inner;
}

Vec2 apply_transform(const Transform& tf, Vec2 p) {
  return std::visit([p](const auto& t) { return t.apply(p); }, tf);
}

std::string_view kind_name(const Transform& tf) {
  switch (tf.index()) {
    case 0:
      return "similarity";
    case 1:
      return "affine";
    default:
      return "ffd";
  }
}

Affine6 affine_part(const Transform& tf) {
  if (const auto* s = std::get_if<Similarity4>(&tf)) return s->to_affine();
  if (const auto* a = std::get_if<Affine6>(&tf)) return *a;
  return std::get<FFDGrid>(tf).base();
}

void check_invertible(const Transform& tf) {
  if (std::abs(affine_part(tf).det()) < 1e-12)
    throw InvalidArgument("degenerate transform: affine part is not invertible");
}

namespace {

nlohmann::json affine_json(const Affine6& a) {
  return {{"kind", "affine"},
          {"matrix", {{a.a11, a.a12}, {a.a21, a.a22}}},
          {"translation", {a.tx, a.ty}}};
}

Affine6 affine_from(const nlohmann::json& j) {
  const auto& m = j.at("matrix");
  const auto& t = j.at("translation");
  return {m.at(0).at(0).get<double>(), m.at(0).at(1).get<double>(), m.at(1).at(0).get<double>(),
          m.at(1).at(1).get<double>(), t.at(0).get<double>(),       t.at(1).get<double>()};
}

}  // namespace

nlohmann::json to_json(const Transform& tf) {
  if (const auto* s = std::get_if<Similarity4>(&tf)) {
    return {{"kind", "similarity"}, {"scale", s->scale}, {"angle", s->angle}, {"tx", s->tx}, {"ty", s->ty}};
  }
  if (const auto* a = std::get_if<Affine6>(&tf)) return affine_json(*a);
  const auto& f = std::get<FFDGrid>(tf);
  nlohmann::json disp = nlohmann::json::array();
  for (const Vec2& d : f.displacements()) disp.push_back({d.x, d.y});
  return {{"kind", "ffd"},
          {"grid", {{"nx", f.nx()}, {"ny", f.ny()}, {"spacing", f.spacing()},
                    {"origin", {f.origin().x, f.origin().y}}}},
          {"base", affine_json(f.base())},
          {"displacements", std::move(disp)}};
}

Transform transform_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "similarity") {
      return Similarity4{j.at("scale").get<double>(), j.at("angle").get<double>(),
                         j.at("tx").get<double>(), j.at("ty").get<double>()};
    }
    if (kind == "affine") return affine_from(j);
    if (kind == "ffd") {
      const auto& g = j.at("grid");
      std::vector<Vec2> disp;
      for (const auto& d : j.at("displacements"))
        disp.push_back({d.at(0).get<double>(), d.at(1).get<double>()});
      return FFDGrid(g.at("nx").get<int>(), g.at("ny").get<int>(), g.at("spacing").get<double>(),
                     {g.at("origin").at(0).get<double>(), g.at("origin").at(1).get<double>()},
                     affine_from(j.at("base")), std::move(disp));
    }
    throw InvalidArgument("unknown transform kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed transform JSON: ") + e.what());
  }
}

}  // namespace retreg
