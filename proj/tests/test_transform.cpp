#include <cmath>
#include <random>

#include "doctest.h"
#include "retreg/error.hpp"
#include "retreg/transform.hpp"

using namespace retreg;

namespace {

// Centred cubic B-spline, support [-2, 2].
double cubic_b(double x) {
  const double a = std::abs(x);
  if (a < 1.0) return 2.0 / 3.0 - a * a + 0.5 * a * a * a;
  if (a < 2.0) return (2.0 - a) * (2.0 - a) * (2.0 - a) / 6.0;
  return 0.0;
}

void check_vec(Vec2 a, Vec2 b, double tol) {
  CHECK(std::abs(a.x - b.x) <= tol);
  CHECK(std::abs(a.y - b.y) <= tol);
}

}  // namespace

TEST_CASE("apply_transform closed forms") {
  const Vec2 id = apply_transform(Affine6{}, {100, 50});
  CHECK(id.x == 100.0);
  CHECK(id.y == 50.0);
  const Vec2 s = apply_transform(Affine6{2, 0, 0, 2, 0, 0}, {3, 4});
  CHECK(s.x == 6.0);
  CHECK(s.y == 8.0);
  const Vec2 r = apply_transform(Similarity4{2.0, kPi / 2, 5.0, 5.0}, {10, 0});
  CHECK(std::abs(r.x - 5.0) < 1e-12);
  CHECK(std::abs(r.y - 25.0) < 1e-12);
}

TEST_CASE("similarity embeds into the affine it describes") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n = 0; n < 50; ++n) {
    const Similarity4 s{1.0 + 0.5 * u(rng), kPi * u(rng), 40 * u(rng), 40 * u(rng)};
    const Affine6 a = s.to_affine();
    const Vec2 p{200 * u(rng), 200 * u(rng)};
    check_vec(s.apply(p), a.apply(p), 1e-9);
    check_vec(s.inverse().apply(s.apply(p)), p, 1e-9);
  }
}

TEST_CASE("affine inverse and composition") {
  const Affine6 a{1.1, 0.2, -0.1, 0.9, 4, -7};
  const Affine6 b{0.8, -0.05, 0.3, 1.2, -2, 3};
  const Vec2 p{13, -21};
  check_vec(a.compose(b).apply(p), a.apply(b.apply(p)), 1e-12);
  check_vec(a.inverse().apply(a.apply(p)), p, 1e-12);
  CHECK_THROWS_AS((Affine6{1, 2, 2, 4, 0, 0}.inverse()), InvalidArgument);
  CHECK_THROWS_AS(check_invertible(Affine6{0, 0, 0, 0, 0, 0}), InvalidArgument);
  CHECK_NOTHROW(check_invertible(Similarity4{}));
}

TEST_CASE("B-spline weights: partition of unity and basis oracle") {
  for (int n = 0; n <= 100; ++n) {
    const double u = n / 100.0 * 0.999999;
    const auto w = bspline::weights(u);
    CHECK(std::abs(w[0] + w[1] + w[2] + w[3] - 1.0) <= 1e-12);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(w[k] - cubic_b(u + 1.0 - k)) <= 1e-12);
    const auto d = bspline::derivatives(u);
    CHECK(std::abs(d[0] + d[1] + d[2] + d[3]) <= 1e-12);
  }
}

TEST_CASE("FFD with zero displacements reproduces its base exactly") {
  const Affine6 base{1.02, 0.01, -0.02, 0.97, 3.0, -4.0};
  const FFDGrid g(200, 150, 32.0, base);
  CHECK(g.max_displacement() == 0.0);
  for (int y = 0; y < 150; y += 7)
    for (int x = 0; x < 200; x += 11) {
      const Vec2 p{double(x), double(y)};
      const Vec2 q = g.apply(p);
      const Vec2 e = base.apply(p);
      REQUIRE(q.x == e.x);
      REQUIRE(q.y == e.y);
    }
}

TEST_CASE("FFD lattice covers the domain with one spacing margin") {
  const FFDGrid g(200, 150, 32.0);
  CHECK(g.origin().x <= -32.0);
  CHECK(g.origin().y <= -32.0);
  CHECK(g.control_position(g.nx() - 1, 0).x >= 199.0 + 32.0);
  CHECK(g.control_position(0, g.ny() - 1).y >= 149.0 + 32.0);
}

TEST_CASE("FFD with one displaced control point matches direct basis summation") {
  FFDGrid g(160, 120, 20.0);
  const int ci = 4, cj = 3;
  const Vec2 d{2.5, -1.75};
  g.set_displacement(ci, cj, d);
  const Vec2 c = g.control_position(ci, cj);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(0.0, 159.0), uy(0.0, 119.0);
  for (int n = 0; n < 200; ++n) {
    const Vec2 p{ux(rng), uy(rng)};
    const double w = cubic_b((p.x - c.x) / 20.0) * cubic_b((p.y - c.y) / 20.0);
    const Vec2 got = g.displacement(p);
    REQUIRE(std::abs(got.x - w * d.x) <= 1e-9);
    REQUIRE(std::abs(got.y - w * d.y) <= 1e-9);
  }
}

TEST_CASE("FFD Jacobian agrees with finite differences and stays positive at the bound") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  FFDGrid g(128, 96, 16.0, Affine6{1.1, 0.05, -0.03, 0.95, 2, 1});
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) g.set_displacement(i, j, g.max_bound() * unit_from_angle(ang(rng)));
  CHECK(g.max_displacement() <= g.max_bound() + 1e-12);
  const double h = 1e-5;
  for (int y = 0; y < 96; y += 3)
    for (int x = 0; x < 128; x += 3) {
      const Vec2 p{x + 0.37, y + 0.61};
      const Mat2 J = g.jacobian(p);
      REQUIRE(J.det() > 0.0);
      const Vec2 dx = (g.apply(p + Vec2{h, 0}) - g.apply(p - Vec2{h, 0})) / (2 * h);
      const Vec2 dy = (g.apply(p + Vec2{0, h}) - g.apply(p - Vec2{0, h})) / (2 * h);
      REQUIRE(std::abs(J.a11 - dx.x) <= 1e-5);
      REQUIRE(std::abs(J.a21 - dx.y) <= 1e-5);
      REQUIRE(std::abs(J.a12 - dy.x) <= 1e-5);
      REQUIRE(std::abs(J.a22 - dy.y) <= 1e-5);
    }
}

TEST_CASE("transform JSON round trip for every kind") {
  FFDGrid g(64, 48, 16.0, Affine6{1, 0.1, 0, 1, 3, 4});
  g.set_displacement(2, 1, {1.5, -0.25});
  const std::vector<Transform> all = {Similarity4{1.2, 0.3, -4, 9}, Affine6{1, 0.1, -0.2, 0.9, 5, 6}, g};
  for (const Transform& t : all) {
    const nlohmann::json j = to_json(t);
    CHECK(j.contains("kind"));
    CHECK(j["kind"].get<std::string>() == std::string(kind_name(t)));
    const Transform back = transform_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.index() == t.index());
    for (Vec2 p : {Vec2{0, 0}, Vec2{31.5, 17.25}, Vec2{63, 47}}) check_vec(apply_transform(back, p), apply_transform(t, p), 1e-12);
  }
  CHECK_THROWS_AS(transform_from_json(nlohmann::json{{"kind", "spline"}}), InvalidArgument);
}

TEST_CASE("affine_part picks the base of an FFD") {
  const Affine6 base{0.9, 0, 0, 1.1, 7, 8};
  const Affine6 a = affine_part(FFDGrid(32, 32, 8.0, base));
  CHECK(a.a11 == 0.9);
  CHECK(a.ty == 8.0);
  CHECK(kind_name(Transform{Similarity4{}}) != kind_name(Transform{Affine6{}}));
}
