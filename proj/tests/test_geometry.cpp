#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gssm/geometry.hpp"
#include "gssm/errors.hpp"
#include "gssm/mathx.hpp"
#include "gssm/rng.hpp"

using namespace gssm;

TEST_CASE("axis alignment: relative velocity defines +y") {
  // i at origin moving +x, j ahead and stationary: v_ij = (1,0) becomes +y,
  // so j sits on the +y axis.
  const auto p = relative_polar_spacing({0, 0}, {1, 0}, 0.0, {5, 0}, {0, 0});
  CHECK(p.rho == doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(p.s == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(p.rel_speed == doctest::Approx(1.0));
  CHECK_FALSE(p.heading_fallback);
}

TEST_CASE("identical velocities fall back to the heading frame") {
  const auto p = relative_polar_spacing({0, 0}, {2, 1}, 0.0, {0, 3}, {2, 1});
  CHECK(p.heading_fallback);
  CHECK(p.rel_speed == 0.0);
  CHECK(p.s == doctest::Approx(3.0).epsilon(1e-12));
  // heading 0 maps +x to +y; j at (0,3) lands on the negative polar axis.
  CHECK(p.rho == doctest::Approx(kPi).epsilon(1e-12));
}

TEST_CASE("spacing equals the euclidean distance for random configurations") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const Vec2 pi(rng.uniform(-50, 50), rng.uniform(-50, 50));
    const Vec2 pj(rng.uniform(-50, 50), rng.uniform(-50, 50));
    const Vec2 vi(rng.normal(0, 10), rng.normal(0, 10));
    const Vec2 vj(rng.normal(0, 10), rng.normal(0, 10));
    const auto p = relative_polar_spacing(pi, vi, rng.uniform(-kPi, kPi), pj, vj);
    CHECK(std::fabs(p.s - (pj - pi).norm()) <= 1e-12 * std::max(1.0, p.s));
  }
}

TEST_CASE("global rotation leaves the polar representation unchanged") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 pi(rng.uniform(-20, 20), rng.uniform(-20, 20));
    const Vec2 pj(rng.uniform(-20, 20), rng.uniform(-20, 20));
    const Vec2 vi(rng.normal(0, 5), rng.normal(0, 5));
    const Vec2 vj(rng.normal(0, 5), rng.normal(0, 5));
    const double hi = rng.uniform(-kPi, kPi);
    const double angle = rng.uniform(-kPi, kPi);
    const auto rot = [&](const Vec2& v) {
      return Vec2(std::cos(angle) * v.x() - std::sin(angle) * v.y(),
                  std::sin(angle) * v.x() + std::cos(angle) * v.y());
    };
    const auto a = relative_polar_spacing(pi, vi, hi, pj, vj);
    const auto b = relative_polar_spacing(rot(pi), rot(vi), wrap_angle(hi + angle), rot(pj),
                                          rot(vj));
    CHECK(std::fabs(a.s - b.s) < 1e-9);
    CHECK(std::fabs(a.rel_speed - b.rel_speed) < 1e-9);
    CHECK(std::fabs(wrap_angle(a.rho - b.rho)) < 1e-9);
  }
}

TEST_CASE("fallback taken exactly when relative speed vanishes") {
  const auto same = relative_polar_spacing({0, 0}, {3, 4}, 0.2, {1, 1}, {3, 4});
  CHECK(same.heading_fallback);
  const auto near = relative_polar_spacing({0, 0}, {3, 4}, 0.2, {1, 1}, {3, 4 + 1e-6});
  CHECK_FALSE(near.heading_fallback);
}

TEST_CASE("non-finite input is rejected") {
  CHECK_THROWS_AS(relative_polar_spacing({0, 0}, {std::nan(""), 0}, 0.0, {1, 1}, {0, 0}),
                  ArgumentError);
}
