#include "gssm/geometry.hpp"

#include <cmath>

#include "gssm/errors.hpp"

namespace gssm {

namespace {
// Below this relative speed the frame axis is ill-conditioned; fall back to
// the heading of i.
constexpr double kVelocityFallback = 1e-9;
}  // namespace

Vec2 to_local_frame(const Vec2& v, const Vec2& axis_dir) {
  const double n = axis_dir.norm();
  if (!(n > 0.0)) throw ArgumentError("to_local_frame: zero axis");
  const double ax = axis_dir.x() / n;
  const double ay = axis_dir.y() / n;
  // Rows (ay, -ax) and (ax, ay): maps axis_dir onto +y.
  return Vec2(ay * v.x() - ax * v.y(), ax * v.x() + ay * v.y());
}

PolarSpacing relative_polar_spacing(const Vec2& pos_i, const Vec2& vel_i,
                                    double heading_i, const Vec2& pos_j,
                                    const Vec2& vel_j) {
  if (!pos_i.allFinite() || !vel_i.allFinite() || !pos_j.allFinite() ||
      !vel_j.allFinite() || !std::isfinite(heading_i)) {
    throw ArgumentError("relative_polar_spacing: non-finite input");
  }
  const Vec2 v_ij = vel_i - vel_j;
  PolarSpacing out;
  out.rel_speed = v_ij.norm();
  Vec2 axis;
  if (out.rel_speed < kVelocityFallback) {
    axis = Vec2(std::cos(heading_i), std::sin(heading_i));
    out.heading_fallback = true;
    out.rel_speed = 0.0;
  } else {
    axis = v_ij;
  }
  const Vec2 rel = to_local_frame(pos_j - pos_i, axis);
  out.s = rel.norm();
  out.rho = std::atan2(rel.y(), rel.x());
  return out;
}

}  // namespace gssm
