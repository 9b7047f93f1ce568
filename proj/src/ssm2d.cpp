#include "gssm/ssm2d.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gssm/errors.hpp"

namespace gssm::ssm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSpeedEps = 1e-9;

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return Vec2(c * v.x() - s * v.y(), s * v.x() + c * v.y());
}

std::array<Vec2, 4> corners(const AgentGeom& g) {
  const Vec2 ex = rotate(Vec2(0.5 * g.length, 0.0), g.heading);
  const Vec2 ey = rotate(Vec2(0.0, 0.5 * g.width), g.heading);
  return {g.pos + ex + ey, g.pos + ex - ey, g.pos - ex - ey, g.pos - ex + ey};
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

double segment_segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                                const Vec2& b1) {
  const double d1 = cross2(a1 - a0, b0 - a0);
  const double d2 = cross2(a1 - a0, b1 - a0);
  const double d3 = cross2(b1 - b0, a0 - b0);
  const double d4 = cross2(b1 - b0, a1 - b0);
  if (((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0))) return 0.0;  // proper crossing
  return std::min(std::min(point_segment_distance(a0, b0, b1),
                           point_segment_distance(a1, b0, b1)),
                  std::min(point_segment_distance(b0, a0, a1),
                           point_segment_distance(b1, a0, a1)));
}

// Separating-axis overlap test for two oriented rectangles.
bool rectangles_overlap(const AgentGeom& a, const AgentGeom& b) {
  const auto ca = corners(a);
  const auto cb = corners(b);
  const std::array<Vec2, 4> axes = {
      rotate(Vec2(1, 0), a.heading), rotate(Vec2(0, 1), a.heading),
      rotate(Vec2(1, 0), b.heading), rotate(Vec2(0, 1), b.heading)};
  for (const Vec2& axis : axes) {
    double amin = kInf, amax = -kInf, bmin = kInf, bmax = -kInf;
    for (const Vec2& c : ca) {
      const double p = c.dot(axis);
      amin = std::min(amin, p);
      amax = std::max(amax, p);
    }
    for (const Vec2& c : cb) {
      const double p = c.dot(axis);
      bmin = std::min(bmin, p);
      bmax = std::max(bmax, p);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

}  // namespace

const char* to_string(Measure m) {
  switch (m) {
    case Measure::kTtc2d: return "ttc2d";
    case Measure::kTadv: return "tadv";
    default: return "act";
  }
}

AgentGeom geom_from_frame(const TrajectoryFrame& frame, double length, double width) {
  AgentGeom g;
  g.pos = Vec2(frame.x, frame.y);
  g.vel = Vec2(frame.speed * std::cos(frame.heading), frame.speed * std::sin(frame.heading));
  g.heading = frame.heading;
  g.length = length;
  g.width = width;
  return g;
}

SsmValue ttc2d(const AgentGeom& subject, const AgentGeom& object) {
  const Vec2 r = rotate(object.pos - subject.pos, -subject.heading);
  const Vec2 u = rotate(object.vel - subject.vel, -subject.heading);
  const double delta = object.heading - subject.heading;
  const double ac = std::fabs(std::cos(delta));
  const double as = std::fabs(std::sin(delta));
  const double ext_x = 0.5 * subject.length + 0.5 * (object.length * ac + object.width * as);
  const double ext_y = 0.5 * subject.width + 0.5 * (object.length * as + object.width * ac);

  const auto axis_time = [](double pos, double vel, double ext) {
    const double gap = std::fabs(pos) - ext;
    if (gap <= 0.0) return kInf;  // already overlapping in this axis
    const double closing = pos > 0 ? -vel : vel;
    if (closing <= 0.0) return kInf;
    return gap / closing;
  };
  SsmValue v;
  v.measure = Measure::kTtc2d;
  v.value = std::min(axis_time(r.x(), u.x(), ext_x), axis_time(r.y(), u.y(), ext_y));
  return v;
}

SsmValue tadv(const AgentGeom& a, const AgentGeom& b) {
  SsmValue out;
  out.measure = Measure::kTadv;
  const double va = a.vel.norm();
  const double vb = b.vel.norm();
  if (va < kSpeedEps || vb < kSpeedEps) return out;
  const Vec2 da = a.vel / va;
  const Vec2 db = b.vel / vb;
  const double cd = cross2(db, da);
  if (std::fabs(cd) < 1e-9) return out;  // parallel paths share no bounded zone

  // Longitudinal span of the strip intersection in an agent's path frame.
  const auto lon_span = [&](const AgentGeom& self, const Vec2& d_self,
                            const AgentGeom& other, const Vec2& d_other,
                            double& smin, double& smax) {
    const Vec2 n_self(-d_self.y(), d_self.x());
    const double c0 = cross2(d_other, self.pos - other.pos);
    const double cdir = cross2(d_other, d_self);
    const double cn = cross2(d_other, n_self);
    smin = kInf;
    smax = -kInf;
    for (const double n : {-0.5 * self.width, 0.5 * self.width}) {
      for (const double e : {-0.5 * other.width, 0.5 * other.width}) {
        const double s = (e - c0 - n * cn) / cdir;
        smin = std::min(smin, s);
        smax = std::max(smax, s);
      }
    }
  };
  double amin, amax, bmin, bmax;
  lon_span(a, da, b, db, amin, amax);
  lon_span(b, db, a, da, bmin, bmax);

  const double a_in = (amin - 0.5 * a.length) / va;
  const double a_out = (amax + 0.5 * a.length) / va;
  const double b_in = (bmin - 0.5 * b.length) / vb;
  const double b_out = (bmax + 0.5 * b.length) / vb;
  if (a_out < 0.0 || b_out < 0.0) return out;  // encounter already over

  const double gap = std::max(b_in - a_out, a_in - b_out);
  out.value = std::max(gap, 0.0);
  return out;
}

double rectangle_distance(const AgentGeom& a, const AgentGeom& b) {
  if (rectangles_overlap(a, b)) return 0.0;
  const auto ca = corners(a);
  const auto cb = corners(b);
  double best = kInf;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      best = std::min(best, segment_segment_distance(ca[i], ca[(i + 1) % 4], cb[j],
                                                     cb[(j + 1) % 4]));
    }
  }
  return best;
}

SsmValue act(const AgentGeom& a, const AgentGeom& b) {
  SsmValue out;
  out.measure = Measure::kAct;
  const double d0 = rectangle_distance(a, b);
  if (d0 == 0.0) {
    out.value = 0.0;
    return out;
  }
  // Closing rate from a symmetric difference under constant velocity.
  const double tau = 1e-4;
  const auto propagate = [](AgentGeom g, double dt) {
    g.pos += g.vel * dt;
    return g;
  };
  const double d_plus = rectangle_distance(propagate(a, tau), propagate(b, tau));
  const double d_minus = rectangle_distance(propagate(a, -tau), propagate(b, -tau));
  const double rate = (d_minus - d_plus) / (2.0 * tau);
  if (rate <= 1e-12) return out;
  out.value = d0 / rate;
  return out;
}

double risk_from_value(const SsmValue& v) {
  return -std::min(v.value, kRiskCap);
}

}  // namespace gssm::ssm
