#pragma once

#include <limits>

#include "gssm/geometry.hpp"
#include "gssm/types.hpp"

namespace gssm::ssm {

enum class Measure { kTtc2d, kTadv, kAct };

const char* to_string(Measure m);

// A surrogate-safety value in seconds; +inf is the "no collision course"
// sentinel.
struct SsmValue {
  Measure measure = Measure::kTtc2d;
  double value = std::numeric_limits<double>::infinity();

  bool is_sentinel() const { return !std::isfinite(value); }
};

struct AgentGeom {
  Vec2 pos;        // centroid
  Vec2 vel;
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;
};

AgentGeom geom_from_frame(const TrajectoryFrame& frame, double length, double width);

// Minimum of longitudinal and lateral time-to-collision in the subject body
// frame under constant velocity, with footprints reduced to per-axis extents
// (the object's rectangle projected onto the subject axes). An axis that is
// already overlapping or opening contributes no finite time.
SsmValue ttc2d(const AgentGeom& subject, const AgentGeom& object);

// Predicted post-encroachment time: the gap between the two agents'
// constant-velocity occupancy intervals of the shared zone of their projected
// paths (path width = vehicle width). Zero when the intervals overlap;
// sentinel when the paths never share a zone, an agent is stationary, or the
// encounter already finished.
SsmValue tadv(const AgentGeom& a, const AgentGeom& b);

// Anticipated collision time: minimal boundary-to-boundary distance divided
// by its current closing rate; sentinel when the distance is not shrinking.
SsmValue act(const AgentGeom& a, const AgentGeom& b);

/// Shortest distance between the two rectangle boundaries (0 when overlapping).
double rectangle_distance(const AgentGeom& a, const AgentGeom& b);

// Risk orientation adapter: maps any SSM value to "higher = riskier" via
// -min(value, kRiskCap); the sentinel becomes the minimal risk -kRiskCap.
constexpr double kRiskCap = 10.0;
double risk_from_value(const SsmValue& v);

}  // namespace gssm::ssm
