#pragma once

#include <Eigen/Core>

namespace gssm {

using Vec2 = Eigen::Vector2d;

// Polar representation of multi-directional spacing between road users i and
// j. The relative frame has its origin at i and its y-axis along the relative
// velocity v_ij = v_i - v_j (or along i's heading when the velocities are
// equal). rho is measured counterclockwise from the frame's x-axis.
struct PolarSpacing {
  double rho = 0.0;        // rad, [-pi, pi]
  double s = 0.0;          // m, centroid spacing
  double rel_speed = 0.0;  // m/s, |v_ij|
  bool heading_fallback = false;
};

/// Relative-frame transform + polar conversion. The rotation preserves norms,
/// so s always equals |pos_j - pos_i|.
PolarSpacing relative_polar_spacing(const Vec2& pos_i, const Vec2& vel_i,
                                    double heading_i, const Vec2& pos_j,
                                    const Vec2& vel_j);

/// Components of v in the frame whose y-axis points along axis_dir.
Vec2 to_local_frame(const Vec2& v, const Vec2& axis_dir);

}  // namespace gssm
