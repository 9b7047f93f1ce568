#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gssm/types.hpp"

namespace gssm {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Subject state: (x, y, psi, v, omega, a); constant yaw rate + acceleration.
struct SubjectState {
  double x = 0.0, y = 0.0, psi = 0.0, v = 0.0, omega = 0.0, a = 0.0;

  Vector6d vec() const;
  static SubjectState from_vec(const Vector6d& v);
};

// Surrounding-object state: (x, y, psi, v); constant heading + speed.
struct ObjectState {
  double x = 0.0, y = 0.0, psi = 0.0, v = 0.0;

  Eigen::Vector4d vec() const;
  static ObjectState from_vec(const Eigen::Vector4d& v);
};

struct EkfParams {
  // Per-step process noise variances, state order as above.
  Vector6d subject_process{(Vector6d() << 1e-6, 1e-6, 1e-6, 1e-3, 1e-4, 1e-2).finished()};
  Eigen::Vector4d object_process{1e-4, 1e-4, 1e-3, 1e-2};
  // Measurement noise variances: subject channels (v, omega, a), object (x, y, v).
  Eigen::Vector3d subject_meas{1e-2, 1e-4, 1e-2};
  Eigen::Vector3d object_meas{1e-2, 1e-2, 4e-2};
  double epsilon = 0.001;  // rad/s, straight-line branch threshold
  double dt = 0.1;
  // Motion ranges, enforced by clamping after each update. Velocity-like
  // states keep symmetric bounds so time-reversed filtering stays valid.
  double max_speed = 70.0;
  double max_yaw_rate = 2.0;
  double max_accel = 15.0;

  void validate() const;
};

/// One prediction step of the constant yaw rate + acceleration model. Uses
/// the longitudinal closed form when |omega| <= epsilon and the exact curved
/// integral otherwise; the two branches agree in the omega -> 0 limit.
SubjectState predict_subject(const SubjectState& state, double dt, double epsilon);

/// Analytic Jacobian of predict_subject w.r.t. the state.
Matrix6d predict_subject_jacobian(const SubjectState& state, double dt, double epsilon);

ObjectState predict_object(const ObjectState& state, double dt);
Eigen::Matrix4d predict_object_jacobian(const ObjectState& state, double dt);

// Subject reconstruction anchored at pose (0,0,0). Speed measurements may be
// missing at the head or tail; the filter then runs backwards or forwards
// from the populated end, and when both ends are present the direction with
// the smaller combined speed + yaw-rate RMSE wins.
AgentTrack reconstruct_subject(const AgentTrack& raw, const EkfParams& params);

/// Global edge measurement of an object converted from subject-relative
/// coordinates, corrected to the centroid via dimensions and front/rear
/// inference from heading.
struct ObjectMeasurement {
  double time = 0.0;
  double x = 0.0, y = 0.0;     // centroid, global frame
  double heading = 0.0;        // global
  double speed = 0.0;          // may be NaN
};

std::vector<ObjectMeasurement> object_global_measurements(
    const AgentTrack& raw_relative, const AgentTrack& subject_recon);

/// Object reconstruction in the subject's reconstructed global frame.
AgentTrack reconstruct_object(const AgentTrack& raw_relative,
                              const AgentTrack& subject_recon,
                              const EkfParams& params);

/// Subject + all objects of one event.
Event reconstruct_event(const Event& raw, const EkfParams& params);

// Deviations of a reconstruction from the provided signals.
struct ReconstructionErrors {
  double subject_speed_rmse = 0.0;
  double subject_yaw_rmse = 0.0;
  double subject_accel_rmse = 0.0;
  double object_speed_rmse = 0.0;
  double object_displacement_mae = 0.0;

  double normalized_sum(const ReconstructionErrors& scale) const;
};

ReconstructionErrors reconstruction_errors(const Event& raw, const Event& recon,
                                           const EkfParams& params);

// Tuning metrics use one-step-ahead (pre-update) residuals against the
// provided signals: posterior deviations are minimized by simply copying the
// measurements at zero measurement noise, which says nothing about the
// parameters. Innovation errors have an interior optimum.
ReconstructionErrors tuning_errors(const Event& raw, const EkfParams& params);

/// Grid search minimizing the sum of tuning_errors metrics, each normalized
/// by its mean over the grid.
EkfParams tune_ekf_params(const std::vector<Event>& events,
                          const std::vector<EkfParams>& grid);

}  // namespace gssm
