#include "gssm/ekf.hpp"

#include <cmath>
#include <limits>

#include "gssm/errors.hpp"
#include "gssm/mathx.hpp"

namespace gssm {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Vector6d SubjectState::vec() const {
  Vector6d s;
  s << x, y, psi, v, omega, a;
  return s;
}

SubjectState SubjectState::from_vec(const Vector6d& s) {
  return {s[0], s[1], s[2], s[3], s[4], s[5]};
}

Eigen::Vector4d ObjectState::vec() const { return {x, y, psi, v}; }

ObjectState ObjectState::from_vec(const Eigen::Vector4d& s) {
  return {s[0], s[1], s[2], s[3]};
}

void EkfParams::validate() const {
  if ((subject_process.array() <= 0).any() || (object_process.array() <= 0).any()) {
    throw ArgumentError("EkfParams: process variances must be positive");
  }
  if ((subject_meas.array() < 0).any() || (object_meas.array() < 0).any()) {
    throw ArgumentError("EkfParams: measurement variances must be non-negative");
  }
  if (!(epsilon > 0)) throw ArgumentError("EkfParams: epsilon must be positive");
  if (std::fabs(dt - kDt) > 1e-12) throw ArgumentError("EkfParams: dt must be 0.1 s");
}

SubjectState predict_subject(const SubjectState& state, double dt, double epsilon) {
  if (!state.vec().allFinite()) throw NumericError("predict_subject: non-finite state");
  if (!(dt > 0)) throw ArgumentError("predict_subject: dt must be positive");
  const double c0 = std::cos(state.psi);
  const double s0 = std::sin(state.psi);
  double dx, dy;
  if (std::fabs(state.omega) <= epsilon) {
    // Small-yaw-rate branch: the curved closed form expanded to first order
    // in omega. The O(omega) term keeps the branch switch continuous to
    // better than 1e-6 m at |omega| = epsilon.
    const double dist = state.v * dt + 0.5 * state.a * dt * dt;
    const double sweep = state.omega * (0.5 * state.v * dt * dt + state.a * dt * dt * dt / 3.0);
    dx = c0 * dist - s0 * sweep;
    dy = s0 * dist + c0 * sweep;
  } else {
    const double w = state.omega;
    const double s1 = std::sin(state.psi + w * dt);
    const double c1 = std::cos(state.psi + w * dt);
    dx = (state.v * w * (s1 - s0) + state.a * (c1 - c0) + state.a * w * s1 * dt) / (w * w);
    dy = (state.v * w * (c0 - c1) + state.a * (s1 - s0) - state.a * w * c1 * dt) / (w * w);
  }
  SubjectState next = state;
  next.x += dx;
  next.y += dy;
  next.psi = wrap_angle(state.psi + state.omega * dt);
  next.v += state.a * dt;
  return next;
}

Matrix6d predict_subject_jacobian(const SubjectState& state, double dt, double epsilon) {
  Matrix6d F = Matrix6d::Identity();
  const double c0 = std::cos(state.psi);
  const double s0 = std::sin(state.psi);
  if (std::fabs(state.omega) <= epsilon) {
    const double dist = state.v * dt + 0.5 * state.a * dt * dt;
    const double arc = 0.5 * state.v * dt * dt + state.a * dt * dt * dt / 3.0;
    const double sweep = state.omega * arc;
    F(0, 2) = -s0 * dist - c0 * sweep;
    F(0, 3) = c0 * dt - s0 * state.omega * 0.5 * dt * dt;
    F(0, 4) = -s0 * arc;
    F(0, 5) = 0.5 * c0 * dt * dt - s0 * state.omega * dt * dt * dt / 3.0;
    F(1, 2) = c0 * dist - s0 * sweep;
    F(1, 3) = s0 * dt + c0 * state.omega * 0.5 * dt * dt;
    F(1, 4) = c0 * arc;
    F(1, 5) = 0.5 * s0 * dt * dt + c0 * state.omega * dt * dt * dt / 3.0;
  } else {
    const double w = state.omega;
    const double w2 = w * w;
    const double s1 = std::sin(state.psi + w * dt);
    const double c1 = std::cos(state.psi + w * dt);
    const double v = state.v;
    const double a = state.a;
    const double nx = v * w * (s1 - s0) + a * (c1 - c0) + a * w * s1 * dt;
    const double ny = v * w * (c0 - c1) + a * (s1 - s0) - a * w * c1 * dt;
    F(0, 2) = (v * w * (c1 - c0) + a * (s0 - s1) + a * w * c1 * dt) / w2;
    F(0, 3) = (s1 - s0) / w;
    F(0, 4) = (v * (s1 - s0) + v * w * dt * c1 + a * w * dt * dt * c1) / w2 - 2.0 * nx / (w2 * w);
    F(0, 5) = ((c1 - c0) + w * dt * s1) / w2;
    F(1, 2) = (v * w * (s1 - s0) + a * (c1 - c0) + a * w * dt * s1) / w2;
    F(1, 3) = (c0 - c1) / w;
    F(1, 4) = (v * (c0 - c1) + v * w * dt * s1 + a * w * dt * dt * s1) / w2 - 2.0 * ny / (w2 * w);
    F(1, 5) = ((s1 - s0) - w * dt * c1) / w2;
  }
  F(2, 4) = dt;
  F(3, 5) = dt;
  return F;
}

ObjectState predict_object(const ObjectState& state, double dt) {
  if (!state.vec().allFinite()) throw NumericError("predict_object: non-finite state");
  ObjectState next = state;
  next.x += std::cos(state.psi) * state.v * dt;
  next.y += std::sin(state.psi) * state.v * dt;
  return next;
}

Eigen::Matrix4d predict_object_jacobian(const ObjectState& state, double dt) {
  Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
  F(0, 2) = -std::sin(state.psi) * state.v * dt;
  F(0, 3) = std::cos(state.psi) * dt;
  F(1, 2) = std::cos(state.psi) * state.v * dt;
  F(1, 3) = std::sin(state.psi) * dt;
  return F;
}

namespace {

// Generic EKF update with a row-subset measurement (Joseph form).
template <int N>
void kalman_update(Eigen::Matrix<double, N, 1>& x, Eigen::Matrix<double, N, N>& P,
                   const std::vector<int>& rows, const std::vector<double>& z,
                   const std::vector<double>& variances) {
  const int m = static_cast<int>(rows.size());
  if (m == 0) return;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, N);
  Eigen::VectorXd innovation(m);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    H(i, rows[i]) = 1.0;
    innovation[i] = z[i] - x[rows[i]];
    R(i, i) = variances[i];
  }
  const Eigen::MatrixXd S = H * P * H.transpose() + R;
  const Eigen::MatrixXd K = P * H.transpose() * S.ldlt().solve(Eigen::MatrixXd::Identity(m, m));
  x += K * innovation;
  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(N, N) - K * H;
  P = IKH * P * IKH.transpose() + K * R * K.transpose();
}

struct InnovationSums {
  double v = 0.0, w = 0.0, a = 0.0;
  long n_v = 0, n_w = 0, n_a = 0;
};

struct SubjectRun {
  std::vector<SubjectState> states;
  double speed_rmse = 0.0;  // posterior deviation, used for direction choice
  double yaw_rmse = 0.0;
  InnovationSums innovation;  // one-step-ahead residuals, used for tuning
};

// Forward filter over the given measurement sequence. Channels are NaN when
// missing; v0 seeds the speed state.
SubjectRun run_subject_filter(const std::vector<TrajectoryFrame>& meas, double v0,
                              const EkfParams& params) {
  Vector6d x;
  x << 0.0, 0.0, 0.0, v0,
      std::isnan(meas.front().yaw_rate) ? 0.0 : meas.front().yaw_rate,
      std::isnan(meas.front().accel) ? 0.0 : meas.front().accel;
  Matrix6d P = Matrix6d::Identity() * 1e-2;
  const Matrix6d Q = params.subject_process.asDiagonal();

  SubjectRun run;
  run.states.reserve(meas.size());
  double se_v = 0.0, se_w = 0.0;
  int n_v = 0, n_w = 0;
  for (size_t i = 0; i < meas.size(); ++i) {
    if (i > 0) {
      SubjectState st = SubjectState::from_vec(x);
      const Matrix6d F = predict_subject_jacobian(st, params.dt, params.epsilon);
      x = predict_subject(st, params.dt, params.epsilon).vec();
      P = F * P * F.transpose() + Q;
      if (!std::isnan(meas[i].speed)) {
        run.innovation.v += (x[3] - meas[i].speed) * (x[3] - meas[i].speed);
        ++run.innovation.n_v;
      }
      if (!std::isnan(meas[i].yaw_rate)) {
        run.innovation.w += (x[4] - meas[i].yaw_rate) * (x[4] - meas[i].yaw_rate);
        ++run.innovation.n_w;
      }
      if (!std::isnan(meas[i].accel)) {
        run.innovation.a += (x[5] - meas[i].accel) * (x[5] - meas[i].accel);
        ++run.innovation.n_a;
      }
    }
    std::vector<int> rows;
    std::vector<double> z, var;
    if (!std::isnan(meas[i].speed)) {
      rows.push_back(3); z.push_back(meas[i].speed); var.push_back(params.subject_meas[0]);
    }
    if (!std::isnan(meas[i].yaw_rate)) {
      rows.push_back(4); z.push_back(meas[i].yaw_rate); var.push_back(params.subject_meas[1]);
    }
    if (!std::isnan(meas[i].accel)) {
      rows.push_back(5); z.push_back(meas[i].accel); var.push_back(params.subject_meas[2]);
    }
    kalman_update<6>(x, P, rows, z, var);
    x[2] = wrap_angle(x[2]);
    x[3] = std::clamp(x[3], -params.max_speed, params.max_speed);
    x[4] = std::clamp(x[4], -params.max_yaw_rate, params.max_yaw_rate);
    x[5] = std::clamp(x[5], -params.max_accel, params.max_accel);
    run.states.push_back(SubjectState::from_vec(x));
    if (!std::isnan(meas[i].speed)) {
      se_v += (x[3] - meas[i].speed) * (x[3] - meas[i].speed);
      ++n_v;
    }
    if (!std::isnan(meas[i].yaw_rate)) {
      se_w += (x[4] - meas[i].yaw_rate) * (x[4] - meas[i].yaw_rate);
      ++n_w;
    }
  }
  run.speed_rmse = n_v > 0 ? std::sqrt(se_v / n_v) : 0.0;
  run.yaw_rmse = n_w > 0 ? std::sqrt(se_w / n_w) : 0.0;
  return run;
}

// Rigid transform so the first frame sits at (0,0) heading 0.
void anchor_track(std::vector<SubjectState>& states) {
  if (states.empty()) return;
  const double x0 = states.front().x;
  const double y0 = states.front().y;
  const double p0 = states.front().psi;
  const double c = std::cos(-p0);
  const double s = std::sin(-p0);
  for (auto& st : states) {
    const double dx = st.x - x0;
    const double dy = st.y - y0;
    st.x = c * dx - s * dy;
    st.y = s * dx + c * dy;
    st.psi = wrap_angle(st.psi - p0);
  }
}

}  // namespace

SubjectRun reconstruct_subject_run(const AgentTrack& raw, const EkfParams& params) {
  params.validate();
  if (raw.frames.size() < 2) {
    throw ReconstructionError("subject track " + raw.agent_id + ": too few frames");
  }
  int first_speed = -1, last_speed = -1;
  for (size_t i = 0; i < raw.frames.size(); ++i) {
    if (!std::isnan(raw.frames[i].speed)) {
      if (first_speed < 0) first_speed = static_cast<int>(i);
      last_speed = static_cast<int>(i);
    }
  }
  if (first_speed < 0) {
    throw ReconstructionError("subject track " + raw.agent_id + ": no valid speed measurement");
  }
  // A head/tail counts as missing when its earliest/latest 0.5 s lacks speed.
  const bool head_missing =
      first_speed >= 1 &&
      raw.frames[first_speed].time - raw.frames.front().time >= kEpisodeGap - 1e-9;
  const bool tail_missing = last_speed + 1 < static_cast<int>(raw.frames.size()) &&
                            raw.frames.back().time - raw.frames[last_speed].time >=
                                kEpisodeGap - 1e-9;

  auto forward_measurements = raw.frames;
  auto backward_measurements = raw.frames;
  std::reverse(backward_measurements.begin(), backward_measurements.end());
  for (auto& f : backward_measurements) {
    f.speed = -f.speed;
    f.yaw_rate = -f.yaw_rate;
  }

  std::optional<SubjectRun> forward, backward;
  if (!head_missing || tail_missing) {
    forward = run_subject_filter(forward_measurements, raw.frames[first_speed].speed, params);
  }
  if (!tail_missing || head_missing) {
    backward = run_subject_filter(backward_measurements, -raw.frames[last_speed].speed, params);
  }

  SubjectRun run;
  bool reversed = false;
  if (forward && backward) {
    const double fwd = forward->speed_rmse + forward->yaw_rmse;
    const double bwd = backward->speed_rmse + backward->yaw_rmse;
    reversed = fwd > bwd;
    run = reversed ? std::move(*backward) : std::move(*forward);
  } else if (forward) {
    run = std::move(*forward);
  } else {
    run = std::move(*backward);
    reversed = true;
  }
  if (reversed) {
    std::reverse(run.states.begin(), run.states.end());
    for (auto& st : run.states) {
      st.v = -st.v;
      st.omega = -st.omega;
    }
  }
  anchor_track(run.states);
  return run;
}

AgentTrack reconstruct_subject(const AgentTrack& raw, const EkfParams& params) {
  const SubjectRun run = reconstruct_subject_run(raw, params);
  AgentTrack out = raw;
  for (size_t i = 0; i < out.frames.size(); ++i) {
    auto& f = out.frames[i];
    f.x = run.states[i].x;
    f.y = run.states[i].y;
    f.heading = run.states[i].psi;
    f.speed = run.states[i].v;
    f.yaw_rate = run.states[i].omega;
    f.accel = run.states[i].a;
  }
  return out;
}

std::vector<ObjectMeasurement> object_global_measurements(
    const AgentTrack& raw_relative, const AgentTrack& subject_recon) {
  std::vector<ObjectMeasurement> out;
  out.reserve(raw_relative.frames.size());
  for (const auto& f : raw_relative.frames) {
    const TrajectoryFrame* subj = subject_recon.frame_at(f.time);
    if (subj == nullptr) continue;
    const double c = std::cos(subj->heading);
    const double s = std::sin(subj->heading);
    ObjectMeasurement m;
    m.time = f.time;
    // Detected nearest-edge point in the global frame.
    const double ex = subj->x + c * f.x - s * f.y;
    const double ey = subj->y + s * f.x + c * f.y;
    m.heading = wrap_angle(subj->heading + f.heading);
    // Front/rear inference: an object pointing away from the subject shows
    // its rear edge, so the centroid sits half a length ahead of the edge.
    const double ux = ex - subj->x;
    const double uy = ey - subj->y;
    const double hx = std::cos(m.heading);
    const double hy = std::sin(m.heading);
    const double sign = (hx * ux + hy * uy >= 0.0) ? 1.0 : -1.0;
    m.x = ex + sign * 0.5 * raw_relative.length * hx;
    m.y = ey + sign * 0.5 * raw_relative.length * hy;
    m.speed = f.speed;
    out.push_back(m);
  }
  return out;
}

namespace {

struct ObjectRun {
  std::vector<ObjectState> states;
  double displacement_abs = 0.0;  // one-step-ahead position residuals
  double speed_sq = 0.0;
  long n_displacement = 0;
  long n_speed = 0;
};

}  // namespace

static ObjectRun run_object_filter(const std::vector<ObjectMeasurement>& meas,
                                   const EkfParams& params) {
  Eigen::Vector4d x;
  double v0 = kNaN;
  for (const auto& m : meas) {
    if (!std::isnan(m.speed)) {
      v0 = m.speed;
      break;
    }
  }
  double psi0 = meas.front().heading;
  if (std::isnan(psi0)) {
    psi0 = std::atan2(meas[1].y - meas[0].y, meas[1].x - meas[0].x);
  }
  if (std::isnan(v0)) {
    v0 = std::hypot(meas[1].x - meas[0].x, meas[1].y - meas[0].y) / params.dt;
  }
  x << meas.front().x, meas.front().y, psi0, v0;
  Eigen::Matrix4d P = Eigen::Matrix4d::Identity() * 1e-2;
  const Eigen::Matrix4d Q = params.object_process.asDiagonal();

  ObjectRun run;
  run.states.reserve(meas.size());
  for (size_t i = 0; i < meas.size(); ++i) {
    if (i > 0) {
      ObjectState st = ObjectState::from_vec(x);
      const Eigen::Matrix4d F = predict_object_jacobian(st, params.dt);
      x = predict_object(st, params.dt).vec();
      P = F * P * F.transpose() + Q;
      run.displacement_abs += std::hypot(x[0] - meas[i].x, x[1] - meas[i].y);
      ++run.n_displacement;
      if (!std::isnan(meas[i].speed)) {
        run.speed_sq += (x[3] - meas[i].speed) * (x[3] - meas[i].speed);
        ++run.n_speed;
      }
    }
    std::vector<int> rows = {0, 1};
    std::vector<double> z = {meas[i].x, meas[i].y};
    std::vector<double> var = {params.object_meas[0], params.object_meas[1]};
    if (!std::isnan(meas[i].speed)) {
      rows.push_back(3);
      z.push_back(meas[i].speed);
      var.push_back(params.object_meas[2]);
    }
    kalman_update<4>(x, P, rows, z, var);
    x[2] = wrap_angle(x[2]);
    x[3] = std::clamp(x[3], -params.max_speed, params.max_speed);
    run.states.push_back(ObjectState::from_vec(x));
  }
  return run;
}

AgentTrack reconstruct_object(const AgentTrack& raw_relative,
                              const AgentTrack& subject_recon,
                              const EkfParams& params) {
  params.validate();
  const auto meas = object_global_measurements(raw_relative, subject_recon);
  if (meas.size() < 2) {
    throw ReconstructionError("object track " + raw_relative.agent_id +
                              ": observed fewer than 2 frames");
  }
  const ObjectRun run = run_object_filter(meas, params);
  const auto& states = run.states;

  AgentTrack out = raw_relative;
  out.frames.clear();
  out.frames.reserve(states.size());
  for (size_t i = 0; i < states.size(); ++i) {
    TrajectoryFrame f;
    f.time = meas[i].time;
    f.x = states[i].x;
    f.y = states[i].y;
    f.heading = states[i].psi;
    f.speed = states[i].v;
    const size_t j = (i + 1 < states.size()) ? i + 1 : i;
    const size_t k = (i + 1 < states.size()) ? i : i - 1;
    f.yaw_rate = wrap_angle(states[j].psi - states[k].psi) / params.dt;
    f.accel = kNaN;
    out.frames.push_back(f);
  }
  return out;
}

Event reconstruct_event(const Event& raw, const EkfParams& params) {
  Event out = raw;
  out.tracks.clear();
  const AgentTrack subject = reconstruct_subject(raw.subject(), params);
  out.tracks.push_back(subject);
  for (const AgentTrack* obj : raw.objects()) {
    out.tracks.push_back(reconstruct_object(*obj, subject, params));
  }
  return out;
}

double ReconstructionErrors::normalized_sum(const ReconstructionErrors& scale) const {
  double total = 0.0;
  const auto add = [&total](double value, double s) {
    if (s > 0.0) total += value / s;
  };
  add(subject_speed_rmse, scale.subject_speed_rmse);
  add(subject_yaw_rmse, scale.subject_yaw_rmse);
  add(subject_accel_rmse, scale.subject_accel_rmse);
  add(object_speed_rmse, scale.object_speed_rmse);
  add(object_displacement_mae, scale.object_displacement_mae);
  return total;
}

ReconstructionErrors reconstruction_errors(const Event& raw, const Event& recon,
                                           const EkfParams& params) {
  (void)params;
  double se_v = 0, se_w = 0, se_a = 0, se_ov = 0, ae_d = 0;
  long n_v = 0, n_w = 0, n_a = 0, n_ov = 0, n_d = 0;

  const auto& raw_subj = raw.subject();
  const auto& rec_subj = recon.subject();
  for (const auto& f : raw_subj.frames) {
    const TrajectoryFrame* r = rec_subj.frame_at(f.time);
    if (r == nullptr) continue;
    if (!std::isnan(f.speed)) { se_v += (r->speed - f.speed) * (r->speed - f.speed); ++n_v; }
    if (!std::isnan(f.yaw_rate)) { se_w += (r->yaw_rate - f.yaw_rate) * (r->yaw_rate - f.yaw_rate); ++n_w; }
    if (!std::isnan(f.accel)) { se_a += (r->accel - f.accel) * (r->accel - f.accel); ++n_a; }
  }

  for (const AgentTrack* raw_obj : raw.objects()) {
    const AgentTrack* rec_obj = recon.track_by_id(raw_obj->agent_id);
    if (rec_obj == nullptr) continue;
    const auto meas = object_global_measurements(*raw_obj, rec_subj);
    for (const auto& m : meas) {
      const TrajectoryFrame* r = rec_obj->frame_at(m.time);
      if (r == nullptr) continue;
      if (!std::isnan(m.speed)) { se_ov += (r->speed - m.speed) * (r->speed - m.speed); ++n_ov; }
      ae_d += std::hypot(r->x - m.x, r->y - m.y);
      ++n_d;
    }
  }

  ReconstructionErrors e;
  if (n_v > 0) e.subject_speed_rmse = std::sqrt(se_v / n_v);
  if (n_w > 0) e.subject_yaw_rmse = std::sqrt(se_w / n_w);
  if (n_a > 0) e.subject_accel_rmse = std::sqrt(se_a / n_a);
  if (n_ov > 0) e.object_speed_rmse = std::sqrt(se_ov / n_ov);
  if (n_d > 0) e.object_displacement_mae = ae_d / n_d;
  return e;
}

ReconstructionErrors tuning_errors(const Event& raw, const EkfParams& params) {
  params.validate();
  const SubjectRun subj_run = reconstruct_subject_run(raw.subject(), params);
  AgentTrack subj = raw.subject();
  for (size_t i = 0; i < subj.frames.size(); ++i) {
    subj.frames[i].x = subj_run.states[i].x;
    subj.frames[i].y = subj_run.states[i].y;
    subj.frames[i].heading = subj_run.states[i].psi;
  }

  ReconstructionErrors e;
  const auto& inn = subj_run.innovation;
  if (inn.n_v > 0) e.subject_speed_rmse = std::sqrt(inn.v / inn.n_v);
  if (inn.n_w > 0) e.subject_yaw_rmse = std::sqrt(inn.w / inn.n_w);
  if (inn.n_a > 0) e.subject_accel_rmse = std::sqrt(inn.a / inn.n_a);

  double obj_sq = 0.0, obj_abs = 0.0;
  long n_sq = 0, n_abs = 0;
  for (const AgentTrack* obj : raw.objects()) {
    const auto meas = object_global_measurements(*obj, subj);
    if (meas.size() < 2) continue;
    const ObjectRun run = run_object_filter(meas, params);
    obj_sq += run.speed_sq;
    n_sq += run.n_speed;
    obj_abs += run.displacement_abs;
    n_abs += run.n_displacement;
  }
  if (n_sq > 0) e.object_speed_rmse = std::sqrt(obj_sq / n_sq);
  if (n_abs > 0) e.object_displacement_mae = obj_abs / n_abs;
  return e;
}

EkfParams tune_ekf_params(const std::vector<Event>& events,
                          const std::vector<EkfParams>& grid) {
  if (grid.empty()) throw ArgumentError("tune_ekf_params: empty grid");
  if (events.empty()) throw ArgumentError("tune_ekf_params: empty event set");

  std::vector<ReconstructionErrors> per_candidate;
  per_candidate.reserve(grid.size());
  for (const auto& candidate : grid) {
    ReconstructionErrors sum;
    for (const auto& event : events) {
      const ReconstructionErrors e = tuning_errors(event, candidate);
      sum.subject_speed_rmse += e.subject_speed_rmse;
      sum.subject_yaw_rmse += e.subject_yaw_rmse;
      sum.subject_accel_rmse += e.subject_accel_rmse;
      sum.object_speed_rmse += e.object_speed_rmse;
      sum.object_displacement_mae += e.object_displacement_mae;
    }
    const auto n = static_cast<double>(events.size());
    sum.subject_speed_rmse /= n;
    sum.subject_yaw_rmse /= n;
    sum.subject_accel_rmse /= n;
    sum.object_speed_rmse /= n;
    sum.object_displacement_mae /= n;
    per_candidate.push_back(sum);
  }

  ReconstructionErrors mean;
  for (const auto& e : per_candidate) {
    mean.subject_speed_rmse += e.subject_speed_rmse / grid.size();
    mean.subject_yaw_rmse += e.subject_yaw_rmse / grid.size();
    mean.subject_accel_rmse += e.subject_accel_rmse / grid.size();
    mean.object_speed_rmse += e.object_speed_rmse / grid.size();
    mean.object_displacement_mae += e.object_displacement_mae / grid.size();
  }

  size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < grid.size(); ++i) {
    const double score = per_candidate[i].normalized_sum(mean);
    if (score < best_score) {
      best_score = score;
      best = i;
    }
  }
  return grid[best];
}

}  // namespace gssm
