#include "gssm/features.hpp"

#include <cmath>

#include <json.hpp>

#include "gssm/errors.hpp"
#include "gssm/geometry.hpp"
#include "gssm/mathx.hpp"
#include "gssm/rng.hpp"

namespace gssm {

const std::vector<std::string>& current_feature_names(bool include_accel) {
  static const std::vector<std::string> base = {
      "l_i", "l_j", "half_width_sum", "speed_i", "obj_vel_local_x",
      "obj_vel_local_y", "speed_i_sq", "speed_j_sq", "rel_speed_sq",
      "signed_rel_speed", "obj_heading_angle", "rho_ij"};
  static const std::vector<std::string> with_accel = [] {
    auto v = base;
    v.push_back("accel_i");
    return v;
  }();
  return include_accel ? with_accel : base;
}

Eigen::VectorXd encode_environment(const EnvironmentTags& tags) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kEnvDim);
  int offset = 0;
  v[offset + static_cast<int>(tags.lighting)] = 1.0;
  offset += kLightingCount;
  v[offset + static_cast<int>(tags.weather)] = 1.0;
  offset += kWeatherCount;
  v[offset + static_cast<int>(tags.surface)] = 1.0;
  offset += kSurfaceCount;
  v[offset + static_cast<int>(tags.traffic_density)] = 1.0;
  return v;
}

namespace {

Vec2 velocity_of(const TrajectoryFrame& f) {
  return Vec2(f.speed * std::cos(f.heading), f.speed * std::sin(f.heading));
}

// Axis of the subject-aligned local frame: the velocity direction, or the
// heading when the subject is (numerically) stationary.
Vec2 subject_axis(const TrajectoryFrame& f) {
  const Vec2 v = velocity_of(f);
  if (v.norm() < 1e-9) return Vec2(std::cos(f.heading), std::sin(f.heading));
  return v;
}

// Episode of `agent_id` covering time t, or nullptr.
const AgentTrack* episode_covering(const Event& event, const std::string& agent_id, double t) {
  for (const auto& track : event.tracks) {
    if (track.agent_id != agent_id) continue;
    if (track.frame_at(t) != nullptr) return &track;
  }
  return nullptr;
}

}  // namespace

InteractionSample extract_features(const Event& event, const std::string& subject_id,
                                   const std::string& object_id, double t,
                                   const FeatureOptions& options) {
  const AgentTrack* subj = episode_covering(event, subject_id, t);
  const AgentTrack* obj = episode_covering(event, object_id, t);
  if (subj == nullptr) {
    throw FeatureError("event " + event.event_id + ": subject " + subject_id +
                       " not observed at t=" + format_double(t));
  }
  if (obj == nullptr) {
    throw FeatureError("event " + event.event_id + ": object " + object_id +
                       " not observed at t=" + format_double(t));
  }

  const TrajectoryFrame& fi = *subj->frame_at(t);
  const TrajectoryFrame& fj = *obj->frame_at(t);
  const Vec2 pos_i(fi.x, fi.y);
  const Vec2 pos_j(fj.x, fj.y);
  const Vec2 v_i = velocity_of(fi);
  const Vec2 v_j = velocity_of(fj);

  InteractionSample out;
  out.event_id = event.event_id;
  out.subject_id = subject_id;
  out.object_id = object_id;
  out.time = t;

  const PolarSpacing polar = relative_polar_spacing(pos_i, v_i, fi.heading, pos_j, v_j);
  out.spacing = polar.s;

  const Vec2 axis = subject_axis(fi);
  const Vec2 vj_local = to_local_frame(v_j, axis);
  const double axis_angle = std::atan2(axis.y(), axis.x());
  const double heading_angle = wrap_angle(fj.heading - axis_angle);
  const double dv = fi.speed - fj.speed;
  const double sgn = dv > 0 ? 1.0 : (dv < 0 ? -1.0 : 0.0);

  out.current = {subj->length,
                 obj->length,
                 0.5 * (subj->width + obj->width),
                 fi.speed,
                 vj_local.x(),
                 vj_local.y(),
                 fi.speed * fi.speed,
                 fj.speed * fj.speed,
                 polar.rel_speed * polar.rel_speed,
                 polar.rel_speed * sgn,
                 heading_angle,
                 polar.rho};
  if (options.include_accel) {
    out.current.push_back(std::isnan(fi.accel) ? 0.0 : fi.accel);
  }

  out.env_onehot = encode_environment(event.environment);

  out.history = Eigen::MatrixXd::Zero(kHistorySteps, kHistoryChannels);
  out.history_mask = Eigen::MatrixXd::Ones(kHistorySteps, kHistoryChannels);
  for (int k = 0; k < kHistorySteps; ++k) {
    double tk = t - 0.1 * (kHistorySteps - k);
    const TrajectoryFrame* hi = subj->frame_at(tk);
    const TrajectoryFrame* hj = obj->frame_at(tk);
    if (hi == nullptr || hj == nullptr) {
      // Pad the old end with the earliest jointly observed step.
      const double t_min = std::max(subj->start_time(), obj->start_time());
      hi = subj->frame_at(std::max(tk, t_min));
      hj = obj->frame_at(std::max(tk, t_min));
      if (hi == nullptr || hj == nullptr) {
        throw FeatureError("event " + event.event_id + ": history gap for pair " +
                           subject_id + "/" + object_id + " at t=" + format_double(t));
      }
      out.history_padded = true;
    }
    const Vec2 axis_k = subject_axis(*hi);
    const Vec2 vj_k = to_local_frame(velocity_of(*hj), axis_k);
    out.history(k, 0) = hi->yaw_rate;
    out.history(k, 1) = hi->speed;
    out.history(k, 2) = vj_k.x();
    out.history(k, 3) = vj_k.y();
  }

  if (options.training_mode && options.dropout_p > 0.0) {
    Rng rng(options.seed);
    for (int k = 0; k < kHistorySteps; ++k) {
      for (int c = 0; c < kHistoryChannels; ++c) {
        if (rng.bernoulli(options.dropout_p)) {
          out.history_mask(k, c) = 0.0;
          out.history(k, c) = 0.0;
        }
      }
    }
  }
  return out;
}

std::string sample_to_jsonl(const InteractionSample& sample) {
  nlohmann::json j;
  j["event_id"] = sample.event_id;
  j["subject_id"] = sample.subject_id;
  j["object_id"] = sample.object_id;
  j["time"] = sample.time;
  j["s"] = sample.spacing;
  j["x_c"] = sample.current;
  std::vector<int> env_hot;
  for (int i = 0; i < sample.env_onehot.size(); ++i) {
    if (sample.env_onehot[i] != 0.0) env_hot.push_back(i);
  }
  j["x_e_hot"] = env_hot;
  std::vector<std::vector<double>> hist(kHistorySteps);
  std::vector<int> dropped;
  for (int k = 0; k < kHistorySteps; ++k) {
    hist[k].resize(kHistoryChannels);
    for (int c = 0; c < kHistoryChannels; ++c) {
      hist[k][c] = sample.history(k, c);
      if (sample.history_mask(k, c) == 0.0) dropped.push_back(k * kHistoryChannels + c);
    }
  }
  j["x_t"] = hist;
  j["x_t_dropped"] = dropped;
  j["padded"] = sample.history_padded;
  return j.dump();
}

InteractionSample sample_from_jsonl(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad sample line: ") + e.what());
  }
  InteractionSample s;
  s.event_id = j.at("event_id").get<std::string>();
  s.subject_id = j.at("subject_id").get<std::string>();
  s.object_id = j.at("object_id").get<std::string>();
  s.time = j.at("time").get<double>();
  s.spacing = j.at("s").get<double>();
  s.current = j.at("x_c").get<std::vector<double>>();
  s.env_onehot = Eigen::VectorXd::Zero(kEnvDim);
  for (int idx : j.at("x_e_hot").get<std::vector<int>>()) {
    if (idx < 0 || idx >= kEnvDim) throw SchemaError("sample env index out of range");
    s.env_onehot[idx] = 1.0;
  }
  const auto hist = j.at("x_t").get<std::vector<std::vector<double>>>();
  if (hist.size() != kHistorySteps) throw SchemaError("sample history step count mismatch");
  s.history = Eigen::MatrixXd::Zero(kHistorySteps, kHistoryChannels);
  s.history_mask = Eigen::MatrixXd::Ones(kHistorySteps, kHistoryChannels);
  for (int k = 0; k < kHistorySteps; ++k) {
    if (hist[k].size() != kHistoryChannels) throw SchemaError("sample history channel mismatch");
    for (int c = 0; c < kHistoryChannels; ++c) s.history(k, c) = hist[k][c];
  }
  for (int flat : j.at("x_t_dropped").get<std::vector<int>>()) {
    const int k = flat / kHistoryChannels;
    const int c = flat % kHistoryChannels;
    if (k < 0 || k >= kHistorySteps) throw SchemaError("sample mask index out of range");
    s.history_mask(k, c) = 0.0;
  }
  s.history_padded = j.value("padded", false);
  return s;
}

}  // namespace gssm
