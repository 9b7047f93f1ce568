#include "gssm/synth.hpp"

#include <cmath>
#include <fstream>

#include "gssm/errors.hpp"
#include "gssm/event_io.hpp"
#include "gssm/mathx.hpp"
#include "gssm/rng.hpp"

namespace gssm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ObjectPlan {
  std::string id;
  double bearing = 0.0;    // fixed ray from the subject, global frame
  double level = 0.0;      // z draw: gap = exp(mu + sigma * z(t))
  double wiggle_phase = 0.0;
  double wiggle_period = 10.0;
  double length = 4.5, width = 1.9;
  bool conflict = false;
};

struct EventPlan {
  std::string id;
  bool conflict = false;
  Severity severity = Severity::kBaseline;
  double duration = 0.0;
  double impact = 0.0;
  double mu = 0.0;
  double subject_speed = 0.0;
  bool wet = false;
  double dip_spacing = 0.0;
  EnvironmentTags env;
  std::vector<ObjectPlan> objects;
};

double gap_level(const GeneratorSpec& spec, const ObjectPlan& obj, double t) {
  return obj.level + spec.wiggle_amplitude *
                         std::sin(kTwoPi * t / obj.wiggle_period + obj.wiggle_phase);
}

// Gap of the conflicting object: pre-dip process, a two-stage cosine descent
// to the target percentile at impact, a short recovery, then the process
// again. The danger period [impact-4.5, impact+0.5] stays below the median.
double conflict_gap(const GeneratorSpec& spec, const EventPlan& ev, const ObjectPlan& obj,
                    double t) {
  const double median = std::exp(ev.mu);
  const double dip_start = ev.impact - 6.0;
  const double knee = ev.impact - 4.5;
  const double dip_end = ev.impact + 2.0;
  const auto process = [&](double at) {
    return std::exp(ev.mu + spec.sigma * gap_level(spec, obj, at));
  };
  if (t < dip_start || t > dip_end) return process(t);
  const double knee_gap = 0.90 * median;
  if (t < knee) {
    const double tau = (t - dip_start) / (knee - dip_start);
    const double from = process(dip_start);
    return knee_gap + (from - knee_gap) * 0.5 * (1.0 + std::cos(kPi * tau));
  }
  if (t <= ev.impact) {
    const double tau = (t - knee) / (ev.impact - knee);
    return ev.dip_spacing + (knee_gap - ev.dip_spacing) * 0.5 * (1.0 + std::cos(kPi * tau));
  }
  const double tau = (t - ev.impact) / (dip_end - ev.impact);
  const double to = std::min(process(dip_end), 0.95 * median);
  return ev.dip_spacing + (to - ev.dip_spacing) * 0.5 * (1.0 - std::cos(kPi * tau));
}

}  // namespace

void GeneratorSpec::validate() const {
  if (n_events < 1) throw GeneratorError("spec: n_events must be >= 1");
  if (!(sigma > 0.0)) throw GeneratorError("spec: sigma must be positive");
  if (!(speed_max > speed_min)) throw GeneratorError("spec: speed range empty");
  if (objects_per_event < 1) throw GeneratorError("spec: need at least one object");
  if (!(conflict_rate >= 0.0 && conflict_rate <= 1.0)) {
    throw GeneratorError("spec: conflict_rate outside [0,1]");
  }
  if (conflict_rate > 0.0 && conflict_depth_quantile >= 0.5) {
    throw GeneratorError("spec: conflict depth must be below the median");
  }
  if (!(conflict_depth_quantile > 0.0)) {
    throw GeneratorError("spec: conflict depth quantile must be positive");
  }
  if (duration < sample_start + 1.0 || conflict_duration < 12.0) {
    throw GeneratorError("spec: durations too short");
  }
}

SyntheticDataset generate_dataset(const GeneratorSpec& spec) {
  spec.validate();
  SyntheticDataset out;
  nlohmann::json events_gt;

  const double z_depth = normal_quantile(spec.conflict_depth_quantile);
  const double z_floor = spec.safe_floor_quantile > 0.0
                             ? normal_quantile(spec.safe_floor_quantile)
                             : -std::numeric_limits<double>::infinity();

  for (int e = 0; e < spec.n_events; ++e) {
    Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(e)));
    EventPlan plan;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "ev%05d", e);
    plan.id = idbuf;
    plan.conflict = rng.uniform() < spec.conflict_rate;
    plan.duration = plan.conflict ? spec.conflict_duration : spec.duration;
    plan.impact = plan.conflict ? plan.duration - 4.0 : 0.0;
    plan.subject_speed = rng.uniform(spec.speed_min, spec.speed_max);
    plan.wet = rng.uniform() < spec.wet_probability;
    plan.mu = spec.mu_base +
              spec.speed_coeff * (plan.subject_speed - spec.speed_mean()) / spec.speed_sd() +
              (plan.wet ? spec.wet_coeff : 0.0);
    plan.dip_spacing = std::exp(plan.mu + spec.sigma * z_depth);

    plan.env.surface = plan.wet ? Surface::kWet : Surface::kDry;
    plan.env.lighting = static_cast<Lighting>(rng.uniform_index(kLightingCount));
    plan.env.weather = plan.wet && rng.bernoulli(0.7)
                           ? Weather::kRainingSleeting
                           : static_cast<Weather>(rng.uniform_index(kWeatherCount));
    plan.env.traffic_density = static_cast<TrafficDensity>(rng.uniform_index(kTrafficCount));

    for (int o = 0; o < spec.objects_per_event; ++o) {
      ObjectPlan obj;
      obj.id = "obj" + std::to_string(o + 1);
      obj.bearing = rng.uniform(-kPi / 3.0, kPi / 3.0);
      obj.conflict = plan.conflict && o == 0;
      if (obj.conflict) {
        // Comfortable pre-danger gap so risk clearly rises into the dip.
        obj.level = std::clamp(rng.normal(0.5, 0.3), 0.0, 0.8);
      } else {
        obj.level = rng.normal();
        if (spec.safe_floor_quantile > 0.0) {
          obj.level = std::max(obj.level, z_floor + spec.wiggle_amplitude);
        }
        obj.level = std::min(obj.level, 2.5);
      }
      obj.wiggle_phase = rng.uniform(0.0, kTwoPi);
      obj.wiggle_period = rng.uniform(8.0, 12.0);
      obj.length = rng.uniform(3.5, 5.5);
      obj.width = rng.uniform(1.6, 2.2);
      plan.objects.push_back(obj);
    }

    const auto steps = static_cast<long>(std::llround(plan.duration / kDt));
    const double subj_len = rng.uniform(4.2, 5.2);
    const double subj_wid = rng.uniform(1.7, 2.1);
    const bool head_missing = rng.bernoulli(spec.head_missing_rate);

    Event truth;
    truth.event_id = plan.id;
    truth.environment = plan.env;
    Event raw = truth;
    if (plan.conflict) {
      const Severity sev = (e % 2 == 0) ? Severity::kCrash : Severity::kNearCrash;
      truth.severity = raw.severity = sev;
      EventAnnotations ann;
      ann.start_time = plan.impact - 4.5;
      ann.impact_time = plan.impact;
      ann.end_time = plan.impact + 1.0;
      ann.reaction_time = plan.impact - 1.0;
      const double b = std::fabs(plan.objects.front().bearing);
      ann.event_type = b < 0.26   ? EventType::kRearEnd
                       : b < 0.70 ? EventType::kAdjacentLane
                                  : EventType::kCrossingTurning;
      truth.annotations = raw.annotations = ann;
    }

    AgentTrack subj_truth;
    subj_truth.agent_id = "subject";
    subj_truth.role = Role::kSubject;
    subj_truth.length = subj_len;
    subj_truth.width = subj_wid;
    AgentTrack subj_raw = subj_truth;
    for (long k = 0; k <= steps; ++k) {
      const double t = k * kDt;
      TrajectoryFrame f;
      f.time = t;
      f.x = plan.subject_speed * t;
      f.y = 0.0;
      f.heading = 0.0;
      f.speed = plan.subject_speed;
      f.yaw_rate = 0.0;
      f.accel = 0.0;
      subj_truth.frames.push_back(f);

      TrajectoryFrame r;
      r.time = t;
      r.x = 0.0;
      r.y = 0.0;
      r.heading = 0.0;
      r.speed = (head_missing && t < 0.6 - 1e-9)
                    ? kNaN
                    : plan.subject_speed + rng.normal(0.0, spec.speed_noise);
      r.yaw_rate = rng.normal(0.0, spec.yaw_noise);
      r.accel = rng.normal(0.0, spec.accel_noise);
      subj_raw.frames.push_back(r);
    }
    truth.tracks.push_back(subj_truth);
    raw.tracks.push_back(subj_raw);

    for (const auto& obj : plan.objects) {
      // True centroid path: subject position plus the gap along a fixed ray.
      std::vector<double> gx(steps + 1), gy(steps + 1);
      for (long k = 0; k <= steps; ++k) {
        const double t = k * kDt;
        const double gap = obj.conflict
                               ? conflict_gap(spec, plan, obj, t)
                               : std::exp(plan.mu + spec.sigma * gap_level(spec, obj, t));
        gx[k] = plan.subject_speed * t + gap * std::cos(obj.bearing);
        gy[k] = gap * std::sin(obj.bearing);
      }
      AgentTrack obj_truth;
      obj_truth.agent_id = obj.id;
      obj_truth.role = Role::kObject;
      obj_truth.length = obj.length;
      obj_truth.width = obj.width;
      AgentTrack obj_raw = obj_truth;
      for (long k = 0; k <= steps; ++k) {
        const double t = k * kDt;
        const long kn = std::min(k + 1, steps);
        const long kp = (kn == k) ? k - 1 : k;
        const double vx = (gx[kn] - gx[kp]) / kDt;
        const double vy = (gy[kn] - gy[kp]) / kDt;
        TrajectoryFrame f;
        f.time = t;
        f.x = gx[k];
        f.y = gy[k];
        f.heading = std::atan2(vy, vx);
        f.speed = std::hypot(vx, vy);
        f.accel = kNaN;
        obj_truth.frames.push_back(f);
      }
      for (long k = 0; k <= steps; ++k) {
        obj_truth.frames[k].yaw_rate =
            (k + 1 <= steps)
                ? wrap_angle(obj_truth.frames[k + 1].heading - obj_truth.frames[k].heading) / kDt
                : obj_truth.frames[k - 1].yaw_rate;
      }

      for (long k = 0; k <= steps; ++k) {
        const auto& f = obj_truth.frames[k];
        // Detected nearest edge: rear when the object points away from the
        // subject, front otherwise; mirrors the reconstruction's correction.
        const double ux = f.x - plan.subject_speed * f.time;
        const double uy = f.y;
        const double hx = std::cos(f.heading);
        const double hy = std::sin(f.heading);
        const double sign = (hx * ux + hy * uy >= 0.0) ? 1.0 : -1.0;
        TrajectoryFrame r;
        r.time = f.time;
        r.x = ux - sign * 0.5 * obj.length * hx + rng.normal(0.0, spec.position_noise);
        r.y = uy - sign * 0.5 * obj.length * hy + rng.normal(0.0, spec.position_noise);
        r.heading = wrap_angle(f.heading + rng.normal(0.0, spec.heading_noise));
        r.speed = std::max(0.0, f.speed + rng.normal(0.0, spec.speed_noise));
        r.yaw_rate = kNaN;
        r.accel = kNaN;
        obj_raw.frames.push_back(r);
      }
      truth.tracks.push_back(std::move(obj_truth));
      raw.tracks.push_back(std::move(obj_raw));
    }

    nlohmann::json gt;
    gt["mu"] = plan.mu;
    gt["sigma"] = spec.sigma;
    gt["subject_speed"] = plan.subject_speed;
    gt["wet"] = plan.wet;
    std::vector<double> sample_times;
    for (double t = spec.sample_start; t <= plan.duration - 2.0 * kDt + 1e-9;
         t += spec.sample_stride) {
      sample_times.push_back(std::round(t / kDt) * kDt);
    }
    gt["sample_times"] = sample_times;
    if (plan.conflict) {
      gt["conflict"] = {{"object_id", plan.objects.front().id},
                        {"impact_time", plan.impact},
                        {"dip_spacing", plan.dip_spacing},
                        {"depth_quantile", spec.conflict_depth_quantile}};
    } else {
      gt["conflict"] = nullptr;
    }
    events_gt[plan.id] = std::move(gt);

    out.truth_events.push_back(std::move(truth));
    out.events.push_back(std::move(raw));
  }

  out.ground_truth["closed_form"] = {
      {"mu_base", spec.mu_base},
      {"speed_coeff", spec.speed_coeff},
      {"wet_coeff", spec.wet_coeff},
      {"sigma", spec.sigma},
      {"speed_mean", spec.speed_mean()},
      {"speed_sd", spec.speed_sd()},
      {"form", "mu = mu_base + speed_coeff*(v_subject - speed_mean)/speed_sd "
               "+ wet_coeff*[surface == wet]"}};
  out.ground_truth["spec"] = generator_spec_to_json(spec);
  out.ground_truth["events"] = std::move(events_gt);
  return out;
}

void write_dataset(const SyntheticDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& event : dataset.events) {
    save_event(event, dir / (event.event_id + ".json"));
  }
  std::ofstream gt(dir / "ground_truth.json");
  if (!gt) throw Error("cannot write ground_truth.json under " + dir.string());
  gt << dataset.ground_truth.dump(2) << "\n";
}

nlohmann::json generator_spec_to_json(const GeneratorSpec& s) {
  return nlohmann::json{{"seed", s.seed},
                        {"n_events", s.n_events},
                        {"mu_base", s.mu_base},
                        {"speed_coeff", s.speed_coeff},
                        {"wet_coeff", s.wet_coeff},
                        {"sigma", s.sigma},
                        {"speed_min", s.speed_min},
                        {"speed_max", s.speed_max},
                        {"wet_probability", s.wet_probability},
                        {"objects_per_event", s.objects_per_event},
                        {"duration", s.duration},
                        {"conflict_duration", s.conflict_duration},
                        {"sample_start", s.sample_start},
                        {"sample_stride", s.sample_stride},
                        {"conflict_rate", s.conflict_rate},
                        {"conflict_depth_quantile", s.conflict_depth_quantile},
                        {"safe_floor_quantile", s.safe_floor_quantile},
                        {"wiggle_amplitude", s.wiggle_amplitude},
                        {"position_noise", s.position_noise},
                        {"speed_noise", s.speed_noise},
                        {"yaw_noise", s.yaw_noise},
                        {"accel_noise", s.accel_noise},
                        {"heading_noise", s.heading_noise},
                        {"head_missing_rate", s.head_missing_rate}};
}

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  GeneratorSpec s;
  s.seed = j.value("seed", s.seed);
  s.n_events = j.value("n_events", s.n_events);
  s.mu_base = j.value("mu_base", s.mu_base);
  s.speed_coeff = j.value("speed_coeff", s.speed_coeff);
  s.wet_coeff = j.value("wet_coeff", s.wet_coeff);
  s.sigma = j.value("sigma", s.sigma);
  s.speed_min = j.value("speed_min", s.speed_min);
  s.speed_max = j.value("speed_max", s.speed_max);
  s.wet_probability = j.value("wet_probability", s.wet_probability);
  s.objects_per_event = j.value("objects_per_event", s.objects_per_event);
  s.duration = j.value("duration", s.duration);
  s.conflict_duration = j.value("conflict_duration", s.conflict_duration);
  s.sample_start = j.value("sample_start", s.sample_start);
  s.sample_stride = j.value("sample_stride", s.sample_stride);
  s.conflict_rate = j.value("conflict_rate", s.conflict_rate);
  s.conflict_depth_quantile = j.value("conflict_depth_quantile", s.conflict_depth_quantile);
  s.safe_floor_quantile = j.value("safe_floor_quantile", s.safe_floor_quantile);
  s.wiggle_amplitude = j.value("wiggle_amplitude", s.wiggle_amplitude);
  s.position_noise = j.value("position_noise", s.position_noise);
  s.speed_noise = j.value("speed_noise", s.speed_noise);
  s.yaw_noise = j.value("yaw_noise", s.yaw_noise);
  s.accel_noise = j.value("accel_noise", s.accel_noise);
  s.heading_noise = j.value("heading_noise", s.heading_noise);
  s.head_missing_rate = j.value("head_missing_rate", s.head_missing_rate);
  return s;
}

}  // namespace gssm
