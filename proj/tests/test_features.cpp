#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gssm/errors.hpp"
#include "gssm/features.hpp"
#include "gssm/mathx.hpp"
#include "gssm/rng.hpp"

using namespace gssm;

namespace {

AgentTrack make_track(const std::string& id, Role role, int n,
                      const std::function<TrajectoryFrame(double)>& at) {
  AgentTrack t;
  t.agent_id = id;
  t.role = role;
  t.length = role == Role::kSubject ? 4.5 : 4.0;
  t.width = 1.8;
  for (int k = 0; k < n; ++k) {
    TrajectoryFrame f = at(k * kDt);
    f.time = k * kDt;
    t.frames.push_back(f);
  }
  return t;
}

Event two_agent_event(double subj_speed, double obj_speed, double obj_heading = 0.0) {
  Event event;
  event.event_id = "ev";
  event.tracks.push_back(make_track("subject", Role::kSubject, 40, [&](double t) {
    TrajectoryFrame f;
    f.x = subj_speed * t;
    f.y = 0;
    f.heading = 0;
    f.speed = subj_speed;
    f.yaw_rate = 0;
    f.accel = 0.5;
    return f;
  }));
  event.tracks.push_back(make_track("obj", Role::kObject, 40, [&](double t) {
    TrajectoryFrame f;
    f.x = 20.0 + obj_speed * std::cos(obj_heading) * t;
    f.y = obj_speed * std::sin(obj_heading) * t;
    f.heading = obj_heading;
    f.speed = obj_speed;
    f.yaw_rate = 0;
    f.accel = std::numeric_limits<double>::quiet_NaN();
    return f;
  }));
  return event;
}

int feature_index(const std::string& name, bool accel = false) {
  const auto& names = current_feature_names(accel);
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

TEST_CASE("static identical agents have zero signed relative speed") {
  const Event event = two_agent_event(0.0, 0.0);
  const auto s = extract_features(event, "subject", "obj", 3.0, {});
  CHECK(s.current[feature_index("signed_rel_speed")] == 0.0);
  CHECK(s.current[feature_index("rel_speed_sq")] == 0.0);
}

TEST_CASE("faster subject gives positive signed relative speed") {
  const Event event = two_agent_event(10.0, 5.0);
  const auto s = extract_features(event, "subject", "obj", 3.0, {});
  CHECK(s.current[feature_index("signed_rel_speed")] == doctest::Approx(5.0));
  CHECK(s.current[feature_index("speed_i")] == doctest::Approx(10.0));
  CHECK(s.current[feature_index("speed_j_sq")] == doctest::Approx(25.0));
}

TEST_CASE("dropout mask is reproducible and hits the target rate") {
  const Event event = two_agent_event(10.0, 5.0);
  FeatureOptions opt;
  opt.training_mode = true;
  opt.dropout_p = 0.2;

  long dropped = 0, total = 0;
  for (int i = 0; i < 100; ++i) {
    opt.seed = mix_seed(99, i);
    const auto a = extract_features(event, "subject", "obj", 3.0, opt);
    const auto b = extract_features(event, "subject", "obj", 3.0, opt);
    CHECK((a.history_mask - b.history_mask).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.history - b.history).cwiseAbs().maxCoeff() == 0.0);
    dropped += static_cast<long>((1.0 - a.history_mask.array()).sum());
    total += a.history_mask.size();
  }
  // Oracle: the same seeded Bernoulli stream drawn directly.
  long expected = 0;
  for (int i = 0; i < 100; ++i) {
    Rng rng(mix_seed(99, i));
    for (int v = 0; v < kHistorySteps * kHistoryChannels; ++v) {
      if (rng.bernoulli(0.2)) ++expected;
    }
  }
  CHECK(dropped == expected);
  const double rate = static_cast<double>(dropped) / static_cast<double>(total);
  CHECK(std::fabs(rate - 0.2) < 0.02);
}

TEST_CASE("masked history values are exactly zero") {
  const Event event = two_agent_event(10.0, 5.0);
  FeatureOptions opt;
  opt.training_mode = true;
  opt.dropout_p = 0.5;
  opt.seed = 1234;
  const auto s = extract_features(event, "subject", "obj", 3.0, opt);
  bool any = false;
  for (int k = 0; k < kHistorySteps; ++k) {
    for (int c = 0; c < kHistoryChannels; ++c) {
      if (s.history_mask(k, c) == 0.0) {
        any = true;
        CHECK(s.history(k, c) == 0.0);
      }
    }
  }
  CHECK(any);
}

TEST_CASE("environment one-hot layout follows the category order") {
  EnvironmentTags tags;
  tags.lighting = Lighting::kDaylight;
  tags.weather = Weather::kNoAdverse;
  tags.surface = Surface::kDry;
  tags.traffic_density = TrafficDensity::kLosA1;
  const auto v = encode_environment(tags);
  CHECK(v[3] == 1.0);                                   // daylight
  CHECK(v[kLightingCount + 0] == 1.0);                  // no adverse
  CHECK(v[kLightingCount + kWeatherCount + 0] == 1.0);  // dry
  CHECK(v[kLightingCount + kWeatherCount + kSurfaceCount + 0] == 1.0);

  EnvironmentTags unknown;  // default-constructed: everything unknown
  const auto u = encode_environment(unknown);
  CHECK(u[kLightingCount - 1] == 1.0);
  CHECK(u[kLightingCount + kWeatherCount - 1] == 1.0);
  CHECK(u[kLightingCount + kWeatherCount + kSurfaceCount - 1] == 1.0);
  CHECK(u[kEnvDim - 1] == 1.0);

  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    EnvironmentTags t;
    t.lighting = static_cast<Lighting>(rng.uniform_index(kLightingCount));
    t.weather = static_cast<Weather>(rng.uniform_index(kWeatherCount));
    t.surface = static_cast<Surface>(rng.uniform_index(kSurfaceCount));
    t.traffic_density = static_cast<TrafficDensity>(rng.uniform_index(kTrafficCount));
    const auto e = encode_environment(t);
    CHECK(e.segment(0, kLightingCount).sum() == 1.0);
    CHECK(e.segment(kLightingCount, kWeatherCount).sum() == 1.0);
    CHECK(e.segment(kLightingCount + kWeatherCount, kSurfaceCount).sum() == 1.0);
    CHECK(e.segment(kLightingCount + kWeatherCount + kSurfaceCount, kTrafficCount).sum() == 1.0);
  }
}

TEST_CASE("global rotation leaves speed features invariant and shifts angles consistently") {
  const double angle = 0.7;
  Event base = two_agent_event(10.0, 6.0, 0.3);
  Event rotated = base;
  for (auto& track : rotated.tracks) {
    for (auto& f : track.frames) {
      const double x = f.x, y = f.y;
      f.x = std::cos(angle) * x - std::sin(angle) * y;
      f.y = std::sin(angle) * x + std::cos(angle) * y;
      f.heading = wrap_angle(f.heading + angle);
    }
  }
  const auto a = extract_features(base, "subject", "obj", 3.0, {});
  const auto b = extract_features(rotated, "subject", "obj", 3.0, {});
  CHECK(a.spacing == doctest::Approx(b.spacing).epsilon(1e-9));
  for (const char* name : {"speed_i", "speed_i_sq", "speed_j_sq", "rel_speed_sq",
                           "signed_rel_speed", "obj_vel_local_x", "obj_vel_local_y",
                           "obj_heading_angle", "rho_ij"}) {
    const int idx = feature_index(name);
    CHECK(a.current[idx] == doctest::Approx(b.current[idx]).epsilon(1e-9));
  }
}

TEST_CASE("constant kinematics yield 25 identical history rows at inference") {
  const Event event = two_agent_event(10.0, 5.0);
  const auto s = extract_features(event, "subject", "obj", 3.0, {});
  for (int k = 1; k < kHistorySteps; ++k) {
    for (int c = 0; c < kHistoryChannels; ++c) {
      CHECK(s.history(k, c) == doctest::Approx(s.history(0, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("squared-speed redundancy holds") {
  const Event event = two_agent_event(12.5, 7.0, -0.4);
  const auto s = extract_features(event, "subject", "obj", 3.5, {});
  const double v = s.current[feature_index("speed_i")];
  CHECK(std::fabs(s.current[feature_index("speed_i_sq")] - v * v) < 1e-9);
}

TEST_CASE("short history pads at the old end and sets the flag") {
  const Event event = two_agent_event(10.0, 5.0);
  const auto s = extract_features(event, "subject", "obj", 1.0, {});  // only 1 s of history
  CHECK(s.history_padded);
  // Inference at an uncovered time fails loudly.
  CHECK_THROWS_AS(extract_features(event, "subject", "obj", 100.0, {}), FeatureError);
}

TEST_CASE("accel feature appears only when requested") {
  const Event event = two_agent_event(10.0, 5.0);
  FeatureOptions with;
  with.include_accel = true;
  const auto a = extract_features(event, "subject", "obj", 3.0, with);
  const auto b = extract_features(event, "subject", "obj", 3.0, {});
  CHECK(a.current.size() == 13);
  CHECK(b.current.size() == 12);
  CHECK(a.current.back() == doctest::Approx(0.5));
}

TEST_CASE("jsonl round trip preserves the sample") {
  const Event event = two_agent_event(9.0, 4.0, 0.2);
  FeatureOptions opt;
  opt.training_mode = true;
  opt.dropout_p = 0.3;
  opt.seed = 77;
  const auto s = extract_features(event, "subject", "obj", 3.0, opt);
  const auto restored = sample_from_jsonl(sample_to_jsonl(s));
  CHECK(restored.event_id == s.event_id);
  CHECK(restored.spacing == s.spacing);
  REQUIRE(restored.current.size() == s.current.size());
  for (size_t i = 0; i < s.current.size(); ++i) CHECK(restored.current[i] == s.current[i]);
  CHECK((restored.env_onehot - s.env_onehot).cwiseAbs().maxCoeff() == 0.0);
  CHECK((restored.history - s.history).cwiseAbs().maxCoeff() == 0.0);
  CHECK((restored.history_mask - s.history_mask).cwiseAbs().maxCoeff() == 0.0);
}
