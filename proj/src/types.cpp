#include "gssm/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gssm/errors.hpp"
#include "gssm/mathx.hpp"

namespace gssm {

namespace {

template <typename E>
E lookup(const std::map<std::string, E>& table, const std::string& s, const char* what) {
  auto it = table.find(s);
  if (it == table.end()) throw DataError(std::string("unknown ") + what + ": '" + s + "'");
  return it->second;
}

}  // namespace

const char* to_string(Role v) {
  return v == Role::kSubject ? "subject" : "object";
}

const char* to_string(Severity v) {
  switch (v) {
    case Severity::kCrash: return "crash";
    case Severity::kNearCrash: return "near_crash";
    default: return "baseline";
  }
}

const char* to_string(Lighting v) {
  switch (v) {
    case Lighting::kDarknessLighted: return "darkness_lighted";
    case Lighting::kDarknessNotLighted: return "darkness_not_lighted";
    case Lighting::kDawn: return "dawn";
    case Lighting::kDaylight: return "daylight";
    case Lighting::kDusk: return "dusk";
    default: return "unknown";
  }
}

const char* to_string(Weather v) {
  switch (v) {
    case Weather::kNoAdverse: return "no_adverse_conditions";
    case Weather::kFog: return "fog";
    case Weather::kMistLightRain: return "mist_light_rain";
    case Weather::kRainAndFog: return "rain_and_fog";
    case Weather::kRainingSleeting: return "raining_sleeting";
    case Weather::kSnowSleetAndFog: return "snow_sleet_and_fog";
    case Weather::kSnowing: return "snowing";
    default: return "unknown";
  }
}

const char* to_string(Surface v) {
  switch (v) {
    case Surface::kDry: return "dry";
    case Surface::kGravelOverAsphalt: return "gravel_over_asphalt";
    case Surface::kGravelDirtRoad: return "gravel_dirt_road";
    case Surface::kIcy: return "icy";
    case Surface::kMuddy: return "muddy";
    case Surface::kSnowy: return "snowy";
    case Surface::kWet: return "wet";
    default: return "unknown";
  }
}

const char* to_string(TrafficDensity v) {
  switch (v) {
    case TrafficDensity::kLosA1: return "los_a1";
    case TrafficDensity::kLosA2: return "los_a2";
    case TrafficDensity::kLosB: return "los_b";
    case TrafficDensity::kLosC: return "los_c";
    case TrafficDensity::kLosD: return "los_d";
    case TrafficDensity::kLosE: return "los_e";
    case TrafficDensity::kLosF: return "los_f";
    default: return "unknown";
  }
}

const char* to_string(EventType v) {
  switch (v) {
    case EventType::kRearEnd: return "rear_end";
    case EventType::kAdjacentLane: return "adjacent_lane";
    case EventType::kCrossingTurning: return "crossing_turning";
    case EventType::kMerging: return "merging";
    case EventType::kVruAnimal: return "vru_animal";
    default: return "other";
  }
}

Role role_from_string(const std::string& s) {
  static const std::map<std::string, Role> t = {
      {"subject", Role::kSubject}, {"object", Role::kObject}};
  return lookup(t, s, "role");
}

Severity severity_from_string(const std::string& s) {
  static const std::map<std::string, Severity> t = {
      {"crash", Severity::kCrash},
      {"near_crash", Severity::kNearCrash},
      {"baseline", Severity::kBaseline}};
  return lookup(t, s, "severity");
}

Lighting lighting_from_string(const std::string& s) {
  static const std::map<std::string, Lighting> t = {
      {"darkness_lighted", Lighting::kDarknessLighted},
      {"darkness_not_lighted", Lighting::kDarknessNotLighted},
      {"dawn", Lighting::kDawn},
      {"daylight", Lighting::kDaylight},
      {"dusk", Lighting::kDusk},
      {"unknown", Lighting::kUnknown}};
  return lookup(t, s, "lighting");
}

Weather weather_from_string(const std::string& s) {
  static const std::map<std::string, Weather> t = {
      {"no_adverse_conditions", Weather::kNoAdverse},
      {"fog", Weather::kFog},
      {"mist_light_rain", Weather::kMistLightRain},
      {"rain_and_fog", Weather::kRainAndFog},
      {"raining_sleeting", Weather::kRainingSleeting},
      {"snow_sleet_and_fog", Weather::kSnowSleetAndFog},
      {"snowing", Weather::kSnowing},
      {"unknown", Weather::kUnknown}};
  return lookup(t, s, "weather");
}

Surface surface_from_string(const std::string& s) {
  static const std::map<std::string, Surface> t = {
      {"dry", Surface::kDry},
      {"gravel_over_asphalt", Surface::kGravelOverAsphalt},
      {"gravel_dirt_road", Surface::kGravelDirtRoad},
      {"icy", Surface::kIcy},
      {"muddy", Surface::kMuddy},
      {"snowy", Surface::kSnowy},
      {"wet", Surface::kWet},
      {"unknown", Surface::kUnknown}};
  return lookup(t, s, "surface");
}

TrafficDensity traffic_from_string(const std::string& s) {
  static const std::map<std::string, TrafficDensity> t = {
      {"los_a1", TrafficDensity::kLosA1}, {"los_a2", TrafficDensity::kLosA2},
      {"los_b", TrafficDensity::kLosB},   {"los_c", TrafficDensity::kLosC},
      {"los_d", TrafficDensity::kLosD},   {"los_e", TrafficDensity::kLosE},
      {"los_f", TrafficDensity::kLosF},   {"unknown", TrafficDensity::kUnknown}};
  return lookup(t, s, "traffic_density");
}

EventType event_type_from_string(const std::string& s) {
  static const std::map<std::string, EventType> t = {
      {"rear_end", EventType::kRearEnd},
      {"adjacent_lane", EventType::kAdjacentLane},
      {"crossing_turning", EventType::kCrossingTurning},
      {"merging", EventType::kMerging},
      {"vru_animal", EventType::kVruAnimal},
      {"other", EventType::kOther}};
  return lookup(t, s, "event_type");
}

double AgentTrack::start_time() const {
  return frames.empty() ? 0.0 : frames.front().time;
}

double AgentTrack::end_time() const {
  return frames.empty() ? 0.0 : frames.back().time;
}

int AgentTrack::frame_index(double t) const {
  if (frames.empty()) return -1;
  const double offset = (t - frames.front().time) / kDt;
  const auto idx = static_cast<long>(std::llround(offset));
  if (idx < 0 || idx >= static_cast<long>(frames.size())) return -1;
  if (std::fabs(frames[idx].time - t) > 1e-6) return -1;
  return static_cast<int>(idx);
}

const TrajectoryFrame* AgentTrack::frame_at(double t) const {
  const int idx = frame_index(t);
  return idx < 0 ? nullptr : &frames[idx];
}

const AgentTrack& Event::subject() const {
  for (const auto& t : tracks) {
    if (t.role == Role::kSubject) return t;
  }
  throw StructureError("event " + event_id + " has no subject track");
}

std::vector<const AgentTrack*> Event::objects() const {
  std::vector<const AgentTrack*> out;
  for (const auto& t : tracks) {
    if (t.role == Role::kObject) out.push_back(&t);
  }
  return out;
}

const AgentTrack* Event::track_by_id(const std::string& agent_id) const {
  for (const auto& t : tracks) {
    if (t.agent_id == agent_id) return &t;
  }
  return nullptr;
}

void validate_event(const Event& event) {
  int subjects = 0;
  for (const auto& t : event.tracks) {
    if (t.role == Role::kSubject) ++subjects;
    if (!(t.length > 0.0) || !(t.width > 0.0)) {
      throw DataError("agent " + t.agent_id + ": non-positive dimensions");
    }
    for (size_t i = 1; i < t.frames.size(); ++i) {
      if (t.frames[i].time <= t.frames[i - 1].time) {
        throw DataError("agent " + t.agent_id + ": non-monotonic time");
      }
    }
    for (const auto& f : t.frames) {
      if (!std::isnan(f.speed) && f.speed < 0.0) {
        throw DataError("agent " + t.agent_id + ": negative speed");
      }
    }
  }
  if (subjects == 0) throw StructureError("event " + event.event_id + ": zero subject tracks");
  if (subjects > 1) throw StructureError("event " + event.event_id + ": multiple subject tracks");

  const auto& a = event.annotations;
  if (event.severity != Severity::kBaseline && !a.impact_time.has_value()) {
    throw StructureError("event " + event.event_id + ": severity " +
                         to_string(event.severity) + " requires impact_time");
  }
  if (a.start_time && a.impact_time && *a.start_time > *a.impact_time) {
    throw DataError("event " + event.event_id + ": start_time after impact_time");
  }
  if (a.impact_time && a.end_time && *a.impact_time > *a.end_time) {
    throw DataError("event " + event.event_id + ": impact_time after end_time");
  }

  const auto& subj = event.subject();
  for (const auto& t : event.tracks) {
    if (t.role == Role::kObject && !t.frames.empty()) {
      if (t.start_time() < subj.start_time() - 1e-9 ||
          t.end_time() > subj.end_time() + 1e-9) {
        throw StructureError("event " + event.event_id + ": object " + t.agent_id +
                             " outside subject time span");
      }
    }
  }
}

namespace {

double lerp_channel(double a, double b, double t) {
  if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<double>::quiet_NaN();
  return a + (b - a) * t;
}

}  // namespace

AgentTrack resample_track(const AgentTrack& track) {
  AgentTrack out = track;
  out.frames.clear();
  if (track.frames.empty()) return out;

  // Grid anchored at multiples of kDt; no extrapolation past the data.
  const double t0 = track.frames.front().time;
  const double t1 = track.frames.back().time;
  long k = static_cast<long>(std::ceil(t0 / kDt - 1e-9));
  out.frames.reserve(static_cast<size_t>((t1 - t0) / kDt) + 2);
  size_t seg = 0;
  for (; k * kDt <= t1 + 1e-9; ++k) {
    const double t = k * kDt;
    while (seg + 2 < track.frames.size() && track.frames[seg + 1].time < t) ++seg;
    const auto& a = track.frames[seg];
    const auto& b = track.frames[std::min(seg + 1, track.frames.size() - 1)];
    TrajectoryFrame f;
    f.time = t;
    if (b.time <= a.time) {
      f = a;
      f.time = t;
    } else {
      const double u = std::clamp((t - a.time) / (b.time - a.time), 0.0, 1.0);
      f.x = lerp_channel(a.x, b.x, u);
      f.y = lerp_channel(a.y, b.y, u);
      f.heading = lerp_angle(wrap_angle(a.heading), wrap_angle(b.heading), u);
      f.speed = lerp_channel(a.speed, b.speed, u);
      f.yaw_rate = lerp_channel(a.yaw_rate, b.yaw_rate, u);
      f.accel = lerp_channel(a.accel, b.accel, u);
    }
    f.heading = wrap_angle(f.heading);
    out.frames.push_back(f);
  }
  return out;
}

std::vector<AgentTrack> split_episodes(const AgentTrack& track) {
  std::vector<AgentTrack> episodes;
  if (track.frames.empty()) return episodes;
  AgentTrack current = track;
  current.frames.clear();
  current.frames.push_back(track.frames.front());
  for (size_t i = 1; i < track.frames.size(); ++i) {
    if (track.frames[i].time - track.frames[i - 1].time > kEpisodeGap + 1e-9) {
      episodes.push_back(std::move(current));
      current = track;
      current.frames.clear();
    }
    current.frames.push_back(track.frames[i]);
  }
  episodes.push_back(std::move(current));
  for (size_t i = 1; i < episodes.size(); ++i) {
    episodes[i].agent_id = track.agent_id + "~" + std::to_string(i + 1);
  }
  return episodes;
}

namespace {

// Displacement of the object relative to the subject over the trailing 0.3 s
// of its episode, in the subject body frame. Object track coordinates are
// already subject-relative before reconstruction, so this reads x/y directly.
double trailing_displacement(const AgentTrack& obj) {
  if (obj.frames.size() < 2) return 0.0;
  const auto& last = obj.frames.back();
  const double t_ref = last.time - 0.3;
  const TrajectoryFrame* ref = nullptr;
  for (auto it = obj.frames.rbegin(); it != obj.frames.rend(); ++it) {
    if (it->time <= t_ref + 1e-9) {
      ref = &*it;
      break;
    }
  }
  if (ref == nullptr) ref = &obj.frames.front();
  const double span = last.time - ref->time;
  if (span <= 1e-9) return 0.0;
  const double d = std::hypot(last.x - ref->x, last.y - ref->y);
  return d * (0.3 / span);
}

}  // namespace

Event reindex_objects(const Event& event) {
  Event out = event;
  // Sort object indices by episode start time; subject untouched.
  std::vector<size_t> order;
  for (size_t i = 0; i < out.tracks.size(); ++i) {
    if (out.tracks[i].role == Role::kObject) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return out.tracks[a].start_time() < out.tracks[b].start_time();
  });

  struct Lost {
    std::string id;
    double lost_time;
    double x, y;
    double threshold;
  };
  std::vector<Lost> lost;
  for (size_t idx : order) {
    auto& track = out.tracks[idx];
    if (track.frames.empty()) continue;
    const double t_first = track.start_time();
    const auto& first = track.frames.front();

    // Nearest lost object whose threshold admits this episode.
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (size_t li = 0; li < lost.size(); ++li) {
      if (lost[li].lost_time >= t_first - 1e-9) continue;  // must not coexist
      const double d = std::hypot(first.x - lost[li].x, first.y - lost[li].y);
      if (d <= lost[li].threshold && d < best_dist) {
        best = static_cast<int>(li);
        best_dist = d;
      }
    }
    if (best >= 0) {
      track.agent_id = lost[best].id;
      lost.erase(lost.begin() + best);
    }

    const auto& last = track.frames.back();
    const double raw = trailing_displacement(track);
    lost.push_back({track.agent_id, last.time, last.x, last.y,
                    std::clamp(raw, 0.5, 2.5)});
  }
  return out;
}

}  // namespace gssm
