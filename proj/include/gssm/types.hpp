#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace gssm {

// Time grid resolution for all resampled trajectories.
constexpr double kDt = 0.1;
// An object track with a gap longer than this splits into detection episodes.
constexpr double kEpisodeGap = 0.5;

enum class Role { kSubject, kObject };

enum class Severity { kCrash, kNearCrash, kBaseline };

// Category orders below fix the one-hot layout of the environment encoding.
enum class Lighting {
  kDarknessLighted, kDarknessNotLighted, kDawn, kDaylight, kDusk, kUnknown
};
enum class Weather {
  kNoAdverse, kFog, kMistLightRain, kRainAndFog, kRainingSleeting,
  kSnowSleetAndFog, kSnowing, kUnknown
};
enum class Surface {
  kDry, kGravelOverAsphalt, kGravelDirtRoad, kIcy, kMuddy, kSnowy, kWet, kUnknown
};
enum class TrafficDensity {
  kLosA1, kLosA2, kLosB, kLosC, kLosD, kLosE, kLosF, kUnknown
};
enum class EventType {
  kRearEnd, kAdjacentLane, kCrossingTurning, kMerging, kVruAnimal, kOther
};

constexpr int kLightingCount = 6;
constexpr int kWeatherCount = 8;
constexpr int kSurfaceCount = 8;
constexpr int kTrafficCount = 8;

const char* to_string(Role v);
const char* to_string(Severity v);
const char* to_string(Lighting v);
const char* to_string(Weather v);
const char* to_string(Surface v);
const char* to_string(TrafficDensity v);
const char* to_string(EventType v);

Role role_from_string(const std::string& s);
Severity severity_from_string(const std::string& s);
Lighting lighting_from_string(const std::string& s);
Weather weather_from_string(const std::string& s);
Surface surface_from_string(const std::string& s);
TrafficDensity traffic_from_string(const std::string& s);
EventType event_type_from_string(const std::string& s);

// One kinematic state at a grid time. Missing channels are NaN: raw subject
// tracks may miss speed at head or tail, objects never carry accel.
struct TrajectoryFrame {
  double time = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;   // rad, [-pi, pi]
  double speed = 0.0;     // m/s
  double yaw_rate = 0.0;  // rad/s
  double accel = 0.0;     // m/s^2, subject only
};

struct AgentTrack {
  std::string agent_id;
  Role role = Role::kObject;
  double length = 0.0;  // m
  double width = 0.0;   // m
  std::vector<TrajectoryFrame> frames;

  double start_time() const;
  double end_time() const;
  /// Index of the frame at grid time t, or -1 when t is not covered.
  int frame_index(double t) const;
  const TrajectoryFrame* frame_at(double t) const;
};

struct EnvironmentTags {
  Lighting lighting = Lighting::kUnknown;
  Weather weather = Weather::kUnknown;
  Surface surface = Surface::kUnknown;
  TrafficDensity traffic_density = TrafficDensity::kUnknown;
};

struct EventAnnotations {
  std::optional<double> start_time;
  std::optional<double> impact_time;
  std::optional<double> end_time;
  std::optional<double> reaction_time;
  EventType event_type = EventType::kOther;
};

// Immutable after load; downstream stages return new values.
struct Event {
  std::string event_id;
  Severity severity = Severity::kBaseline;
  std::vector<AgentTrack> tracks;  // exactly one subject
  EnvironmentTags environment;
  EventAnnotations annotations;

  const AgentTrack& subject() const;
  std::vector<const AgentTrack*> objects() const;
  const AgentTrack* track_by_id(const std::string& agent_id) const;
};

/// Validates the event contract; throws StructureError/DataError on violation.
void validate_event(const Event& event);

/// Linear resampling of one track onto the 0.1 s grid. Headings interpolate
/// along the shortest arc; leading/trailing uncovered grid times are dropped.
AgentTrack resample_track(const AgentTrack& track);

/// Splits an object track at gaps longer than kEpisodeGap into detection
/// episodes. Episode ids get a "~k" suffix (k >= 2) after the first.
std::vector<AgentTrack> split_episodes(const AgentTrack& track);

// Re-identification of intermittently detected objects: an episode first seen
// within a distance threshold of a previously lost object inherits that
// object's id. The threshold is the lost object's displacement relative to
// the subject over 0.3 s, clamped to [0.5, 2.5] m. Episodes that coexist in
// time are never merged.
Event reindex_objects(const Event& event);

}  // namespace gssm
