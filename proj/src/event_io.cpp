#include "gssm/event_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gssm/errors.hpp"
#include "gssm/mathx.hpp"

namespace gssm {

namespace {

constexpr const char* kCsvHeader =
    "event_id,agent_id,role,time,x,y,heading,speed,yaw_rate,accel,length,width";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_field(const std::string& s, const char* name) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw SchemaError(std::string("unparsable numeric field ") + name + ": '" + s + "'");
  }
  return v;
}

std::string field_or_empty(double v) {
  return std::isnan(v) ? std::string() : format_double(v);
}

std::optional<double> optional_time(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::filesystem::path csv_path_for(const std::filesystem::path& json_path) {
  auto p = json_path;
  p.replace_extension(".csv");
  return p;
}

}  // namespace

Event load_event(const std::filesystem::path& json_path) {
  std::ifstream jf(json_path);
  if (!jf) throw SchemaError("cannot open " + json_path.string());
  nlohmann::json meta;
  try {
    jf >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad metadata JSON " + json_path.string() + ": " + e.what());
  }

  Event event;
  try {
    event.event_id = meta.at("event_id").get<std::string>();
    event.severity = severity_from_string(meta.at("severity").get<std::string>());
    event.environment.lighting = lighting_from_string(meta.at("lighting").get<std::string>());
    event.environment.weather = weather_from_string(meta.at("weather").get<std::string>());
    event.environment.surface = surface_from_string(meta.at("surface").get<std::string>());
    event.environment.traffic_density =
        traffic_from_string(meta.at("traffic_density").get<std::string>());
    event.annotations.start_time = optional_time(meta, "start_time");
    event.annotations.impact_time = optional_time(meta, "impact_time");
    event.annotations.end_time = optional_time(meta, "end_time");
    event.annotations.reaction_time = optional_time(meta, "reaction_time");
    event.annotations.event_type =
        event_type_from_string(meta.value("event_type", std::string("other")));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("metadata key missing in " + json_path.string() + ": " + e.what());
  }

  const auto csv_path = csv_path_for(json_path);
  std::ifstream cf(csv_path);
  if (!cf) throw SchemaError("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(cf, line)) throw SchemaError("empty trajectory CSV " + csv_path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw SchemaError("trajectory CSV header mismatch in " + csv_path.string());
  }

  std::map<std::string, AgentTrack> by_agent;
  std::vector<std::string> agent_order;
  size_t lineno = 1;
  while (std::getline(cf, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 12) {
      throw SchemaError(csv_path.string() + ":" + std::to_string(lineno) +
                        ": expected 12 fields, got " + std::to_string(f.size()));
    }
    if (f[0] != event.event_id) {
      throw DataError(csv_path.string() + ":" + std::to_string(lineno) +
                      ": event_id mismatch");
    }
    auto [it, inserted] = by_agent.try_emplace(f[1]);
    AgentTrack& track = it->second;
    if (inserted) {
      track.agent_id = f[1];
      track.role = role_from_string(f[2]);
      track.length = parse_field(f[10], "length");
      track.width = parse_field(f[11], "width");
      agent_order.push_back(f[1]);
    }
    TrajectoryFrame fr;
    fr.time = parse_field(f[3], "time");
    fr.x = parse_field(f[4], "x");
    fr.y = parse_field(f[5], "y");
    fr.heading = wrap_angle(parse_field(f[6], "heading"));
    fr.speed = parse_field(f[7], "speed");
    fr.yaw_rate = parse_field(f[8], "yaw_rate");
    fr.accel = parse_field(f[9], "accel");
    track.frames.push_back(fr);
  }

  for (const auto& id : agent_order) {
    const AgentTrack& raw = by_agent.at(id);
    for (size_t i = 1; i < raw.frames.size(); ++i) {
      if (raw.frames[i].time <= raw.frames[i - 1].time) {
        throw DataError(csv_path.string() + ": agent " + id + ": non-monotonic time");
      }
    }
    if (raw.role == Role::kObject) {
      // Episodes split before resampling so interpolation never bridges a gap.
      for (auto& episode : split_episodes(raw)) {
        event.tracks.push_back(resample_track(episode));
      }
    } else {
      event.tracks.push_back(resample_track(raw));
    }
  }

  validate_event(event);
  return event;
}

void save_event(const Event& event, const std::filesystem::path& json_path) {
  nlohmann::json meta;
  meta["event_id"] = event.event_id;
  meta["severity"] = to_string(event.severity);
  meta["lighting"] = to_string(event.environment.lighting);
  meta["weather"] = to_string(event.environment.weather);
  meta["surface"] = to_string(event.environment.surface);
  meta["traffic_density"] = to_string(event.environment.traffic_density);
  const auto& a = event.annotations;
  meta["start_time"] = a.start_time ? nlohmann::json(*a.start_time) : nlohmann::json();
  meta["impact_time"] = a.impact_time ? nlohmann::json(*a.impact_time) : nlohmann::json();
  meta["end_time"] = a.end_time ? nlohmann::json(*a.end_time) : nlohmann::json();
  meta["reaction_time"] = a.reaction_time ? nlohmann::json(*a.reaction_time) : nlohmann::json();
  meta["event_type"] = to_string(a.event_type);

  std::ofstream jf(json_path);
  if (!jf) throw Error("cannot write " + json_path.string());
  jf << meta.dump(2) << "\n";

  std::ofstream cf(csv_path_for(json_path));
  if (!cf) throw Error("cannot write " + csv_path_for(json_path).string());
  cf << kCsvHeader << "\n";
  for (const auto& track : event.tracks) {
    for (const auto& fr : track.frames) {
      cf << event.event_id << ',' << track.agent_id << ',' << to_string(track.role) << ','
         << format_double(fr.time) << ',' << field_or_empty(fr.x) << ','
         << field_or_empty(fr.y) << ',' << field_or_empty(fr.heading) << ','
         << field_or_empty(fr.speed) << ',' << field_or_empty(fr.yaw_rate) << ','
         << field_or_empty(fr.accel) << ',' << format_double(track.length) << ','
         << format_double(track.width) << "\n";
    }
  }
}

std::vector<std::filesystem::path> list_event_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) {
    throw ArgumentError("not a directory: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    const auto stem = entry.path().stem().string();
    if (stem == "ground_truth" || stem == "run_manifest") continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<Event> load_dataset(const std::filesystem::path& dir) {
  std::vector<Event> events;
  for (const auto& f : list_event_files(dir)) {
    events.push_back(load_event(f));
  }
  return events;
}

void write_risk_csv(const std::filesystem::path& path,
                    const std::string& event_id, const std::string& object_id,
                    const std::vector<double>& time, const std::vector<double>& level,
                    const std::vector<double>& probability) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "event_id,object_id,time,M,p\n";
  for (size_t i = 0; i < time.size(); ++i) {
    out << event_id << ',' << object_id << ',' << format_double(time[i]) << ','
        << format_double(level[i]) << ',' << format_double(probability[i]) << "\n";
  }
}

}  // namespace gssm
