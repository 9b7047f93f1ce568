#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gssm/errors.hpp"
#include "gssm/event_io.hpp"
#include "gssm/mathx.hpp"
#include "gssm/types.hpp"

using namespace gssm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "gssm_data_test";
  fs::create_directories(dir);
  return dir;
}

void write_files(const fs::path& json_path, const std::string& meta, const std::string& csv) {
  std::ofstream(json_path) << meta;
  auto csv_path = json_path;
  csv_path.replace_extension(".csv");
  std::ofstream(csv_path) << csv;
}

const char* kMeta = R"({
  "event_id": "e1", "severity": "baseline",
  "lighting": "daylight", "weather": "no_adverse_conditions",
  "surface": "dry", "traffic_density": "los_a1",
  "start_time": null, "impact_time": null, "end_time": null,
  "reaction_time": null, "event_type": "other"
})";

}  // namespace

TEST_CASE("linear interpolation fills the 0.1 s grid with midpoint kinematics") {
  const auto path = temp_dir() / "interp.json";
  write_files(path, kMeta,
              "event_id,agent_id,role,time,x,y,heading,speed,yaw_rate,accel,length,width\n"
              "e1,subject,subject,0.0,0,0,0,10,0,0,4.5,1.8\n"
              "e1,subject,subject,0.2,2,1,0.2,12,0,0,4.5,1.8\n");
  const Event event = load_event(path);
  const auto& track = event.subject();
  REQUIRE(track.frames.size() == 3);
  const auto& mid = track.frames[1];
  CHECK(mid.time == doctest::Approx(0.1));
  CHECK(mid.x == doctest::Approx(1.0));
  CHECK(mid.y == doctest::Approx(0.5));
  CHECK(mid.heading == doctest::Approx(0.1));
  CHECK(mid.speed == doctest::Approx(11.0));
}

TEST_CASE("out-of-range heading wraps into [-pi, pi]") {
  const auto path = temp_dir() / "wrap.json";
  write_files(path, kMeta,
              "event_id,agent_id,role,time,x,y,heading,speed,yaw_rate,accel,length,width\n"
              "e1,subject,subject,0.0,0,0,3.5,10,0,0,4.5,1.8\n"
              "e1,subject,subject,0.1,1,0,3.5,10,0,0,4.5,1.8\n");
  const Event event = load_event(path);
  CHECK(event.subject().frames[0].heading == doctest::Approx(3.5 - kTwoPi).epsilon(1e-12));
}

TEST_CASE("crash without impact_time is a structure error") {
  const auto path = temp_dir() / "crash.json";
  write_files(path,
              R"({"event_id":"e1","severity":"crash","lighting":"daylight",
                  "weather":"no_adverse_conditions","surface":"dry","traffic_density":"los_a1",
                  "start_time":1.0,"impact_time":null,"end_time":3.0,"event_type":"rear_end"})",
              "event_id,agent_id,role,time,x,y,heading,speed,yaw_rate,accel,length,width\n"
              "e1,subject,subject,0.0,0,0,0,10,0,0,4.5,1.8\n"
              "e1,subject,subject,0.1,1,0,0,10,0,0,4.5,1.8\n");
  CHECK_THROWS_AS(load_event(path), StructureError);
}

TEST_CASE("schema violations are reported as such") {
  const auto path = temp_dir() / "schema.json";
  write_files(path, kMeta, "event_id,agent_id,role,time,x,y\ne1,s,subject,0,0,0\n");
  CHECK_THROWS_AS(load_event(path), SchemaError);

  write_files(path, kMeta,
              "event_id,agent_id,role,time,x,y,heading,speed,yaw_rate,accel,length,width\n"
              "e1,subject,subject,0.2,0,0,0,10,0,0,4.5,1.8\n"
              "e1,subject,subject,0.1,1,0,0,10,0,0,4.5,1.8\n");
  CHECK_THROWS_AS(load_event(path), DataError);  // non-monotonic time

  write_files(path, kMeta,
              "event_id,agent_id,role,time,x,y,heading,speed,yaw_rate,accel,length,width\n"
              "e1,obj,object,0.0,5,0,0,10,0,,4.5,1.8\n"
              "e1,obj,object,0.1,5,0,0,10,0,,4.5,1.8\n");
  CHECK_THROWS_AS(load_event(path), StructureError);  // zero subject tracks
}

TEST_CASE("resampling an already-uniform track is the identity") {
  AgentTrack track;
  track.agent_id = "a";
  track.role = Role::kSubject;
  track.length = 4.0;
  track.width = 2.0;
  for (int k = 0; k <= 30; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    f.x = 0.3 * k;
    f.y = std::sin(0.1 * k);
    f.heading = wrap_angle(0.2 * k);
    f.speed = 3.0 + 0.01 * k;
    f.yaw_rate = 0.2;
    f.accel = 0.1;
    track.frames.push_back(f);
  }
  const AgentTrack again = resample_track(track);
  REQUIRE(again.frames.size() == track.frames.size());
  for (size_t i = 0; i < track.frames.size(); ++i) {
    CHECK(std::fabs(again.frames[i].x - track.frames[i].x) < 1e-12);
    CHECK(std::fabs(again.frames[i].y - track.frames[i].y) < 1e-12);
    CHECK(std::fabs(again.frames[i].heading - track.frames[i].heading) < 1e-12);
    CHECK(std::fabs(again.frames[i].speed - track.frames[i].speed) < 1e-12);
  }
}

TEST_CASE("gaps over 0.5 s split object tracks into episodes") {
  const auto path = temp_dir() / "episodes.json";
  std::string csv =
      "event_id,agent_id,role,time,x,y,heading,speed,yaw_rate,accel,length,width\n";
  for (int k = 0; k <= 60; ++k) {
    csv += "e1,subject,subject," + format_double(k * 0.1) + ",0,0,0,10,0,0,4.5,1.8\n";
  }
  for (int k = 0; k <= 10; ++k) {
    csv += "e1,objA,object," + format_double(k * 0.1) + ",10,0,0,10,0,,4.0,1.8\n";
  }
  for (int k = 20; k <= 30; ++k) {
    csv += "e1,objA,object," + format_double(k * 0.1) + ",10,0,0,10,0,,4.0,1.8\n";
  }
  write_files(path, kMeta, csv);
  const Event event = load_event(path);
  int episodes = 0;
  for (const auto& t : event.tracks) {
    if (t.role == Role::kObject) ++episodes;
  }
  CHECK(episodes == 2);
  CHECK(event.track_by_id("objA") != nullptr);
  CHECK(event.track_by_id("objA~2") != nullptr);
}

TEST_CASE("re-indexing assigns the previous id within the displacement threshold") {
  // Object A lost at t=1.0 at relative (10, 0), displacement rate 1 m / 0.3 s;
  // a new object appears at t=1.1 at (10.2, 0): distance 0.2 <= 1.0.
  Event event;
  event.event_id = "e1";
  AgentTrack subj;
  subj.agent_id = "subject";
  subj.role = Role::kSubject;
  subj.length = 4.5;
  subj.width = 1.8;
  for (int k = 0; k <= 30; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    f.speed = 10;
    subj.frames.push_back(f);
  }
  event.tracks.push_back(subj);

  AgentTrack a;
  a.agent_id = "objA";
  a.role = Role::kObject;
  a.length = 4;
  a.width = 1.8;
  for (int k = 0; k <= 10; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    f.x = 10.0 - (10 - k) * (1.0 / 3.0) * 0.1;  // 1 m per 0.3 s toward (10, 0)
    f.y = 0.0;
    f.speed = 10;
    a.frames.push_back(f);
  }
  event.tracks.push_back(a);

  AgentTrack b;
  b.agent_id = "objB";
  b.role = Role::kObject;
  b.length = 4;
  b.width = 1.8;
  for (int k = 11; k <= 20; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    f.x = 10.2;
    f.y = 0.0;
    f.speed = 10;
    b.frames.push_back(f);
  }
  event.tracks.push_back(b);

  const Event out = reindex_objects(event);
  int named_a = 0;
  for (const auto& t : out.tracks) {
    if (t.role == Role::kObject && t.agent_id == "objA") ++named_a;
  }
  CHECK(named_a == 2);  // the new episode inherited A's id
}

TEST_CASE("new object beyond the clamped threshold keeps its id") {
  Event event;
  event.event_id = "e1";
  AgentTrack subj;
  subj.agent_id = "subject";
  subj.role = Role::kSubject;
  subj.length = 4.5;
  subj.width = 1.8;
  for (int k = 0; k <= 30; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    subj.frames.push_back(f);
  }
  event.tracks.push_back(subj);

  AgentTrack a;  // fast relative displacement, threshold clamps to 2.5 m
  a.agent_id = "objA";
  a.role = Role::kObject;
  a.length = 4;
  a.width = 1.8;
  for (int k = 0; k <= 10; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    f.x = 10.0 + 2.0 * k * 0.1;  // 2 m/s -> 0.6 m per 0.3 s, then 5 m away
    a.frames.push_back(f);
  }
  event.tracks.push_back(a);

  AgentTrack b;
  b.agent_id = "objB";
  b.role = Role::kObject;
  b.length = 4;
  b.width = 1.8;
  for (int k = 11; k <= 20; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    f.x = 17.0;  // 5 m from A's last position
    b.frames.push_back(f);
  }
  event.tracks.push_back(b);

  const Event out = reindex_objects(event);
  CHECK(out.track_by_id("objB") != nullptr);
}

TEST_CASE("stationary pair clamps the threshold to at least 0.5 m") {
  Event event;
  event.event_id = "e1";
  AgentTrack subj;
  subj.agent_id = "subject";
  subj.role = Role::kSubject;
  subj.length = 4.5;
  subj.width = 1.8;
  for (int k = 0; k <= 30; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    subj.frames.push_back(f);
  }
  event.tracks.push_back(subj);

  AgentTrack a;  // zero relative displacement
  a.agent_id = "objA";
  a.role = Role::kObject;
  a.length = 4;
  a.width = 1.8;
  for (int k = 0; k <= 10; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    f.x = 10.0;
    a.frames.push_back(f);
  }
  event.tracks.push_back(a);

  AgentTrack b;  // 0.4 m away: inside the 0.5 m floor
  b.agent_id = "objB";
  b.role = Role::kObject;
  b.length = 4;
  b.width = 1.8;
  for (int k = 11; k <= 20; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    f.x = 10.4;
    b.frames.push_back(f);
  }
  event.tracks.push_back(b);

  const Event out = reindex_objects(event);
  int named_a = 0;
  for (const auto& t : out.tracks) {
    if (t.agent_id == "objA") ++named_a;
  }
  CHECK(named_a == 2);
}

TEST_CASE("re-indexing never merges coexisting objects") {
  Event event;
  event.event_id = "e1";
  AgentTrack subj;
  subj.agent_id = "subject";
  subj.role = Role::kSubject;
  subj.length = 4.5;
  subj.width = 1.8;
  for (int k = 0; k <= 30; ++k) {
    TrajectoryFrame f;
    f.time = k * kDt;
    subj.frames.push_back(f);
  }
  event.tracks.push_back(subj);
  for (const char* id : {"objA", "objB"}) {
    AgentTrack t;
    t.agent_id = id;
    t.role = Role::kObject;
    t.length = 4;
    t.width = 1.8;
    for (int k = 0; k <= 20; ++k) {
      TrajectoryFrame f;
      f.time = k * kDt;
      f.x = 10.0 + (id[3] == 'B' ? 0.1 : 0.0);
      t.frames.push_back(f);
    }
    event.tracks.push_back(t);
  }
  const Event out = reindex_objects(event);
  CHECK(out.track_by_id("objA") != nullptr);
  CHECK(out.track_by_id("objB") != nullptr);
}

TEST_CASE("save/load round trip is the identity on canonical events") {
  const auto path = temp_dir() / "rt.json";
  write_files(path, kMeta,
              "event_id,agent_id,role,time,x,y,heading,speed,yaw_rate,accel,length,width\n"
              "e1,subject,subject,0.0,0,0,0.1,10,0.01,0.2,4.5,1.8\n"
              "e1,subject,subject,0.1,1,0.05,0.11,10.1,0.01,0.2,4.5,1.8\n"
              "e1,subject,subject,0.2,2,0.1,0.12,10.2,0.01,0.2,4.5,1.8\n"
              "e1,obj1,object,0.0,8.25,0.5,0.0,9.5,0.0,,4.1,1.9\n"
              "e1,obj1,object,0.1,8.2,0.5,0.0,9.5,0.0,,4.1,1.9\n"
              "e1,obj1,object,0.2,8.15,0.5,0.0,9.5,0.0,,4.1,1.9\n");
  const Event once = load_event(path);
  const auto path2 = temp_dir() / "rt2.json";
  save_event(once, path2);
  const Event twice = load_event(path2);
  REQUIRE(twice.tracks.size() == once.tracks.size());
  for (size_t t = 0; t < once.tracks.size(); ++t) {
    REQUIRE(twice.tracks[t].frames.size() == once.tracks[t].frames.size());
    CHECK(twice.tracks[t].agent_id == once.tracks[t].agent_id);
    for (size_t i = 0; i < once.tracks[t].frames.size(); ++i) {
      const auto& a = once.tracks[t].frames[i];
      const auto& b = twice.tracks[t].frames[i];
      CHECK(a.x == b.x);
      CHECK(a.y == b.y);
      CHECK(a.heading == b.heading);
      CHECK(a.speed == b.speed);
      CHECK((std::isnan(a.accel) ? std::isnan(b.accel) : a.accel == b.accel));
    }
  }
}
