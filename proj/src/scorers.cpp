#include "gssm/scorers.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gssm/errors.hpp"
#include "gssm/gssm_score.hpp"

namespace gssm {

namespace {

// Pairwise geometric series over all episodes of an object id, sorted by time.
template <typename Fn>
ScoreSeries pairwise_series(const Event& event, const std::string& object_id, Fn risk_at) {
  const AgentTrack& subject = event.subject();
  ScoreSeries out;
  for (const auto& track : event.tracks) {
    if (track.role != Role::kObject || track.agent_id != object_id) continue;
    for (const auto& frame : track.frames) {
      const TrajectoryFrame* subj = subject.frame_at(frame.time);
      if (subj == nullptr) continue;
      out.time.push_back(frame.time);
      out.value.push_back(risk_at(*subj, subject, frame, track));
    }
  }
  // Episodes are disjoint in time; a stable index sort keeps them ordered.
  std::vector<size_t> idx(out.time.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return out.time[a] < out.time[b]; });
  ScoreSeries sorted;
  sorted.time.reserve(idx.size());
  sorted.value.reserve(idx.size());
  for (size_t i : idx) {
    sorted.time.push_back(out.time[i]);
    sorted.value.push_back(out.value[i]);
  }
  return sorted;
}

}  // namespace

ScoreSeries GssmScorer::score(const Event& event, const std::string& object_id) const {
  const auto series = risk_series(event, *model_, event.subject().agent_id, object_id);
  ScoreSeries out;
  out.time.reserve(series.size());
  out.value.reserve(series.size());
  for (const auto& pt : series) {
    out.time.push_back(pt.time);
    out.value.push_back(pt.level);
  }
  return out;
}

ScoreSeries SpacingScorer::score(const Event& event, const std::string& object_id) const {
  return pairwise_series(event, object_id,
                         [](const TrajectoryFrame& subj, const AgentTrack&,
                            const TrajectoryFrame& obj, const AgentTrack&) {
                           return -std::hypot(obj.x - subj.x, obj.y - subj.y);
                         });
}

ScoreSeries Ssm2dScorer::score(const Event& event, const std::string& object_id) const {
  const ssm::Measure measure = measure_;
  return pairwise_series(
      event, object_id,
      [measure](const TrajectoryFrame& subj, const AgentTrack& subj_track,
                const TrajectoryFrame& obj, const AgentTrack& obj_track) {
        const auto gi = ssm::geom_from_frame(subj, subj_track.length, subj_track.width);
        const auto gj = ssm::geom_from_frame(obj, obj_track.length, obj_track.width);
        ssm::SsmValue v;
        switch (measure) {
          case ssm::Measure::kTtc2d: v = ssm::ttc2d(gi, gj); break;
          case ssm::Measure::kTadv: v = ssm::tadv(gi, gj); break;
          case ssm::Measure::kAct: v = ssm::act(gi, gj); break;
        }
        return ssm::risk_from_value(v);
      });
}

CsvScorer::CsvScorer(std::string name, const std::vector<std::filesystem::path>& files)
    : name_(std::move(name)) {
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open risk CSV " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty risk CSV " + path.string());
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string event_id, object_id, field;
      std::getline(ss, event_id, ',');
      std::getline(ss, object_id, ',');
      ScoreSeries& s = series_[{event_id, object_id}];
      std::getline(ss, field, ',');
      s.time.push_back(std::stod(field));
      std::getline(ss, field, ',');
      s.value.push_back(std::stod(field));
    }
  }
}

ScoreSeries CsvScorer::score(const Event& event, const std::string& object_id) const {
  const auto it = series_.find({event.event_id, object_id});
  return it == series_.end() ? ScoreSeries{} : it->second;
}

}  // namespace gssm
