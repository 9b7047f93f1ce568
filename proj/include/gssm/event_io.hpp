#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gssm/types.hpp"

namespace gssm {

// An event on disk is a metadata JSON plus a trajectory CSV with the same
// stem. The CSV header is
//   event_id,agent_id,role,time,x,y,heading,speed,yaw_rate,accel,length,width
// with empty numeric fields meaning "missing" (NaN in memory). The metadata
// JSON carries event_id, severity, the four environment tags, the time
// annotations, and event_type; annotation keys may be null or absent for
// baseline events.

/// Loads, validates, resamples to the 0.1 s grid, and splits object episodes.
Event load_event(const std::filesystem::path& json_path);

/// Writes canonical metadata JSON + trajectory CSV next to it.
void save_event(const Event& event, const std::filesystem::path& json_path);

/// All events in a directory (every *.json except ground_truth/run_manifest),
/// sorted by filename.
std::vector<Event> load_dataset(const std::filesystem::path& dir);

std::vector<std::filesystem::path> list_event_files(const std::filesystem::path& dir);

/// Risk series CSV row writer; header: event_id,object_id,time,M,p.
void write_risk_csv(const std::filesystem::path& path,
                    const std::string& event_id, const std::string& object_id,
                    const std::vector<double>& time, const std::vector<double>& level,
                    const std::vector<double>& probability);

}  // namespace gssm
