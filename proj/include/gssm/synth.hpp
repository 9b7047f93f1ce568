#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gssm/types.hpp"

namespace gssm {

// Seeded synthetic interaction generator with known conditional spacing
// distributions. Scenes are straight-road: the subject drives at a constant
// per-event speed; each surrounding object holds a gap whose log-level is one
// lognormal draw (plus a slow, small-amplitude wiggle), so spacing at any
// sampled time is a draw from Lognormal(mu(X), sigma) while the velocity
// features stay uninformative about that draw. Conflict events override the
// conflicting object's gap with a cosine dip that stays below the context
// median through the danger period and reaches the target percentile exactly
// at impact time.
struct GeneratorSpec {
  uint64_t seed = 131;
  int n_events = 100;

  // mu(X) = mu_base + speed_coeff * (v_subject - speed_mean)/speed_sd
  //       + wet_coeff * [surface == wet], with the moments of the uniform
  // speed draw below; sigma is constant.
  double mu_base = 2.0;
  double speed_coeff = 0.3;
  double wet_coeff = -0.2;
  double sigma = 0.4;
  double speed_min = 5.0;
  double speed_max = 30.0;
  double wet_probability = 0.3;

  int objects_per_event = 3;
  double duration = 16.0;          // s, baseline events
  double conflict_duration = 18.0; // s, conflict events (impact 4 s before end)
  double sample_start = 3.0;       // first ground-truth sample time
  double sample_stride = 1.0;

  double conflict_rate = 0.0;             // fraction of events with a conflict
  double conflict_depth_quantile = 0.01;  // spacing percentile at the dip
  double safe_floor_quantile = 0.0;       // >0 floors safe-object gap levels

  double wiggle_amplitude = 0.05;  // in sigma units
  double position_noise = 0.05;    // m, relative edge measurements
  double speed_noise = 0.05;       // m/s
  double yaw_noise = 0.003;        // rad/s
  double accel_noise = 0.02;       // m/s^2
  double heading_noise = 0.01;     // rad
  double head_missing_rate = 0.0;  // subject speed missing for the first 0.6 s

  double speed_mean() const { return 0.5 * (speed_min + speed_max); }
  double speed_sd() const { return (speed_max - speed_min) / std::sqrt(12.0); }
  void validate() const;
};

struct SyntheticDataset {
  std::vector<Event> events;        // raw sensor form (objects subject-relative)
  std::vector<Event> truth_events;  // noise-free global-frame trajectories
  nlohmann::json ground_truth;      // closed forms + per-event markers
};

SyntheticDataset generate_dataset(const GeneratorSpec& spec);

/// Event JSON/CSV pairs plus ground_truth.json; byte-deterministic for a
/// given spec.
void write_dataset(const SyntheticDataset& dataset, const std::filesystem::path& dir);

GeneratorSpec generator_spec_from_json(const nlohmann::json& j);
nlohmann::json generator_spec_to_json(const GeneratorSpec& spec);

}  // namespace gssm
