#include "gssm/gssm_score.hpp"

#include <algorithm>
#include <cmath>

#include "gssm/errors.hpp"
#include "gssm/mathx.hpp"

namespace gssm {

namespace {

double clamped_survival(double s, const LognormalParams& params) {
  const double sigma = std::exp(0.5 * std::clamp(params.log_var, kLogVarMin, kLogVarMax));
  // 1 - F(s) = erfc(z / sqrt(2)) / 2 stays accurate in both tails.
  const double z = (std::log(s) - params.mu) / sigma;
  const double survival = 0.5 * erfc_approx(z / std::sqrt(2.0));
  return std::clamp(survival, kSurvivalClampLo, 1.0 - kSurvivalClampLo);
}

double level_from_survival(double survival) {
  return std::log10(std::log(0.5) / std::log(survival));
}

}  // namespace

double max_risk_level() { return level_from_survival(1.0 - kSurvivalClampLo); }

double gssm_score(double s, const LognormalParams& params) {
  if (!(s > 0.0)) return max_risk_level();
  return level_from_survival(clamped_survival(s, params));
}

double conflict_probability(double s, const LognormalParams& params, double level) {
  if (!std::isfinite(level)) throw ArgumentError("conflict_probability: level must be finite");
  const double survival = (s > 0.0) ? clamped_survival(s, params) : kSurvivalClampLo;
  return std::exp(std::pow(10.0, level) * std::log(survival));
}

std::vector<RiskPoint> risk_series(const Event& event, const DensityModel& model,
                                   const std::string& subject_id,
                                   const std::string& object_id) {
  // Collect per-step samples over every episode of the object id; extraction
  // failures (history gaps, unobserved steps) leave gaps in the series.
  std::vector<InteractionSample> samples;
  std::vector<double> times;
  FeatureOptions options;
  options.include_accel = model.config.include_accel;
  options.training_mode = false;
  for (const auto& track : event.tracks) {
    if (track.agent_id != object_id || track.role != Role::kObject) continue;
    for (const auto& frame : track.frames) {
      try {
        samples.push_back(
            extract_features(event, subject_id, object_id, frame.time, options));
        times.push_back(frame.time);
      } catch (const FeatureError&) {
        continue;
      }
    }
  }
  std::vector<RiskPoint> out;
  if (samples.empty()) return out;
  const auto params = model.forward_params_batch(samples);
  out.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    RiskPoint pt;
    pt.time = times[i];
    pt.level = gssm_score(samples[i].spacing, params[i]);
    pt.probability = conflict_probability(samples[i].spacing, params[i], pt.level);
    out.push_back(pt);
  }
  std::sort(out.begin(), out.end(),
            [](const RiskPoint& a, const RiskPoint& b) { return a.time < b.time; });
  return out;
}

}  // namespace gssm
