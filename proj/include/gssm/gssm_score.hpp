#pragma once

#include <string>
#include <vector>

#include "gssm/density_model.hpp"
#include "gssm/lognormal.hpp"
#include "gssm/types.hpp"

namespace gssm {

// The survival probability Pr(S > s | X) is clamped to
// [kSurvivalClampLo, 1 - kSurvivalClampLo] before the outer logarithms; the
// risk level is singular at survival in {0, 1}.
constexpr double kSurvivalClampLo = 1e-12;

/// Largest representable risk level under the clamp; also the s = 0 sentinel
/// ("factual collision").
double max_risk_level();

// Risk level M = log10[ln 0.5 / ln Pr(S > s | X)]. Zero at the conditional
// median, positive below it. s <= 0 returns max_risk_level().
double gssm_score(double s, const LognormalParams& params);

/// p = Pr(S > s | X)^(10^M); equals 0.5 when M = gssm_score(s, params).
double conflict_probability(double s, const LognormalParams& params, double level);

struct RiskPoint {
  double time = 0.0;
  double level = 0.0;        // M
  double probability = 0.0;  // p
};

// One point per 0.1 s grid step where both agents are observed and features
// are extractable (inference mode, no dropout). Feature gaps become gaps in
// the series, not failures.
std::vector<RiskPoint> risk_series(const Event& event, const DensityModel& model,
                                   const std::string& subject_id,
                                   const std::string& object_id);

}  // namespace gssm
