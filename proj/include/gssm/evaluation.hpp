#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gssm/scorers.hpp"
#include "gssm/types.hpp"

namespace gssm {

// Danger / safe periods of one annotated event. The danger period spans at
// least 4.5 s before impact and at most 0.5 s after it; each safe window is
// the 2-5 s interval after an object has been detected for 1.5 s, capped 3 s
// before the event start. Objects detected under 5 s or with hard braking
// (deceleration > 1.5 m/s^2) inside the window are excluded.
struct PeriodSpec {
  double danger_start = 0.0;
  double danger_end = 0.0;
  struct SafeWindow {
    std::string object_id;
    double start = 0.0;
    double end = 0.0;
  };
  std::vector<SafeWindow> safe;
};

PeriodSpec build_periods(const Event& event);

struct EvalOptions {
  double min_alert_seconds = 0.5;
  bool contiguous_alert = false;  // cumulative when false
  bool abstentions_count_in_total = true;
  int threshold_count = 512;
  double tti_cap = 10.0;
  std::vector<double> restriction_rates = {0.8, 0.9};
  int workers = 1;
};

/// Stage 1+2 of the conflicting-object determination: per-scorer candidates
/// with the percentile screen, then the over-1/3-for / under-1/3-against
/// vote. Empty result = no winner.
std::string select_conflicting_object(
    const Event& event, const PeriodSpec& periods,
    const std::vector<const RiskScorer*>& scorers, const EvalOptions& options);

struct ConfusionCounts {
  long tp = 0, fn = 0, fp = 0, tn = 0;
};

/// Per-event counts at one threshold: TP iff the conflicting object's risk
/// exceeds the threshold for at least min_alert_seconds inside the danger
/// period; one FP/TN per safe window of the other objects.
ConfusionCounts confusion_counts(const PeriodSpec& periods,
                                 const ScoreSeries& conflict_series,
                                 const std::map<std::string, ScoreSeries>& object_series,
                                 double threshold, const EvalOptions& options);

// Time to impact: impact_time minus the last upward threshold crossing at or
// before impact (the virtual sample before the series start counts as below
// threshold). NaN when the series never exceeds the threshold.
double time_to_impact(const ScoreSeries& series, double threshold, double impact_time);

struct CurvePoint {
  double threshold = 0.0;
  double r_fp = 0.0;
  double r_fn = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mtti = 0.0;          // NaN when no TTI is defined
  double p_tti_ge_1_5 = 0.0;  // NaN when no TP
};

struct MedianCi {
  double lo = 0.0;
  double hi = 0.0;
};

/// Two-sided sign-test confidence interval for the median, from binomial
/// order statistics. Falls back to the full range for tiny samples.
MedianCi sign_test_ci(std::vector<double> values, double confidence = 0.99);

// Everything the threshold sweep needs for one event and one scorer.
struct ScoredEventInput {
  std::string event_id;
  double impact_time = 0.0;
  PeriodSpec periods;
  std::string conflict_id;
  ScoreSeries conflict_series;
  std::map<std::string, ScoreSeries> object_series;  // all objects, full span
};

struct EvalReport {
  std::string scorer;
  std::vector<CurvePoint> points;  // ascending threshold; first = all-alert
  double auprc = 0.0;
  std::map<double, double> a_roc;          // restriction rate -> value
  std::map<double, double> precision_prc;  // NaN = N/A
  double max_f1 = 0.0;
  double threshold_star = 0.0;
  double mtti_star = 0.0;
  double p_tti_ge_1_5_star = 0.0;
  double mtti_q1 = 0.0, mtti_q3 = 0.0;
  MedianCi mtti_ci{};
  long n_events = 0;
  long n_danger = 0;
  long n_safe_windows = 0;
};

/// Full threshold sweep: ROC / PRC / ATC points over quantile-spaced
/// thresholds plus the all-alert point, and the derived metrics.
EvalReport curves_and_metrics(const std::vector<ScoredEventInput>& events,
                              const EvalOptions& options, const std::string& scorer_name);

struct PipelineResult {
  std::map<std::string, EvalReport> reports;        // per scorer
  std::map<std::string, std::string> conflict_ids;  // per event ("" = skipped)
};

/// Periods -> voting -> counts -> curves for every annotated event.
PipelineResult evaluate_events(const std::vector<Event>& events,
                               const std::vector<const RiskScorer*>& scorers,
                               const EvalOptions& options);

/// report.json plus roc/prc/atc CSV sidecars under dir/<scorer>/.
void write_eval_report(const std::filesystem::path& dir, const EvalReport& report);

}  // namespace gssm
