#include "gssm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "gssm/errors.hpp"
#include "gssm/mathx.hpp"
#include "gssm/parallel.hpp"

namespace gssm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTimeEps = 1e-9;
constexpr double kHardBrake = 1.5;  // m/s^2
constexpr double kMinDetection = 5.0;  // s

std::vector<std::string> object_ids(const Event& event) {
  std::set<std::string> ids;
  for (const auto& t : event.tracks) {
    if (t.role == Role::kObject) ids.insert(t.agent_id);
  }
  return {ids.begin(), ids.end()};
}

std::vector<double> values_in(const ScoreSeries& s, double t0, double t1) {
  std::vector<double> out;
  for (size_t i = 0; i < s.time.size(); ++i) {
    if (s.time[i] >= t0 - kTimeEps && s.time[i] <= t1 + kTimeEps) out.push_back(s.value[i]);
  }
  return out;
}

}  // namespace

PeriodSpec build_periods(const Event& event) {
  const auto& ann = event.annotations;
  if (!ann.impact_time.has_value()) {
    throw EvalError("event " + event.event_id + ": impact time missing");
  }
  const double impact = *ann.impact_time;
  PeriodSpec spec;
  spec.danger_start = ann.start_time ? std::min(*ann.start_time, impact - 4.5) : impact - 4.5;
  spec.danger_end = ann.end_time ? std::min(*ann.end_time, impact + 0.5) : impact + 0.5;
  const double event_start = ann.start_time.value_or(spec.danger_start);

  for (const auto& id : object_ids(event)) {
    double first_seen = kInf;
    double observed = 0.0;
    for (const auto& t : event.tracks) {
      if (t.role != Role::kObject || t.agent_id != id || t.frames.empty()) continue;
      first_seen = std::min(first_seen, t.start_time());
      observed += t.end_time() - t.start_time();
    }
    if (observed < kMinDetection - kTimeEps) continue;

    double ws = first_seen + 1.5 + 2.0;
    double we = std::min(first_seen + 1.5 + 5.0, event_start - 3.0);
    // Clip to the episode actually covering the window start.
    const AgentTrack* episode = nullptr;
    for (const auto& t : event.tracks) {
      if (t.role == Role::kObject && t.agent_id == id && t.frame_at(ws) != nullptr) {
        episode = &t;
        break;
      }
    }
    if (episode == nullptr) continue;
    we = std::min(we, episode->end_time());
    if (we - ws < 0.5 - kTimeEps) continue;

    bool hard_brake = false;
    for (size_t i = 0; i + 1 < episode->frames.size(); ++i) {
      const auto& a = episode->frames[i];
      const auto& b = episode->frames[i + 1];
      if (a.time < ws - kTimeEps || a.time > we + kTimeEps) continue;
      if (std::isnan(a.speed) || std::isnan(b.speed)) continue;
      if (-(b.speed - a.speed) / (b.time - a.time) > kHardBrake) {
        hard_brake = true;
        break;
      }
    }
    if (hard_brake) continue;
    spec.safe.push_back({id, ws, we});
  }
  return spec;
}

std::string select_conflicting_object(
    const Event& event, const PeriodSpec& periods,
    const std::vector<const RiskScorer*>& scorers, const EvalOptions& options) {
  if (scorers.empty()) throw ArgumentError("select_conflicting_object: no scorers");
  const auto ids = object_ids(event);

  std::map<std::string, int> votes;
  int cast = 0;
  for (const RiskScorer* scorer : scorers) {
    // Stage 1: highest mean danger-period risk, then the percentile screen.
    std::string candidate;
    double best_mean = -kInf;
    ScoreSeries candidate_series;
    for (const auto& id : ids) {
      const ScoreSeries series = scorer->score(event, id);
      const auto danger = values_in(series, periods.danger_start, periods.danger_end);
      if (danger.empty()) continue;
      double mean = 0.0;
      for (double v : danger) mean += v;
      mean /= static_cast<double>(danger.size());
      if (mean > best_mean) {
        best_mean = mean;
        candidate = id;
        candidate_series = series;
      }
    }
    if (candidate.empty()) continue;  // abstain: nothing scored in danger

    auto danger = values_in(candidate_series, periods.danger_start, periods.danger_end);
    auto pre = values_in(candidate_series, -kInf, periods.danger_start - kTimeEps);
    if (pre.empty()) continue;  // abstain: cannot confirm without pre-danger data
    std::sort(danger.begin(), danger.end());
    std::sort(pre.begin(), pre.end());
    bool confirmed = true;
    for (const double p : {0.25, 0.50, 0.75}) {
      if (!(quantile_sorted(pre, p) < quantile_sorted(danger, p))) {
        confirmed = false;
        break;
      }
    }
    if (!confirmed) continue;  // abstain: candidate fails the percentile rule
    votes[candidate] += 1;
    ++cast;
  }

  if (votes.empty()) return {};
  // Stage 2: over 1/3 of the votes for, under 1/3 against.
  const int total = options.abstentions_count_in_total ? static_cast<int>(scorers.size()) : cast;
  std::string winner;
  int winner_votes = 0;
  for (const auto& [id, n] : votes) {
    if (n > winner_votes) {
      winner = id;
      winner_votes = n;
    }
  }
  const int against = cast - winner_votes;
  if (3 * winner_votes > total && 3 * against < total) return winner;
  return {};
}

namespace {

bool danger_alert(const PeriodSpec& periods, const ScoreSeries& series, double threshold,
                  const EvalOptions& options) {
  long count = 0, run = 0, best_run = 0;
  double prev_time = -kInf;
  for (size_t i = 0; i < series.time.size(); ++i) {
    const double t = series.time[i];
    if (t < periods.danger_start - kTimeEps || t > periods.danger_end + kTimeEps) continue;
    if (series.value[i] > threshold) {
      ++count;
      run = (t - prev_time <= kDt + kTimeEps) ? run + 1 : 1;
      best_run = std::max(best_run, run);
      prev_time = t;
    } else {
      run = 0;
      prev_time = -kInf;
    }
  }
  const long needed = std::lround(options.min_alert_seconds / kDt);
  return (options.contiguous_alert ? best_run : count) >= needed;
}

}  // namespace

ConfusionCounts confusion_counts(const PeriodSpec& periods,
                                 const ScoreSeries& conflict_series,
                                 const std::map<std::string, ScoreSeries>& object_series,
                                 double threshold, const EvalOptions& options) {
  ConfusionCounts counts;
  if (danger_alert(periods, conflict_series, threshold, options)) {
    counts.tp = 1;
  } else {
    counts.fn = 1;
  }
  for (const auto& window : periods.safe) {
    const auto it = object_series.find(window.object_id);
    if (it == object_series.end()) continue;
    bool alert = false;
    for (size_t i = 0; i < it->second.time.size(); ++i) {
      const double t = it->second.time[i];
      if (t < window.start - kTimeEps || t > window.end + kTimeEps) continue;
      if (it->second.value[i] > threshold) {
        alert = true;
        break;
      }
    }
    alert ? ++counts.fp : ++counts.tn;
  }
  return counts;
}

double time_to_impact(const ScoreSeries& series, double threshold, double impact_time) {
  double crossing = kNaN;
  bool prev_above = false;  // virtual sample before the series is below
  for (size_t i = 0; i < series.time.size(); ++i) {
    if (series.time[i] > impact_time + kTimeEps) break;
    const bool above = series.value[i] > threshold;
    if (above && !prev_above) crossing = series.time[i];
    prev_above = above;
  }
  return std::isnan(crossing) ? kNaN : impact_time - crossing;
}

MedianCi sign_test_ci(std::vector<double> values, double confidence) {
  MedianCi ci{kNaN, kNaN};
  if (values.empty()) return ci;
  std::sort(values.begin(), values.end());
  const auto n = static_cast<int>(values.size());
  const double alpha_half = 0.5 * (1.0 - confidence);
  // Largest d >= 1 with P(Bin(n, 1/2) <= d - 1) <= alpha/2.
  int d = 1;
  double cdf = 0.0;
  for (int k = 0; k < n; ++k) {
    const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                           std::lgamma(n - k + 1.0) - n * std::log(2.0);
    cdf += std::exp(log_pmf);
    if (cdf <= alpha_half) {
      d = k + 2;  // P(X <= k) still within the tail budget
    } else {
      break;
    }
  }
  d = std::min(d, (n + 1) / 2);
  ci.lo = values[d - 1];
  ci.hi = values[n - d];
  return ci;
}

namespace {

struct SweepCounts {
  ConfusionCounts totals;
  std::vector<double> ttis;  // finite TTIs of TP events
};

SweepCounts sweep_at(const std::vector<ScoredEventInput>& events, double threshold,
                     const EvalOptions& options) {
  SweepCounts out;
  for (const auto& ev : events) {
    const ConfusionCounts c = confusion_counts(ev.periods, ev.conflict_series,
                                               ev.object_series, threshold, options);
    out.totals.tp += c.tp;
    out.totals.fn += c.fn;
    out.totals.fp += c.fp;
    out.totals.tn += c.tn;
    if (c.tp > 0) {
      const double tti = time_to_impact(ev.conflict_series, threshold, ev.impact_time);
      if (std::isfinite(tti)) out.ttis.push_back(tti);
    }
  }
  return out;
}

CurvePoint point_from(const SweepCounts& sweep, double threshold,
                      const EvalOptions& options) {
  CurvePoint pt;
  pt.threshold = threshold;
  const auto& c = sweep.totals;
  pt.r_fp = (c.fp + c.tn) > 0 ? static_cast<double>(c.fp) / (c.fp + c.tn) : 0.0;
  pt.r_fn = (c.tp + c.fn) > 0 ? static_cast<double>(c.fn) / (c.tp + c.fn) : 0.0;
  pt.recall = 1.0 - pt.r_fn;
  pt.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : kNaN;
  pt.f1 = (c.tp > 0) ? 2.0 * pt.precision * pt.recall / (pt.precision + pt.recall) : 0.0;
  std::vector<double> capped;
  for (double t : sweep.ttis) {
    if (t < options.tti_cap) capped.push_back(t);
  }
  pt.mtti = capped.empty() ? kNaN : median(capped);
  if (!sweep.ttis.empty()) {
    long ge = 0;
    for (double t : sweep.ttis) {
      if (t >= 1.5) ++ge;
    }
    pt.p_tti_ge_1_5 = static_cast<double>(ge) / static_cast<double>(sweep.ttis.size());
  } else {
    pt.p_tti_ge_1_5 = kNaN;
  }
  return pt;
}

// Trapezoid over recall with max precision per distinct recall, anchored at
// (recall 0, precision 1).
double auprc_from_points(const std::vector<CurvePoint>& points) {
  std::map<double, double> best;  // recall -> max precision
  best[0.0] = 1.0;
  for (const auto& pt : points) {
    if (std::isnan(pt.precision)) continue;
    auto [it, inserted] = best.try_emplace(pt.recall, pt.precision);
    if (!inserted) it->second = std::max(it->second, pt.precision);
  }
  double area = 0.0;
  auto prev = best.begin();
  for (auto it = std::next(best.begin()); it != best.end(); ++it, ++prev) {
    area += (it->first - prev->first) * 0.5 * (it->second + prev->second);
  }
  return area;
}

// Normalized area under the ROC over recall in [rate, 1]; min R_FP per
// distinct recall, linear interpolation, anchors (0,0) and (1,1).
double a_roc_from_points(const std::vector<CurvePoint>& points, double rate) {
  if (rate >= 1.0) return 0.0;
  std::map<double, double> best;  // recall -> min R_FP
  best[0.0] = 0.0;
  best[1.0] = 1.0;
  for (const auto& pt : points) {
    auto [it, inserted] = best.try_emplace(pt.recall, pt.r_fp);
    if (!inserted) it->second = std::min(it->second, pt.r_fp);
  }
  double area = 0.0;
  auto prev = best.begin();
  for (auto it = std::next(best.begin()); it != best.end(); ++it, ++prev) {
    double r0 = prev->first, g0 = 1.0 - prev->second;
    double r1 = it->first, g1 = 1.0 - it->second;
    if (r1 <= rate) continue;
    if (r0 < rate) {
      const double u = (rate - r0) / (r1 - r0);
      g0 = g0 + u * (g1 - g0);
      r0 = rate;
    }
    area += (r1 - r0) * 0.5 * (g0 + g1);
  }
  return area / (1.0 - rate);
}

}  // namespace

EvalReport curves_and_metrics(const std::vector<ScoredEventInput>& events,
                              const EvalOptions& options, const std::string& scorer_name) {
  if (events.empty()) throw EvalError("curves_and_metrics: no scored events");
  EvalReport report;
  report.scorer = scorer_name;
  report.n_events = static_cast<long>(events.size());
  report.n_danger = static_cast<long>(events.size());
  for (const auto& ev : events) {
    report.n_safe_windows += static_cast<long>(ev.periods.safe.size());
  }

  // Quantile-spaced thresholds over the values that are actually scored,
  // plus the all-alert point at -inf.
  std::vector<double> pooled;
  for (const auto& ev : events) {
    const auto danger =
        values_in(ev.conflict_series, ev.periods.danger_start, ev.periods.danger_end);
    pooled.insert(pooled.end(), danger.begin(), danger.end());
    for (const auto& w : ev.periods.safe) {
      const auto it = ev.object_series.find(w.object_id);
      if (it == ev.object_series.end()) continue;
      const auto safe = values_in(it->second, w.start, w.end);
      pooled.insert(pooled.end(), safe.begin(), safe.end());
    }
  }
  if (pooled.empty()) throw EvalError("curves_and_metrics: no scored values");
  std::sort(pooled.begin(), pooled.end());
  std::set<double> grid;
  grid.insert(-kInf);
  const int n_thresholds = std::max(2, options.threshold_count);
  for (int k = 0; k < n_thresholds; ++k) {
    grid.insert(quantile_nearest_sorted(
        pooled, static_cast<double>(k) / static_cast<double>(n_thresholds - 1)));
  }

  for (const double threshold : grid) {
    report.points.push_back(point_from(sweep_at(events, threshold, options), threshold, options));
  }

  report.auprc = auprc_from_points(report.points);
  for (const double rate : options.restriction_rates) {
    report.a_roc[rate] = a_roc_from_points(report.points, rate);
    double best = kNaN;
    for (const auto& pt : report.points) {
      if (std::isnan(pt.precision) || pt.recall < rate - 1e-12) continue;
      if (std::isnan(best) || pt.precision > best) best = pt.precision;
    }
    report.precision_prc[rate] = best;
  }

  // Optimal-accuracy point; ties resolved toward the larger threshold.
  size_t star = 0;
  for (size_t i = 1; i < report.points.size(); ++i) {
    if (report.points[i].f1 >= report.points[star].f1) star = i;
  }
  report.max_f1 = report.points[star].f1;
  report.threshold_star = report.points[star].threshold;
  report.mtti_star = report.points[star].mtti;
  report.p_tti_ge_1_5_star = report.points[star].p_tti_ge_1_5;

  const SweepCounts star_sweep = sweep_at(events, report.threshold_star, options);
  std::vector<double> capped;
  for (double t : star_sweep.ttis) {
    if (t < options.tti_cap) capped.push_back(t);
  }
  if (!capped.empty()) {
    std::sort(capped.begin(), capped.end());
    report.mtti_q1 = quantile_sorted(capped, 0.25);
    report.mtti_q3 = quantile_sorted(capped, 0.75);
    report.mtti_ci = sign_test_ci(capped);
  } else {
    report.mtti_q1 = report.mtti_q3 = kNaN;
    report.mtti_ci = {kNaN, kNaN};
  }
  return report;
}

PipelineResult evaluate_events(const std::vector<Event>& events,
                               const std::vector<const RiskScorer*>& scorers,
                               const EvalOptions& options) {
  if (scorers.empty()) throw ArgumentError("evaluate_events: no scorers");

  std::vector<const Event*> annotated;
  for (const auto& ev : events) {
    if (ev.severity != Severity::kBaseline && ev.annotations.impact_time.has_value()) {
      annotated.push_back(&ev);
    }
  }

  struct PerEvent {
    PeriodSpec periods;
    std::string conflict;
    // scorer index -> object id -> series
    std::vector<std::map<std::string, ScoreSeries>> series;
  };
  const auto per_event = parallel_map<PerEvent>(
      annotated.size(), resolve_workers(options.workers), [&](size_t i) {
        const Event& ev = *annotated[i];
        PerEvent out;
        out.periods = build_periods(ev);
        out.series.resize(scorers.size());
        for (size_t s = 0; s < scorers.size(); ++s) {
          for (const auto& id : object_ids(ev)) {
            out.series[s][id] = scorers[s]->score(ev, id);
          }
        }
        out.conflict = select_conflicting_object(ev, out.periods, scorers, options);
        return out;
      });

  PipelineResult result;
  for (size_t s = 0; s < scorers.size(); ++s) {
    std::vector<ScoredEventInput> inputs;
    for (size_t i = 0; i < annotated.size(); ++i) {
      const Event& ev = *annotated[i];
      if (i < per_event.size()) result.conflict_ids[ev.event_id] = per_event[i].conflict;
      if (per_event[i].conflict.empty()) continue;
      ScoredEventInput in;
      in.event_id = ev.event_id;
      in.impact_time = *ev.annotations.impact_time;
      in.periods = per_event[i].periods;
      in.conflict_id = per_event[i].conflict;
      in.object_series = per_event[i].series[s];
      in.conflict_series = in.object_series.at(in.conflict_id);
      // Safe windows of the conflicting object itself are not scored.
      auto& windows = in.periods.safe;
      windows.erase(std::remove_if(windows.begin(), windows.end(),
                                   [&](const PeriodSpec::SafeWindow& w) {
                                     return w.object_id == in.conflict_id;
                                   }),
                    windows.end());
      inputs.push_back(std::move(in));
    }
    if (!inputs.empty()) {
      result.reports[scorers[s]->name()] =
          curves_and_metrics(inputs, options, scorers[s]->name());
    }
  }
  return result;
}

namespace {

std::string csv_field(double v) {
  return std::isnan(v) ? std::string() : format_double(v);
}

void write_points_csv(const std::filesystem::path& path,
                      const std::vector<CurvePoint>& points) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "threshold,R_FP,R_FN,precision,recall,F1,mTTI,P_tti_ge_1_5\n";
  for (const auto& pt : points) {
    out << csv_field(pt.threshold) << ',' << csv_field(pt.r_fp) << ',' << csv_field(pt.r_fn)
        << ',' << csv_field(pt.precision) << ',' << csv_field(pt.recall) << ','
        << csv_field(pt.f1) << ',' << csv_field(pt.mtti) << ','
        << csv_field(pt.p_tti_ge_1_5) << "\n";
  }
}

}  // namespace

void write_eval_report(const std::filesystem::path& dir, const EvalReport& report) {
  const auto scorer_dir = dir / report.scorer;
  std::filesystem::create_directories(scorer_dir);

  nlohmann::json j;
  j["scorer"] = report.scorer;
  j["auprc"] = report.auprc;
  nlohmann::json aroc, pprc;
  for (const auto& [rate, v] : report.a_roc) aroc[format_double(rate)] = v;
  for (const auto& [rate, v] : report.precision_prc) {
    pprc[format_double(rate)] = std::isnan(v) ? nlohmann::json() : nlohmann::json(v);
  }
  j["a_roc"] = std::move(aroc);
  j["precision_prc"] = std::move(pprc);
  j["max_f1"] = report.max_f1;
  j["threshold_star"] = std::isfinite(report.threshold_star)
                            ? nlohmann::json(report.threshold_star)
                            : nlohmann::json();
  j["mtti_star"] = std::isnan(report.mtti_star) ? nlohmann::json() : nlohmann::json(report.mtti_star);
  j["p_tti_ge_1_5_star"] = std::isnan(report.p_tti_ge_1_5_star)
                               ? nlohmann::json()
                               : nlohmann::json(report.p_tti_ge_1_5_star);
  j["mtti_q1"] = std::isnan(report.mtti_q1) ? nlohmann::json() : nlohmann::json(report.mtti_q1);
  j["mtti_q3"] = std::isnan(report.mtti_q3) ? nlohmann::json() : nlohmann::json(report.mtti_q3);
  j["mtti_ci99"] = {std::isnan(report.mtti_ci.lo) ? nlohmann::json() : nlohmann::json(report.mtti_ci.lo),
                    std::isnan(report.mtti_ci.hi) ? nlohmann::json() : nlohmann::json(report.mtti_ci.hi)};
  j["n_events"] = report.n_events;
  j["n_danger_periods"] = report.n_danger;
  j["n_safe_windows"] = report.n_safe_windows;
  std::ofstream out(scorer_dir / "report.json");
  if (!out) throw Error("cannot write report.json under " + scorer_dir.string());
  out << j.dump(2) << "\n";

  auto roc = report.points;
  std::sort(roc.begin(), roc.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.r_fp != b.r_fp ? a.r_fp < b.r_fp : a.recall < b.recall;
  });
  write_points_csv(scorer_dir / "roc.csv", roc);

  auto prc = report.points;
  prc.erase(std::remove_if(prc.begin(), prc.end(),
                           [](const CurvePoint& p) { return std::isnan(p.precision); }),
            prc.end());
  std::sort(prc.begin(), prc.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.recall != b.recall ? a.recall < b.recall : a.precision > b.precision;
  });
  write_points_csv(scorer_dir / "prc.csv", prc);

  auto atc = report.points;
  atc.erase(std::remove_if(atc.begin(), atc.end(),
                           [](const CurvePoint& p) { return std::isnan(p.mtti); }),
            atc.end());
  write_points_csv(scorer_dir / "atc.csv", atc);
}

}  // namespace gssm
