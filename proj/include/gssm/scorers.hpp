#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gssm/density_model.hpp"
#include "gssm/ssm2d.hpp"
#include "gssm/types.hpp"

namespace gssm {

// A per-object risk time series with a uniform orientation: larger value
// means riskier, whatever the underlying measure.
struct ScoreSeries {
  std::vector<double> time;
  std::vector<double> value;
};

class RiskScorer {
 public:
  virtual ~RiskScorer() = default;
  virtual std::string name() const = 0;
  /// Series over every step where the pair is observed; events are expected
  /// to be reconstructed (global frame).
  virtual ScoreSeries score(const Event& event, const std::string& object_id) const = 0;
};

/// GSSM risk level M per step.
class GssmScorer : public RiskScorer {
 public:
  explicit GssmScorer(const DensityModel& model, std::string name = "gssm")
      : model_(&model), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  ScoreSeries score(const Event& event, const std::string& object_id) const override;

 private:
  const DensityModel* model_;
  std::string name_;
};

/// Fixed-spacing baseline: risk = -spacing, so thresholding compares spacing
/// against a fixed distance.
class SpacingScorer : public RiskScorer {
 public:
  std::string name() const override { return "spacing"; }
  ScoreSeries score(const Event& event, const std::string& object_id) const override;
};

/// TTC2D / TAdv / ACT through the risk orientation adapter.
class Ssm2dScorer : public RiskScorer {
 public:
  explicit Ssm2dScorer(ssm::Measure measure) : measure_(measure) {}
  std::string name() const override { return ssm::to_string(measure_); }
  ScoreSeries score(const Event& event, const std::string& object_id) const override;

 private:
  ssm::Measure measure_;
};

// External-measure plugin: series loaded from risk CSV files
// (event_id,object_id,time,M,p), keyed by event and object.
class CsvScorer : public RiskScorer {
 public:
  CsvScorer(std::string name, const std::vector<std::filesystem::path>& files);
  std::string name() const override { return name_; }
  ScoreSeries score(const Event& event, const std::string& object_id) const override;

 private:
  std::string name_;
  std::map<std::pair<std::string, std::string>, ScoreSeries> series_;
};

}  // namespace gssm
