#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <vector>

#include "gssm/density_model.hpp"

namespace gssm {

// k cluster centres in representation space (rows; representations are
// flattened token matrices).
struct ReferenceSet {
  Eigen::MatrixXd centers;  // [k x dim]
};

// k-means with greedy farthest-point seeding from a seeded first pick;
// converges when the largest centre shift drops below 1e-6 (300 iteration
// cap). Deterministic given the seed.
ReferenceSet reference_centers(const Eigen::MatrixXd& representations, int k,
                               uint64_t seed);

/// The differentiated quantity for attributions; theta is a token matrix.
class RiskFunction {
 public:
  virtual ~RiskFunction() = default;
  virtual double value(const Eigen::MatrixXd& theta) const = 0;
  virtual double value_and_grad(const Eigen::MatrixXd& theta,
                                Eigen::MatrixXd* grad) const = 0;
};

/// GSSM level through the model's decoder at fixed observed spacing.
class ModelRiskFunction : public RiskFunction {
 public:
  ModelRiskFunction(const DensityModel& model, double spacing)
      : model_(&model), spacing_(spacing) {}
  double value(const Eigen::MatrixXd& theta) const override;
  double value_and_grad(const Eigen::MatrixXd& theta,
                        Eigen::MatrixXd* grad) const override;

 private:
  const DensityModel* model_;
  double spacing_;
};

struct AttributionVector {
  Eigen::MatrixXd per_component;   // [T x d]
  std::vector<double> per_token;   // summed over the token's components
};

// Monte-Carlo expected gradients over (reference, alpha) draws: references
// cycle through a seeded permutation, alphas are stratified over [0,1].
// Attributions sum to f(theta) minus the mean f over references (within
// Monte-Carlo tolerance; exact for a linear f with balanced quotas).
AttributionVector expected_gradients(const RiskFunction& f, const Eigen::MatrixXd& theta,
                                     const ReferenceSet& refs, int samples,
                                     uint64_t seed);

/// Single-reference midpoint-rule path integral (integrated-gradients mode).
AttributionVector integrated_gradients(const RiskFunction& f, const Eigen::MatrixXd& theta,
                                       const Eigen::MatrixXd& reference, int steps);

enum class PeriodKind { kSafe, kDanger };

// Top-n factors of one step: ranked by positive attribution in safe periods
// and by negative attribution in danger periods; ties break by token index.
std::vector<int> top_factors_step(const AttributionVector& attribution,
                                  PeriodKind period, int n_top);

/// Counts over all steps of how often each token ranked in the top n.
std::map<int, long> top_factors(const std::vector<AttributionVector>& series,
                                PeriodKind period, int n_top = 3);

}  // namespace gssm
