#include "gssm/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gssm/errors.hpp"
#include "gssm/rng.hpp"

namespace gssm {

ReferenceSet reference_centers(const Eigen::MatrixXd& representations, int k,
                               uint64_t seed) {
  const auto n = representations.rows();
  if (k < 1) throw ArgumentError("reference_centers: k must be >= 1");
  if (n < k) throw ArgumentError("reference_centers: k exceeds the set size");

  Rng rng(seed);
  std::vector<Eigen::Index> chosen;
  chosen.push_back(static_cast<Eigen::Index>(rng.uniform_index(static_cast<uint64_t>(n))));
  Eigen::VectorXd nearest =
      (representations.rowwise() - representations.row(chosen[0])).rowwise().squaredNorm();
  while (static_cast<int>(chosen.size()) < k) {
    Eigen::Index far = 0;
    nearest.maxCoeff(&far);
    chosen.push_back(far);
    nearest = nearest.cwiseMin(
        (representations.rowwise() - representations.row(far)).rowwise().squaredNorm());
  }

  Eigen::MatrixXd centers(k, representations.cols());
  for (int c = 0; c < k; ++c) centers.row(c) = representations.row(chosen[c]);

  std::vector<int> assignment(n, 0);
  for (int iter = 0; iter < 300; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        const double d = (representations.row(i) - centers.row(c)).squaredNorm();
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      assignment[i] = best_c;
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, representations.cols());
    std::vector<long> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(assignment[i]) += representations.row(i);
      ++counts[assignment[i]];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        next.row(c) = centers.row(c);  // empty cluster keeps its centre
      } else {
        next.row(c) /= static_cast<double>(counts[c]);
      }
      shift = std::max(shift, (next.row(c) - centers.row(c)).norm());
    }
    centers = std::move(next);
    if (shift < 1e-6) break;
  }
  return {std::move(centers)};
}

double ModelRiskFunction::value(const Eigen::MatrixXd& theta) const {
  return model_->risk_level_with_grad(theta, spacing_, nullptr);
}

double ModelRiskFunction::value_and_grad(const Eigen::MatrixXd& theta,
                                         Eigen::MatrixXd* grad) const {
  return model_->risk_level_with_grad(theta, spacing_, grad);
}

namespace {

AttributionVector finalize(Eigen::MatrixXd per_component) {
  AttributionVector out;
  out.per_token.resize(static_cast<size_t>(per_component.rows()));
  for (Eigen::Index t = 0; t < per_component.rows(); ++t) {
    out.per_token[static_cast<size_t>(t)] = per_component.row(t).sum();
  }
  out.per_component = std::move(per_component);
  return out;
}

Eigen::MatrixXd unflatten_like(const Eigen::VectorXd& flat, const Eigen::MatrixXd& like) {
  Eigen::MatrixXd m(like.rows(), like.cols());
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat[i++];
  }
  return m;
}

}  // namespace

AttributionVector expected_gradients(const RiskFunction& f, const Eigen::MatrixXd& theta,
                                     const ReferenceSet& refs, int samples,
                                     uint64_t seed) {
  if (samples < 1) throw ArgumentError("expected_gradients: samples must be >= 1");
  const auto k = static_cast<int>(refs.centers.rows());
  Rng rng(seed);
  std::vector<int> order(k);
  for (int i = 0; i < k; ++i) order[i] = i;
  rng.shuffle(order);

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
  Eigen::MatrixXd grad;
  for (int m = 0; m < samples; ++m) {
    const Eigen::MatrixXd ref =
        unflatten_like(refs.centers.row(order[m % k]).transpose(), theta);
    const double alpha = (static_cast<double>(m) + rng.uniform()) / samples;
    const Eigen::MatrixXd diff = theta - ref;
    const Eigen::MatrixXd path = ref + alpha * diff;
    f.value_and_grad(path, &grad);
    acc += diff.cwiseProduct(grad);
  }
  return finalize(acc / static_cast<double>(samples));
}

AttributionVector integrated_gradients(const RiskFunction& f, const Eigen::MatrixXd& theta,
                                       const Eigen::MatrixXd& reference, int steps) {
  if (steps < 1) throw ArgumentError("integrated_gradients: steps must be >= 1");
  const Eigen::MatrixXd diff = theta - reference;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
  Eigen::MatrixXd grad;
  for (int j = 0; j < steps; ++j) {
    const double alpha = (j + 0.5) / steps;
    f.value_and_grad(reference + alpha * diff, &grad);
    acc += grad;
  }
  return finalize(diff.cwiseProduct(acc / static_cast<double>(steps)));
}

std::vector<int> top_factors_step(const AttributionVector& attribution,
                                  PeriodKind period, int n_top) {
  std::vector<int> candidates;
  const auto n = static_cast<int>(attribution.per_token.size());
  for (int t = 0; t < n; ++t) {
    const double v = attribution.per_token[static_cast<size_t>(t)];
    if (period == PeriodKind::kSafe ? v > 0.0 : v < 0.0) candidates.push_back(t);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    const double va = attribution.per_token[static_cast<size_t>(a)];
    const double vb = attribution.per_token[static_cast<size_t>(b)];
    return period == PeriodKind::kSafe ? va > vb : va < vb;
  });
  if (static_cast<int>(candidates.size()) > n_top) candidates.resize(n_top);
  return candidates;
}

std::map<int, long> top_factors(const std::vector<AttributionVector>& series,
                                PeriodKind period, int n_top) {
  if (series.empty()) throw ArgumentError("top_factors: empty series");
  std::map<int, long> counts;
  for (const auto& attribution : series) {
    for (int t : top_factors_step(attribution, period, n_top)) counts[t] += 1;
  }
  return counts;
}

}  // namespace gssm
