#include "gssm/lognormal.hpp"

#include <algorithm>
#include <cmath>

#include "gssm/errors.hpp"
#include "gssm/mathx.hpp"

namespace gssm {

namespace {

double clamped_sigma(const LognormalParams& p) {
  return std::exp(0.5 * std::clamp(p.log_var, kLogVarMin, kLogVarMax));
}

double log_normal_pdf_at(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * std::log(kTwoPi) - std::log(sigma) - 0.5 * z * z;
}

}  // namespace

double lognormal_pdf(double s, const LognormalParams& params) {
  if (s <= 0.0) return 0.0;
  const double sigma = clamped_sigma(params);
  const double z = (std::log(s) - params.mu) / sigma;
  return std::exp(-0.5 * z * z) / (s * sigma * std::sqrt(kTwoPi));
}

double lognormal_cdf(double s, const LognormalParams& params) {
  if (s <= 0.0) return 0.0;
  const double sigma = clamped_sigma(params);
  return 0.5 * erfc_approx(-(std::log(s) - params.mu) / (sigma * std::sqrt(2.0)));
}

double nll_loss(const LognormalParams& params, double s) {
  if (!(s > 0.0)) throw ArgumentError("nll_loss: spacing must be positive");
  const double log_var = std::clamp(params.log_var, kLogVarMin, kLogVarMax);
  const double r = std::log(s) - params.mu;
  return 0.5 * (std::log(kTwoPi) + log_var + r * r / std::exp(log_var)) + std::log(s);
}

double js_divergence_lognormal(const LognormalParams& p, const LognormalParams& q,
                               int quad_points) {
  const double sp = clamped_sigma(p);
  const double sq = clamped_sigma(q);
  const double lo = std::min(p.mu - 8.0 * sp, q.mu - 8.0 * sq);
  const double hi = std::max(p.mu + 8.0 * sp, q.mu + 8.0 * sq);
  const auto& rule = gauss_legendre(quad_points);
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  double js = 0.0;
  for (int i = 0; i < quad_points; ++i) {
    const double x = mid + half * rule.nodes[i];
    const double lp = log_normal_pdf_at(x, p.mu, sp);
    const double lq = log_normal_pdf_at(x, q.mu, sq);
    const double dp = std::exp(lp);
    const double dq = std::exp(lq);
    const double lm = std::log(0.5 * (dp + dq) + 1e-300);
    js += rule.weights[i] * half * 0.5 * (dp * (lp - lm) + dq * (lq - lm));
  }
  return std::clamp(js, 0.0, std::log(2.0));
}

}  // namespace gssm
