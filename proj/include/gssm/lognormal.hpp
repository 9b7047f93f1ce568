#pragma once

namespace gssm {

// Conditional lognormal parameters produced by the density model. The
// variance is carried as log(sigma^2), clamped to [-10, 10] before any
// exponentiation.
struct LognormalParams {
  double mu = 0.0;
  double log_var = 0.0;
};

constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 10.0;

double lognormal_pdf(double s, const LognormalParams& params);
/// CDF via the error function.
double lognormal_cdf(double s, const LognormalParams& params);

/// Per-sample negative log-likelihood:
/// 0.5*[ln 2*pi + log_var + (ln s - mu)^2 / sigma^2] + ln s. Throws on s <= 0.
double nll_loss(const LognormalParams& params, double s);

// Jensen-Shannon divergence between two lognormals. Lognormals map to
// normals under s -> ln s, and f-divergences are invariant under that
// bijection, so the quadrature runs in log space: 64-point Gauss-Legendre
// over the union of both components' mu +- 8 sigma ranges.
double js_divergence_lognormal(const LognormalParams& p, const LognormalParams& q,
                               int quad_points = 64);

}  // namespace gssm
