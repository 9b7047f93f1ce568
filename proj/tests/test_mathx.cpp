#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gssm/mathx.hpp"

using namespace gssm;

namespace {

// High-precision oracle: long-double Maclaurin series for |x| <= 3, and the
// backward-evaluated continued fraction of erfc beyond (both accurate to
// well under 1e-18 absolute in this range).
long double erf_oracle(long double x) {
  const long double ax = fabsl(x);
  if (ax <= 3.0L) {
    long double sum = 0.0L;
    long double term = x;
    for (int n = 0; n < 300; ++n) {
      const long double contrib = term / (2 * n + 1);
      sum += contrib;
      term *= -x * x / (n + 1);
      if (fabsl(contrib) < 1e-24L * fabsl(sum) && n > 5) break;
    }
    return sum * 2.0L / sqrtl(3.14159265358979323846264338328L);
  }
  long double cf = 0.0L;
  for (int n = 80; n >= 1; --n) cf = (n * 0.5L) / (ax + cf);
  const long double erfc = expl(-ax * ax) / sqrtl(3.14159265358979323846264338328L) / (ax + cf);
  const long double val = 1.0L - erfc;
  return x >= 0 ? val : -val;
}

}  // namespace

TEST_CASE("erf approximation within 1e-15 absolute of the series oracle on [-6,6]") {
  long double max_err = 0.0L;
  for (double x = -6.0; x <= 6.0; x += 1.0 / 512.0) {
    const long double err = fabsl((long double)erf_approx(x) - erf_oracle(x));
    if (err > max_err) max_err = err;
  }
  CHECK(static_cast<double>(max_err) <= 1e-15);
}

TEST_CASE("erfc matches 1 - erf and stays accurate in the far tail") {
  CHECK(erfc_approx(0.0) == doctest::Approx(1.0).epsilon(1e-15));
  for (double x : {0.1, 0.5, 1.0, 2.0, 3.0}) {
    CHECK(std::fabs(erfc_approx(x) - (1.0 - static_cast<double>(erf_oracle(x)))) < 1e-15);
    CHECK(std::fabs(erfc_approx(-x) - (2.0 - erfc_approx(x))) < 1e-15);
  }
  // Relative accuracy where 1 - erf underflows.
  const double v = erfc_approx(6.0);
  CHECK(v == doctest::Approx(2.1519736712498913e-17).epsilon(1e-12));
}

TEST_CASE("normal cdf / quantile round trip") {
  for (double p = 1e-6; p < 1.0; p += 0.001) {
    const double z = normal_quantile(p);
    CHECK(std::fabs(normal_cdf(z) - p) < 1e-12);
  }
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(normal_cdf(-1.0) == doctest::Approx(0.15865525393145707).epsilon(1e-12));
  CHECK(normal_sf(1.0) == doctest::Approx(0.15865525393145707).epsilon(1e-12));
}

TEST_CASE("gauss-legendre integrates polynomials exactly and exp accurately") {
  const auto& rule = gauss_legendre(8);
  double cubic = 0.0, expo = 0.0;
  for (int i = 0; i < 8; ++i) {
    cubic += rule.weights[i] * std::pow(rule.nodes[i], 3);
    expo += rule.weights[i] * std::exp(rule.nodes[i]);
  }
  CHECK(std::fabs(cubic) < 1e-15);  // odd power over symmetric interval
  CHECK(expo == doctest::Approx(std::exp(1.0) - std::exp(-1.0)).epsilon(1e-14));
  double w_sum = 0.0;
  const auto& big = gauss_legendre(64);
  for (double w : big.weights) w_sum += w;
  CHECK(w_sum == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("angle wrapping and shortest-arc interpolation") {
  CHECK(wrap_angle(3.5) == doctest::Approx(3.5 - kTwoPi).epsilon(1e-15));
  CHECK(wrap_angle(-3.5) == doctest::Approx(-3.5 + kTwoPi).epsilon(1e-15));
  CHECK(wrap_angle(0.3) == doctest::Approx(0.3));
  // Interpolating across the +-pi seam stays on the short arc.
  const double mid = lerp_angle(kPi - 0.1, -kPi + 0.1, 0.5);
  CHECK(std::fabs(wrap_angle(mid - kPi)) < 1e-12);
}

TEST_CASE("quantile conventions") {
  const std::vector<double> v = {1, 2, 3, 4};
  CHECK(quantile_sorted(v, 0.5) == doctest::Approx(2.5));
  CHECK(quantile_sorted(v, 0.0) == 1.0);
  CHECK(quantile_sorted(v, 1.0) == 4.0);
  CHECK(quantile_nearest_sorted(v, 0.5) == 2.0);
  CHECK(quantile_nearest_sorted(v, 0.51) == 3.0);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == doctest::Approx(2.5));
}

TEST_CASE("nearest-rank grid covers every distinct value for small n") {
  const std::vector<double> v = {0.5, 1.5, 2.5, 7.0, 9.0, 9.5, 11.0, 12.0, 13.5, 14.0, 15.0, 16.0};
  std::set<double> hit;
  for (int k = 0; k < 512; ++k) {
    hit.insert(quantile_nearest_sorted(v, static_cast<double>(k) / 511.0));
  }
  CHECK(hit.size() == v.size());
}

TEST_CASE("round-trip double formatting") {
  for (double v : {0.1, 1.0 / 3.0, 12345.6789, 1e-300, -2.5e17}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
