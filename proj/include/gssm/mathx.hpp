#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gssm {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

/// Wrap an angle to [-pi, pi].
double wrap_angle(double a);

/// Shortest-arc interpolation between two angles; t in [0,1].
double lerp_angle(double a, double b, double t);

// Error function by rational approximation (three-region Chebyshev fit).
// Max absolute error < 3e-16 on [-6, 6], verified against a long-double
// series / continued-fraction oracle in the test suite.
double erf_approx(double x);
double erfc_approx(double x);

/// Standard normal CDF via erfc_approx.
double normal_cdf(double z);
/// Standard normal survival function, accurate in the far tail.
double normal_sf(double z);
/// Standard normal density.
double normal_pdf(double z);
/// Inverse standard normal CDF (rational approximation + one Halley step).
double normal_quantile(double p);

struct QuadratureRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// Gauss-Legendre nodes/weights on [-1, 1]; cached per order.
const QuadratureRule& gauss_legendre(int order);

/// Linear-interpolation quantile (type 7) of an already sorted vector.
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Nearest-rank quantile of a sorted vector: always returns a data value.
double quantile_nearest_sorted(const std::vector<double>& sorted, double p);

double median(std::vector<double> values);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace gssm
