#pragma once

#include <span>

namespace kdeas {

// Smoothing scale of one kernel; always strictly positive (degenerate
// inputs are clamped to a floor instead of producing h = 0).
struct Bandwidth {
  double value = 1.0;
};

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // ln(2*pi)/2

// Relative bandwidth floor: floor = kBandwidthFloorScale * sample_std,
// or kBandwidthFloorScale itself when the feature is constant.
inline constexpr double kBandwidthFloorScale = 1e-8;

double bandwidth_floor(double sample_std);

// Standard Gaussian kernel K(u) = exp(-u^2/2)/sqrt(2*pi).
double gaussian_kernel(double u);

// ln K(u) = -ln(2*pi)/2 - u^2/2.
double log_gaussian_kernel(double u);

// Rule-of-thumb bandwidth (4*std^5 / (3*n))^(1/5), clamped below by the
// floor. n is the number of samples behind the std estimate; requires n >= 2.
Bandwidth silverman_bandwidth(double sample_std, std::size_t n);

// ln sum exp(v_i) with max-shift; -inf elements are absorbed, an empty
// input is an error.
double log_sum_exp(std::span<const double> values);

}  // namespace kdeas
