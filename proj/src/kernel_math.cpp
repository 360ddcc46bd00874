#include "kdeashmm/kernel_math.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "kdeashmm/errors.hpp"
#include "kdeashmm/log.hpp"

namespace kdeas {

namespace {
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}

double bandwidth_floor(double sample_std) {
  return kBandwidthFloorScale * (sample_std > 0.0 ? sample_std : 1.0);
}

double gaussian_kernel(double u) {
  if (!std::isfinite(u)) throw std::domain_error("gaussian_kernel: non-finite input");
  return kInvSqrt2Pi * std::exp(-0.5 * u * u);
}

double log_gaussian_kernel(double u) {
  if (!std::isfinite(u)) throw std::domain_error("log_gaussian_kernel: non-finite input");
  return -kHalfLog2Pi - 0.5 * u * u;
}

Bandwidth silverman_bandwidth(double sample_std, std::size_t n) {
  if (n < 2) throw InvariantError("silverman_bandwidth: insufficient data (n < 2)");
  if (!(sample_std >= 0.0) || !std::isfinite(sample_std))
    throw std::domain_error("silverman_bandwidth: invalid sample std");
  const double floor = bandwidth_floor(sample_std);
  if (sample_std == 0.0) {
    log_warn("silverman_bandwidth: degenerate constant feature, using bandwidth floor");
    return Bandwidth{floor};
  }
  const double p5 = sample_std * sample_std * sample_std * sample_std * sample_std;
  const double h = std::pow(4.0 * p5 / (3.0 * static_cast<double>(n)), 0.2);
  return Bandwidth{h < floor ? floor : h};
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw InvariantError("log_sum_exp: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : values)
    if (v > mx) mx = v;
  if (!std::isfinite(mx)) return mx;  // all -inf (or a +inf dominates)
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

}  // namespace kdeas
