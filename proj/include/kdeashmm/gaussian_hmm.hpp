#pragma once

#include <cstdint>

#include "kdeashmm/inference.hpp"
#include "kdeashmm/mat.hpp"
#include "kdeashmm/time_series.hpp"
#include "kdeashmm/trainer.hpp"

namespace kdeas {

// Baseline for the benchmark harness: per-state independent Gaussian
// emissions (the "HMM" row of the comparison tables). Not part of the
// model-file surface; it shares the inference core through its emission
// table.
struct GaussianHmm {
  std::size_t n_states = 0;
  std::vector<double> pi;
  Mat a;     // N x N
  Mat mean;  // N x M
  Mat var;   // N x M, floored away from zero

  Mat log_emission_table(const TimeSeries& series) const;
};

GaussianHmm gaussian_init(const TimeSeries& series, std::size_t n_states,
                          std::uint64_t seed);

FitReport gaussian_fit(GaussianHmm& model, const TimeSeries& series, std::size_t max_iter,
                       double rel_tol);

double gaussian_log_likelihood(const GaussianHmm& model, const TimeSeries& series);

}  // namespace kdeas
