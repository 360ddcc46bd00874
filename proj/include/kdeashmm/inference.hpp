#pragma once

#include <vector>

#include "kdeashmm/mat.hpp"
#include "kdeashmm/model.hpp"
#include "kdeashmm/time_series.hpp"

namespace kdeas {

// E-step smoothing quantities for one series. Time rows are indexed by
// t - P*; gamma rows sum to 1 and zeta marginalizes onto gamma.
struct Posteriors {
  std::size_t n = 0;         // scored instants, T+1-P*
  std::size_t n_states = 0;
  Mat gamma;                 // n x N
  std::vector<double> zeta;  // (n-1) x N x N, flattened row-major
  double loglik = 0.0;

  double zeta_at(std::size_t t, std::size_t i, std::size_t j) const {
    return zeta[(t * n_states + i) * n_states + j];
  }
  double& zeta_at(std::size_t t, std::size_t i, std::size_t j) {
    return zeta[(t * n_states + i) * n_states + j];
  }
};

// Log-domain recursions over a precomputed log-emission table (rows = time,
// cols = states). This is the core shared by every model type; the brute
// force oracles in the tests pin its semantics.
Posteriors forward_backward_logb(const std::vector<double>& pi, const Mat& a, const Mat& logb);
double log_likelihood_logb(const std::vector<double>& pi, const Mat& a, const Mat& logb);

// Most probable state path; among ties the lexicographically smallest
// (from the first scored instant, lowest state index) is returned.
std::vector<int> viterbi_logb(const std::vector<double>& pi, const Mat& a, const Mat& logb);

// Convenience wrappers for the KDE model.
Posteriors forward_backward(const KdeAsHmmModel& model, const TimeSeries& series,
                            bool exclude_self = false, int threads = 1);
double log_likelihood(const KdeAsHmmModel& model, const TimeSeries& series, int threads = 1);
std::vector<int> viterbi(const KdeAsHmmModel& model, const TimeSeries& series, int threads = 1);

}  // namespace kdeas
