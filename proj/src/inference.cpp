#include "kdeashmm/inference.hpp"

#include <cmath>
#include <limits>

#include "kdeashmm/errors.hpp"
#include "kdeashmm/kernel_math.hpp"

namespace kdeas {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Mat log_transition(const Mat& a) {
  const std::size_t N = a.rows();
  Mat la(N, N);
  for (std::size_t i = 0; i < N; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < N; ++j) row += a(i, j);
    if (row <= 0.0)
      throw InvariantError("inference: transition row " + std::to_string(i) + " is all zero");
    for (std::size_t j = 0; j < N; ++j) la(i, j) = std::log(a(i, j));
  }
  return la;
}

void check_inputs(const std::vector<double>& pi, const Mat& a, const Mat& logb) {
  if (logb.rows() == 0) throw InvariantError("inference: empty emission table");
  if (pi.size() != logb.cols() || a.rows() != pi.size() || a.cols() != pi.size())
    throw InvariantError("inference: dimension mismatch");
}

Mat forward_pass(const std::vector<double>& pi, const Mat& la, const Mat& logb) {
  const std::size_t n = logb.rows(), N = logb.cols();
  Mat lalpha(n, N);
  for (std::size_t i = 0; i < N; ++i) lalpha(0, i) = std::log(pi[i]) + logb(0, i);
  std::vector<double> terms(N);
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < N; ++j) {
      for (std::size_t i = 0; i < N; ++i) terms[i] = lalpha(t - 1, i) + la(i, j);
      lalpha(t, j) = log_sum_exp(terms) + logb(t, j);
    }
  }
  return lalpha;
}

}  // namespace

double log_likelihood_logb(const std::vector<double>& pi, const Mat& a, const Mat& logb) {
  check_inputs(pi, a, logb);
  const Mat la = log_transition(a);
  const Mat lalpha = forward_pass(pi, la, logb);
  return log_sum_exp({lalpha.row_ptr(logb.rows() - 1), logb.cols()});
}

Posteriors forward_backward_logb(const std::vector<double>& pi, const Mat& a,
                                 const Mat& logb) {
  check_inputs(pi, a, logb);
  const std::size_t n = logb.rows(), N = logb.cols();
  const Mat la = log_transition(a);
  const Mat lalpha = forward_pass(pi, la, logb);

  Mat lbeta(n, N, 0.0);
  std::vector<double> terms(N);
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < N; ++j)
        terms[j] = la(i, j) + logb(t + 1, j) + lbeta(t + 1, j);
      lbeta(t, i) = log_sum_exp(terms);
    }
  }

  Posteriors post;
  post.n = n;
  post.n_states = N;
  post.loglik = log_sum_exp({lalpha.row_ptr(n - 1), N});
  if (post.loglik == kNegInf)
    throw NumericalError("inference: sequence has zero probability under the model");

  post.gamma = Mat(n, N);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < N; ++i)
      post.gamma(t, i) = std::exp(lalpha(t, i) + lbeta(t, i) - post.loglik);

  if (n > 1) {
    post.zeta.assign((n - 1) * N * N, 0.0);
    for (std::size_t t = 0; t + 1 < n; ++t)
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
          post.zeta_at(t, i, j) = std::exp(lalpha(t, i) + la(i, j) + logb(t + 1, j) +
                                           lbeta(t + 1, j) - post.loglik);
  }
  return post;
}

std::vector<int> viterbi_logb(const std::vector<double>& pi, const Mat& a, const Mat& logb) {
  check_inputs(pi, a, logb);
  const std::size_t n = logb.rows(), N = logb.cols();
  const Mat la = log_transition(a);

  // nu(t, i): best log score of the path suffix starting at t in state i.
  // Backward dynamic program plus forward reconstruction yields the
  // lexicographically smallest optimal path.
  Mat nu(n, N);
  for (std::size_t i = 0; i < N; ++i) nu(n - 1, i) = logb(n - 1, i);
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t i = 0; i < N; ++i) {
      double best = kNegInf;
      for (std::size_t j = 0; j < N; ++j) {
        const double v = la(i, j) + nu(t + 1, j);
        if (v > best) best = v;
      }
      nu(t, i) = logb(t, i) + best;
    }
  }

  std::vector<int> path(n);
  double best = kNegInf;
  for (std::size_t i = 0; i < N; ++i) {
    const double v = std::log(pi[i]) + nu(0, i);
    if (v > best) {
      best = v;
      path[0] = static_cast<int>(i);
    }
  }
  if (best == kNegInf)
    throw NumericalError("viterbi: sequence has zero probability under the model");
  for (std::size_t t = 1; t < n; ++t) {
    const int q = path[t - 1];
    double b = kNegInf;
    for (std::size_t j = 0; j < N; ++j) {
      const double v = la(static_cast<std::size_t>(q), j) + nu(t, j);
      if (v > b) {
        b = v;
        path[t] = static_cast<int>(j);
      }
    }
  }
  return path;
}

Posteriors forward_backward(const KdeAsHmmModel& model, const TimeSeries& series,
                            bool exclude_self, int threads) {
  return forward_backward_logb(model.pi, model.a,
                               log_emission_table(model, series, exclude_self, threads));
}

double log_likelihood(const KdeAsHmmModel& model, const TimeSeries& series, int threads) {
  return log_likelihood_logb(model.pi, model.a,
                             log_emission_table(model, series, false, threads));
}

std::vector<int> viterbi(const KdeAsHmmModel& model, const TimeSeries& series, int threads) {
  return viterbi_logb(model.pi, model.a, log_emission_table(model, series, false, threads));
}

}  // namespace kdeas
