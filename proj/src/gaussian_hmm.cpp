#include "kdeashmm/gaussian_hmm.hpp"

#include <cmath>

#include "kdeashmm/errors.hpp"
#include "kdeashmm/kernel_math.hpp"
#include "kdeashmm/rng.hpp"

namespace kdeas {

namespace {

double variance_floor(double sd) {
  const double f = 1e-4 * (sd > 0.0 ? sd : 1.0);
  return f * f;
}

}  // namespace

Mat GaussianHmm::log_emission_table(const TimeSeries& series) const {
  const std::size_t n = series.rows();
  const std::size_t M = mean.cols();
  if (series.n_vars() != M) throw InvariantError("gaussian hmm: variable count mismatch");
  Mat logb(n, n_states);
  for (std::size_t i = 0; i < n_states; ++i) {
    double log_norm = 0.0;
    for (std::size_t m = 0; m < M; ++m) log_norm += 0.5 * std::log(var(i, m));
    log_norm += static_cast<double>(M) * kHalfLog2Pi;
    for (std::size_t t = 0; t < n; ++t) {
      double q = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        const double d = series(t, m) - mean(i, m);
        q += d * d / var(i, m);
      }
      logb(t, i) = -log_norm - 0.5 * q;
    }
  }
  return logb;
}

GaussianHmm gaussian_init(const TimeSeries& series, std::size_t n_states,
                          std::uint64_t seed) {
  if (n_states < 1) throw InvariantError("gaussian_init: need at least one state");
  const std::size_t M = series.n_vars();
  GaussianHmm model;
  model.n_states = n_states;
  model.pi.assign(n_states, 1.0 / static_cast<double>(n_states));
  model.a = Mat(n_states, n_states);
  const double off = 1.0 / static_cast<double>(n_states);
  for (std::size_t i = 0; i < n_states; ++i)
    for (std::size_t j = 0; j < n_states; ++j)
      model.a(i, j) = ((i == j) ? 999.0 + off : off) / 1000.0;

  model.mean = Mat(n_states, M);
  model.var = Mat(n_states, M);
  Rng rng(seed);
  for (std::size_t m = 0; m < M; ++m) {
    const double mu = feature_mean(series, m);
    const double sd = sample_std(series, m);
    for (std::size_t i = 0; i < n_states; ++i) {
      model.mean(i, m) = mu + sd * rng.uniform(-1.0, 1.0);
      model.var(i, m) = std::max(sd * sd, variance_floor(sd));
    }
  }
  return model;
}

FitReport gaussian_fit(GaussianHmm& model, const TimeSeries& series, std::size_t max_iter,
                       double rel_tol) {
  FitReport report;
  const std::size_t n = series.rows();
  const std::size_t M = series.n_vars();
  std::vector<double> floors(M);
  for (std::size_t m = 0; m < M; ++m) floors[m] = variance_floor(sample_std(series, m));

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    const Mat logb = model.log_emission_table(series);
    Posteriors post = forward_backward_logb(model.pi, model.a, logb);
    const double ll = post.loglik / static_cast<double>(n);
    if (!report.loglik_per_datum.empty()) {
      const double prev = report.loglik_per_datum.back();
      if (ll < prev - 1e-8 * std::max(1.0, std::abs(prev)))
        throw NumericalError("gaussian_fit: log-likelihood decreased");
      report.loglik_per_datum.push_back(ll);
      ++report.iterations;
      if (std::abs(ll - prev) <= rel_tol * std::max(std::abs(prev), 1e-300)) {
        report.converged = true;
        break;
      }
    } else {
      report.loglik_per_datum.push_back(ll);
      ++report.iterations;
    }

    for (std::size_t i = 0; i < model.n_states; ++i) {
      double gsum = 0.0;
      for (std::size_t t = 0; t < n; ++t) gsum += post.gamma(t, i);
      if (gsum <= 1e-12) continue;  // starved state keeps its parameters
      for (std::size_t m = 0; m < M; ++m) {
        double mu = 0.0;
        for (std::size_t t = 0; t < n; ++t) mu += post.gamma(t, i) * series(t, m);
        mu /= gsum;
        double v = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
          const double d = series(t, m) - mu;
          v += post.gamma(t, i) * d * d;
        }
        model.mean(i, m) = mu;
        model.var(i, m) = std::max(v / gsum, floors[m]);
      }
    }
    auto [pi, a] = m_step_transitions(post);
    model.pi = std::move(pi);
    model.a = std::move(a);
  }
  return report;
}

double gaussian_log_likelihood(const GaussianHmm& model, const TimeSeries& series) {
  return log_likelihood_logb(model.pi, model.a, model.log_emission_table(series));
}

}  // namespace kdeas
