// Shared random fixtures for the test and acceptance suites.
#pragma once

#include <vector>

#include "kdeashmm/model.hpp"
#include "kdeashmm/rng.hpp"
#include "kdeashmm/time_series.hpp"

namespace fixtures {

inline std::vector<std::string> var_names(std::size_t m_count) {
  std::vector<std::string> names;
  for (std::size_t m = 0; m < m_count; ++m) names.push_back("x" + std::to_string(m));
  return names;
}

inline kdeas::TimeSeries random_series(kdeas::Rng& rng, std::size_t rows, std::size_t cols,
                                       double scale = 1.0) {
  kdeas::Mat values(rows, cols);
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t m = 0; m < cols; ++m) values(t, m) = scale * rng.normal();
  return kdeas::TimeSeries(std::move(values), var_names(cols));
}

inline std::vector<double> random_simplex(kdeas::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double sum = 0.0;
  for (double& x : v) sum += (x = 0.05 + rng.uniform());
  for (double& x : v) x /= sum;
  return v;
}

// Random naive-graph model with its own random centers.
inline kdeas::KdeAsHmmModel random_naive_model(kdeas::Rng& rng, std::size_t n_states,
                                               std::size_t n_vars, std::size_t n_rows,
                                               int p_star) {
  kdeas::KdeAsHmmModel model;
  model.n_states = n_states;
  model.p_star = p_star;
  model.centers = random_series(rng, n_rows, n_vars);
  model.graph = kdeas::ContextGraph(n_states, n_vars);
  model.weights.assign(n_states, std::vector<std::vector<double>>(n_vars));
  model.pi = random_simplex(rng, n_states);
  model.a = kdeas::Mat(n_states, n_states);
  for (std::size_t i = 0; i < n_states; ++i) {
    auto row = random_simplex(rng, n_states);
    for (std::size_t j = 0; j < n_states; ++j) model.a(i, j) = row[j];
  }
  model.h = kdeas::Mat(n_states, n_vars);
  for (std::size_t i = 0; i < n_states; ++i)
    for (std::size_t m = 0; m < n_vars; ++m) model.h(i, m) = 0.3 + rng.uniform();
  const std::size_t L = model.n_centers();
  model.omega = kdeas::Mat(n_states, L);
  for (std::size_t i = 0; i < n_states; ++i) {
    auto row = random_simplex(rng, L);
    for (std::size_t l = 0; l < L; ++l) model.omega(i, l) = row[l];
  }
  model.validate();
  return model;
}

// Adds a random (DAG-safe) structure and weights to a naive model.
inline void add_random_structure(kdeas::Rng& rng, kdeas::KdeAsHmmModel& model) {
  const std::size_t N = model.n_states;
  const std::size_t M = model.n_vars();
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t m = 0; m < M; ++m) {
      if (rng.uniform() < 0.4 && m + 1 < M) model.graph.add_parent(i, m, static_cast<int>(m + 1));
      if (model.p_star > 0 && rng.uniform() < 0.4)
        model.graph.set_ar_order(i, m, 1 + rng.uniform_int(0, model.p_star - 1));
      model.weights[i][m].assign(model.graph.dim(i, m), 0.0);
      for (double& w : model.weights[i][m]) w = rng.uniform(-0.8, 0.8);
    }
  }
  model.validate();
}

}  // namespace fixtures
