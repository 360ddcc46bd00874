#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kdeashmm/context_graph.hpp"
#include "kdeashmm/structure.hpp"
#include "kdeashmm/time_series.hpp"

#include "json.hpp"

namespace kdeas {

// Nonlinear-Gaussian generator for one variable in one state:
//   X^t_m | Q^t=i ~ N( sum_k c_k ((parent_k)^2 - offset)
//                      + sum_r ar_coefs[r-1] X^{t-r}_m,  sigma^2 ).
struct SyntheticVar {
  std::vector<int> parents;
  std::vector<double> parent_coefs;
  double offset = 0.0;
  std::vector<double> ar_coefs;  // lags 1..p
  double sigma = 1.0;
};

struct SyntheticSpec {
  std::size_t n_states = 0;
  std::size_t n_vars = 0;
  std::vector<std::string> feature_names;
  std::vector<int> noise_vars;  // no parents, no AR, state-independent sigma
  int burn_in = 50;             // generated then discarded to wash out zero padding
  std::vector<std::pair<int, int>> state_pattern;    // (state, base length)
  std::vector<std::vector<SyntheticVar>> states;     // [state][var]

  void validate() const;
  int max_lag() const;
  ContextGraph to_graph() const;  // the generating structure (KDE-AsHMM* input)
};

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
SyntheticSpec load_synthetic_spec(const std::string& path);
void save_synthetic_spec(const SyntheticSpec& spec, const std::string& path);

// The base pattern with each segment scaled proportionally to the target
// length (rounded, residual absorbed by the last segment; every segment
// keeps at least one instant when length >= #segments).
std::vector<int> gen_state_sequence(const SyntheticSpec& spec, std::size_t length);

// Ancestral sampling in per-state topological order; AR history before the
// first instant is zero-padded and a burn-in prefix is discarded. The
// generating states are attached as labels.
TimeSeries gen_observations(const SyntheticSpec& spec, const std::vector<int>& states,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// benchmark harness

struct BenchmarkConfig {
  std::vector<std::size_t> train_lengths;
  std::size_t n_test = 20;
  std::size_t test_length = 400;
  std::vector<std::string> variants;  // gauss | kde-hmm | kde-ar | kde-bn | kde-as | kde-as-star
  std::uint64_t seed = 0;
  std::size_t n_states = 3;
  int p_star = 1;
  std::size_t max_iter = 30;
  double rel_tol = 1e-5;
  std::size_t sem_rounds = 1;
  int threads = 1;
};

struct BenchmarkRow {
  std::string variant;
  std::size_t train_length = 0;
  double mean_ll = 0.0;  // per-datum, over the test set
  double std_ll = 0.0;
  double seconds = 0.0;  // training wall time
  std::vector<double> per_series;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
};

BenchmarkReport run_benchmark(const SyntheticSpec& spec, const BenchmarkConfig& config);

// ---------------------------------------------------------------------------
// classification harness

struct ClassificationConfig {
  std::size_t n_states = 3;
  int p_star = 1;
  std::size_t max_iter = 30;
  double rel_tol = 1e-5;
  std::uint64_t seed = 0;
  int threads = 1;
  Variant variant = Variant::kKdeAs;
  std::size_t sem_rounds = 1;
};

struct ClassificationReport {
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
  double random_floor = 0.0;  // 1 / #classes
};

// Per fold: one model per class trained on that fold's series, evaluated on
// every other fold's series; prediction is the class with maximum
// log-likelihood, ties broken lexicographically by class name.
ClassificationReport run_classification(
    const std::map<std::string, std::vector<TimeSeries>>& class_folds,
    const ClassificationConfig& config);

}  // namespace kdeas
