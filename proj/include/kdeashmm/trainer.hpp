#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kdeashmm/inference.hpp"
#include "kdeashmm/kernel_math.hpp"
#include "kdeashmm/model.hpp"

namespace kdeas {

struct TrainConfig {
  std::size_t n_states = 1;
  int p_star = 1;
  std::size_t max_iter = 100;
  double rel_tol = 1e-6;
  std::uint64_t seed = 0;
  int threads = 1;
  std::optional<ContextGraph> graph;  // fixed structure; naive when absent
  // Supervised omega start (applied right after initialization).
  std::optional<std::vector<std::string>> omega_labels;
  std::optional<std::map<std::string, int>> label_to_state;
};

struct AcceptedMove {
  int round = 0;
  std::size_t state = 0;
  std::size_t var = 0;
  std::string kind;  // "add-parent" | "increment-ar"
  int parent = -1;   // source variable for add-parent
  double total_before = 0.0;
  double total_after = 0.0;
};

struct FitReport {
  std::vector<double> loglik_per_datum;  // one entry per E-step, non-decreasing
  std::size_t iterations = 0;
  bool converged = false;
  double wall_time_s = 0.0;
  std::vector<AcceptedMove> moves;  // structure moves (sem_fit only)
};

// Initialization recipe: naive graphs, Silverman bandwidths shared across
// states, omega rows drawn U[0.4, 0.6] then normalized, uniform pi, and a
// transition matrix with a heavily weighted diagonal (999 against 1/N).
KdeAsHmmModel init_model(const TimeSeries& series, std::size_t n_states, int p_star,
                         std::uint64_t seed);

// Supervised omega start: entry (i, l) gets 1 when the label of instant l
// maps to state i and 1e-5 otherwise, then rows are normalized.
void init_omega_from_labels(KdeAsHmmModel& model, const std::vector<std::string>& labels,
                            const std::map<std::string, int>& label_to_state);

// Joint posterior P(Q^t = i, W^t_l = 1 | x) for one training pass, held in
// fixed-size time blocks so large runs can stream instead of materializing
// the full (t, l, i) cube.
class KernelPosterior {
 public:
  KernelPosterior(std::size_t n_scored, std::size_t n_centers, std::size_t n_states,
                  int p_star);

  double psi(std::size_t t_rel, std::size_t l_rel, std::size_t state) const {
    const std::size_t b = t_rel / block_rows_;
    const std::size_t r = t_rel % block_rows_;
    return blocks_[b][(r * n_states_ + state) * n_centers_ + l_rel];
  }
  double& psi_mut(std::size_t t_rel, std::size_t l_rel, std::size_t state) {
    const std::size_t b = t_rel / block_rows_;
    const std::size_t r = t_rel % block_rows_;
    return blocks_[b][(r * n_states_ + state) * n_centers_ + l_rel];
  }

  std::size_t n_scored() const { return n_scored_; }
  std::size_t n_centers() const { return n_centers_; }
  std::size_t n_states() const { return n_states_; }
  int p_star() const { return p_star_; }

 private:
  std::size_t n_scored_, n_centers_, n_states_, block_rows_;
  int p_star_;
  std::vector<std::vector<double>> blocks_;
};

// E-step under the training convention (self-excluded emissions). The
// returned psi satisfies sum_{l != t} psi^t_l(i) = gamma^t(i) and
// psi^t_t(i) = 0.
std::pair<Posteriors, KernelPosterior> e_step(const KdeAsHmmModel& model,
                                              const TimeSeries& series, int threads = 1);

// Closed-form M-step updates (reference implementations over a
// materialized KernelPosterior; em_fit streams the same math).
std::vector<double> m_step_weights(const KernelPosterior& psi, const TimeSeries& series,
                                   const ContextGraph& graph, std::size_t state,
                                   std::size_t var);

Bandwidth m_step_bandwidth(const KernelPosterior& psi, const Posteriors& post,
                           const TimeSeries& series, const ContextGraph& graph,
                           const std::vector<double>& weights, std::size_t state,
                           std::size_t var);

std::vector<double> m_step_omega(const KernelPosterior& psi, const Posteriors& post,
                                 std::size_t state);

std::pair<std::vector<double>, Mat> m_step_transitions(const Posteriors& post);

// Full EM fit from the standard initialization (or config.graph).
std::pair<KdeAsHmmModel, FitReport> em_fit(const TimeSeries& series,
                                           const TrainConfig& config);

// EM continuation on an existing model; appends to report.loglik_per_datum
// and enforces the monotonicity guard across the whole trace.
void em_refit(KdeAsHmmModel& model, const TimeSeries& series, const TrainConfig& config,
              FitReport& report);

// --- training internals shared with the structure search ---------------

// Regressor subspace of one (state, var): parent variables in order, then
// own lags 1..n_lags. Mirrors the conditioning-vector ordering.
struct Regressors {
  std::vector<int> parents;
  int n_lags = 0;
  std::size_t dim() const { return parents.size() + static_cast<std::size_t>(n_lags); }
};

// psi-weighted normal equations of one (state, var):
//   a = sum psi ubar ubar^T, b = sum psi ubar xbar, c = sum psi xbar^2.
struct NormalEq {
  std::size_t d = 0;
  std::vector<double> a;  // d*d row-major, symmetric
  std::vector<double> b;  // d
  double c = 0.0;
};

struct EStepAccum {
  Mat omega_num;                           // N x n_centers: sum_t psi^t_l(i)
  std::vector<std::vector<NormalEq>> eq;   // [state][var]
  std::vector<double> gamma_sum;           // per state: sum_t gamma^t(i)
};

std::vector<std::vector<Regressors>> regressors_from_graph(const ContextGraph& graph);
std::vector<std::vector<Regressors>> full_regressors(std::size_t n_states,
                                                     std::size_t n_vars, int p_star);

// One streaming pass over (t, l): emission-style kernel sums are reused to
// form psi rows, which feed the omega numerators and normal equations for
// the requested regressor spaces. Deterministic for any thread count.
EStepAccum accumulate_estep(const EmissionWorkspace& ws, const Mat& gamma,
                            const std::vector<std::vector<Regressors>>& spaces,
                            int threads);

// Solves eq restricted to the given regressor indices (ridge fallback when
// the normal matrix is singular to working precision). Returns the weight
// row and the resulting psi-weighted squared deviation sum.
struct WeightSolve {
  std::vector<double> weights;
  double sse = 0.0;
};
WeightSolve solve_weights(const NormalEq& eq, const std::vector<std::size_t>& subset);

}  // namespace kdeas
