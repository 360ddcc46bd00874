#pragma once

#include <string>
#include <vector>

#include "kdeashmm/context_graph.hpp"
#include "kdeashmm/mat.hpp"
#include "kdeashmm/time_series.hpp"

#include "json.hpp"

namespace kdeas {

// Kernel-dependency weight rows M_im, one row per (state, variable) of
// length kappa_im + p_im, ordered parents-first (graph declaration order)
// then AR lags 1..p_im. The same ordering is used for every conditioning
// vector in the library and is recorded in the serialized form.
using KernelWeights = std::vector<std::vector<std::vector<double>>>;

// Full parameter set lambda = {pi, A, h, omega, M} plus the per-state
// context graphs and the retained training series (kernel centers).
// Instances are immutable after training; only the trainer mutates them.
struct KdeAsHmmModel {
  std::size_t n_states = 0;
  int p_star = 0;
  std::vector<double> pi;   // N
  Mat a;                    // N x N, rows on the simplex
  ContextGraph graph;
  KernelWeights weights;    // [state][var] -> row of length kappa+p
  Mat h;                    // N x M bandwidths
  Mat omega;                // N x (L+1-P*); column l' maps to instant l'+P*
  TimeSeries centers;       // y^{0:L}

  std::size_t n_vars() const { return centers.n_vars(); }
  std::size_t n_centers() const { return centers.rows() - static_cast<std::size_t>(p_star); }

  // Scored instants of `series` are t in [p_star, rows-1].
  std::size_t n_scored(const TimeSeries& series) const {
    return series.rows() - static_cast<std::size_t>(p_star);
  }

  void validate() const;  // throws InvariantError on any broken invariant
};

// Conditioning vector of (state, var) at absolute time t of `series`:
// parent values at time t followed by own lags t-1 .. t-p_im.
std::vector<double> conditioning_vector(const KdeAsHmmModel& model, std::size_t state,
                                        std::size_t var, std::size_t t,
                                        const TimeSeries& series);

// Kernel center mu^t_{l,i,m} = y^l_m + M_im (u^t - v^l)^T. `center_index`
// is the absolute instant l on the retained training series.
double kernel_center(const KdeAsHmmModel& model, std::size_t state, std::size_t var,
                     std::size_t center_index, std::size_t t, const TimeSeries& series);

// ln b_i(x^t): log_sum_exp over centers of ln omega_il plus the product
// kernel in log form. With exclude_self the component l = t is skipped and
// the omega mass is not renormalized (training convention W^t_t = 0).
double emission_log_density(const KdeAsHmmModel& model, std::size_t state, std::size_t t,
                            const TimeSeries& series, bool exclude_self);

// Batch emission table, rows indexed by t - p_star, columns by state.
// Matches emission_log_density pointwise; O(T*L*N*M) with cached
// correction terms, parallel over time blocks when threads > 1.
Mat log_emission_table(const KdeAsHmmModel& model, const TimeSeries& series,
                       bool exclude_self, int threads = 1);

class EmissionWorkspace;
Mat log_emission_table(const EmissionWorkspace& ws, bool exclude_self, int threads = 1);

// Precomputed per-(state, var) correction terms shared by the emission
// table and the trainer's posterior passes.
class EmissionWorkspace {
 public:
  EmissionWorkspace(const KdeAsHmmModel& model, const TimeSeries& series);

  // out[l'] = sum_m ln K((x^t_m - mu^t_{l,i,m}) / h_im), l' = l - p_star.
  // (No omega and no 1/h factors; callers add what they need.)
  void kernel_log_sums(std::size_t state, std::size_t t, double* out) const;

  std::size_t n_scored() const { return n_scored_; }
  std::size_t n_centers() const { return n_centers_; }
  const KdeAsHmmModel& model() const { return *model_; }
  const TimeSeries& series() const { return *series_; }
  const std::vector<double>& center_column(std::size_t var) const { return y_cols_[var]; }

 private:
  const KdeAsHmmModel* model_;
  const TimeSeries* series_;
  std::size_t n_scored_, n_centers_;
  std::vector<std::vector<double>> y_cols_;                    // [m][l']
  std::vector<std::vector<std::vector<double>>> corr_;          // [i][m][t'] = M_im . u^t
  std::vector<std::vector<std::vector<double>>> center_corr_;   // [i][m][l'] = M_im . v^l
};

// Versioned JSON model file; round trips are value-exact.
void save_model(const KdeAsHmmModel& model, const std::string& path,
                const nlohmann::json* meta = nullptr);
KdeAsHmmModel load_model(const std::string& path);

nlohmann::json model_to_json(const KdeAsHmmModel& model);
KdeAsHmmModel model_from_json(const nlohmann::json& j);

// Graph-only JSON (same schema fragment as the model file).
void save_graph(const ContextGraph& graph, const std::string& path);
ContextGraph load_graph(const std::string& path);

}  // namespace kdeas
