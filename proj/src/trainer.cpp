#include "kdeashmm/trainer.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "kdeashmm/errors.hpp"
#include "kdeashmm/log.hpp"
#include "kdeashmm/parallel.hpp"
#include "kdeashmm/rng.hpp"

namespace kdeas {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kOmegaSmoothing = 1e-12;
constexpr double kStarvationTol = 1e-12;
constexpr double kMonotonicitySlack = 1e-8;

// psi row for one (t, state): gamma * softmax over l != t of the kernel
// log products plus ln omega. Writes n_centers values, zero at l = t.
void psi_row(const EmissionWorkspace& ws, const Mat& log_omega, std::size_t state,
             std::size_t t_abs, double gamma_ti, double* s_buf, double* out) {
  const std::size_t L = ws.n_centers();
  const std::size_t p_star = static_cast<std::size_t>(ws.model().p_star);
  ws.kernel_log_sums(state, t_abs, s_buf);
  double mx = kNegInf;
  for (std::size_t l = 0; l < L; ++l) {
    s_buf[l] += log_omega(state, l);
    if (l + p_star != t_abs && s_buf[l] > mx) mx = s_buf[l];
  }
  if (gamma_ti <= 0.0 || mx == kNegInf) {
    for (std::size_t l = 0; l < L; ++l) out[l] = 0.0;
    return;
  }
  double denom = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    out[l] = (l + p_star == t_abs) ? 0.0 : std::exp(s_buf[l] - mx);
    denom += out[l];
  }
  const double scale = gamma_ti / denom;
  for (std::size_t l = 0; l < L; ++l) out[l] *= scale;
}

Mat log_omega_matrix(const KdeAsHmmModel& model) {
  Mat lo(model.n_states, model.n_centers());
  for (std::size_t i = 0; i < model.n_states; ++i)
    for (std::size_t l = 0; l < model.n_centers(); ++l)
      lo(i, l) = std::log(model.omega(i, l));
  return lo;
}

// Centered regressor values at the kernel centers: V[k][l], with the per
// variable mean removed (a common shift of u and v leaves ubar intact and
// avoids cancellation in the expanded normal equations).
std::vector<std::vector<double>> center_regressor_matrix(const TimeSeries& centers,
                                                         const Regressors& reg,
                                                         std::size_t var, int p_star,
                                                         const std::vector<double>& means) {
  const std::size_t L = centers.rows() - static_cast<std::size_t>(p_star);
  std::vector<std::vector<double>> V(reg.dim(), std::vector<double>(L));
  std::size_t k = 0;
  for (int pvar : reg.parents) {
    for (std::size_t l = 0; l < L; ++l)
      V[k][l] = centers(l + p_star, static_cast<std::size_t>(pvar)) -
                means[static_cast<std::size_t>(pvar)];
    ++k;
  }
  for (int r = 1; r <= reg.n_lags; ++r) {
    for (std::size_t l = 0; l < L; ++l)
      V[k][l] = centers(l + p_star - static_cast<std::size_t>(r), var) - means[var];
    ++k;
  }
  return V;
}

void gather_u(const TimeSeries& series, const Regressors& reg, std::size_t var,
              std::size_t t_abs, const std::vector<double>& means, double* out) {
  std::size_t k = 0;
  for (int pvar : reg.parents)
    out[k++] = series(t_abs, static_cast<std::size_t>(pvar)) -
               means[static_cast<std::size_t>(pvar)];
  const int p = reg.n_lags;
  for (int r = 1; r <= p; ++r)
    out[k++] = series(t_abs - static_cast<std::size_t>(r), var) - means[var];
}

}  // namespace

// ---------------------------------------------------------------------------
// initialization

KdeAsHmmModel init_model(const TimeSeries& series, std::size_t n_states, int p_star,
                         std::uint64_t seed) {
  if (n_states < 1) throw InvariantError("init_model: need at least one state");
  if (p_star < 0) throw InvariantError("init_model: negative P*");
  if (series.rows() < static_cast<std::size_t>(p_star) + 2)
    throw InvariantError("init_model: series too short for P*=" + std::to_string(p_star));

  KdeAsHmmModel model;
  model.n_states = n_states;
  model.p_star = p_star;
  model.centers = series;
  const std::size_t M = series.n_vars();
  const std::size_t L1 = series.rows();  // L+1 samples behind each std estimate

  model.graph = ContextGraph(n_states, M);
  model.weights.assign(n_states, std::vector<std::vector<double>>(M));

  model.h = Mat(n_states, M);
  for (std::size_t m = 0; m < M; ++m) {
    const double hm = silverman_bandwidth(sample_std(series, m), L1).value;
    for (std::size_t i = 0; i < n_states; ++i) model.h(i, m) = hm;
  }

  const std::size_t n_centers = model.n_centers();
  model.omega = Mat(n_states, n_centers);
  Rng rng(seed);
  for (std::size_t i = 0; i < n_states; ++i) {
    double sum = 0.0;
    for (std::size_t l = 0; l < n_centers; ++l) {
      model.omega(i, l) = rng.uniform(0.4, 0.6);
      sum += model.omega(i, l);
    }
    for (std::size_t l = 0; l < n_centers; ++l) model.omega(i, l) /= sum;
  }

  model.pi.assign(n_states, 1.0 / static_cast<double>(n_states));

  model.a = Mat(n_states, n_states);
  const double off = 1.0 / static_cast<double>(n_states);
  const double row_sum = 999.0 + 1.0;  // diagonal weight plus N * (1/N)
  for (std::size_t i = 0; i < n_states; ++i)
    for (std::size_t j = 0; j < n_states; ++j)
      model.a(i, j) = ((i == j) ? 999.0 + off : off) / row_sum;

  model.validate();
  return model;
}

void init_omega_from_labels(KdeAsHmmModel& model, const std::vector<std::string>& labels,
                            const std::map<std::string, int>& label_to_state) {
  const std::size_t p_star = static_cast<std::size_t>(model.p_star);
  if (labels.size() != model.centers.rows())
    throw InvariantError("init_omega_from_labels: labels must cover the training series");
  const std::size_t n_centers = model.n_centers();
  for (std::size_t l = 0; l < n_centers; ++l) {
    auto it = label_to_state.find(labels[l + p_star]);
    if (it == label_to_state.end())
      throw InvariantError("init_omega_from_labels: unmapped label '" + labels[l + p_star] +
                           "'");
    const int state = it->second;
    if (state < 0 || static_cast<std::size_t>(state) >= model.n_states)
      throw InvariantError("init_omega_from_labels: label mapped to invalid state");
    for (std::size_t i = 0; i < model.n_states; ++i)
      model.omega(i, l) = (static_cast<std::size_t>(state) == i) ? 1.0 : 1e-5;
  }
  for (std::size_t i = 0; i < model.n_states; ++i) {
    double sum = 0.0;
    for (std::size_t l = 0; l < n_centers; ++l) sum += model.omega(i, l);
    for (std::size_t l = 0; l < n_centers; ++l) model.omega(i, l) /= sum;
  }
}

// ---------------------------------------------------------------------------
// E-step

KernelPosterior::KernelPosterior(std::size_t n_scored, std::size_t n_centers,
                                 std::size_t n_states, int p_star)
    : n_scored_(n_scored),
      n_centers_(n_centers),
      n_states_(n_states),
      block_rows_(kBlockSize),
      p_star_(p_star) {
  const std::size_t nblocks = (n_scored + block_rows_ - 1) / block_rows_;
  blocks_.resize(nblocks);
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t rows = std::min(block_rows_, n_scored - b * block_rows_);
    blocks_[b].assign(rows * n_states * n_centers, 0.0);
  }
}

std::pair<Posteriors, KernelPosterior> e_step(const KdeAsHmmModel& model,
                                              const TimeSeries& series, int threads) {
  if (series.rows() != model.centers.rows())
    throw InvariantError("e_step: series length differs from the training series");
  EmissionWorkspace ws(model, series);
  const Mat logb = log_emission_table(ws, /*exclude_self=*/true, threads);
  Posteriors post = forward_backward_logb(model.pi, model.a, logb);

  const std::size_t p_star = static_cast<std::size_t>(model.p_star);
  const std::size_t N = model.n_states;
  const std::size_t L = ws.n_centers();
  const Mat log_omega = log_omega_matrix(model);
  KernelPosterior psi(ws.n_scored(), L, N, model.p_star);

  parallel_blocks(ws.n_scored(), threads, [&](std::size_t t0, std::size_t t1, std::size_t) {
    std::vector<double> s(L), row(L);
    for (std::size_t tr = t0; tr < t1; ++tr) {
      for (std::size_t i = 0; i < N; ++i) {
        psi_row(ws, log_omega, i, tr + p_star, post.gamma(tr, i), s.data(), row.data());
        for (std::size_t l = 0; l < L; ++l) psi.psi_mut(tr, l, i) = row[l];
      }
    }
  });
  return {std::move(post), std::move(psi)};
}

// ---------------------------------------------------------------------------
// M-step reference implementations (direct loops over a materialized psi)

namespace {

Regressors regressors_of(const ContextGraph& graph, std::size_t state, std::size_t var) {
  return Regressors{graph.parents(state, var), graph.ar_order(state, var)};
}

}  // namespace

std::vector<double> m_step_weights(const KernelPosterior& psi, const TimeSeries& series,
                                   const ContextGraph& graph, std::size_t state,
                                   std::size_t var) {
  const Regressors reg = regressors_of(graph, state, var);
  const std::size_t d = reg.dim();
  if (d == 0) return {};
  const std::size_t p_star = static_cast<std::size_t>(psi.p_star());
  NormalEq eq;
  eq.d = d;
  eq.a.assign(d * d, 0.0);
  eq.b.assign(d, 0.0);

  std::vector<double> means(series.n_vars());
  for (std::size_t m = 0; m < series.n_vars(); ++m) means[m] = feature_mean(series, m);
  std::vector<double> u(d), v(d), ubar(d);
  for (std::size_t tr = 0; tr < psi.n_scored(); ++tr) {
    gather_u(series, reg, var, tr + p_star, means, u.data());
    for (std::size_t lr = 0; lr < psi.n_centers(); ++lr) {
      if (lr == tr) continue;
      const double p = psi.psi(tr, lr, state);
      if (p == 0.0) continue;
      gather_u(series, reg, var, lr + p_star, means, v.data());
      const double xbar = series(tr + p_star, var) - series(lr + p_star, var);
      for (std::size_t k = 0; k < d; ++k) ubar[k] = u[k] - v[k];
      for (std::size_t k = 0; k < d; ++k) {
        eq.b[k] += p * ubar[k] * xbar;
        for (std::size_t k2 = 0; k2 < d; ++k2) eq.a[k * d + k2] += p * ubar[k] * ubar[k2];
      }
      eq.c += p * xbar * xbar;
    }
  }
  std::vector<std::size_t> all(d);
  std::iota(all.begin(), all.end(), 0);
  return solve_weights(eq, all).weights;
}

Bandwidth m_step_bandwidth(const KernelPosterior& psi, const Posteriors& post,
                           const TimeSeries& series, const ContextGraph& graph,
                           const std::vector<double>& weights, std::size_t state,
                           std::size_t var) {
  const Regressors reg = regressors_of(graph, state, var);
  const std::size_t d = reg.dim();
  if (weights.size() != d) throw InvariantError("m_step_bandwidth: weight row size mismatch");
  const std::size_t p_star = static_cast<std::size_t>(psi.p_star());

  double gamma_sum = 0.0;
  for (std::size_t tr = 0; tr < post.n; ++tr) gamma_sum += post.gamma(tr, state);
  if (gamma_sum <= kStarvationTol)
    throw InvariantError("m_step_bandwidth: state " + std::to_string(state) + " is starved");

  std::vector<double> means(series.n_vars(), 0.0);  // a common shift cancels in ubar
  std::vector<double> u(d), v(d);
  double num = 0.0;
  for (std::size_t tr = 0; tr < psi.n_scored(); ++tr) {
    if (d > 0) gather_u(series, reg, var, tr + p_star, means, u.data());
    for (std::size_t lr = 0; lr < psi.n_centers(); ++lr) {
      if (lr == tr) continue;
      const double p = psi.psi(tr, lr, state);
      if (p == 0.0) continue;
      double mu = series(lr + p_star, var);
      if (d > 0) {
        gather_u(series, reg, var, lr + p_star, means, v.data());
        for (std::size_t k = 0; k < d; ++k) mu += weights[k] * (u[k] - v[k]);
      }
      const double dev = series(tr + p_star, var) - mu;
      num += p * dev * dev;
    }
  }

  const double floor = bandwidth_floor(sample_std(series, var));
  double h = std::sqrt(num / gamma_sum);
  if (!(h > floor)) {
    log_warn("m_step_bandwidth: degenerate deviations for state " + std::to_string(state) +
             " var " + std::to_string(var) + ", clamping to floor");
    h = floor;
  }
  if (num > 0.0 && !(h < std::sqrt(3.0 * num)))
    log_warn("m_step_bandwidth: local-max condition violated for state " +
             std::to_string(state) + " var " + std::to_string(var));
  return Bandwidth{h};
}

std::vector<double> m_step_omega(const KernelPosterior& psi, const Posteriors& post,
                                 std::size_t state) {
  double gamma_sum = 0.0;
  for (std::size_t tr = 0; tr < post.n; ++tr) gamma_sum += post.gamma(tr, state);
  if (gamma_sum <= kStarvationTol)
    throw InvariantError("m_step_omega: state " + std::to_string(state) + " is starved");
  std::vector<double> row(psi.n_centers(), 0.0);
  for (std::size_t tr = 0; tr < psi.n_scored(); ++tr)
    for (std::size_t lr = 0; lr < psi.n_centers(); ++lr)
      row[lr] += psi.psi(tr, lr, state);
  double sum = 0.0;
  for (double& w : row) {
    w = w / gamma_sum + kOmegaSmoothing;
    sum += w;
  }
  for (double& w : row) w /= sum;
  return row;
}

std::pair<std::vector<double>, Mat> m_step_transitions(const Posteriors& post) {
  const std::size_t N = post.n_states;
  std::vector<double> pi(N);
  double pi_sum = 0.0;
  for (std::size_t i = 0; i < N; ++i) pi_sum += (pi[i] = post.gamma(0, i));
  for (std::size_t i = 0; i < N; ++i) pi[i] /= pi_sum;

  Mat a(N, N, 0.0);
  for (std::size_t t = 0; t + 1 < post.n; ++t)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) a(i, j) += post.zeta_at(t, i, j);
  for (std::size_t i = 0; i < N; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < N; ++j) row += a(i, j);
    if (row <= kStarvationTol) {
      log_warn("m_step_transitions: state " + std::to_string(i) +
               " starved, transition row reset to uniform");
      for (std::size_t j = 0; j < N; ++j) a(i, j) = 1.0 / static_cast<double>(N);
    } else {
      for (std::size_t j = 0; j < N; ++j) a(i, j) /= row;
    }
  }
  return {std::move(pi), std::move(a)};
}

// ---------------------------------------------------------------------------
// streaming E-step accumulation

std::vector<std::vector<Regressors>> regressors_from_graph(const ContextGraph& graph) {
  std::vector<std::vector<Regressors>> spaces(graph.n_states(),
                                              std::vector<Regressors>(graph.n_vars()));
  for (std::size_t i = 0; i < graph.n_states(); ++i)
    for (std::size_t m = 0; m < graph.n_vars(); ++m) spaces[i][m] = regressors_of(graph, i, m);
  return spaces;
}

std::vector<std::vector<Regressors>> full_regressors(std::size_t n_states,
                                                     std::size_t n_vars, int p_star) {
  std::vector<std::vector<Regressors>> spaces(n_states, std::vector<Regressors>(n_vars));
  for (std::size_t i = 0; i < n_states; ++i) {
    for (std::size_t m = 0; m < n_vars; ++m) {
      Regressors r;
      for (std::size_t v = 0; v < n_vars; ++v)
        if (v != m) r.parents.push_back(static_cast<int>(v));
      r.n_lags = p_star;
      spaces[i][m] = r;
    }
  }
  return spaces;
}

EStepAccum accumulate_estep(const EmissionWorkspace& ws, const Mat& gamma,
                            const std::vector<std::vector<Regressors>>& spaces,
                            int threads) {
  const KdeAsHmmModel& model = ws.model();
  const TimeSeries& series = ws.series();
  const std::size_t p_star = static_cast<std::size_t>(model.p_star);
  const std::size_t N = model.n_states;
  const std::size_t M = model.n_vars();
  const std::size_t L = ws.n_centers();
  const std::size_t n = ws.n_scored();
  const Mat log_omega = log_omega_matrix(model);

  std::vector<double> means(M);
  for (std::size_t m = 0; m < M; ++m) means[m] = feature_mean(series, m);

  // centered center columns and per-(i,m) regressor matrices
  std::vector<std::vector<double>> yc(M, std::vector<double>(L));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t l = 0; l < L; ++l) yc[m][l] = ws.center_column(m)[l] - means[m];
  std::vector<std::vector<std::vector<std::vector<double>>>> V(N);
  for (std::size_t i = 0; i < N; ++i) {
    V[i].resize(M);
    for (std::size_t m = 0; m < M; ++m)
      V[i][m] = center_regressor_matrix(model.centers, spaces[i][m], m, model.p_star, means);
  }

  auto make_accum = [&] {
    EStepAccum acc;
    acc.omega_num = Mat(N, L, 0.0);
    acc.gamma_sum.assign(N, 0.0);
    acc.eq.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      acc.eq[i].resize(M);
      for (std::size_t m = 0; m < M; ++m) {
        const std::size_t d = spaces[i][m].dim();
        acc.eq[i][m].d = d;
        acc.eq[i][m].a.assign(d * d, 0.0);
        acc.eq[i][m].b.assign(d, 0.0);
      }
    }
    return acc;
  };

  const std::size_t nblocks = block_count(n);
  std::vector<EStepAccum> parts(nblocks);

  parallel_blocks(n, threads, [&](std::size_t t0, std::size_t t1, std::size_t b) {
    EStepAccum part = make_accum();
    std::vector<double> s(L), psi(L), u, s1, sxv;
    for (std::size_t tr = t0; tr < t1; ++tr) {
      const std::size_t t_abs = tr + p_star;
      for (std::size_t i = 0; i < N; ++i) {
        psi_row(ws, log_omega, i, t_abs, gamma(tr, i), s.data(), psi.data());
        double* wrow = part.omega_num.row_ptr(i);
        double s0 = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
          wrow[l] += psi[l];
          s0 += psi[l];
        }
        for (std::size_t m = 0; m < M; ++m) {
          NormalEq& eq = part.eq[i][m];
          const double x = series(t_abs, m) - means[m];
          const double* y = yc[m].data();
          double sx = 0.0;
          for (std::size_t l = 0; l < L; ++l) sx += psi[l] * y[l];
          eq.c += x * x * s0 - 2.0 * x * sx;
          const std::size_t d = eq.d;
          if (d == 0) continue;
          u.resize(d);
          s1.assign(d, 0.0);
          sxv.assign(d, 0.0);
          gather_u(series, spaces[i][m], m, t_abs, means, u.data());
          const auto& Vm = V[i][m];
          for (std::size_t k = 0; k < d; ++k) {
            const double* vk = Vm[k].data();
            double a1 = 0.0, a2 = 0.0;
            for (std::size_t l = 0; l < L; ++l) {
              const double pv = psi[l] * vk[l];
              a1 += pv;
              a2 += pv * y[l];
            }
            s1[k] = a1;
            sxv[k] = a2;
          }
          for (std::size_t k = 0; k < d; ++k) {
            eq.b[k] += u[k] * (s0 * x - sx) - (x * s1[k] - sxv[k]);
            for (std::size_t k2 = 0; k2 < d; ++k2)
              eq.a[k * d + k2] += s0 * u[k] * u[k2] - u[k] * s1[k2] - s1[k] * u[k2];
          }
        }
      }
    }
    parts[b] = std::move(part);
  });

  // merge in block order, then add the center-anchored terms
  EStepAccum acc = make_accum();
  for (std::size_t b = 0; b < nblocks; ++b) {
    const EStepAccum& part = parts[b];
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t l = 0; l < L; ++l) acc.omega_num(i, l) += part.omega_num(i, l);
      for (std::size_t m = 0; m < M; ++m) {
        NormalEq& eq = acc.eq[i][m];
        const NormalEq& pe = part.eq[i][m];
        eq.c += pe.c;
        for (std::size_t k = 0; k < eq.b.size(); ++k) eq.b[k] += pe.b[k];
        for (std::size_t k = 0; k < eq.a.size(); ++k) eq.a[k] += pe.a[k];
      }
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    const double* w = acc.omega_num.row_ptr(i);
    for (std::size_t m = 0; m < M; ++m) {
      NormalEq& eq = acc.eq[i][m];
      const double* y = yc[m].data();
      double cw = 0.0;
      for (std::size_t l = 0; l < L; ++l) cw += w[l] * y[l] * y[l];
      eq.c += cw;
      const std::size_t d = eq.d;
      if (d == 0) continue;
      const auto& Vm = V[i][m];
      for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t k2 = k; k2 < d; ++k2) {
          const double* vk = Vm[k].data();
          const double* vk2 = Vm[k2].data();
          double avv = 0.0;
          for (std::size_t l = 0; l < L; ++l) avv += w[l] * vk[l] * vk2[l];
          eq.a[k * d + k2] += avv;
          if (k2 != k) eq.a[k2 * d + k] += avv;
        }
      }
      // symmetrize against accumulation round-off
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t k2 = k + 1; k2 < d; ++k2) {
          const double v = 0.5 * (eq.a[k * d + k2] + eq.a[k2 * d + k]);
          eq.a[k * d + k2] = eq.a[k2 * d + k] = v;
        }
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    double g = 0.0;
    for (std::size_t tr = 0; tr < n; ++tr) g += gamma(tr, i);
    acc.gamma_sum[i] = g;
  }
  return acc;
}

WeightSolve solve_weights(const NormalEq& eq, const std::vector<std::size_t>& subset) {
  const std::size_t d = subset.size();
  WeightSolve out;
  if (d == 0) {
    out.sse = std::max(0.0, eq.c);
    return out;
  }
  Eigen::MatrixXd A(d, d);
  Eigen::VectorXd b(d);
  for (std::size_t k = 0; k < d; ++k) {
    b(static_cast<Eigen::Index>(k)) = eq.b[subset[k]];
    for (std::size_t k2 = 0; k2 < d; ++k2)
      A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k2)) =
          eq.a[subset[k] * eq.d + subset[k2]];
  }
  Eigen::VectorXd x = A.ldlt().solve(b);
  const double scale = A.lpNorm<Eigen::Infinity>() * x.lpNorm<Eigen::Infinity>() +
                       b.lpNorm<Eigen::Infinity>();
  const double resid = (A * x - b).lpNorm<Eigen::Infinity>();
  if (!x.allFinite() || resid > 1e-8 * (scale + 1e-300)) {
    const double ridge = 1e-8 * (A.trace() / static_cast<double>(d));
    log_warn("solve_weights: singular normal matrix, adding ridge " +
             std::to_string(ridge));
    Eigen::MatrixXd Ar = A + ridge * Eigen::MatrixXd::Identity(d, d);
    x = Ar.ldlt().solve(b);
    if (!x.allFinite()) throw NumericalError("solve_weights: system could not be solved");
  }
  out.weights.assign(x.data(), x.data() + d);
  out.sse = std::max(0.0, eq.c - 2.0 * x.dot(b) + x.dot(A * x));
  return out;
}

// ---------------------------------------------------------------------------
// EM driver

void em_refit(KdeAsHmmModel& model, const TimeSeries& series, const TrainConfig& config,
              FitReport& report) {
  const auto t_start = std::chrono::steady_clock::now();
  const std::size_t n = model.n_scored(series);
  const std::size_t N = model.n_states;
  const std::size_t M = model.n_vars();

  std::vector<double> floors(M), silverman_h(M);
  for (std::size_t m = 0; m < M; ++m) {
    const double sd = sample_std(series, m);
    floors[m] = bandwidth_floor(sd);
    silverman_h[m] = silverman_bandwidth(sd, series.rows()).value;
  }

  for (std::size_t iter = 0; iter < config.max_iter; ++iter) {
    EmissionWorkspace ws(model, series);
    const Mat logb = log_emission_table(ws, /*exclude_self=*/true, config.threads);
    Posteriors post = forward_backward_logb(model.pi, model.a, logb);
    const double ll = post.loglik / static_cast<double>(n);

    if (!report.loglik_per_datum.empty()) {
      const double prev = report.loglik_per_datum.back();
      if (ll < prev - kMonotonicitySlack * std::max(1.0, std::abs(prev)))
        throw NumericalError("em_fit: log-likelihood decreased from " +
                             std::to_string(prev) + " to " + std::to_string(ll));
      report.loglik_per_datum.push_back(ll);
      ++report.iterations;
      if (std::abs(ll - prev) <= config.rel_tol * std::max(std::abs(prev), 1e-300)) {
        report.converged = true;
        break;
      }
    } else {
      report.loglik_per_datum.push_back(ll);
      ++report.iterations;
    }

    const auto spaces = regressors_from_graph(model.graph);
    EStepAccum acc = accumulate_estep(ws, post.gamma, spaces, config.threads);

    for (std::size_t i = 0; i < N; ++i) {
      if (acc.gamma_sum[i] <= kStarvationTol) {
        log_warn("em_fit: state " + std::to_string(i) +
                 " starved, resetting omega to uniform and h to Silverman");
        for (std::size_t l = 0; l < model.n_centers(); ++l)
          model.omega(i, l) = 1.0 / static_cast<double>(model.n_centers());
        for (std::size_t m = 0; m < M; ++m) model.h(i, m) = silverman_h[m];
        continue;
      }
      for (std::size_t m = 0; m < M; ++m) {
        NormalEq& eq = acc.eq[i][m];
        double sse = eq.c;
        if (eq.d > 0) {
          std::vector<std::size_t> all(eq.d);
          std::iota(all.begin(), all.end(), 0);
          WeightSolve slv = solve_weights(eq, all);
          model.weights[i][m] = std::move(slv.weights);
          sse = slv.sse;
        }
        double h = std::sqrt(sse / acc.gamma_sum[i]);
        if (!(h > floors[m])) {
          log_warn("em_fit: degenerate bandwidth for state " + std::to_string(i) + " var " +
                   std::to_string(m) + ", clamped to floor");
          h = floors[m];
        } else if (!(h < std::sqrt(3.0 * sse))) {
          log_warn("em_fit: bandwidth local-max condition violated for state " +
                   std::to_string(i) + " var " + std::to_string(m));
        }
        model.h(i, m) = h;
      }
      double osum = 0.0;
      for (std::size_t l = 0; l < model.n_centers(); ++l) {
        const double w = acc.omega_num(i, l) / acc.gamma_sum[i] + kOmegaSmoothing;
        model.omega(i, l) = w;
        osum += w;
      }
      for (std::size_t l = 0; l < model.n_centers(); ++l) model.omega(i, l) /= osum;
    }

    auto [pi, a] = m_step_transitions(post);
    model.pi = std::move(pi);
    model.a = std::move(a);
  }

  report.wall_time_s += std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                      t_start)
                            .count();
}

std::pair<KdeAsHmmModel, FitReport> em_fit(const TimeSeries& series,
                                           const TrainConfig& config) {
  KdeAsHmmModel model = init_model(series, config.n_states, config.p_star, config.seed);
  if (config.graph) {
    const ContextGraph& g = *config.graph;
    if (g.n_states() != config.n_states || g.n_vars() != series.n_vars())
      throw InvariantError("em_fit: provided graph has wrong dimensions");
    require_valid_graph(g);
    for (std::size_t i = 0; i < g.n_states(); ++i)
      for (std::size_t m = 0; m < g.n_vars(); ++m)
        if (g.ar_order(i, m) > config.p_star)
          throw InvariantError("em_fit: graph AR order exceeds P*");
    model.graph = g;
    for (std::size_t i = 0; i < g.n_states(); ++i)
      for (std::size_t m = 0; m < g.n_vars(); ++m)
        model.weights[i][m].assign(g.dim(i, m), 0.0);
  }
  if (config.omega_labels) {
    if (!config.label_to_state)
      throw InvariantError("em_fit: omega labels given without a label mapping");
    init_omega_from_labels(model, *config.omega_labels, *config.label_to_state);
  }
  FitReport report;
  em_refit(model, series, config, report);
  return {std::move(model), std::move(report)};
}

}  // namespace kdeas
