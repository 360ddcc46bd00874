// Test-only reference implementations: brute-force enumeration over state
// paths and kernel-component assignments, direct quadrature, and direct
// evaluations of the EM auxiliary function. Everything here is written with
// plain loops, independent of the library's recursion and accumulator paths.
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "kdeashmm/kernel_math.hpp"
#include "kdeashmm/mat.hpp"
#include "kdeashmm/model.hpp"
#include "kdeashmm/trainer.hpp"

namespace oracle {

using kdeas::Mat;

struct EnumPosteriors {
  double loglik = 0.0;
  Mat gamma;
  std::vector<double> zeta;  // (n-1) x N x N
  std::vector<int> best_path;
};

// Sums path probabilities over all N^n state sequences.
inline EnumPosteriors enumerate_paths(const std::vector<double>& pi, const Mat& a,
                                      const Mat& logb) {
  const std::size_t n = logb.rows(), N = logb.cols();
  std::vector<int> q(n, 0);
  std::vector<double> gamma_num(n * N, 0.0), zeta_num(n > 1 ? (n - 1) * N * N : 0, 0.0);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> best_path(n, 0);

  // first pass: max log weight for stable exponentiation
  double mx = -std::numeric_limits<double>::infinity();
  auto path_logp = [&](const std::vector<int>& path) {
    double lp = std::log(pi[path[0]]) + logb(0, path[0]);
    for (std::size_t t = 1; t < n; ++t)
      lp += std::log(a(path[t - 1], path[t])) + logb(t, path[t]);
    return lp;
  };
  auto for_each_path = [&](auto&& fn) {
    std::fill(q.begin(), q.end(), 0);
    for (;;) {
      fn(q);
      std::size_t k = n;
      while (k > 0) {
        if (++q[k - 1] < static_cast<int>(N)) break;
        q[k - 1] = 0;
        --k;
      }
      if (k == 0) break;
    }
  };
  for_each_path([&](const std::vector<int>& path) {
    const double lp = path_logp(path);
    if (lp > mx) mx = lp;
  });

  double total = 0.0;
  for_each_path([&](const std::vector<int>& path) {
    const double lp = path_logp(path);
    if (lp > best) {  // lexicographic enumeration: first strict max is smallest
      best = lp;
      best_path = path;
    }
    const double w = std::exp(lp - mx);
    total += w;
    for (std::size_t t = 0; t < n; ++t) gamma_num[t * N + path[t]] += w;
    for (std::size_t t = 0; t + 1 < n; ++t)
      zeta_num[(t * N + path[t]) * N + path[t + 1]] += w;
  });

  EnumPosteriors out;
  out.loglik = mx + std::log(total);
  out.gamma = Mat(n, N);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < N; ++i) out.gamma(t, i) = gamma_num[t * N + i] / total;
  out.zeta.resize(zeta_num.size());
  for (std::size_t k = 0; k < zeta_num.size(); ++k) out.zeta[k] = zeta_num[k] / total;
  out.best_path = best_path;
  return out;
}

// Kernel center computed from first principles (graph walked directly).
inline double center_direct(const kdeas::KdeAsHmmModel& model, std::size_t i, std::size_t m,
                            std::size_t l_abs, std::size_t t_abs,
                            const kdeas::TimeSeries& x) {
  const auto& y = model.centers;
  double mu = y(l_abs, m);
  std::size_t k = 0;
  for (int pv : model.graph.parents(i, m)) {
    mu += model.weights[i][m][k++] *
          (x(t_abs, static_cast<std::size_t>(pv)) - y(l_abs, static_cast<std::size_t>(pv)));
  }
  for (int r = 1; r <= model.graph.ar_order(i, m); ++r) {
    mu += model.weights[i][m][k++] *
          (x(t_abs - static_cast<std::size_t>(r), m) - y(l_abs - static_cast<std::size_t>(r), m));
  }
  return mu;
}

// ln of one kernel component: ln omega_il + sum_m ln((1/h)K(z)).
inline double component_logp(const kdeas::KdeAsHmmModel& model, std::size_t i,
                             std::size_t l_abs, std::size_t t_abs,
                             const kdeas::TimeSeries& x) {
  const std::size_t p_star = static_cast<std::size_t>(model.p_star);
  double lp = std::log(model.omega(i, l_abs - p_star));
  for (std::size_t m = 0; m < model.n_vars(); ++m) {
    const double z = (x(t_abs, m) - center_direct(model, i, m, l_abs, t_abs, x)) /
                     model.h(i, m);
    lp += -kdeas::kHalfLog2Pi - 0.5 * z * z - std::log(model.h(i, m));
  }
  return lp;
}

// psi^t_l(i) by joint enumeration of state paths and W assignments under
// the training convention (w^t != t).
struct EnumPsi {
  double loglik = 0.0;
  // index (t_rel * L + l_rel) * N + i
  std::vector<double> psi;
};

inline EnumPsi enumerate_psi(const kdeas::KdeAsHmmModel& model, const kdeas::TimeSeries& x) {
  const std::size_t p_star = static_cast<std::size_t>(model.p_star);
  const std::size_t n = x.rows() - p_star;
  const std::size_t L = model.n_centers();
  const std::size_t N = model.n_states;

  // valid w values per t (all centers except l == t)
  std::vector<std::vector<std::size_t>> w_choices(n);
  for (std::size_t tr = 0; tr < n; ++tr)
    for (std::size_t lr = 0; lr < L; ++lr)
      if (lr + p_star != tr + p_star) w_choices[tr].push_back(lr);

  // component log probabilities (t, l) per state
  std::vector<double> comp(n * L * N);
  for (std::size_t tr = 0; tr < n; ++tr)
    for (std::size_t lr = 0; lr < L; ++lr)
      for (std::size_t i = 0; i < N; ++i)
        comp[(tr * L + lr) * N + i] =
            component_logp(model, i, lr + p_star, tr + p_star, x);

  std::vector<int> q(n, 0);
  std::vector<std::size_t> w_idx(n, 0);
  std::vector<double> num(n * L * N, 0.0);
  double total = 0.0, mx = -std::numeric_limits<double>::infinity();

  auto joint_logp = [&]() {
    double lp = std::log(model.pi[q[0]]);
    for (std::size_t t = 1; t < n; ++t) lp += std::log(model.a(q[t - 1], q[t]));
    for (std::size_t t = 0; t < n; ++t)
      lp += comp[(t * L + w_choices[t][w_idx[t]]) * N + q[t]];
    return lp;
  };
  auto for_each_joint = [&](auto&& fn) {
    std::fill(q.begin(), q.end(), 0);
    std::fill(w_idx.begin(), w_idx.end(), 0);
    for (;;) {
      fn();
      std::size_t k = n;
      while (k > 0) {
        if (++w_idx[k - 1] < w_choices[k - 1].size()) break;
        w_idx[k - 1] = 0;
        --k;
      }
      if (k > 0) continue;
      k = n;
      while (k > 0) {
        if (++q[k - 1] < static_cast<int>(N)) break;
        q[k - 1] = 0;
        --k;
      }
      if (k == 0) break;
    }
  };

  for_each_joint([&] { mx = std::max(mx, joint_logp()); });
  for_each_joint([&] {
    const double w = std::exp(joint_logp() - mx);
    total += w;
    for (std::size_t t = 0; t < n; ++t)
      num[(t * L + w_choices[t][w_idx[t]]) * N + q[t]] += w;
  });

  EnumPsi out;
  out.loglik = mx + std::log(total);
  out.psi.resize(num.size());
  for (std::size_t k = 0; k < num.size(); ++k) out.psi[k] = num[k] / total;
  return out;
}

// Composite Simpson integration on [lo, hi].
template <typename F>
double simpson(F&& f, double lo, double hi, std::size_t n_intervals) {
  if (n_intervals % 2 == 1) ++n_intervals;
  const double step = (hi - lo) / static_cast<double>(n_intervals);
  double acc = f(lo) + f(hi);
  for (std::size_t k = 1; k < n_intervals; ++k)
    acc += f(lo + step * static_cast<double>(k)) * (k % 2 == 1 ? 4.0 : 2.0);
  return acc * step / 3.0;
}

// The (state, var) slice of the EM auxiliary function as a function of the
// weight row and bandwidth, holding psi fixed:
//   sum_t sum_{l != t} psi [ -ln h + ln K((x_m - mu(M)) / h) ].
inline double q_slice(const kdeas::KernelPosterior& psi, const kdeas::TimeSeries& x,
                      const kdeas::ContextGraph& graph, std::size_t i, std::size_t m,
                      const std::vector<double>& weights, double h) {
  const std::size_t p_star = static_cast<std::size_t>(psi.p_star());
  double acc = 0.0;
  for (std::size_t tr = 0; tr < psi.n_scored(); ++tr) {
    for (std::size_t lr = 0; lr < psi.n_centers(); ++lr) {
      if (lr == tr) continue;
      const double p = psi.psi(tr, lr, i);
      if (p == 0.0) continue;
      double mu = x(lr + p_star, m);
      std::size_t k = 0;
      for (int pv : graph.parents(i, m))
        mu += weights[k++] * (x(tr + p_star, static_cast<std::size_t>(pv)) -
                              x(lr + p_star, static_cast<std::size_t>(pv)));
      for (int r = 1; r <= graph.ar_order(i, m); ++r)
        mu += weights[k++] * (x(tr + p_star - static_cast<std::size_t>(r), m) -
                              x(lr + p_star - static_cast<std::size_t>(r), m));
      const double z = (x(tr + p_star, m) - mu) / h;
      acc += p * (-std::log(h) + kdeas::log_gaussian_kernel(z));
    }
  }
  return acc;
}

// The omega slice: sum_t sum_{l != t} psi ln omega_l.
inline double q_omega(const kdeas::KernelPosterior& psi, std::size_t i,
                      const std::vector<double>& omega_row) {
  double acc = 0.0;
  for (std::size_t tr = 0; tr < psi.n_scored(); ++tr)
    for (std::size_t lr = 0; lr < psi.n_centers(); ++lr) {
      if (lr == tr) continue;
      const double p = psi.psi(tr, lr, i);
      if (p > 0.0) acc += p * std::log(omega_row[lr]);
    }
  return acc;
}

}  // namespace oracle
