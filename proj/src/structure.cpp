#include "kdeashmm/structure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kdeashmm/errors.hpp"
#include "kdeashmm/kernel_math.hpp"
#include "kdeashmm/log.hpp"

namespace kdeas {

namespace {
constexpr double kImprovementThreshold = 1e-9;
constexpr double kStarvationTol = 1e-12;
}  // namespace

double structure_penalty(std::size_t kappa, int p, std::size_t t_len, int p_star) {
  const double params = static_cast<double>(kappa) + p +
                        (static_cast<double>(t_len) + 1.0 - p_star);
  return 0.5 * params * std::log(static_cast<double>(t_len));
}

StructureScore score_variable(const KernelPosterior& psi, const TimeSeries& series,
                              const ContextGraph& graph, const std::vector<double>& weights,
                              double h, std::size_t state, std::size_t var) {
  const std::size_t p_star = static_cast<std::size_t>(psi.p_star());
  const std::size_t kappa = graph.kappa(state, var);
  const int p = graph.ar_order(state, var);
  if (weights.size() != kappa + static_cast<std::size_t>(p))
    throw InvariantError("score_variable: weight row size mismatch");

  double fit = 0.0;
  for (std::size_t tr = 0; tr < psi.n_scored(); ++tr) {
    for (std::size_t lr = 0; lr < psi.n_centers(); ++lr) {
      if (lr == tr) continue;
      const double pw = psi.psi(tr, lr, state);
      if (pw == 0.0) continue;
      double mu = series(lr + p_star, var);
      std::size_t k = 0;
      for (int pvar : graph.parents(state, var)) {
        mu += weights[k++] * (series(tr + p_star, static_cast<std::size_t>(pvar)) -
                              series(lr + p_star, static_cast<std::size_t>(pvar)));
      }
      for (int r = 1; r <= p; ++r) {
        mu += weights[k++] * (series(tr + p_star - static_cast<std::size_t>(r), var) -
                              series(lr + p_star - static_cast<std::size_t>(r), var));
      }
      const double z = (series(tr + p_star, var) - mu) / h;
      fit += pw * log_gaussian_kernel(z);
    }
  }
  StructureScore score;
  score.fit = fit;
  score.penalty = structure_penalty(kappa, p, series.rows() - 1, psi.p_star());
  score.total = score.fit - score.penalty;
  score.state = state;
  score.var = var;
  score.kappa = kappa;
  score.p = p;
  return score;
}

namespace {

// Indices of the current (state, var) structure inside the full regressor
// space (other variables ascending, then lags 1..P*), in the canonical
// parents-then-lags order.
std::vector<std::size_t> canonical_subset(const ContextGraph& graph, std::size_t state,
                                          std::size_t var, std::size_t n_vars) {
  std::vector<std::size_t> idx;
  for (int pvar : graph.parents(state, var)) {
    const std::size_t v = static_cast<std::size_t>(pvar);
    idx.push_back(v < var ? v : v - 1);
  }
  for (int r = 1; r <= graph.ar_order(state, var); ++r)
    idx.push_back(n_vars - 1 + static_cast<std::size_t>(r) - 1);
  return idx;
}

}  // namespace

std::vector<AcceptedMove> greedy_forward_search(KdeAsHmmModel& model,
                                                const TimeSeries& series,
                                                std::size_t per_state_budget,
                                                SearchFlags flags, int threads, int round) {
  std::vector<AcceptedMove> moves;
  if (!flags.parents && !flags.ar) return moves;

  const std::size_t N = model.n_states;
  const std::size_t M = model.n_vars();
  const std::size_t t_len = series.rows() - 1;

  // fresh posteriors under the current model; candidate refits reuse them
  EmissionWorkspace ws(model, series);
  const Mat logb = log_emission_table(ws, /*exclude_self=*/true, threads);
  const Posteriors post = forward_backward_logb(model.pi, model.a, logb);
  const auto spaces = full_regressors(N, M, model.p_star);
  const EStepAccum acc = accumulate_estep(ws, post.gamma, spaces, threads);

  std::vector<double> floors(M);
  for (std::size_t m = 0; m < M; ++m) floors[m] = bandwidth_floor(sample_std(series, m));

  for (std::size_t i = 0; i < N; ++i) {
    if (acc.gamma_sum[i] <= kStarvationTol) {
      log_warn("structure search: state " + std::to_string(i) + " starved, skipped");
      continue;
    }
    std::size_t budget = per_state_budget;
    const double fit_const = -kHalfLog2Pi * acc.gamma_sum[i];
    for (std::size_t m = 0; m < M && budget > 0; ++m) {
      const NormalEq& eq = acc.eq[i][m];
      const double h = model.h(i, m);
      const double inv_2h2 = 0.5 / (h * h);
      auto subset_total = [&](const std::vector<std::size_t>& subset) {
        const WeightSolve slv = solve_weights(eq, subset);
        const double fit = fit_const - slv.sse * inv_2h2;
        return fit - structure_penalty(subset.size(), 0, t_len, model.p_star);
      };

      std::vector<std::size_t> cur = canonical_subset(model.graph, i, m, M);
      double cur_total = subset_total(cur);
      bool changed = false;

      while (budget > 0) {
        double best_total = cur_total + kImprovementThreshold;
        int best_parent = -1;  // -1 means increment-ar
        bool found = false;
        if (flags.parents) {
          for (std::size_t v = 0; v < M; ++v) {
            if (v == m) continue;
            const auto& plist = model.graph.parents(i, m);
            if (std::find(plist.begin(), plist.end(), static_cast<int>(v)) != plist.end())
              continue;
            if (!model.graph.parent_keeps_acyclic(i, static_cast<int>(v), m)) continue;
            std::vector<std::size_t> cand = cur;
            cand.insert(cand.begin() + static_cast<std::ptrdiff_t>(model.graph.kappa(i, m)),
                        v < m ? v : v - 1);
            const double total = subset_total(cand);
            if (total > best_total) {
              best_total = total;
              best_parent = static_cast<int>(v);
              found = true;
            }
          }
        }
        if (flags.ar && model.graph.ar_order(i, m) < model.p_star) {
          std::vector<std::size_t> cand = cur;
          cand.push_back(M - 1 + static_cast<std::size_t>(model.graph.ar_order(i, m)));
          const double total = subset_total(cand);
          if (total > best_total) {
            best_total = total;
            best_parent = -1;
            found = true;
          }
        }
        if (!found) break;

        AcceptedMove move;
        move.round = round;
        move.state = i;
        move.var = m;
        move.total_before = cur_total;
        move.total_after = best_total;
        if (best_parent >= 0) {
          move.kind = "add-parent";
          move.parent = best_parent;
          model.graph.add_parent(i, m, best_parent);
        } else {
          move.kind = "increment-ar";
          model.graph.set_ar_order(i, m, model.graph.ar_order(i, m) + 1);
        }
        moves.push_back(move);
        cur = canonical_subset(model.graph, i, m, M);
        cur_total = best_total;
        changed = true;
        --budget;
      }

      if (changed) {
        const WeightSolve slv = solve_weights(eq, cur);
        model.weights[i][m] = slv.weights;
        double h_new = std::sqrt(slv.sse / acc.gamma_sum[i]);
        if (!(h_new > floors[m])) h_new = floors[m];
        model.h(i, m) = h_new;
      }
    }
  }
  if (!moves.empty()) require_valid_graph(model.graph);
  return moves;
}

std::pair<KdeAsHmmModel, FitReport> sem_fit(const TimeSeries& series, const SemConfig& config) {
  auto [model, report] = em_fit(series, config.train);
  for (std::size_t round = 1; round <= config.sem_rounds; ++round) {
    if (!config.flags.parents && !config.flags.ar) break;
    auto moves = greedy_forward_search(model, series, config.per_state_budget, config.flags,
                                       config.train.threads, static_cast<int>(round));
    if (moves.empty()) break;
    report.moves.insert(report.moves.end(), moves.begin(), moves.end());
    report.converged = false;
    em_refit(model, series, config.train, report);
  }
  return {std::move(model), std::move(report)};
}

SearchFlags variant_flags(Variant v) {
  switch (v) {
    case Variant::kKdeHmm: return {false, false};
    case Variant::kKdeAr: return {false, true};
    case Variant::kKdeBn: return {true, false};
    case Variant::kKdeAs: return {true, true};
  }
  return {false, false};
}

Variant parse_variant(const std::string& name) {
  if (name == "kde-hmm") return Variant::kKdeHmm;
  if (name == "kde-ar") return Variant::kKdeAr;
  if (name == "kde-bn") return Variant::kKdeBn;
  if (name == "kde-as") return Variant::kKdeAs;
  throw ParseError("unknown variant '" + name + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kKdeHmm: return "kde-hmm";
    case Variant::kKdeAr: return "kde-ar";
    case Variant::kKdeBn: return "kde-bn";
    case Variant::kKdeAs: return "kde-as";
  }
  return "?";
}

}  // namespace kdeas
