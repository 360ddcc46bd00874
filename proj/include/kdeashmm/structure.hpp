#pragma once

#include <limits>
#include <string>
#include <vector>

#include "kdeashmm/trainer.hpp"

namespace kdeas {

// Penalized per-(state, variable) structure score: fit is the psi-weighted
// log-kernel sum, penalty charges the kernel-weight and omega parameters,
// total = fit - penalty.
struct StructureScore {
  double fit = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  std::size_t state = 0;
  std::size_t var = 0;
  std::size_t kappa = 0;
  int p = 0;
};

// penalty = (kappa + p + T + 1 - P*) * ln(T) / 2, with T the last time
// index of the training series.
double structure_penalty(std::size_t kappa, int p, std::size_t t_len, int p_star);

// Direct-loop score of (state, var) under the given weight row and
// bandwidth; the search uses an algebraically equivalent accumulator path.
StructureScore score_variable(const KernelPosterior& psi, const TimeSeries& series,
                              const ContextGraph& graph, const std::vector<double>& weights,
                              double h, std::size_t state, std::size_t var);

struct SearchFlags {
  bool parents = true;
  bool ar = true;
};

// One greedy-forward sweep: states then variables in index order, all legal
// moves (add-parent, increment-ar) evaluated with refit weights under the
// current psi, best strictly improving move accepted until none improves by
// more than 1e-9 or the per-state budget runs out. Bandwidths of changed
// (state, var) pairs are refit after their sweep; DAG validity is
// maintained throughout.
std::vector<AcceptedMove> greedy_forward_search(KdeAsHmmModel& model,
                                                const TimeSeries& series,
                                                std::size_t per_state_budget,
                                                SearchFlags flags, int threads,
                                                int round = 1);

struct SemConfig {
  TrainConfig train;
  std::size_t sem_rounds = 1;  // the reference experimental protocol
  SearchFlags flags;
  std::size_t per_state_budget = std::numeric_limits<std::size_t>::max();
};

// Structural EM: em_fit to convergence, then alternate structure search and
// EM continuation for sem_rounds rounds. A round that accepts no moves ends
// the alternation, so disabled search reproduces em_fit exactly.
std::pair<KdeAsHmmModel, FitReport> sem_fit(const TimeSeries& series, const SemConfig& config);

// Table-3 model family: which move kinds the search may use.
enum class Variant { kKdeHmm, kKdeAr, kKdeBn, kKdeAs };

SearchFlags variant_flags(Variant v);
Variant parse_variant(const std::string& name);  // kde-hmm|kde-ar|kde-bn|kde-as
std::string variant_name(Variant v);

}  // namespace kdeas
