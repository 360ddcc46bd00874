#pragma once

#include <string>
#include <vector>

namespace kdeas {

// Per-hidden-state dependency structure: for each state i and variable m,
// an ordered list of within-time parent variables (kappa_im of them) and
// an autoregressive order p_im in [0, p_star]. Within-time arcs must form
// a DAG per state; AR arcs point backward in time and are exempt.
class ContextGraph {
 public:
  ContextGraph() = default;
  ContextGraph(std::size_t n_states, std::size_t n_vars)
      : n_states_(n_states),
        n_vars_(n_vars),
        parents_(n_states, std::vector<std::vector<int>>(n_vars)),
        ar_order_(n_states, std::vector<int>(n_vars, 0)) {}

  std::size_t n_states() const { return n_states_; }
  std::size_t n_vars() const { return n_vars_; }

  const std::vector<int>& parents(std::size_t state, std::size_t var) const {
    return parents_[state][var];
  }
  int ar_order(std::size_t state, std::size_t var) const { return ar_order_[state][var]; }

  std::size_t kappa(std::size_t state, std::size_t var) const {
    return parents_[state][var].size();
  }
  // kappa_im + p_im, the conditioning-vector length of (state, var)
  std::size_t dim(std::size_t state, std::size_t var) const {
    return kappa(state, var) + static_cast<std::size_t>(ar_order_[state][var]);
  }

  bool is_naive() const;

  void add_parent(std::size_t state, std::size_t var, int parent);
  void set_ar_order(std::size_t state, std::size_t var, int order);

  // True if adding parent -> var in `state` keeps that state's graph acyclic.
  bool parent_keeps_acyclic(std::size_t state, int parent, std::size_t var) const;

  bool operator==(const ContextGraph& o) const {
    return parents_ == o.parents_ && ar_order_ == o.ar_order_;
  }

 private:
  std::size_t n_states_ = 0;
  std::size_t n_vars_ = 0;
  std::vector<std::vector<std::vector<int>>> parents_;  // [state][var] -> parent list
  std::vector<std::vector<int>> ar_order_;              // [state][var]
};

struct GraphValidation {
  bool ok = true;
  std::string message;  // names the offending state and cycle when !ok
};

// Attempts a topological sort of every state's within-time arcs.
GraphValidation validate_graph(const ContextGraph& graph);

// validate_graph that throws InvariantError on failure.
void require_valid_graph(const ContextGraph& graph);

}  // namespace kdeas
