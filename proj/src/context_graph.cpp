#include "kdeashmm/context_graph.hpp"

#include <algorithm>

#include "kdeashmm/errors.hpp"

namespace kdeas {

bool ContextGraph::is_naive() const {
  for (std::size_t i = 0; i < n_states_; ++i)
    for (std::size_t m = 0; m < n_vars_; ++m)
      if (!parents_[i][m].empty() || ar_order_[i][m] != 0) return false;
  return true;
}

void ContextGraph::add_parent(std::size_t state, std::size_t var, int parent) {
  if (parent < 0 || static_cast<std::size_t>(parent) >= n_vars_ ||
      static_cast<std::size_t>(parent) == var)
    throw InvariantError("ContextGraph: invalid parent index");
  auto& list = parents_[state][var];
  if (std::find(list.begin(), list.end(), parent) != list.end())
    throw InvariantError("ContextGraph: duplicate parent");
  list.push_back(parent);
}

void ContextGraph::set_ar_order(std::size_t state, std::size_t var, int order) {
  if (order < 0) throw InvariantError("ContextGraph: negative AR order");
  ar_order_[state][var] = order;
}

namespace {

// DFS cycle search over one state's within-time arcs; fills `cycle` with
// the offending nodes when found.
bool find_cycle(const ContextGraph& g, std::size_t state, std::vector<int>* cycle) {
  const std::size_t m_count = g.n_vars();
  std::vector<int> color(m_count, 0);  // 0 unvisited, 1 on stack, 2 done
  std::vector<int> stack, pos(m_count, -1);

  // Arc parent -> var; iterative DFS following child -> parents is
  // equivalent for cycle detection.
  std::vector<std::vector<int>> adj(m_count);
  for (std::size_t m = 0; m < m_count; ++m)
    for (int p : g.parents(state, m)) adj[m].push_back(p);

  for (std::size_t root = 0; root < m_count; ++root) {
    if (color[root] != 0) continue;
    std::vector<std::pair<int, std::size_t>> work;  // (node, next child index)
    work.emplace_back(static_cast<int>(root), 0);
    color[root] = 1;
    pos[root] = 0;
    stack = {static_cast<int>(root)};
    while (!work.empty()) {
      auto& [node, next] = work.back();
      if (next < adj[node].size()) {
        int child = adj[node][next++];
        if (color[child] == 1) {
          // found a cycle: slice the stack from child's position
          cycle->assign(stack.begin() + pos[child], stack.end());
          return true;
        }
        if (color[child] == 0) {
          color[child] = 1;
          pos[child] = static_cast<int>(stack.size());
          stack.push_back(child);
          work.emplace_back(child, 0);
        }
      } else {
        color[node] = 2;
        stack.pop_back();
        work.pop_back();
      }
    }
  }
  return false;
}

}  // namespace

GraphValidation validate_graph(const ContextGraph& graph) {
  for (std::size_t i = 0; i < graph.n_states(); ++i) {
    std::vector<int> cycle;
    if (find_cycle(graph, i, &cycle)) {
      std::string msg = "cycle in state " + std::to_string(i) + " involving variables";
      for (int v : cycle) msg += " " + std::to_string(v);
      return {false, msg};
    }
  }
  return {true, ""};
}

void require_valid_graph(const ContextGraph& graph) {
  auto v = validate_graph(graph);
  if (!v.ok) throw InvariantError("invalid context graph: " + v.message);
}

bool ContextGraph::parent_keeps_acyclic(std::size_t state, int parent, std::size_t var) const {
  ContextGraph tmp = *this;
  tmp.add_parent(state, var, parent);
  return validate_graph(tmp).ok;
}

}  // namespace kdeas
