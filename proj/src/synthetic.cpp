#include "kdeashmm/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "kdeashmm/errors.hpp"
#include "kdeashmm/gaussian_hmm.hpp"
#include "kdeashmm/inference.hpp"
#include "kdeashmm/rng.hpp"

namespace kdeas {

namespace {
constexpr const char* kSpecFormat = "kde-ashmm-synthetic-spec";
}

int SyntheticSpec::max_lag() const {
  int p = 0;
  for (const auto& state : states)
    for (const auto& v : state) p = std::max(p, static_cast<int>(v.ar_coefs.size()));
  return p;
}

ContextGraph SyntheticSpec::to_graph() const {
  ContextGraph g(n_states, n_vars);
  for (std::size_t i = 0; i < n_states; ++i) {
    for (std::size_t m = 0; m < n_vars; ++m) {
      for (int p : states[i][m].parents) g.add_parent(i, m, p);
      g.set_ar_order(i, m, static_cast<int>(states[i][m].ar_coefs.size()));
    }
  }
  return g;
}

void SyntheticSpec::validate() const {
  if (n_states == 0 || n_vars == 0) throw InvariantError("synthetic spec: empty dimensions");
  if (states.size() != n_states) throw InvariantError("synthetic spec: state count mismatch");
  if (feature_names.size() != n_vars)
    throw InvariantError("synthetic spec: feature name count mismatch");
  if (state_pattern.empty()) throw InvariantError("synthetic spec: empty state pattern");
  for (const auto& [s, len] : state_pattern)
    if (s < 0 || static_cast<std::size_t>(s) >= n_states || len < 1)
      throw InvariantError("synthetic spec: invalid pattern segment");
  if (burn_in < 0) throw InvariantError("synthetic spec: negative burn-in");

  for (std::size_t i = 0; i < n_states; ++i) {
    if (states[i].size() != n_vars)
      throw InvariantError("synthetic spec: variable count mismatch in state " +
                           std::to_string(i));
    for (std::size_t m = 0; m < n_vars; ++m) {
      const auto& v = states[i][m];
      if (v.parents.size() != v.parent_coefs.size())
        throw InvariantError("synthetic spec: parent/coefficient size mismatch");
      for (int p : v.parents)
        if (p < 0 || static_cast<std::size_t>(p) >= n_vars ||
            static_cast<std::size_t>(p) == m)
          throw InvariantError("synthetic spec: invalid parent index");
      if (!(v.sigma > 0.0)) throw InvariantError("synthetic spec: sigma must be positive");
    }
  }
  require_valid_graph(to_graph());

  for (int nm : noise_vars) {
    if (nm < 0 || static_cast<std::size_t>(nm) >= n_vars)
      throw InvariantError("synthetic spec: invalid noise variable index");
    const double sigma0 = states[0][static_cast<std::size_t>(nm)].sigma;
    for (std::size_t i = 0; i < n_states; ++i) {
      const auto& v = states[i][static_cast<std::size_t>(nm)];
      if (!v.parents.empty() || !v.ar_coefs.empty() || v.sigma != sigma0)
        throw InvariantError("synthetic spec: noise variable " + std::to_string(nm) +
                             " must stay independent and state-invariant");
      for (std::size_t m = 0; m < n_vars; ++m)
        for (int p : states[i][m].parents)
          if (p == nm)
            throw InvariantError("synthetic spec: noise variable " + std::to_string(nm) +
                                 " used as a parent");
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec) {
  nlohmann::json j;
  j["format"] = kSpecFormat;
  j["version"] = 1;
  j["n_states"] = spec.n_states;
  j["n_vars"] = spec.n_vars;
  j["feature_names"] = spec.feature_names;
  j["noise_vars"] = spec.noise_vars;
  j["burn_in"] = spec.burn_in;
  nlohmann::json pat = nlohmann::json::array();
  for (const auto& [s, len] : spec.state_pattern) pat.push_back({s, len});
  j["state_pattern"] = pat;
  nlohmann::json states = nlohmann::json::array();
  for (const auto& state : spec.states) {
    nlohmann::json vars = nlohmann::json::array();
    for (const auto& v : state) {
      vars.push_back({{"parents", v.parents},
                      {"parent_coefs", v.parent_coefs},
                      {"offset", v.offset},
                      {"ar_coefs", v.ar_coefs},
                      {"sigma", v.sigma}});
    }
    states.push_back(vars);
  }
  j["states"] = states;
  return j;
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kSpecFormat)
    throw ParseError("synthetic spec: wrong format field");
  if (j.value("version", -1) != 1)
    throw ParseError("synthetic spec: unsupported version");
  SyntheticSpec spec;
  spec.n_states = j.at("n_states").get<std::size_t>();
  spec.n_vars = j.at("n_vars").get<std::size_t>();
  spec.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  spec.noise_vars = j.at("noise_vars").get<std::vector<int>>();
  spec.burn_in = j.value("burn_in", 50);
  for (const auto& seg : j.at("state_pattern"))
    spec.state_pattern.emplace_back(seg[0].get<int>(), seg[1].get<int>());
  for (const auto& state : j.at("states")) {
    std::vector<SyntheticVar> vars;
    for (const auto& vj : state) {
      SyntheticVar v;
      v.parents = vj.at("parents").get<std::vector<int>>();
      v.parent_coefs = vj.at("parent_coefs").get<std::vector<double>>();
      v.offset = vj.at("offset").get<double>();
      v.ar_coefs = vj.at("ar_coefs").get<std::vector<double>>();
      v.sigma = vj.at("sigma").get<double>();
      vars.push_back(std::move(v));
    }
    spec.states.push_back(std::move(vars));
  }
  spec.validate();
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("synthetic spec: malformed JSON: " + std::string(e.what()));
  }
  try {
    return synthetic_spec_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("synthetic spec: malformed document: " + std::string(e.what()));
  }
}

void save_synthetic_spec(const SyntheticSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << synthetic_spec_to_json(spec).dump(1) << "\n";
}

// ---------------------------------------------------------------------------
// generation

std::vector<int> gen_state_sequence(const SyntheticSpec& spec, std::size_t length) {
  if (spec.state_pattern.empty()) throw InvariantError("gen_state_sequence: empty pattern");
  if (length < 1) throw InvariantError("gen_state_sequence: length must be >= 1");
  const std::size_t n_seg = spec.state_pattern.size();
  double base_total = 0.0;
  for (const auto& [s, len] : spec.state_pattern) base_total += len;

  std::vector<std::size_t> seg_len(n_seg, 0);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k + 1 < n_seg; ++k) {
    const double raw = spec.state_pattern[k].second * static_cast<double>(length) / base_total;
    std::size_t s = static_cast<std::size_t>(std::llround(raw));
    if (length >= n_seg) {
      s = std::max<std::size_t>(s, 1);
      // leave room for one instant per remaining segment
      const std::size_t remaining = n_seg - 1 - k;
      const std::size_t budget = length - assigned;
      if (budget < remaining + 1) s = 0;
      else s = std::min(s, budget - remaining);
    } else {
      s = std::min(s, length - assigned);
    }
    seg_len[k] = s;
    assigned += s;
  }
  seg_len[n_seg - 1] = length - assigned;  // residual to the last segment

  std::vector<int> states;
  states.reserve(length);
  for (std::size_t k = 0; k < n_seg; ++k)
    states.insert(states.end(), seg_len[k], spec.state_pattern[k].first);
  return states;
}

namespace {

std::vector<std::size_t> topo_order(const SyntheticSpec& spec, std::size_t state) {
  const std::size_t M = spec.n_vars;
  std::vector<int> indegree(M, 0);
  std::vector<std::vector<std::size_t>> children(M);
  for (std::size_t m = 0; m < M; ++m) {
    for (int p : spec.states[state][m].parents) {
      ++indegree[m];
      children[static_cast<std::size_t>(p)].push_back(m);
    }
  }
  std::vector<std::size_t> order;
  // Kahn's algorithm with ascending index selection, so the sampling order
  // (and hence the RNG stream) is deterministic.
  std::vector<bool> done(M, false);
  while (order.size() < M) {
    bool progress = false;
    for (std::size_t m = 0; m < M; ++m) {
      if (!done[m] && indegree[m] == 0) {
        order.push_back(m);
        done[m] = true;
        for (std::size_t c : children[m]) --indegree[c];
        progress = true;
        break;
      }
    }
    if (!progress) throw InvariantError("gen_observations: cycle in state graph");
  }
  return order;
}

}  // namespace

TimeSeries gen_observations(const SyntheticSpec& spec, const std::vector<int>& states,
                            std::uint64_t seed) {
  spec.validate();
  if (states.empty()) throw InvariantError("gen_observations: empty state sequence");
  for (int s : states)
    if (s < 0 || static_cast<std::size_t>(s) >= spec.n_states)
      throw InvariantError("gen_observations: state index out of range");

  std::vector<std::vector<std::size_t>> orders(spec.n_states);
  for (std::size_t i = 0; i < spec.n_states; ++i) orders[i] = topo_order(spec, i);

  const std::size_t burn = static_cast<std::size_t>(spec.burn_in);
  const std::size_t total = burn + states.size();
  Mat work(total, spec.n_vars, 0.0);
  Rng rng(seed);
  for (std::size_t t = 0; t < total; ++t) {
    const int s = t < burn ? states[0] : states[t - burn];
    for (std::size_t m : orders[static_cast<std::size_t>(s)]) {
      const SyntheticVar& v = spec.states[static_cast<std::size_t>(s)][m];
      double mean = 0.0;
      for (std::size_t k = 0; k < v.parents.size(); ++k) {
        const double pv = work(t, static_cast<std::size_t>(v.parents[k]));
        mean += v.parent_coefs[k] * (pv * pv - v.offset);
      }
      for (std::size_t r = 1; r <= v.ar_coefs.size(); ++r)
        mean += v.ar_coefs[r - 1] * (t >= r ? work(t - r, m) : 0.0);
      work(t, m) = mean + v.sigma * rng.normal();
    }
  }

  Mat out(states.size(), spec.n_vars);
  for (std::size_t t = 0; t < states.size(); ++t)
    for (std::size_t m = 0; m < spec.n_vars; ++m) out(t, m) = work(t + burn, m);
  TimeSeries series(std::move(out), spec.feature_names);
  std::vector<std::string> labels(states.size());
  for (std::size_t t = 0; t < states.size(); ++t) labels[t] = std::to_string(states[t]);
  series.set_state_labels(std::move(labels));
  return series;
}

// ---------------------------------------------------------------------------
// benchmark

namespace {

std::uint64_t derive_seed(std::uint64_t master, const std::string& tag) {
  std::string s = tag;
  const std::uint64_t a = fnv1a64(s.data(), s.size());
  return Rng(master ^ a).next_u64();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

BenchmarkReport run_benchmark(const SyntheticSpec& spec, const BenchmarkConfig& config) {
  spec.validate();
  if (config.train_lengths.empty() || config.variants.empty())
    throw InvariantError("run_benchmark: nothing to do");

  // shared test set
  std::vector<TimeSeries> tests;
  tests.reserve(config.n_test);
  const auto test_states = gen_state_sequence(spec, config.test_length);
  for (std::size_t k = 0; k < config.n_test; ++k)
    tests.push_back(gen_observations(spec, test_states,
                                     derive_seed(config.seed, "test/" + std::to_string(k))));

  BenchmarkReport report;
  for (std::size_t T : config.train_lengths) {
    const auto train_states = gen_state_sequence(spec, T);
    const TimeSeries train = gen_observations(
        spec, train_states, derive_seed(config.seed, "train/" + std::to_string(T)));

    for (const std::string& variant : config.variants) {
      BenchmarkRow row;
      row.variant = variant;
      row.train_length = T;
      const std::uint64_t init_seed =
          derive_seed(config.seed, "init/" + variant + "/" + std::to_string(T));
      const auto t0 = std::chrono::steady_clock::now();

      if (variant == "gauss") {
        GaussianHmm model = gaussian_init(train, config.n_states, init_seed);
        gaussian_fit(model, train, config.max_iter, config.rel_tol);
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                          .count();
        for (const auto& ts : tests)
          row.per_series.push_back(gaussian_log_likelihood(model, ts) /
                                   static_cast<double>(ts.rows()));
      } else {
        SemConfig sem;
        sem.train.n_states = config.n_states;
        sem.train.p_star = config.p_star;
        sem.train.max_iter = config.max_iter;
        sem.train.rel_tol = config.rel_tol;
        sem.train.seed = init_seed;
        sem.train.threads = config.threads;
        sem.sem_rounds = config.sem_rounds;
        if (variant == "kde-as-star") {
          if (spec.max_lag() > config.p_star)
            throw InvariantError("run_benchmark: spec AR order exceeds P*");
          sem.train.graph = spec.to_graph();
          sem.flags = {false, false};  // structure taken as given
        } else {
          sem.flags = variant_flags(parse_variant(variant));
        }
        auto [model, fit] = sem_fit(train, sem);
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                          .count();
        for (const auto& ts : tests)
          row.per_series.push_back(log_likelihood(model, ts, config.threads) /
                                   static_cast<double>(model.n_scored(ts)));
      }
      row.mean_ll = mean_of(row.per_series);
      row.std_ll = sample_std_of(row.per_series);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// classification

ClassificationReport run_classification(
    const std::map<std::string, std::vector<TimeSeries>>& class_folds,
    const ClassificationConfig& config) {
  if (class_folds.empty()) throw InvariantError("run_classification: no classes");
  std::size_t n_folds = 0;
  for (const auto& [name, folds] : class_folds) {
    if (folds.empty())
      throw InvariantError("run_classification: class '" + name + "' has no training data");
    if (n_folds == 0) n_folds = folds.size();
    if (folds.size() != n_folds)
      throw InvariantError("run_classification: fold counts differ between classes");
  }

  ClassificationReport report;
  report.random_floor = 1.0 / static_cast<double>(class_folds.size());

  for (std::size_t f = 0; f < n_folds; ++f) {
    std::map<std::string, KdeAsHmmModel> models;
    for (const auto& [name, folds] : class_folds) {
      SemConfig sem;
      sem.train.n_states = config.n_states;
      sem.train.p_star = config.p_star;
      sem.train.max_iter = config.max_iter;
      sem.train.rel_tol = config.rel_tol;
      sem.train.seed = derive_seed(config.seed, "class/" + name + "/" + std::to_string(f));
      sem.train.threads = config.threads;
      sem.sem_rounds = config.sem_rounds;
      sem.flags = variant_flags(config.variant);
      models.emplace(name, sem_fit(folds[f], sem).first);
    }

    std::size_t correct = 0, total = 0;
    for (const auto& [truth, folds] : class_folds) {
      for (std::size_t g = 0; g < n_folds; ++g) {
        if (g == f) continue;
        double best = -std::numeric_limits<double>::infinity();
        std::string predicted;
        for (const auto& [name, model] : models) {  // map order = lexicographic tie-break
          const double ll = log_likelihood(model, folds[g], config.threads);
          if (ll > best) {
            best = ll;
            predicted = name;
          }
        }
        correct += (predicted == truth) ? 1 : 0;
        ++total;
      }
    }
    report.fold_accuracy.push_back(total == 0 ? 1.0
                                              : static_cast<double>(correct) /
                                                    static_cast<double>(total));
  }
  report.mean_accuracy = mean_of(report.fold_accuracy);
  return report;
}

}  // namespace kdeas
