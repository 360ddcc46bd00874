#include "kdeashmm/model.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>

#include "kdeashmm/errors.hpp"
#include "kdeashmm/kernel_math.hpp"
#include "kdeashmm/log.hpp"
#include "kdeashmm/parallel.hpp"

namespace kdeas {

namespace {
constexpr double kSimplexTol = 1e-12;
constexpr const char* kModelFormat = "kde-ashmm-model";
constexpr int kModelVersion = 1;
constexpr const char* kGraphFormat = "kde-ashmm-graph";
}  // namespace

void KdeAsHmmModel::validate() const {
  const std::size_t N = n_states;
  const std::size_t M = n_vars();
  if (N == 0) throw InvariantError("model: no states");
  if (p_star < 0) throw InvariantError("model: negative P*");
  if (centers.rows() < static_cast<std::size_t>(p_star) + 1)
    throw InvariantError("model: centers shorter than P*+1");
  if (pi.size() != N) throw InvariantError("model: pi size mismatch");
  if (a.rows() != N || a.cols() != N) throw InvariantError("model: A shape mismatch");
  if (h.rows() != N || h.cols() != M) throw InvariantError("model: h shape mismatch");
  if (omega.rows() != N || omega.cols() != n_centers())
    throw InvariantError("model: omega shape mismatch");
  if (graph.n_states() != N || graph.n_vars() != M)
    throw InvariantError("model: graph shape mismatch");
  if (weights.size() != N) throw InvariantError("model: weights shape mismatch");

  double pi_sum = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvariantError("model: invalid pi entry");
    pi_sum += p;
  }
  if (std::abs(pi_sum - 1.0) > kSimplexTol)
    throw InvariantError("model: pi does not sum to 1");

  for (std::size_t i = 0; i < N; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      double v = a(i, j);
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvariantError("model: invalid A entry");
      row += v;
    }
    if (std::abs(row - 1.0) > kSimplexTol)
      throw InvariantError("model: A row " + std::to_string(i) + " does not sum to 1");

    double orow = 0.0;
    for (std::size_t l = 0; l < omega.cols(); ++l) {
      double v = omega(i, l);
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvariantError("model: invalid omega entry");
      orow += v;
    }
    if (std::abs(orow - 1.0) > kSimplexTol)
      throw InvariantError("model: omega row " + std::to_string(i) + " does not sum to 1");

    if (weights[i].size() != M) throw InvariantError("model: weights shape mismatch");
    for (std::size_t m = 0; m < M; ++m) {
      double hv = h(i, m);
      if (!(hv > 0.0) || !std::isfinite(hv))
        throw InvariantError("model: non-positive bandwidth");
      if (graph.ar_order(i, m) > p_star)
        throw InvariantError("model: AR order exceeds P*");
      if (weights[i][m].size() != graph.dim(i, m))
        throw InvariantError("model: weight row length != kappa+p for state " +
                             std::to_string(i) + " var " + std::to_string(m));
      for (double w : weights[i][m])
        if (!std::isfinite(w)) throw InvariantError("model: non-finite kernel weight");
    }
  }
  require_valid_graph(graph);
}

std::vector<double> conditioning_vector(const KdeAsHmmModel& model, std::size_t state,
                                        std::size_t var, std::size_t t,
                                        const TimeSeries& series) {
  const auto& parents = model.graph.parents(state, var);
  const int p = model.graph.ar_order(state, var);
  if (t >= series.rows() || t < static_cast<std::size_t>(model.p_star))
    throw InvariantError("conditioning_vector: time index out of range");
  std::vector<double> u;
  u.reserve(parents.size() + static_cast<std::size_t>(p));
  for (int v : parents) u.push_back(series(t, static_cast<std::size_t>(v)));
  for (int r = 1; r <= p; ++r) u.push_back(series(t - static_cast<std::size_t>(r), var));
  return u;
}

double kernel_center(const KdeAsHmmModel& model, std::size_t state, std::size_t var,
                     std::size_t center_index, std::size_t t, const TimeSeries& series) {
  if (state >= model.n_states || var >= model.n_vars())
    throw InvariantError("kernel_center: state/var out of range");
  if (center_index < static_cast<std::size_t>(model.p_star) ||
      center_index >= model.centers.rows())
    throw InvariantError("kernel_center: center index out of range");
  const auto u = conditioning_vector(model, state, var, t, series);
  const auto v = conditioning_vector(model, state, var, center_index, model.centers);
  const auto& w = model.weights[state][var];
  if (w.size() != u.size()) throw InvariantError("kernel_center: weight row size mismatch");
  double mu = model.centers(center_index, var);
  for (std::size_t k = 0; k < w.size(); ++k) mu += w[k] * (u[k] - v[k]);
  return mu;
}

double emission_log_density(const KdeAsHmmModel& model, std::size_t state, std::size_t t,
                            const TimeSeries& series, bool exclude_self) {
  if (t < static_cast<std::size_t>(model.p_star))
    throw InvariantError("emission_log_density: t < P*");
  if (t >= series.rows()) throw InvariantError("emission_log_density: t out of range");
  const std::size_t p_star = static_cast<std::size_t>(model.p_star);
  const std::size_t M = model.n_vars();

  double log_h_sum = 0.0;
  for (std::size_t m = 0; m < M; ++m) log_h_sum += std::log(model.h(state, m));

  std::vector<double> terms;
  terms.reserve(model.n_centers());
  for (std::size_t l = p_star; l < model.centers.rows(); ++l) {
    if (exclude_self && l == t) continue;
    double s = std::log(model.omega(state, l - p_star));
    for (std::size_t m = 0; m < M; ++m) {
      const double mu = kernel_center(model, state, m, l, t, series);
      const double z = (series(t, m) - mu) / model.h(state, m);
      s += -kHalfLog2Pi - 0.5 * z * z;
    }
    terms.push_back(s);
  }
  if (terms.empty())
    throw InvariantError("emission_log_density: no kernel components (self-exclusion)");
  const double lse = log_sum_exp(terms);
  if (lse == -std::numeric_limits<double>::infinity())
    log_warn("emission_log_density: all mixture terms -inf at t=" + std::to_string(t));
  return lse - log_h_sum;
}

EmissionWorkspace::EmissionWorkspace(const KdeAsHmmModel& model, const TimeSeries& series)
    : model_(&model), series_(&series) {
  const std::size_t p_star = static_cast<std::size_t>(model.p_star);
  if (series.rows() < p_star + 1)
    throw InvariantError("emission: series shorter than P*+1");
  if (series.n_vars() != model.n_vars())
    throw InvariantError("emission: series has wrong variable count");
  n_scored_ = series.rows() - p_star;
  n_centers_ = model.n_centers();
  const std::size_t N = model.n_states;
  const std::size_t M = model.n_vars();

  y_cols_.assign(M, std::vector<double>(n_centers_));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t l = 0; l < n_centers_; ++l)
      y_cols_[m][l] = model.centers(l + p_star, m);

  corr_.assign(N, std::vector<std::vector<double>>(M));
  center_corr_.assign(N, std::vector<std::vector<double>>(M));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t m = 0; m < M; ++m) {
      if (model.graph.dim(i, m) == 0) continue;
      const auto& w = model.weights[i][m];
      auto dot = [&](const TimeSeries& s, std::size_t t) {
        const auto& parents = model.graph.parents(i, m);
        double acc = 0.0;
        std::size_t k = 0;
        for (int v : parents) acc += w[k++] * s(t, static_cast<std::size_t>(v));
        const int p = model.graph.ar_order(i, m);
        for (int r = 1; r <= p; ++r) acc += w[k++] * s(t - static_cast<std::size_t>(r), m);
        return acc;
      };
      auto& ct = corr_[i][m];
      ct.resize(n_scored_);
      for (std::size_t t = 0; t < n_scored_; ++t) ct[t] = dot(series, t + p_star);
      auto& cc = center_corr_[i][m];
      cc.resize(n_centers_);
      for (std::size_t l = 0; l < n_centers_; ++l) cc[l] = dot(model.centers, l + p_star);
    }
  }
}

void EmissionWorkspace::kernel_log_sums(std::size_t state, std::size_t t, double* out) const {
  const std::size_t p_star = static_cast<std::size_t>(model_->p_star);
  const std::size_t M = model_->n_vars();
  const std::size_t L = n_centers_;
  const double neg_const = -static_cast<double>(M) * kHalfLog2Pi;
  for (std::size_t l = 0; l < L; ++l) out[l] = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    const double hm = model_->h(state, m);
    const double w = -0.5 / (hm * hm);
    const double* y = y_cols_[m].data();
    const auto& ct = corr_[state][m];
    const double base = (*series_)(t, m) - (ct.empty() ? 0.0 : ct[t - p_star]);
    if (center_corr_[state][m].empty()) {
      for (std::size_t l = 0; l < L; ++l) {
        const double d = base - y[l];
        out[l] += w * d * d;
      }
    } else {
      const double* cc = center_corr_[state][m].data();
      for (std::size_t l = 0; l < L; ++l) {
        const double d = base - y[l] + cc[l];
        out[l] += w * d * d;
      }
    }
  }
  for (std::size_t l = 0; l < L; ++l) out[l] += neg_const;
}

Mat log_emission_table(const KdeAsHmmModel& model, const TimeSeries& series,
                       bool exclude_self, int threads) {
  EmissionWorkspace ws(model, series);
  return log_emission_table(ws, exclude_self, threads);
}

Mat log_emission_table(const EmissionWorkspace& ws, bool exclude_self, int threads) {
  const KdeAsHmmModel& model = ws.model();
  const std::size_t p_star = static_cast<std::size_t>(model.p_star);
  const std::size_t N = model.n_states;
  const std::size_t n = ws.n_scored();
  const std::size_t L = ws.n_centers();

  std::vector<double> log_h_sum(N, 0.0);
  Mat log_omega(N, L);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t m = 0; m < model.n_vars(); ++m)
      log_h_sum[i] += std::log(model.h(i, m));
    for (std::size_t l = 0; l < L; ++l) log_omega(i, l) = std::log(model.omega(i, l));
  }

  if (exclude_self && L < 2)
    throw InvariantError("emission: self-exclusion leaves no kernel components");

  Mat table(n, N);
  std::atomic<bool> any_neg_inf{false};
  parallel_blocks(n, threads, [&](std::size_t t0, std::size_t t1, std::size_t) {
    std::vector<double> s(L);
    for (std::size_t tr = t0; tr < t1; ++tr) {
      const std::size_t t = tr + p_star;
      for (std::size_t i = 0; i < N; ++i) {
        ws.kernel_log_sums(i, t, s.data());
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < L; ++l) {
          if (exclude_self && l + p_star == t) continue;
          const double v = s[l] + log_omega(i, l);
          if (v > mx) mx = v;
        }
        double acc = 0.0;
        if (std::isfinite(mx)) {
          for (std::size_t l = 0; l < L; ++l) {
            if (exclude_self && l + p_star == t) continue;
            acc += std::exp(s[l] + log_omega(i, l) - mx);
          }
          table(tr, i) = mx + std::log(acc) - log_h_sum[i];
        } else {
          table(tr, i) = mx;  // all components vanished
          any_neg_inf.store(true, std::memory_order_relaxed);
        }
      }
    }
  });
  if (any_neg_inf.load()) log_warn("emission table: some instants have all mixture terms -inf");
  return table;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

nlohmann::json graph_to_json(const ContextGraph& g) {
  nlohmann::json parents = nlohmann::json::array();
  nlohmann::json ar = nlohmann::json::array();
  for (std::size_t i = 0; i < g.n_states(); ++i) {
    nlohmann::json prow = nlohmann::json::array();
    nlohmann::json arow = nlohmann::json::array();
    for (std::size_t m = 0; m < g.n_vars(); ++m) {
      prow.push_back(g.parents(i, m));
      arow.push_back(g.ar_order(i, m));
    }
    parents.push_back(prow);
    ar.push_back(arow);
  }
  return {{"parents", parents}, {"ar_order", ar}};
}

ContextGraph graph_from_json(const nlohmann::json& j, std::size_t n_states,
                             std::size_t n_vars) {
  ContextGraph g(n_states, n_vars);
  const auto& parents = j.at("parents");
  const auto& ar = j.at("ar_order");
  if (parents.size() != n_states || ar.size() != n_states)
    throw ParseError("graph: state dimension mismatch");
  for (std::size_t i = 0; i < n_states; ++i) {
    if (parents[i].size() != n_vars || ar[i].size() != n_vars)
      throw ParseError("graph: variable dimension mismatch");
    for (std::size_t m = 0; m < n_vars; ++m) {
      for (const auto& p : parents[i][m]) g.add_parent(i, m, p.get<int>());
      g.set_ar_order(i, m, ar[i][m].get<int>());
    }
  }
  return g;
}

nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Mat mat_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ParseError(std::string("model: bad matrix ") + what);
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw ParseError(std::string("model: ragged matrix ") + what);
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

nlohmann::json model_to_json(const KdeAsHmmModel& model) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["n_states"] = model.n_states;
  j["p_star"] = model.p_star;
  j["feature_names"] = model.centers.feature_names();
  j["pi"] = model.pi;
  j["transition"] = mat_to_json(model.a);
  j["graph"] = graph_to_json(model.graph);
  j["conditioning_order"] = "parents-then-ar-lags";
  j["kernel_weights"] = model.weights;
  j["bandwidths"] = mat_to_json(model.h);
  j["omega"] = mat_to_json(model.omega);
  j["centers"] = {{"rows", model.centers.rows()},
                  {"cols", model.centers.n_vars()},
                  {"values", model.centers.values().data()}};
  return j;
}

KdeAsHmmModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != kModelFormat)
    throw ParseError("model: not a " + std::string(kModelFormat) + " document");
  if (j.value("version", -1) != kModelVersion)
    throw ParseError("model: unsupported format version " +
                     j.value("version", nlohmann::json()).dump());
  KdeAsHmmModel model;
  model.n_states = j.at("n_states").get<std::size_t>();
  model.p_star = j.at("p_star").get<int>();
  model.pi = j.at("pi").get<std::vector<double>>();
  model.a = mat_from_json(j.at("transition"), "transition");

  const auto& cj = j.at("centers");
  const std::size_t rows = cj.at("rows").get<std::size_t>();
  const std::size_t cols = cj.at("cols").get<std::size_t>();
  auto values = cj.at("values").get<std::vector<double>>();
  if (values.size() != rows * cols) throw ParseError("model: centers size mismatch");
  Mat centers(rows, cols);
  centers.data() = std::move(values);
  model.centers = TimeSeries(std::move(centers),
                             j.at("feature_names").get<std::vector<std::string>>());

  model.graph = graph_from_json(j.at("graph"), model.n_states, cols);
  model.weights = j.at("kernel_weights").get<KernelWeights>();
  model.h = mat_from_json(j.at("bandwidths"), "bandwidths");
  model.omega = mat_from_json(j.at("omega"), "omega");
  model.validate();
  return model;
}

void save_model(const KdeAsHmmModel& model, const std::string& path,
                const nlohmann::json* meta) {
  nlohmann::json j = model_to_json(model);
  if (meta) j["meta"] = *meta;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << j.dump(1) << "\n";
  if (!out) throw ParseError("write failed for '" + path + "'");
}

KdeAsHmmModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model: malformed JSON in '" + path + "': " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model: malformed document in '" + path + "': " + e.what());
  }
}

void save_graph(const ContextGraph& graph, const std::string& path) {
  nlohmann::json j = graph_to_json(graph);
  j["format"] = kGraphFormat;
  j["version"] = 1;
  j["n_states"] = graph.n_states();
  j["n_vars"] = graph.n_vars();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << j.dump(1) << "\n";
}

ContextGraph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("graph: malformed JSON in '" + path + "': " + e.what());
  }
  if (j.value("format", "") != kGraphFormat) throw ParseError("graph: wrong format field");
  if (j.value("version", -1) != 1) throw ParseError("graph: unsupported version");
  try {
    auto g = graph_from_json(j, j.at("n_states").get<std::size_t>(),
                             j.at("n_vars").get<std::size_t>());
    require_valid_graph(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("graph: malformed document: " + std::string(e.what()));
  }
}

}  // namespace kdeas
