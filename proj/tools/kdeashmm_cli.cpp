// Command-line front end: train / eval / segment / classify / synth /
// benchmark over CSV time series and JSON model files. Every command is
// deterministic given (inputs, flags, seed); primary outputs embed the
// tool version, seed, flag echo and input content hashes.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "kdeashmm/errors.hpp"
#include "kdeashmm/gaussian_hmm.hpp"
#include "kdeashmm/inference.hpp"
#include "kdeashmm/log.hpp"
#include "kdeashmm/model.hpp"
#include "kdeashmm/rng.hpp"
#include "kdeashmm/structure.hpp"
#include "kdeashmm/synthetic.hpp"
#include "kdeashmm/time_series.hpp"
#include "kdeashmm/trainer.hpp"
#include "kdeashmm/version.hpp"

namespace {

using nlohmann::json;

struct GlobalOpts {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = auto
  std::string log_level = "warn";
  std::string flags_echo;
};

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw kdeas::ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string s = buf.str();
  char out[32];
  std::snprintf(out, sizeof(out), "fnv1a:%016llx",
                static_cast<unsigned long long>(kdeas::fnv1a64(s.data(), s.size())));
  return out;
}

json make_meta(const GlobalOpts& g, const std::vector<std::string>& input_paths) {
  json meta;
  meta["tool_version"] = kdeas::kToolVersion;
  meta["seed"] = g.seed;
  meta["flags"] = g.flags_echo;
  json hashes;
  for (const auto& p : input_paths) hashes[p] = hash_file(p);
  meta["input_hashes"] = hashes;
  return meta;
}

std::vector<std::string> meta_preamble(const json& meta) {
  std::vector<std::string> lines;
  lines.push_back("# tool_version=" + meta["tool_version"].get<std::string>());
  lines.push_back("# seed=" + std::to_string(meta["seed"].get<std::uint64_t>()));
  lines.push_back("# flags=" + meta["flags"].get<std::string>());
  for (auto it = meta["input_hashes"].begin(); it != meta["input_hashes"].end(); ++it)
    lines.push_back("# input_hash:" + it.key() + "=" + it.value().get<std::string>());
  return lines;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw kdeas::ParseError("cannot open '" + path + "' for writing");
  out << j.dump(1) << "\n";
  if (!out) throw kdeas::ParseError("write failed for '" + path + "'");
}

void apply_log_level(const std::string& level) {
  if (level == "debug") kdeas::set_log_level(kdeas::LogLevel::kDebug);
  else if (level == "info") kdeas::set_log_level(kdeas::LogLevel::kInfo);
  else if (level == "warn") kdeas::set_log_level(kdeas::LogLevel::kWarn);
  else if (level == "error") kdeas::set_log_level(kdeas::LogLevel::kError);
  else throw kdeas::ParseError("unknown log level '" + level + "'");
}

json fit_report_json(const kdeas::FitReport& report) {
  json moves = json::array();
  for (const auto& m : report.moves) {
    moves.push_back({{"round", m.round},
                     {"state", m.state},
                     {"var", m.var},
                     {"kind", m.kind},
                     {"parent", m.parent},
                     {"total_before", m.total_before},
                     {"total_after", m.total_after}});
  }
  return {{"loglik_per_datum", report.loglik_per_datum},
          {"iterations", report.iterations},
          {"converged", report.converged},
          {"wall_time_s", report.wall_time_s},
          {"accepted_moves", moves}};
}

// --- train -----------------------------------------------------------------

struct TrainOpts {
  std::string data, out, report, graph, labels, variant = "kde-as";
  std::size_t states = 3;
  int pstar = 1;
  std::size_t sem_rounds = 1;
  std::size_t max_iter = 100;
  double tol = 1e-6;
  std::size_t budget = 1000000;
};

int cmd_train(const GlobalOpts& g, const TrainOpts& o) {
  const kdeas::TimeSeries series = kdeas::read_csv(o.data, o.labels);

  kdeas::SemConfig sem;
  sem.train.n_states = o.states;
  sem.train.p_star = o.pstar;
  sem.train.max_iter = o.max_iter;
  sem.train.rel_tol = o.tol;
  sem.train.seed = g.seed;
  sem.train.threads = g.threads;
  sem.sem_rounds = o.sem_rounds;
  sem.per_state_budget = o.budget;
  sem.flags = kdeas::variant_flags(kdeas::parse_variant(o.variant));

  std::vector<std::string> inputs{o.data};
  if (!o.graph.empty()) {
    sem.train.graph = kdeas::load_graph(o.graph);
    inputs.push_back(o.graph);
  }

  json label_map_json;
  if (!o.labels.empty()) {
    if (!series.state_labels())
      throw kdeas::ParseError("train: label column '" + o.labels + "' not present");
    const auto& labels = *series.state_labels();
    std::set<std::string> unique(labels.begin(), labels.end());
    if (unique.size() > o.states)
      throw kdeas::InvariantError("train: more labels (" + std::to_string(unique.size()) +
                                  ") than states (" + std::to_string(o.states) + ")");
    std::map<std::string, int> mapping;
    int next = 0;
    for (const auto& l : unique) {
      label_map_json[l] = next;
      mapping[l] = next++;
    }
    sem.train.omega_labels = labels;
    sem.train.label_to_state = mapping;
  }

  auto [model, report] = kdeas::sem_fit(series, sem);

  json meta = make_meta(g, inputs);
  if (!label_map_json.is_null()) meta["label_map"] = label_map_json;
  kdeas::save_model(model, o.out, &meta);

  json rj = fit_report_json(report);
  rj["meta"] = meta;
  write_json(rj, o.report.empty() ? o.out + ".report.json" : o.report);

  std::cout << "model=" << o.out << " iterations=" << report.iterations
            << " converged=" << (report.converged ? "true" : "false")
            << " final_loglik_per_datum="
            << (report.loglik_per_datum.empty()
                    ? "nan"
                    : kdeas::format_double(report.loglik_per_datum.back()))
            << " moves=" << report.moves.size() << "\n";
  return 0;
}

// --- eval ------------------------------------------------------------------

int cmd_eval(const GlobalOpts& g, const std::string& model_path, const std::string& data_path,
             const std::string& out_path) {
  const kdeas::KdeAsHmmModel model = kdeas::load_model(model_path);
  const kdeas::TimeSeries series = kdeas::read_csv(data_path);
  const double ll = kdeas::log_likelihood(model, series, g.threads);
  const std::size_t n = model.n_scored(series);
  const double per_datum = ll / static_cast<double>(n);

  json j;
  j["loglik"] = ll;
  j["n_scored"] = n;
  j["loglik_per_datum"] = per_datum;
  j["meta"] = make_meta(g, {model_path, data_path});
  if (!out_path.empty()) write_json(j, out_path);
  std::cout << "loglik=" << kdeas::format_double(ll) << " n_scored=" << n
            << " loglik_per_datum=" << kdeas::format_double(per_datum) << "\n";
  return 0;
}

// --- segment ---------------------------------------------------------------

int cmd_segment(const GlobalOpts& g, const std::string& model_path,
                const std::string& data_path, const std::string& out_path) {
  const kdeas::KdeAsHmmModel model = kdeas::load_model(model_path);
  const kdeas::TimeSeries series = kdeas::read_csv(data_path);
  const auto path = kdeas::viterbi(model, series, g.threads);

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw kdeas::ParseError("cannot open '" + out_path + "' for writing");
  for (const auto& line : meta_preamble(make_meta(g, {model_path, data_path})))
    out << line << "\n";
  out << "t,state\n";
  for (std::size_t r = 0; r < path.size(); ++r)
    out << (r + static_cast<std::size_t>(model.p_star)) << "," << path[r] << "\n";
  std::cout << "segments=" << out_path << " instants=" << path.size() << "\n";
  return 0;
}

// --- classify ----------------------------------------------------------------

int cmd_classify(const GlobalOpts& g, const std::string& models_dir,
                 const std::string& data_path, const std::string& out_path) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(models_dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw kdeas::ParseError("classify: no model files in '" + models_dir + "'");

  const kdeas::TimeSeries series = kdeas::read_csv(data_path);
  json logliks, per_datum;
  std::string predicted;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& f : files) {
    const std::string name = fs::path(f).stem().string();
    const kdeas::KdeAsHmmModel model = kdeas::load_model(f);
    const double ll = kdeas::log_likelihood(model, series, g.threads);
    logliks[name] = ll;
    per_datum[name] = ll / static_cast<double>(model.n_scored(series));
    if (ll > best) {  // files sorted, so ties keep the lexicographically first
      best = ll;
      predicted = name;
    }
  }

  std::vector<std::string> inputs{data_path};
  inputs.insert(inputs.end(), files.begin(), files.end());
  json j;
  j["predicted"] = predicted;
  j["logliks"] = logliks;
  j["loglik_per_datum"] = per_datum;
  j["tie_break"] = "lexicographic";
  j["meta"] = make_meta(g, inputs);
  if (!out_path.empty()) write_json(j, out_path);
  std::cout << "predicted=" << predicted << "\n";
  return 0;
}

// --- synth -------------------------------------------------------------------

int cmd_synth(const GlobalOpts& g, const std::string& spec_path, std::size_t length,
              const std::string& out_path, std::string states_path) {
  const kdeas::SyntheticSpec spec = kdeas::load_synthetic_spec(spec_path);
  const auto states = kdeas::gen_state_sequence(spec, length);
  const kdeas::TimeSeries series = kdeas::gen_observations(spec, states, g.seed);

  const json meta = make_meta(g, {spec_path});
  kdeas::write_csv(series, out_path, meta_preamble(meta));

  if (states_path.empty()) states_path = out_path + ".states.csv";
  std::ofstream out(states_path, std::ios::binary);
  if (!out) throw kdeas::ParseError("cannot open '" + states_path + "' for writing");
  for (const auto& line : meta_preamble(meta)) out << line << "\n";
  out << "t,state\n";
  for (std::size_t t = 0; t < states.size(); ++t) out << t << "," << states[t] << "\n";
  std::cout << "data=" << out_path << " states=" << states_path << " length=" << length
            << "\n";
  return 0;
}

// --- benchmark ---------------------------------------------------------------

struct BenchOpts {
  std::string spec, out_prefix = "bench";
  std::vector<std::size_t> train_lengths{350, 1050};
  std::size_t n_test = 20;
  std::size_t test_length = 400;
  std::vector<std::string> variants{"gauss", "kde-hmm", "kde-as"};
  std::size_t states = 3;
  int pstar = 1;
  std::size_t max_iter = 30;
  double tol = 1e-5;
  std::size_t sem_rounds = 1;
  bool plot_data = false;
};

int cmd_benchmark(const GlobalOpts& g, const BenchOpts& o) {
  const kdeas::SyntheticSpec spec = kdeas::load_synthetic_spec(o.spec);
  kdeas::BenchmarkConfig cfg;
  cfg.train_lengths = o.train_lengths;
  cfg.n_test = o.n_test;
  cfg.test_length = o.test_length;
  cfg.variants = o.variants;
  cfg.seed = g.seed;
  cfg.n_states = o.states;
  cfg.p_star = o.pstar;
  cfg.max_iter = o.max_iter;
  cfg.rel_tol = o.tol;
  cfg.sem_rounds = o.sem_rounds;
  cfg.threads = g.threads;
  const kdeas::BenchmarkReport report = kdeas::run_benchmark(spec, cfg);

  const json meta = make_meta(g, {o.spec});
  const auto preamble = meta_preamble(meta);

  // primary report: deterministic columns only; wall times go to the
  // timing file and the JSON summary
  {
    std::ofstream out(o.out_prefix + "_report.csv", std::ios::binary);
    for (const auto& line : preamble) out << line << "\n";
    out << "variant,train_length,mean_loglik_per_datum,std_loglik_per_datum\n";
    for (const auto& r : report.rows)
      out << r.variant << "," << r.train_length << "," << kdeas::format_double(r.mean_ll)
          << "," << kdeas::format_double(r.std_ll) << "\n";
  }
  {
    std::ofstream out(o.out_prefix + "_timing.csv", std::ios::binary);
    for (const auto& line : preamble) out << line << "\n";
    out << "variant,train_length,train_seconds\n";
    for (const auto& r : report.rows)
      out << r.variant << "," << r.train_length << "," << kdeas::format_double(r.seconds)
          << "\n";
  }
  {
    json rows = json::array();
    for (const auto& r : report.rows) {
      rows.push_back({{"variant", r.variant},
                      {"train_length", r.train_length},
                      {"mean_loglik_per_datum", r.mean_ll},
                      {"std_loglik_per_datum", r.std_ll},
                      {"train_seconds", r.seconds},
                      {"per_series_loglik_per_datum", r.per_series}});
    }
    json j;
    j["rows"] = rows;
    j["meta"] = meta;
    write_json(j, o.out_prefix + "_summary.json");
  }
  if (o.plot_data) {
    // one file per axis of the log-likelihood-vs-T figures
    for (const char* which : {"mean", "std"}) {
      std::ofstream out(o.out_prefix + std::string("_plot_") + which + ".csv",
                        std::ios::binary);
      for (const auto& line : preamble) out << line << "\n";
      out << "train_length";
      for (const auto& v : o.variants) out << "," << v;
      out << "\n";
      for (std::size_t T : o.train_lengths) {
        out << T;
        for (const auto& v : o.variants) {
          for (const auto& r : report.rows)
            if (r.variant == v && r.train_length == T)
              out << ","
                  << kdeas::format_double(std::string(which) == "mean" ? r.mean_ll
                                                                       : r.std_ll);
        }
        out << "\n";
      }
    }
  }
  std::cout << "report=" << o.out_prefix << "_report.csv rows=" << report.rows.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel-density asymmetric hidden Markov models"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "seed for all randomized behavior");
  app.add_option("--threads", g.threads, "worker threads (0 = auto)");
  app.add_option("--log-level", g.log_level, "debug|info|warn|error");
  app.fallthrough();

  TrainOpts tr;
  auto* train = app.add_subcommand("train", "fit a model to a CSV series");
  train->add_option("--data", tr.data, "training CSV")->required();
  train->add_option("--out", tr.out, "output model JSON")->required();
  train->add_option("--report", tr.report, "fit report JSON (default <out>.report.json)");
  train->add_option("--states", tr.states, "hidden states");
  train->add_option("--pstar", tr.pstar, "maximum AR order P*");
  train->add_option("--variant", tr.variant, "kde-hmm|kde-ar|kde-bn|kde-as");
  train->add_option("--graph", tr.graph, "fixed context-graph JSON");
  train->add_option("--labels", tr.labels, "label column for supervised omega start");
  train->add_option("--sem-rounds", tr.sem_rounds, "structure search rounds");
  train->add_option("--max-iter", tr.max_iter, "EM iteration cap");
  train->add_option("--tol", tr.tol, "relative log-likelihood tolerance");
  train->add_option("--search-budget", tr.budget, "max accepted moves per state");

  std::string ev_model, ev_data, ev_out;
  auto* eval = app.add_subcommand("eval", "log-likelihood of a CSV under a model");
  eval->add_option("--model", ev_model, "model JSON")->required();
  eval->add_option("--data", ev_data, "CSV series")->required();
  eval->add_option("--out", ev_out, "result JSON");

  std::string sg_model, sg_data, sg_out;
  auto* segment = app.add_subcommand("segment", "Viterbi state per instant");
  segment->add_option("--model", sg_model, "model JSON")->required();
  segment->add_option("--data", sg_data, "CSV series")->required();
  segment->add_option("--out", sg_out, "segments CSV")->required();

  std::string cl_dir, cl_data, cl_out;
  auto* classify = app.add_subcommand("classify", "pick the best-scoring class model");
  classify->add_option("--models", cl_dir, "directory of per-class model JSONs")->required();
  classify->add_option("--data", cl_data, "CSV series")->required();
  classify->add_option("--out", cl_out, "result JSON");

  std::string sy_spec, sy_out, sy_states;
  std::size_t sy_length = 1000;
  auto* synth = app.add_subcommand("synth", "sample a synthetic series");
  synth->add_option("--spec", sy_spec, "synthetic spec JSON")->required();
  synth->add_option("--length", sy_length, "series length");
  synth->add_option("--out", sy_out, "data CSV")->required();
  synth->add_option("--states-out", sy_states, "states CSV (default <out>.states.csv)");

  BenchOpts bo;
  auto* bench = app.add_subcommand("benchmark", "train/evaluate variants on synthetic data");
  bench->add_option("--spec", bo.spec, "synthetic spec JSON")->required();
  bench->add_option("--out-prefix", bo.out_prefix, "output file prefix");
  bench->add_option("--train-lengths", bo.train_lengths, "training lengths")->delimiter(',');
  bench->add_option("--n-test", bo.n_test, "held-out series count");
  bench->add_option("--test-length", bo.test_length, "held-out series length");
  bench->add_option("--variants", bo.variants,
                    "gauss|kde-hmm|kde-ar|kde-bn|kde-as|kde-as-star")
      ->delimiter(',');
  bench->add_option("--states", bo.states, "hidden states");
  bench->add_option("--pstar", bo.pstar, "maximum AR order P*");
  bench->add_option("--max-iter", bo.max_iter, "EM iteration cap");
  bench->add_option("--tol", bo.tol, "relative log-likelihood tolerance");
  bench->add_option("--sem-rounds", bo.sem_rounds, "structure search rounds");
  bench->add_flag("--plot-data", bo.plot_data, "emit per-figure CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  std::ostringstream echo;
  for (int i = 1; i < argc; ++i) echo << (i > 1 ? " " : "") << argv[i];
  g.flags_echo = echo.str();

  try {
    apply_log_level(g.log_level);
    if (*train) return cmd_train(g, tr);
    if (*eval) return cmd_eval(g, ev_model, ev_data, ev_out);
    if (*segment) return cmd_segment(g, sg_model, sg_data, sg_out);
    if (*classify) return cmd_classify(g, cl_dir, cl_data, cl_out);
    if (*synth) return cmd_synth(g, sy_spec, sy_length, sy_out, sy_states);
    if (*bench) return cmd_benchmark(g, bo);
  } catch (const kdeas::ParseError& e) {
    std::cerr << "error (parse): " << e.what() << "\n";
    return 1;
  } catch (const kdeas::InvariantError& e) {
    std::cerr << "error (invariant): " << e.what() << "\n";
    return 2;
  } catch (const kdeas::NumericalError& e) {
    std::cerr << "error (numerical): " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
