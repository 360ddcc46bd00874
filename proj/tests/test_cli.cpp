#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "kdeashmm/inference.hpp"
#include "kdeashmm/model.hpp"
#include "kdeashmm/rng.hpp"
#include "kdeashmm/time_series.hpp"

using namespace kdeas;
namespace fs = std::filesystem;

namespace {

const std::string kCli = KDEAS_CLI_PATH;
const std::string kSpec = std::string(KDEAS_ASSETS_DIR) + "/synthetic_default.json";

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CmdResult run_cli(const std::string& args, const std::string& dir) {
  const std::string out = dir + "/cmd.out", err = dir + "/cmd.err";
  const std::string cmd = "cd " + dir + " && " + kCli + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string make_dir(const std::string& name) {
  const std::string dir = "/tmp/kdeas_cli_" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("synth is deterministic and writes both outputs") {
  const std::string dir = make_dir("synth");
  const std::string args =
      "--seed 42 synth --spec " + kSpec + " --length 150 --out data.csv";
  CHECK(run_cli(args, dir).exit_code == 0);
  const std::string first = slurp(dir + "/data.csv");
  const std::string states = slurp(dir + "/data.csv.states.csv");
  CHECK(!first.empty());
  CHECK(states.find("t,state") != std::string::npos);

  CHECK(run_cli(args, dir).exit_code == 0);
  CHECK(slurp(dir + "/data.csv") == first);

  CHECK(run_cli("--seed 43 synth --spec " + kSpec + " --length 150 --out other.csv", dir)
            .exit_code == 0);
  CHECK(slurp(dir + "/other.csv") != first);

  // the emitted CSV is ingestible and carries the seed in its preamble
  const TimeSeries back = read_csv(dir + "/data.csv");
  CHECK(back.rows() == 150);
  CHECK(first.find("# seed=42") != std::string::npos);
}

TEST_CASE("train: determinism, variant behavior, fixed graphs") {
  const std::string dir = make_dir("train");
  REQUIRE(run_cli("--seed 1 synth --spec " + kSpec + " --length 220 --out data.csv", dir)
              .exit_code == 0);

  SUBCASE("kde-hmm leaves the move log empty and reruns byte-identically") {
    const std::string args =
        "--seed 7 train --data data.csv --out m.json --states 2 --pstar 1 "
        "--variant kde-hmm --max-iter 4";
    REQUIRE(run_cli(args, dir).exit_code == 0);
    const std::string model1 = slurp(dir + "/m.json");
    const nlohmann::json report =
        nlohmann::json::parse(slurp(dir + "/m.json.report.json"));
    CHECK(report["accepted_moves"].empty());
    CHECK(report["meta"]["seed"] == 7);
    REQUIRE(run_cli(args, dir).exit_code == 0);
    CHECK(slurp(dir + "/m.json") == model1);
  }

  SUBCASE("fixed graph with --sem-rounds 0 is taken as given") {
    ContextGraph g(2, 7);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t m = 0; m < 5; ++m) g.set_ar_order(i, m, 1);
    save_graph(g, dir + "/g.json");
    const std::string args =
        "--seed 7 train --data data.csv --out star.json --states 2 --pstar 1 "
        "--variant kde-as --sem-rounds 0 --graph g.json --max-iter 6";
    REQUIRE(run_cli(args, dir).exit_code == 0);
    const KdeAsHmmModel model = load_model(dir + "/star.json");
    CHECK(model.graph == g);
    const nlohmann::json report =
        nlohmann::json::parse(slurp(dir + "/star.json.report.json"));
    CHECK(report["accepted_moves"].empty());

    // eval: training data scores at least as well as time-shuffled data
    REQUIRE(run_cli("eval --model star.json --data data.csv --out ev_own.json", dir)
                .exit_code == 0);
    TimeSeries data = read_csv(dir + "/data.csv");
    Rng rng(33);
    std::vector<std::size_t> order(data.rows());
    for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
    for (std::size_t t = order.size(); t-- > 1;)
      std::swap(order[t], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(t)))]);
    write_csv(data.reordered(order), dir + "/shuffled.csv");
    REQUIRE(run_cli("eval --model star.json --data shuffled.csv --out ev_shuf.json", dir)
                .exit_code == 0);
    const double own =
        nlohmann::json::parse(slurp(dir + "/ev_own.json"))["loglik_per_datum"];
    const double shuf =
        nlohmann::json::parse(slurp(dir + "/ev_shuf.json"))["loglik_per_datum"];
    CHECK(own >= shuf);
  }

  SUBCASE("unknown variant is a parse error (exit 1)") {
    CHECK(run_cli("train --data data.csv --out x.json --variant bogus", dir).exit_code == 1);
  }
}

TEST_CASE("eval agrees with the library and reports per-datum units") {
  const std::string dir = make_dir("eval");
  REQUIRE(run_cli("--seed 3 synth --spec " + kSpec + " --length 120 --out d.csv", dir)
              .exit_code == 0);
  REQUIRE(run_cli("--seed 5 train --data d.csv --out m1.json --states 1 --pstar 1 "
                  "--variant kde-hmm --max-iter 3",
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("eval --model m1.json --data d.csv --out ev.json", dir).exit_code == 0);
  const nlohmann::json ev = nlohmann::json::parse(slurp(dir + "/ev.json"));

  const KdeAsHmmModel model = load_model(dir + "/m1.json");
  const TimeSeries data = read_csv(dir + "/d.csv");
  // single state: loglik equals the sum of emission log densities
  double expect = 0.0;
  for (std::size_t t = 1; t < data.rows(); ++t)
    expect += emission_log_density(model, 0, t, data, false);
  CHECK(ev["loglik"].get<double>() == doctest::Approx(expect).epsilon(1e-10));
  CHECK(ev["n_scored"] == data.rows() - 1);
  CHECK(ev["loglik_per_datum"].get<double>() ==
        doctest::Approx(expect / static_cast<double>(data.rows() - 1)));

  SUBCASE("malformed csv exits 1") {
    std::ofstream(dir + "/broken.csv") << "a,b\n1,zzz\n";
    CHECK(run_cli("eval --model m1.json --data broken.csv", dir).exit_code == 1);
  }
  SUBCASE("model violating invariants exits 2") {
    nlohmann::json j = nlohmann::json::parse(slurp(dir + "/m1.json"));
    j["transition"][0][0] = 0.5;
    std::ofstream(dir + "/bad.json") << j.dump();
    CHECK(run_cli("eval --model bad.json --data d.csv", dir).exit_code == 2);
  }
}

TEST_CASE("segment matches library viterbi") {
  const std::string dir = make_dir("segment");
  REQUIRE(run_cli("--seed 11 synth --spec " + kSpec + " --length 160 --out d.csv", dir)
              .exit_code == 0);
  REQUIRE(run_cli("--seed 13 train --data d.csv --out m.json --states 2 --pstar 1 "
                  "--variant kde-hmm --max-iter 4",
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("segment --model m.json --data d.csv --out seg.csv", dir).exit_code == 0);

  const KdeAsHmmModel model = load_model(dir + "/m.json");
  const TimeSeries data = read_csv(dir + "/d.csv");
  const auto path = viterbi(model, data);

  std::istringstream in(slurp(dir + "/seg.csv"));
  std::string line;
  std::vector<int> states;
  std::size_t first_t = 999;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line == "t,state") continue;
    const auto comma = line.find(',');
    if (first_t == 999) first_t = static_cast<std::size_t>(std::stoul(line.substr(0, comma)));
    states.push_back(std::stoi(line.substr(comma + 1)));
  }
  CHECK(first_t == 1);  // P* = 1
  REQUIRE(states.size() == path.size());
  CHECK(states == path);
}

TEST_CASE("classify picks the best class, ties lexicographic") {
  const std::string dir = make_dir("classify");
  REQUIRE(run_cli("--seed 21 synth --spec " + kSpec + " --length 140 --out d.csv", dir)
              .exit_code == 0);
  REQUIRE(run_cli("--seed 23 train --data d.csv --out model.json --states 2 --pstar 1 "
                  "--variant kde-hmm --max-iter 3",
                  dir)
              .exit_code == 0);
  fs::create_directories(dir + "/models");
  fs::copy_file(dir + "/model.json", dir + "/models/beta.json");
  fs::copy_file(dir + "/model.json", dir + "/models/alpha.json");

  const CmdResult r = run_cli("classify --models models --data d.csv --out cl.json", dir);
  REQUIRE(r.exit_code == 0);
  const nlohmann::json cl = nlohmann::json::parse(slurp(dir + "/cl.json"));
  CHECK(cl["predicted"] == "alpha");  // identical models, lexicographic tie-break
  CHECK(cl["logliks"]["alpha"] == cl["logliks"]["beta"]);
  CHECK(r.out.find("predicted=alpha") != std::string::npos);

  SUBCASE("single model directory predicts that class") {
    fs::remove(dir + "/models/alpha.json");
    const CmdResult single = run_cli("classify --models models --data d.csv", dir);
    CHECK(single.exit_code == 0);
    CHECK(single.out.find("predicted=beta") != std::string::npos);
  }
}

TEST_CASE("supervised omega initialization via a label column") {
  const std::string dir = make_dir("labels");
  // small labeled series: two shifted regimes
  {
    std::ofstream f(dir + "/labeled.csv");
    f << "x0,x1,phase\n";
    Rng rng(71);
    for (int t = 0; t < 60; ++t) {
      const bool hi = (t / 15) % 2 == 1;
      f << format_double((hi ? 4.0 : 0.0) + 0.3 * rng.normal()) << ","
        << format_double((hi ? -1.0 : 1.0) + 0.3 * rng.normal()) << ","
        << (hi ? "high" : "low") << "\n";
    }
  }
  REQUIRE(run_cli("--seed 5 train --data labeled.csv --out m.json --states 2 --pstar 1 "
                  "--variant kde-hmm --labels phase --max-iter 4",
                  dir)
              .exit_code == 0);
  const nlohmann::json report = nlohmann::json::parse(slurp(dir + "/m.json.report.json"));
  CHECK(report["meta"]["label_map"]["high"] == 0);
  CHECK(report["meta"]["label_map"]["low"] == 1);

  // more labels than states -> invariant error (exit 2)
  std::ofstream(dir + "/three.csv") << "x0,phase\n1,a\n2,b\n3,c\n4,a\n5,b\n";
  CHECK(run_cli("train --data three.csv --out t.json --states 2 --labels phase", dir)
            .exit_code == 2);
}

TEST_CASE("benchmark emits deterministic report files") {
  const std::string dir = make_dir("bench");
  const std::string args = "--seed 9 benchmark --spec " + kSpec +
                           " --train-lengths 100 --n-test 2 --test-length 60 "
                           "--variants gauss,kde-hmm --max-iter 2 --plot-data";
  REQUIRE(run_cli(args, dir).exit_code == 0);
  const std::string report = slurp(dir + "/bench_report.csv");
  CHECK(report.find("variant,train_length,mean_loglik_per_datum,std_loglik_per_datum") !=
        std::string::npos);
  CHECK(report.find("gauss,100,") != std::string::npos);
  CHECK(report.find("kde-hmm,100,") != std::string::npos);
  CHECK(slurp(dir + "/bench_timing.csv").find("train_seconds") != std::string::npos);
  CHECK(!slurp(dir + "/bench_summary.json").empty());
  CHECK(slurp(dir + "/bench_plot_mean.csv").find("train_length,gauss,kde-hmm") !=
        std::string::npos);

  REQUIRE(run_cli(args, dir).exit_code == 0);
  CHECK(slurp(dir + "/bench_report.csv") == report);  // primary output is stable
}
