#include "dlfm/cli/commands.hpp"
#include "dlfm/cli/config.hpp"
#include "dlfm/cli/csv_io.hpp"
#include "dlfm/cli/record.hpp"
#include "dlfm/experiments.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace dlfm;
using namespace dlfm::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dlfm_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(DLFM_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Overrides quiet() {
  Overrides o;
  o.quiet = true;
  o.jobs = 1;
  return o;
}

json kmeans_config() {
  return json::parse(R"({
    "schema_version": 1, "K": 2, "n": 2,
    "loss": {"kind": "squared_distance"},
    "constraints": [{"kind": "box", "lo": [-1, null], "hi": [1, 1]}],
    "controls": {"restarts": 3, "seed": 5}
  })");
}

}  // namespace

TEST_CASE("configs survive a round trip") {
  const auto cfg = parse_config(kmeans_config());
  CHECK(cfg.spec.K == 2);
  CHECK(cfg.spec.controls.restarts == 3);
  CHECK(is_neg_inf(cfg.spec.constraints_per_factor[0][0].lo[1]));
  const json again = config_to_json(cfg);
  CHECK(config_to_json(parse_config(again)) == again);

  for (auto e : {experiments::Experiment::ConstrainedKmeans, experiments::Experiment::ForgettingQ,
                 experiments::Experiment::IoHmm}) {
    FitConfig fc;
    fc.spec = experiments::default_spec(experiments::ExperimentConfig::defaults(e));
    const json j = config_to_json(fc);
    CHECK(config_to_json(parse_config(j)) == j);
  }
}

TEST_CASE("config errors name the offending key") {
  json j = kmeans_config();
  j["controls"]["restart"] = 3;
  try {
    parse_config(j);
    FAIL("expected rejection");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("restart") != std::string::npos);
  }
  j = kmeans_config();
  j["schema_version"] = 2;
  CHECK_THROWS_AS(parse_config(j), InvalidInput);
}

TEST_CASE("datasets survive a CSV round trip") {
  auto cfg = experiments::ExperimentConfig::defaults(experiments::Experiment::ForgettingQ);
  const auto synth = experiments::gen_forgetting_q(cfg);
  std::stringstream buf;
  write_dataset(buf, synth.data);
  FitConfig fc;
  fc.spec = experiments::default_spec(cfg);
  fc.feature_rows = 3;
  const auto layout = layout_for(fc);
  CHECK(dataset_header(layout).front() == "x0_0");
  const Dataset back = parse_dataset(buf, layout, true);
  CHECK(back.features == synth.data.features);
  CHECK(back.observations == synth.data.observations);
  CHECK(back.rows == 3);

  std::stringstream bad("x0,y\n1,2\n");
  CHECK_THROWS_AS(parse_dataset(bad, CsvLayout{1, 2, 1}, false), InvalidInput);
}

TEST_CASE("doubles print in their shortest exact form") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0}) CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("fit writes a reproducible record") {
  const fs::path dir = scratch("fit");
  std::ostringstream log, err;
  REQUIRE(cmd_synth("constrained_kmeans", 3, (dir / "pts.csv").string(), log, err, true) == kExitOk);
  spit(dir / "cfg.json", kmeans_config().dump());
  const auto a = dir / "a.json";
  const auto b = dir / "b.json";
  CHECK(cmd_fit((dir / "cfg.json").string(), (dir / "pts.csv").string(), a.string(), quiet(), log, err) == kExitOk);
  CHECK(cmd_fit((dir / "cfg.json").string(), (dir / "pts.csv").string(), b.string(), quiet(), log, err) == kExitOk);
  const std::string text = slurp(a);
  const json record = json::parse(text);
  CHECK(serialize(record) == text);
  const json other = json::parse(slurp(b));
  CHECK(record["result"]["labels"] == other["result"]["labels"]);
  CHECK(record["result"]["objective_trace"] == other["result"]["objective_trace"]);
  CHECK(record["dataset"]["fingerprint"] == other["dataset"]["fingerprint"]);
  CHECK(record["tool"]["version"] == kToolVersion);
  CHECK(record["dataset"]["samples"] == 500);

  // Flags win over the config.
  Overrides flags = quiet();
  flags.seed = 99;
  flags.restarts = 1;
  CHECK(cmd_fit((dir / "cfg.json").string(), (dir / "pts.csv").string(), a.string(), flags, log, err) == kExitOk);
  const json flagged = json::parse(slurp(a));
  CHECK(flagged["spec"]["controls"]["seed"] == 99);
  CHECK(flagged["spec"]["controls"]["restarts"] == 1);
}

TEST_CASE("fit rejects bad input with exit code 2") {
  const fs::path dir = scratch("bad");
  std::ostringstream log, err;
  REQUIRE(cmd_synth("mixture_linreg", 1, (dir / "d.csv").string(), log, err, true) == kExitOk);
  json cfg = json::parse(slurp(dir / "d.config.json"));
  cfg["losses"][1] = {{"kind", "huber"}, {"delta", -1.0}};
  spit(dir / "huber.json", cfg.dump());
  std::ostringstream msg;
  CHECK(cmd_fit((dir / "huber.json").string(), (dir / "d.csv").string(), (dir / "o.json").string(), quiet(), log,
                msg) == kExitInput);
  CHECK(msg.str().find("delta") != std::string::npos);
  CHECK(cmd_fit((dir / "d.config.json").string(), (dir / "missing.csv").string(), (dir / "o.json").string(),
                quiet(), log, err) == kExitInput);
  CHECK(!fs::exists(dir / "o.json"));
}

TEST_CASE("fit reports solver failures with exit code 3") {
  const fs::path dir = scratch("solver");
  spit(dir / "pts.csv", "x0,x1,y0,y1\n5,5,0,0\n6,5,0,0\n5,6,0,0\n");
  json cfg = kmeans_config();
  cfg["K"] = 1;
  cfg["constraints"] = json::array({json{{"kind", "polyhedron"},
                                          {"A", {{0.8, 0.6}, {-0.7, 0.9}, {-1.0, -0.5}, {1.0, -1.0}, {0.3, 0.9}}},
                                          {"b", {1.0, 0.8, 0.6, 0.7, 0.8}}}});
  cfg["controls"]["qp_max_iter"] = 1;
  spit(dir / "cfg.json", cfg.dump());
  std::ostringstream log, err;
  CHECK(cmd_fit((dir / "cfg.json").string(), (dir / "pts.csv").string(), (dir / "o.json").string(), quiet(), log,
                err) == kExitSolver);
}

TEST_CASE("synth writes the reference datasets") {
  const fs::path dir = scratch("synth");
  std::ostringstream log, err;
  REQUIRE(cmd_synth("mixture_linreg", 7, (dir / "a" / "m.csv").string(), log, err, true) == kExitOk);
  REQUIRE(cmd_synth("mixture_linreg", 7, (dir / "b" / "m.csv").string(), log, err, true) == kExitOk);
  const auto rows = lines(slurp(dir / "a" / "m.csv"));
  CHECK(rows.size() == 501);
  CHECK(std::count(rows[0].begin(), rows[0].end(), ',') == 10);
  for (const char* f : {"m.csv", "m.truth.csv", "m.thetas.csv", "m.config.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  CHECK(lines(slurp(dir / "a" / "m.truth.csv")).front() == "label");
  CHECK(cmd_synth("nope", 7, (dir / "x.csv").string(), log, err, true) == kExitInput);
}

TEST_CASE("repro of constrained k-means keeps centers feasible") {
  const fs::path dir = scratch("kmeans");
  std::ostringstream log, err;
  REQUIRE(cmd_repro("constrained_kmeans", dir.string(), quiet(), log, err) == kExitOk);
  const json m = json::parse(slurp(dir / "metrics.json"));
  CHECK(m["constrained_max_violation"].get<double>() <= 1e-6);
  CHECK(m["constrained"]["thetas"].size() == 4);
  const auto cfg = experiments::ExperimentConfig::defaults(experiments::Experiment::ConstrainedKmeans);
  for (const auto& th : m["constrained"]["thetas"]) {
    const Vector t = Eigen::Vector2d(th[0].get<double>(), th[1].get<double>());
    CHECK((cfg.polyhedron_A * t - cfg.polyhedron_b).maxCoeff() <= 1e-6);
  }
  for (const char* f : {"points.csv", "centers.csv", "trace.csv", "repro_config.json"}) CHECK(fs::exists(dir / f));
  CHECK(lines(slurp(dir / "trace.csv")).front() == "run,iteration,after_p,after_f");
}

TEST_CASE("repro of forgetting Q compares both chain weights") {
  const fs::path dir = scratch("forgetting");
  std::ostringstream log, err;
  REQUIRE(cmd_repro("forgetting_q", dir.string(), quiet(), log, err) == kExitOk);
  const json m = json::parse(slurp(dir / "metrics.json"));
  REQUIRE(m["runs"].size() == 2);
  CHECK(m["runs"][0]["lambda"] == 0.0);
  CHECK(m["runs"][1]["lambda"] == 1.0);
  CHECK(m["runs"][1]["accuracy"].get<double>() > m["runs"][0]["accuracy"].get<double>());
  CHECK(lines(slurp(dir / "labels.csv")).size() == 1 + 2 * 200);
}

TEST_CASE("repro of the io-hmm reports a stochastic transition matrix") {
  const fs::path dir = scratch("iohmm");
  Overrides flags = quiet();
  flags.restarts = 2;
  std::ostringstream log, err;
  REQUIRE(cmd_repro("io_hmm", dir.string(), flags, log, err) == kExitOk);
  const json m = json::parse(slurp(dir / "metrics.json"));
  for (const auto& s : m["transition_row_sums"]) CHECK(s.get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m["transition_estimated"].size() == 3);
  CHECK(fs::exists(dir / "decision_curve.csv"));
  CHECK(serialize(m) == slurp(dir / "metrics.json"));
}

TEST_CASE("the binary maps outcomes to exit codes") {
  const fs::path dir = scratch("binary");
  const std::string data = (dir / "d.csv").string();
  CHECK(run_binary("synth mixture_linreg --seed 7 --out " + data) == 0);
  CHECK(run_binary("synth no_such --out " + data) == 2);
  CHECK(run_binary("fit --config " + (dir / "d.config.json").string() + " --data " + data + " --out " +
                   (dir / "r.json").string() + " --restarts 1 --quiet") == 0);
  CHECK(fs::exists(dir / "r.json"));
  CHECK(run_binary("fit --config " + (dir / "nope.json").string() + " --data " + data + " --out " +
                   (dir / "r.json").string()) == 2);
  CHECK(run_binary("fit --bogus") == 2);
  CHECK(run_binary("--help") == 0);
}
