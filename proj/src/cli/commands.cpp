#include "dlfm/cli/commands.hpp"

#include "dlfm/cli/config.hpp"
#include "dlfm/cli/csv_io.hpp"
#include "dlfm/cli/record.hpp"
#include "dlfm/engine.hpp"
#include "dlfm/experiments.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

namespace dlfm::cli {

namespace fs = std::filesystem;
using nlohmann::json;
namespace ex = dlfm::experiments;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

FitOptions fit_options(const Overrides& flags) {
  FitOptions o;
  o.jobs = flags.jobs > 0 ? flags.jobs : std::max(1u, std::thread::hardware_concurrency());
  return o;
}

void apply(const Overrides& flags, SolverControls& c) {
  if (flags.seed) c.seed = *flags.seed;
  if (flags.restarts) c.restarts = *flags.restarts;
  if (flags.eps) c.eps = *flags.eps;
  if (flags.max_iter) c.max_iter = *flags.max_iter;
}

void apply(const Overrides& flags, ex::ExperimentConfig& c) {
  if (flags.seed) c.seed = *flags.seed;
  if (flags.restarts) c.restarts = *flags.restarts;
  if (flags.eps) c.eps = *flags.eps;
  if (flags.max_iter) c.max_iter = *flags.max_iter;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InvalidInput("out", "cannot write " + p.string());
  return out;
}

void write_text(const fs::path& p, const std::string& s) {
  auto out = open_out(p);
  out << s;
  if (!out) throw InvalidInput("out", "failed writing " + p.string());
}

fs::path sidecar(const fs::path& data_path, const std::string& suffix) {
  return data_path.parent_path() / (data_path.stem().string() + suffix);
}

// Runs a command body and maps exceptions onto exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const SubsolverFailure& e) {
    err << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  } catch (const InstanceTooLarge& e) {
    err << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  }
}

json vec_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Matrix& m) {
  json a = json::array();
  for (Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

json fit_summary(const FitResult& r) {
  const auto& last = r.objective_trace.back();
  return {{"objective", r.objective},
          {"status", to_string(r.status)},
          {"iterations", r.iterations},
          {"final_gap", gap(last.after_p, last.after_f)},
          {"restart_index_of_best", r.restart_index_of_best},
          {"seed_used", r.seed_used},
          {"thetas", [&] {
             json t = json::array();
             for (const auto& th : r.thetas) t.push_back(vec_json(th));
             return t;
           }()}};
}

json experiment_config_json(const ex::ExperimentConfig& c) {
  json j;
  j["name"] = ex::to_string(c.name);
  j["m"] = c.m;
  j["n"] = c.n;
  j["K"] = c.K;
  j["seed"] = c.seed;
  j["restarts"] = c.restarts;
  j["max_iter"] = c.max_iter;
  j["eps"] = c.eps;
  j["noise_sigma"] = c.noise_sigma;
  json thetas = json::array();
  for (const auto& t : c.true_thetas) thetas.push_back(vec_json(t));
  j["true_thetas"] = thetas;
  switch (c.name) {
    case ex::Experiment::ConstrainedKmeans:
      j["l1_radius"] = c.l1_radius;
      j["polyhedron_A"] = mat_json(c.polyhedron_A);
      j["polyhedron_b"] = vec_json(c.polyhedron_b);
      break;
    case ex::Experiment::MixtureLinreg:
      j["feature_lo"] = c.feature_lo;
      j["feature_hi"] = c.feature_hi;
      j["category_probs"] = vec_json(c.category_probs);
      break;
    case ex::Experiment::ForgettingQ:
      j["actions"] = c.actions;
      j["reward_probs"] = vec_json(c.reward_probs);
      j["switch_period"] = c.switch_period;
      j["lambdas"] = c.lambdas;
      break;
    case ex::Experiment::IoHmm:
      j["feature_lo"] = c.feature_lo;
      j["feature_hi"] = c.feature_hi;
      j["transition"] = mat_json(c.transition);
      j["p_init"] = vec_json(c.p_init);
      j["lambda_theta"] = c.lambda_theta;
      j["lambda_z"] = c.lambda_z;
      break;
  }
  j["acceptance_seeds"] = ex::kAcceptanceSeeds;
  return j;
}

void write_trace(std::ostream& out, const std::string& run, const FitResult& r, bool header) {
  if (header) out << "run,iteration,after_p,after_f\n";
  for (const auto& t : r.objective_trace)
    out << run << ',' << t.iteration << ',' << format_double(t.after_p) << ',' << format_double(t.after_f) << '\n';
}

void write_label_trace(std::ostream& out, const std::string& run, const Labels& truth,
                       const Labels& pred, const std::vector<int>& perm, bool header) {
  if (header) out << "run,t,truth,predicted,aligned\n";
  for (std::size_t i = 0; i < pred.size(); ++i)
    out << run << ',' << i + 1 << ',' << truth[i] << ',' << pred[i] << ','
        << perm[static_cast<std::size_t>(pred[i] - 1)] + 1 << '\n';
}

void write_theta_profiles(std::ostream& out, const std::string& run, const std::vector<Vector>& recovered,
                          const std::vector<Vector>& truth, const std::vector<int>& perm, bool header) {
  if (header) out << "run,factor,index,recovered,truth\n";
  for (std::size_t k = 0; k < recovered.size(); ++k) {
    const Vector& t = truth[static_cast<std::size_t>(perm[k])];
    for (Index j = 0; j < recovered[k].size(); ++j)
      out << run << ',' << perm[k] + 1 << ',' << j + 1 << ',' << format_double(recovered[k][j]) << ','
          << format_double(t[j]) << '\n';
  }
}

double sigmoid(double u) { return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); }

json repro_kmeans(const ex::ExperimentConfig& cfg, const FitOptions& opts, const fs::path& dir) {
  const auto r = ex::repro_constrained_kmeans(cfg, opts);
  {
    auto out = open_out(dir / "points.csv");
    out << "x0,x1,face,constrained_label,unconstrained_label\n";
    for (Index i = 0; i < r.synth.data.size(); ++i)
      out << format_double(r.synth.data.features(i, 0)) << ',' << format_double(r.synth.data.features(i, 1)) << ','
          << r.synth.truth[static_cast<std::size_t>(i)] << ',' << r.constrained.labels[static_cast<std::size_t>(i)]
          << ',' << r.unconstrained.labels[static_cast<std::size_t>(i)] << '\n';
  }
  {
    auto out = open_out(dir / "centers.csv");
    out << "model,factor,c0,c1\n";
    for (std::size_t k = 0; k < r.constrained.thetas.size(); ++k)
      out << "constrained," << k + 1 << ',' << format_double(r.constrained.thetas[k][0]) << ','
          << format_double(r.constrained.thetas[k][1]) << '\n';
    for (std::size_t k = 0; k < r.unconstrained.thetas.size(); ++k)
      out << "unconstrained," << k + 1 << ',' << format_double(r.unconstrained.thetas[k][0]) << ','
          << format_double(r.unconstrained.thetas[k][1]) << '\n';
  }
  {
    auto out = open_out(dir / "trace.csv");
    write_trace(out, "constrained", r.constrained, true);
    write_trace(out, "unconstrained", r.unconstrained, false);
  }
  json m;
  m["constrained"] = fit_summary(r.constrained);
  m["unconstrained"] = fit_summary(r.unconstrained);
  m["constrained_max_violation"] = r.constrained_violation;
  m["unconstrained_max_violation"] = r.unconstrained_violation;
  return m;
}

json repro_mixture(const ex::ExperimentConfig& cfg, const FitOptions& opts, const fs::path& dir) {
  const auto r = ex::repro_mixture_linreg(cfg, opts);
  {
    auto out = open_out(dir / "labels.csv");
    write_label_trace(out, "fit", r.synth.truth, r.fit.labels, r.alignment.permutation, true);
  }
  {
    auto out = open_out(dir / "thetas.csv");
    write_theta_profiles(out, "fit", r.fit.thetas, r.synth.true_thetas, r.alignment.permutation, true);
  }
  {
    auto out = open_out(dir / "trace.csv");
    write_trace(out, "fit", r.fit, true);
  }
  json m;
  m["fit"] = fit_summary(r.fit);
  m["accuracy"] = r.alignment.accuracy;
  m["permutation"] = r.alignment.permutation;
  m["rmse"] = r.rmse;
  return m;
}

json repro_forgetting(const ex::ExperimentConfig& cfg, const FitOptions& opts, const fs::path& dir) {
  const auto r = ex::repro_forgetting_q(cfg, opts);
  auto labels = open_out(dir / "labels.csv");
  auto thetas = open_out(dir / "thetas.csv");
  auto trace = open_out(dir / "trace.csv");
  json runs = json::array();
  bool first = true;
  for (const auto& run : r.runs) {
    const std::string name = "lambda=" + format_double(run.lambda);
    write_label_trace(labels, name, r.synth.truth, run.fit.labels, run.alignment.permutation, first);
    write_theta_profiles(thetas, name, run.fit.thetas, r.synth.true_thetas, run.alignment.permutation, first);
    write_trace(trace, name, run.fit, first);
    first = false;
    json j = fit_summary(run.fit);
    j["lambda"] = run.lambda;
    j["accuracy"] = run.alignment.accuracy;
    j["permutation"] = run.alignment.permutation;
    j["rmse"] = run.rmse;
    runs.push_back(j);
  }
  return {{"runs", runs}};
}

json repro_io_hmm(const ex::ExperimentConfig& cfg, const FitOptions& opts, const fs::path& dir) {
  const auto r = ex::repro_io_hmm(cfg, opts);
  {
    auto out = open_out(dir / "labels.csv");
    write_label_trace(out, "fit", r.synth.truth, r.fit.labels, r.alignment.permutation, true);
  }
  {
    auto out = open_out(dir / "trace.csv");
    write_trace(out, "fit", r.fit, true);
  }
  {
    // P(y = 1) against the first feature under every recovered and true parameter.
    auto out = open_out(dir / "decision_curve.csv");
    out << "factor,x,p_recovered,p_true\n";
    const int points = 101;
    for (std::size_t k = 0; k < r.fit.thetas.size(); ++k) {
      const int truth_k = r.alignment.permutation[k];
      const Vector& th = r.fit.thetas[k];
      const Vector& tt = cfg.true_thetas[static_cast<std::size_t>(truth_k)];
      for (int i = 0; i < points; ++i) {
        const double x = cfg.feature_lo + (cfg.feature_hi - cfg.feature_lo) * i / (points - 1);
        out << truth_k + 1 << ',' << format_double(x) << ',' << format_double(sigmoid(th[0] * x + th[1])) << ','
            << format_double(sigmoid(tt[0] * x + tt[1])) << '\n';
      }
    }
  }
  json rows = json::array();
  for (Index a = 0; a < r.estimated.rows(); ++a) rows.push_back(r.estimated.row(a).sum());
  json m;
  m["fit"] = fit_summary(r.fit);
  m["accuracy"] = r.alignment.accuracy;
  m["permutation"] = r.alignment.permutation;
  m["transition_estimated"] = mat_json(r.estimated);
  m["transition_true"] = mat_json(cfg.transition);
  m["transition_row_sums"] = rows;
  m["transition_max_deviation"] = r.max_deviation;
  return m;
}

}  // namespace

int cmd_fit(const std::string& config_path, const std::string& data_path, const std::string& out_path,
            const Overrides& flags, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto t0 = Clock::now();
    FitConfig cfg = load_config(config_path);
    apply(flags, cfg.spec.controls);
    const Dataset data = read_dataset(data_path, layout_for(cfg), cfg.ordered);
    const auto report = validate(cfg.spec, data);
    if (!report.ok()) {
      err << "error: " << report.summary() << '\n';
      return static_cast<int>(kExitInput);
    }
    PhaseTimes times;
    times.load_seconds = seconds_since(t0);
    const auto t1 = Clock::now();
    const FitResult result = fit(cfg.spec, data, fit_options(flags));
    times.fit_seconds = seconds_since(t1);
    write_text(out_path, serialize(run_record(cfg, data, result, times)));
    if (!flags.quiet)
      log << "objective " << format_double(result.objective) << ", " << to_string(result.status) << " after "
          << result.iterations << " iterations (restart " << result.restart_index_of_best << ")\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_synth(const std::string& experiment, std::uint64_t seed, const std::string& out_path, std::ostream& log,
              std::ostream& err, bool quiet) {
  return guarded(err, [&] {
    const auto which = ex::parse_experiment(experiment);
    if (!which) throw InvalidInput("experiment", "unknown experiment \"" + experiment + "\"");
    auto cfg = ex::ExperimentConfig::defaults(*which);
    cfg.seed = seed;
    const auto synth = ex::generate(cfg);
    const fs::path path(out_path);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    {
      auto out = open_out(path);
      write_dataset(out, synth.data);
    }
    {
      auto out = open_out(sidecar(path, ".truth.csv"));
      write_labels(out, synth.truth);
    }
    if (!synth.true_thetas.empty()) {
      auto out = open_out(sidecar(path, ".thetas.csv"));
      write_thetas(out, synth.true_thetas);
    }
    FitConfig fc;
    fc.spec = ex::default_spec(cfg);
    fc.feature_rows = synth.data.rows;
    fc.ordered = synth.data.ordered;
    write_text(sidecar(path, ".config.json"), serialize(config_to_json(fc)));
    if (!quiet) log << "wrote " << synth.data.size() << " samples to " << path.string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_repro(const std::string& experiment, const std::string& out_dir, const Overrides& flags, std::ostream& log,
              std::ostream& err) {
  return guarded(err, [&] {
    const auto which = ex::parse_experiment(experiment);
    if (!which) throw InvalidInput("experiment", "unknown experiment \"" + experiment + "\"");
    auto cfg = ex::ExperimentConfig::defaults(*which);
    cfg.seed = ex::kAcceptanceSeeds.front();
    apply(flags, cfg);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const FitOptions opts = fit_options(flags);
    const auto t0 = Clock::now();
    json metrics;
    switch (*which) {
      case ex::Experiment::ConstrainedKmeans: metrics = repro_kmeans(cfg, opts, dir); break;
      case ex::Experiment::MixtureLinreg: metrics = repro_mixture(cfg, opts, dir); break;
      case ex::Experiment::ForgettingQ: metrics = repro_forgetting(cfg, opts, dir); break;
      case ex::Experiment::IoHmm: metrics = repro_io_hmm(cfg, opts, dir); break;
    }
    metrics["experiment"] = experiment;
    metrics["seed"] = cfg.seed;
    metrics["tool_version"] = kToolVersion;
    metrics["wall_seconds"] = seconds_since(t0);
    write_text(dir / "metrics.json", serialize(metrics));
    write_text(dir / "repro_config.json", serialize(experiment_config_json(cfg)));
    if (!flags.quiet) log << "wrote " << experiment << " results to " << dir.string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

}  // namespace dlfm::cli
