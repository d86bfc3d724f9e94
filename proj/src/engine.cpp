#include "dlfm/engine.hpp"

#include "dlfm/fsolve.hpp"
#include "dlfm/psolve.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <thread>

namespace dlfm {

std::string to_string(FitStatus status) {
  switch (status) {
    case FitStatus::GapConverged: return "gap_converged";
    case FitStatus::ObjectiveStalled: return "objective_stalled";
    case FitStatus::MaxIter: return "max_iter";
  }
  return "unknown";
}

FactorMatrix init_factors(Index m, int K, std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(1.0);
  Matrix z(m, K);
  for (Index i = 0; i < m; ++i) {
    for (int k = 0; k < K; ++k) z(i, k) = expo(rng);
    z.row(i) /= z.row(i).sum();
  }
  return FactorMatrix(std::move(z));
}

double gap(double after_p, double after_f) { return std::abs(after_p - after_f); }

std::uint64_t restart_seed(std::uint64_t seed, int index) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

using Clock = std::chrono::steady_clock;

FitResult run_once(const ModelSpec& spec, const Dataset& data, int restart) {
  const auto& c = spec.controls;
  const std::uint64_t seed = restart_seed(c.seed, restart);
  std::mt19937_64 rng(seed);
  FactorMatrix Z = init_factors(data.size(), spec.K, rng);

  const double lambda = spec.kl_weight();
  const bool regularized = spec.regularized();
  KlSettings kl;
  kl.tol = c.f_tol;
  kl.max_iter = c.f_max_iter;

  FitResult res;
  res.seed_used = seed;
  PSolveWorkspace ws;
  std::vector<Vector> thetas;
  int consecutive_failures = 0;
  double previous = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= c.max_iter; ++it) {
    const auto t0 = Clock::now();
    try {
      std::optional<std::span<const Vector>> warm;
      if (!thetas.empty()) warm = std::span<const Vector>(thetas);
      auto p = solve_p(spec, data, Z, warm, &ws);
      thetas = std::move(p.thetas);
      consecutive_failures = 0;
    } catch (const SubsolverFailure& e) {
      if (thetas.empty() || ++consecutive_failures >= 2) throw e.with_context(restart, it);
    }
    const double after_p = objective(spec, data, thetas, Z);

    const Matrix R = loss_matrix(spec, data, thetas);
    if (lambda > 0.0) {
      KlResult f = solve_f_kl(R, lambda, Z, kl);
      if (f_objective(R, lambda, f.Z.values()) <= f_objective(R, lambda, Z.values()))
        Z = std::move(f.Z);
    } else {
      Z = solve_f_plain(R);
    }
    const double after_f = objective(spec, data, thetas, Z);
    res.objective_trace.push_back({it, after_p, after_f});
    res.iteration_seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    res.iterations = it;

    if (!regularized) {
      if (gap(after_p, after_f) <= c.eps) {
        res.status = FitStatus::GapConverged;
        break;
      }
    } else if (it > 1 && std::abs(previous - after_f) <= c.eps * std::max(1.0, std::abs(previous))) {
      res.status = FitStatus::ObjectiveStalled;
      break;
    }
    previous = after_f;
  }

  res.thetas = std::move(thetas);
  res.labels = harden(Z);
  res.Z = std::move(Z);
  res.objective = res.objective_trace.back().after_f;
  res.qp_factorizations = ws.qp_factorizations();
  res.qp_reuses = ws.qp_reuses();
  res.workspace_preparations = ws.preparations();
  return res;
}

}  // namespace

FitResult fit(const ModelSpec& spec, const Dataset& data, const FitOptions& options) {
  require_valid(spec, data);
  const int restarts = spec.controls.restarts;
  std::vector<std::optional<FitResult>> results(static_cast<std::size_t>(restarts));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(restarts));

  auto work = [&](int r) {
    try {
      results[static_cast<std::size_t>(r)] = run_once(spec, data, r);
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
    }
  };

  const int jobs = std::clamp(options.jobs, 1, restarts);
  if (jobs == 1) {
    for (int r = 0; r < restarts; ++r) work(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (int r = next++; r < restarts; r = next++) work(r);
      });
    for (auto& t : pool) t.join();
  }

  int best = -1;
  int failed = 0;
  for (int r = 0; r < restarts; ++r) {
    const auto& res = results[static_cast<std::size_t>(r)];
    if (!res) {
      ++failed;
      continue;
    }
    if (best < 0 || res->objective < results[static_cast<std::size_t>(best)]->objective) best = r;
  }
  if (best < 0) {
    // Every run failed: surface the first failure.
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    throw SubsolverFailure(-1, "no restart produced a result");
  }
  FitResult out = std::move(*results[static_cast<std::size_t>(best)]);
  out.restart_index_of_best = best;
  out.failed_restarts = failed;
  return out;
}

}  // namespace dlfm
