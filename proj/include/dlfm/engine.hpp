#pragma once

// Block coordinate descent over the relaxed problem: factor init, then
// alternating P- and F-solves until the termination rule fires, repeated over
// independent restarts.

#include "dlfm/factors.hpp"
#include "dlfm/model.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dlfm {

enum class FitStatus { GapConverged, ObjectiveStalled, MaxIter };

std::string to_string(FitStatus status);

struct TraceEntry {
  int iteration = 0;
  double after_p = 0.0;
  double after_f = 0.0;
};

struct FitResult {
  std::vector<Vector> thetas;
  FactorMatrix Z;
  Labels labels;
  std::vector<TraceEntry> objective_trace;
  FitStatus status = FitStatus::MaxIter;
  int iterations = 0;
  int restart_index_of_best = 0;
  std::uint64_t seed_used = 0;
  double objective = 0.0;

  // Diagnostics of the best run.
  std::vector<double> iteration_seconds;
  int qp_factorizations = 0;
  int qp_reuses = 0;
  int workspace_preparations = 0;
  int failed_restarts = 0;
};

struct FitOptions {
  int jobs = 1;  // restarts run on up to this many threads
};

// Rows drawn from a symmetric Dirichlet(1).
FactorMatrix init_factors(Index m, int K, std::mt19937_64& rng);

// |after_p - after_f|.
double gap(double after_p, double after_f);

// Seed of the RNG stream used by restart `index`.
std::uint64_t restart_seed(std::uint64_t seed, int index);

// Validates once, then runs spec.controls.restarts BCD runs and returns the one
// with the smallest final objective (ties to the smallest restart index). Throws
// InvalidInput on a failed validation and SubsolverFailure if every run failed.
FitResult fit(const ModelSpec& spec, const Dataset& data, const FitOptions& options = {});

}  // namespace dlfm
