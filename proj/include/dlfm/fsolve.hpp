#pragma once

// Factor (F) problem: with the per-sample loss matrix R fixed,
//
//   minimize  sum_i z_i^T r_i + lambda sum_t D_kl(z_t, z_{t+1})
//   subject to z_i in the probability simplex.

#include "dlfm/factors.hpp"
#include "dlfm/types.hpp"

#include <vector>

namespace dlfm {

// Row-wise argmin vertex; ties go to the smallest index. Exact for lambda = 0.
FactorMatrix solve_f_plain(const Matrix& R);

struct KlSettings {
  double tol = 1e-9;
  int max_iter = 50000;
  double floor = 1e-12;
  bool record_trace = false;
};

struct KlResult {
  FactorMatrix Z;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective per accepted step, when requested
};

// Entropic mirror descent with backtracking. Iterates stay strictly positive.
KlResult solve_f_kl(const Matrix& R, double lambda, const FactorMatrix& Z_init,
                    const KlSettings& settings = {});

// sum_i z_i^T r_i + lambda sum_t D_kl(z_t, z_{t+1}).
double f_objective(const Matrix& R, double lambda, const Matrix& Z);

// Row argmax, ties to the smallest index; 1-based.
Labels harden(const FactorMatrix& Z);

}  // namespace dlfm
