#pragma once

// Ground truth for small instances, kept independent of the solver paths it
// checks: exhaustive assignment enumeration, central differences and active-set
// enumeration for tiny QPs.

#include "dlfm/factors.hpp"
#include "dlfm/kernels.hpp"
#include "dlfm/model.hpp"

#include <functional>
#include <vector>

namespace dlfm {

struct OracleResult {
  double optimum = 0.0;
  Labels best_assignment;
  std::vector<Vector> thetas_at_optimum;
};

// Global optimum of the unrelaxed problem by enumerating all K^m hard
// assignments. Square-regression and squared-distance losses only, no
// regularizers, K^m <= 1e6 (InstanceTooLarge otherwise). Empty factors are
// allowed and contribute zero.
OracleResult brute_force_fit(const ModelSpec& spec, const Dataset& data);

Vector fd_gradient(const std::function<double(const Vector&)>& fun, const Vector& point,
                   double step);

// Exact optimum of a strictly convex QP with n <= 6 and at most 8 constraint rows.
Vector qp_active_set_oracle(const QpProblem& prob);

}  // namespace dlfm
