#pragma once

// Parameter (P) problem: with factor weights Z fixed,
//
//   minimize  sum_i sum_k Z_ik f_k(x_i, y_i; theta_k) + P-regularizers
//   subject to theta_k in C_k.
//
// All supported regularizers are separable over factors, so the problem splits
// into K independent solves.

#include "dlfm/kernels.hpp"
#include "dlfm/model.hpp"

#include <optional>
#include <span>
#include <vector>

namespace dlfm {

enum class PFactorStatus {
  Converged,     // tolerance met
  IterationCap,  // inner cap reached; the best iterate is returned
  Untouched,     // zero weight and no regularizer: warm start kept
};

enum class PMethod { NormalEquations, Qp, ProximalGradient, Subgradient };

struct PSolveOutcome {
  std::vector<Vector> thetas;
  double objective = 0.0;  // P-part of the objective at exit
  std::vector<int> inner_iterations;
  std::vector<PFactorStatus> status;
  std::vector<PMethod> method;
};

// State carried across BCD iterations: assembled constraint rows, the cached QP
// factorization and the previous QP iterate of every factor.
class PSolveWorkspace {
 public:
  struct Factor {
    bool prepared = false;
    std::optional<LinearConstraints> linear;
    QpWorkspace qp;
    std::optional<QpSolution> last;
  };

  Factor& factor(int k);
  int qp_factorizations() const;
  int qp_reuses() const;
  int preparations() const { return preparations_; }
  void count_preparation() { ++preparations_; }

 private:
  std::vector<Factor> factors_;
  int preparations_ = 0;
};

// Dispatch rule for factor k.
PMethod p_method(const ModelSpec& spec, int k);

// P-part of the objective for a single factor.
double p_factor_objective(const ModelSpec& spec, const Dataset& data, const FactorMatrix& Z,
                          int k, const Vector& theta);

// sum over factors of p_factor_objective.
double p_objective(const ModelSpec& spec, const Dataset& data, const FactorMatrix& Z,
                   std::span<const Vector> thetas);

PSolveOutcome solve_p(const ModelSpec& spec, const Dataset& data, const FactorMatrix& Z,
                      std::optional<std::span<const Vector>> warm = std::nullopt,
                      PSolveWorkspace* workspace = nullptr);

}  // namespace dlfm
