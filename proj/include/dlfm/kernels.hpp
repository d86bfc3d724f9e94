#pragma once

// Convex building blocks: a dense ADMM solver for
//
//   minimize  1/2 x^T P x + q^T x   subject to  lo <= A x <= hi,
//
// Euclidean projections onto constraint-atom intersections, and proximal
// operators of the P-side regularizers.

#include "dlfm/model.hpp"
#include "dlfm/types.hpp"

#include <optional>
#include <span>

namespace dlfm {

struct QpProblem {
  Matrix P;   // n x n, symmetric positive semidefinite
  Vector q;   // n
  Matrix A;   // rows x n
  Vector lo;  // rows, entries may be -kInf
  Vector hi;  // rows, entries may be +kInf
};

enum class QpStatus { Solved, MaxIter, PrimalInfeasible };

std::string to_string(QpStatus status);

struct QpSolution {
  Vector x;
  Vector z;  // A x estimate, clipped to [lo, hi]
  Vector y;  // multipliers: > 0 at an active upper bound, < 0 at an active lower bound
  QpStatus status = QpStatus::MaxIter;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  bool polished = false;
};

struct QpSettings {
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;       // over-relaxation
  int check_interval = 10;  // residuals, rho adaptation and polishing cadence
  bool polish = true;
  double infeasibility_tol = 1e-7;
};

// Caches the KKT factorization between solves that share P, A and the penalty.
// One workspace per concurrent caller.
class QpWorkspace {
 public:
  // Returns the factorization of P + sigma I + A^T diag(rho) A, refactoring only
  // when an input differs from the cached one.
  const Eigen::LLT<Matrix>& factor(const Matrix& P, const Matrix& A, const Vector& rho,
                                   double sigma);

  int factorizations() const { return factorizations_; }
  int reuses() const { return reuses_; }

  // Penalty scale the last adaptive solve ended with; 0 before any adaptation.
  double rho_scale() const { return rho_scale_; }
  void set_rho_scale(double s) { rho_scale_ = s; }

 private:
  Matrix P_, A_;
  Vector rho_;
  double sigma_ = -1.0;
  Eigen::LLT<Matrix> llt_;
  bool valid_ = false;
  int factorizations_ = 0;
  int reuses_ = 0;
  double rho_scale_ = 0.0;
};

QpSolution qp_solve(const QpProblem& prob, const std::optional<QpSolution>& warm_start,
                    double tol, const QpSettings& settings = {}, QpWorkspace* workspace = nullptr);

struct KktResiduals {
  double stationarity = 0.0;     // ||P x + q + A^T y||_inf
  double primal = 0.0;           // distance of A x from [lo, hi], inf-norm
  double complementarity = 0.0;  // max_i y_i^+ |hi_i - a_i x| + y_i^- |a_i x - lo_i|
  double dual_sign = 0.0;        // wrong-sign multiplier mass on unbounded sides
};

KktResiduals kkt_residuals(const QpProblem& prob, const Vector& x, const Vector& y);

// Linear description lo <= A x <= hi of a set of atoms, or nullopt when an atom is
// not polyhedral (NormBall2).
struct LinearConstraints {
  Matrix A;
  Vector lo;
  Vector hi;
};

std::optional<LinearConstraints> as_linear(std::span<const ConstraintAtom> atoms, Index n);

// Largest amount by which x violates any atom (0 when feasible).
double constraint_violation(std::span<const ConstraintAtom> atoms, const Vector& x);

// Euclidean projection onto the intersection of the atoms. Throws SubsolverFailure
// when the underlying QP reports infeasibility or fails to converge.
Vector project(std::span<const ConstraintAtom> atoms, const Vector& point);

// Closed forms used by project.
Vector project_simplex(const Vector& v, double total = 1.0);
Vector isotonic_nondecreasing(const Vector& v);
Vector isotonic_nonincreasing(const Vector& v);

// prox_{step * reg}(point): soft threshold for L1, block shrinkage for GroupL2.
Vector prox(const RegularizerAtom& reg, const Vector& point, double step);

// argmin_x 1/2 ||x - v||^2 + step * sum(regs)(x) subject to x in atoms.
Vector prox_constrained(std::span<const RegularizerAtom> regs,
                        std::span<const ConstraintAtom> atoms, const Vector& v, double step);

// True when the intersection of the atoms is a convex cone (closed under
// nonnegative scaling).
bool is_cone(std::span<const ConstraintAtom> atoms);

}  // namespace dlfm
