#pragma once

// Declarative description of a discrete latent factor fitting problem: loss,
// constraint and regularizer atoms, the dataset layout, evaluation of losses and
// their gradients, the relaxed objective and structural validation.
//
// Every loss is an outer convex atom applied to an affine map of the parameter,
// which is what makes each loss convex in theta. Validation checks the atom
// parameters that this argument relies on (Huber delta > 0, Lp order >= 1) and
// the shapes that make the inner map well defined.

#include "dlfm/factors.hpp"
#include "dlfm/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dlfm {

enum class LossKind {
  SquareRegression,  // ||X theta - y||^2
  LpRegression,      // ||X theta - y||_p, p in [1, inf]
  Huber,             // sum_j huber_delta((X theta - y)_j)
  SquaredDistance,   // ||theta - x - y||^2 (k-means style location loss)
  MultinomialLogit,  // -y^T u + log sum exp u, u = X theta, y one-hot
  BinaryLogit,       // log(1 + exp u) - y u, u = x^T theta, y in {0, 1}
};

// How the feature of one sample acts on theta.
enum class FeatureMap {
  InnerProduct,   // x^T theta, x in R^n
  MatrixProduct,  // X theta, X in R^{p x n}
};

struct LossAtom {
  LossKind kind = LossKind::SquareRegression;
  FeatureMap map = FeatureMap::InnerProduct;
  double order = 2.0;  // LpRegression only; kInf or larger means the max-norm
  double delta = 1.0;  // Huber only

  static LossAtom square(FeatureMap map = FeatureMap::InnerProduct);
  static LossAtom lp(double order, FeatureMap map = FeatureMap::InnerProduct);
  static LossAtom huber(double delta, FeatureMap map = FeatureMap::InnerProduct);
  static LossAtom squared_distance();
  static LossAtom multinomial_logit();
  static LossAtom binary_logit();

  // Differentiable everywhere (everything but Lp).
  bool smooth() const { return kind != LossKind::LpRegression; }
};

std::string to_string(LossKind kind);

enum class ConstraintKind {
  Free,
  Nonneg,
  Nonpos,
  Box,
  Polyhedron,
  MonotoneNonincreasing,
  MonotoneNondecreasing,
  NormBall2,
  SumEquals,
};

std::string to_string(ConstraintKind kind);

// One closed convex set; the atoms listed for a factor are intersected.
struct ConstraintAtom {
  ConstraintKind kind = ConstraintKind::Free;
  Vector lo;       // Box
  Vector hi;       // Box
  Matrix A;        // Polyhedron: A theta <= b
  Vector b;        // Polyhedron
  double radius = 1.0;  // NormBall2
  double value = 0.0;   // SumEquals

  static ConstraintAtom free();
  static ConstraintAtom nonneg();
  static ConstraintAtom nonpos();
  static ConstraintAtom box(Vector lo, Vector hi);
  static ConstraintAtom polyhedron(Matrix A, Vector b);
  static ConstraintAtom monotone_nonincreasing();
  static ConstraintAtom monotone_nondecreasing();
  static ConstraintAtom norm_ball2(double radius);
  static ConstraintAtom sum_equals(double value);
};

enum class RegularizerKind {
  L1,       // weight * sum_k ||theta_k||_1           (P-problem)
  GroupL2,  // weight * sum_k ||theta_k||_2           (P-problem)
  KLChain,  // weight * sum_t D_kl(z_t, z_{t+1})      (F-problem)
};

std::string to_string(RegularizerKind kind);

struct RegularizerAtom {
  RegularizerKind kind = RegularizerKind::L1;
  double weight = 0.0;

  static RegularizerAtom l1(double weight) { return {RegularizerKind::L1, weight}; }
  static RegularizerAtom group_l2(double weight) { return {RegularizerKind::GroupL2, weight}; }
  static RegularizerAtom kl_chain(double weight) { return {RegularizerKind::KLChain, weight}; }
};

struct SolverControls {
  double eps = 1e-6;          // BCD termination threshold
  int max_iter = 500;         // BCD iterations per restart
  int restarts = 1;
  std::uint64_t seed = 0;
  double qp_tol = 1e-9;       // ADMM KKT residual tolerance
  int qp_max_iter = 20000;
  double inner_tol = 1e-8;    // relative objective decrease, P-problem first-order path
  int inner_max_iter = 5000;
  double f_tol = 1e-9;        // relative objective decrease, KL mirror descent
  int f_max_iter = 50000;
};

struct ModelSpec {
  int K = 1;
  Index n = 1;
  std::vector<LossAtom> loss_per_factor;
  std::vector<std::vector<ConstraintAtom>> constraints_per_factor;
  std::vector<RegularizerAtom> p_regularizers;
  std::vector<RegularizerAtom> f_regularizers;
  SolverControls controls;

  // Same loss and constraint set for every factor.
  static ModelSpec shared(int K, Index n, LossAtom loss,
                          std::vector<ConstraintAtom> constraints = {});

  // KLChain weight summed over all active (positive-weight) chain regularizers.
  double kl_weight() const;
  // True when any regularizer with positive weight is attached.
  bool regularized() const;
};

// m samples. Sample i has a feature matrix of shape rows x n stored row-major in
// row i of `features` (rows == 1 for vector features), and an observation row of
// width observation_width(loss, rows, n).
struct Dataset {
  RowMatrix features;
  RowMatrix observations;
  Index rows = 1;
  bool ordered = false;

  Index size() const { return features.rows(); }
  Index n() const { return rows > 0 ? features.cols() / rows : 0; }

  Eigen::Map<const RowMatrix> feature(Index i) const {
    return {features.row(i).data(), rows, n()};
  }
  Eigen::Map<const Vector> observation(Index i) const {
    return {observations.row(i).data(), observations.cols()};
  }
};

// Width of one observation row for a loss atom under the given feature shape.
Index observation_width(const LossAtom& atom, Index rows, Index n);

struct Violation {
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

ValidationReport validate(const ModelSpec& spec, const Dataset& data);

// Throws InvalidInput carrying the first violation.
void require_valid(const ModelSpec& spec, const Dataset& data);

double loss_eval(const LossAtom& atom, const Eigen::Ref<const RowMatrix>& feature,
                 const Eigen::Ref<const Vector>& observation, const Eigen::Ref<const Vector>& theta);

// Gradient in theta; at kinks of Lp the minimal-norm subgradient (0 for a zero residual).
Vector loss_grad(const LossAtom& atom, const Eigen::Ref<const RowMatrix>& feature,
                 const Eigen::Ref<const Vector>& observation, const Eigen::Ref<const Vector>& theta);

// Value and gradient in one pass; the gradient is scaled by `weight` and added into grad.
double loss_eval_accumulate(const LossAtom& atom, const Eigen::Ref<const RowMatrix>& feature,
                            const Eigen::Ref<const Vector>& observation,
                            const Eigen::Ref<const Vector>& theta, double weight, Vector& grad);

// r_{ik} = f_k(x_i, y_i; theta_k).
Matrix loss_matrix(const ModelSpec& spec, const Dataset& data, std::span<const Vector> thetas);

// Generalized KL divergence sum_j u_j log(u_j / v_j) - u_j + v_j with 0 log 0 = 0.
double kl_divergence(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v);
// sum_t D_kl(z_t, z_{t+1}) over consecutive rows.
double kl_chain(const Matrix& z);

double p_regularizer_value(const ModelSpec& spec, std::span<const Vector> thetas);
double f_regularizer_value(const ModelSpec& spec, const FactorMatrix& Z);

// sum_i z_i^T r_i + P-regularizers + F-regularizers.
double objective(const ModelSpec& spec, const Dataset& data, std::span<const Vector> thetas,
                 const FactorMatrix& Z);

}  // namespace dlfm
