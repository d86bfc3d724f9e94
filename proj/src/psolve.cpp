#include "dlfm/psolve.hpp"

#include <algorithm>
#include <cmath>

namespace dlfm {

PSolveWorkspace::Factor& PSolveWorkspace::factor(int k) {
  if (factors_.size() <= static_cast<std::size_t>(k)) factors_.resize(static_cast<std::size_t>(k) + 1);
  return factors_[static_cast<std::size_t>(k)];
}

int PSolveWorkspace::qp_factorizations() const {
  int s = 0;
  for (const auto& f : factors_) s += f.qp.factorizations();
  return s;
}

int PSolveWorkspace::qp_reuses() const {
  int s = 0;
  for (const auto& f : factors_) s += f.qp.reuses();
  return s;
}

namespace {

std::vector<RegularizerAtom> active_regs(const ModelSpec& spec) {
  std::vector<RegularizerAtom> out;
  for (const auto& r : spec.p_regularizers)
    if (r.weight > 0.0 && r.kind != RegularizerKind::KLChain) out.push_back(r);
  return out;
}

double reg_value(std::span<const RegularizerAtom> regs, const Vector& theta) {
  double v = 0.0;
  for (const auto& r : regs) {
    if (r.kind == RegularizerKind::L1) v += r.weight * theta.lpNorm<1>();
    if (r.kind == RegularizerKind::GroupL2) v += r.weight * theta.norm();
  }
  return v;
}

bool has_constraints(std::span<const ConstraintAtom> atoms) {
  return std::any_of(atoms.begin(), atoms.end(),
                     [](const auto& a) { return a.kind != ConstraintKind::Free; });
}

// Weighted smooth part sum_i w_i f(x_i, y_i; theta) for one factor.
class WeightedLoss {
 public:
  WeightedLoss(const LossAtom& atom, const Dataset& data, const Eigen::Ref<const Vector>& w)
      : atom_(atom), data_(data) {
    for (Index i = 0; i < w.size(); ++i)
      if (w[i] > 0.0) {
        idx_.push_back(i);
        w_.push_back(w[i]);
      }
  }

  double value(const Vector& theta) const {
    double v = 0.0;
    for (std::size_t j = 0; j < idx_.size(); ++j)
      v += w_[j] * loss_eval(atom_, data_.feature(idx_[j]), data_.observation(idx_[j]), theta);
    return v;
  }

  double value_grad(const Vector& theta, Vector& grad) const {
    grad.setZero(theta.size());
    double v = 0.0;
    for (std::size_t j = 0; j < idx_.size(); ++j)
      v += w_[j] * loss_eval_accumulate(atom_, data_.feature(idx_[j]), data_.observation(idx_[j]),
                                        theta, w_[j], grad);
    return v;
  }

  // Normal-equation data G = sum w X^T X, h = sum w X^T y (location loss: G = W I,
  // h = sum w (x + y)).
  void normal_equations(Index n, Matrix& G, Vector& h) const {
    G.setZero(n, n);
    h.setZero(n);
    for (std::size_t j = 0; j < idx_.size(); ++j) {
      const auto X = data_.feature(idx_[j]);
      const auto y = data_.observation(idx_[j]);
      if (atom_.kind == LossKind::SquaredDistance) {
        G.diagonal().array() += w_[j];
        h.noalias() += w_[j] * (X.row(0).transpose() + y);
      } else {
        G.noalias() += w_[j] * (X.transpose() * X);
        h.noalias() += w_[j] * (X.transpose() * y);
      }
    }
  }

  // Upper bound on the Lipschitz constant of the gradient.
  double lipschitz(Index n) const {
    double curvature = 2.0;
    if (atom_.kind == LossKind::BinaryLogit) curvature = 0.25;
    if (atom_.kind == LossKind::MultinomialLogit) curvature = 0.5;
    Matrix M = Matrix::Zero(n, n);
    for (std::size_t j = 0; j < idx_.size(); ++j) {
      const auto X = data_.feature(idx_[j]);
      if (atom_.kind == LossKind::SquaredDistance)
        M.diagonal().array() += w_[j];
      else
        M.noalias() += w_[j] * (X.transpose() * X);
    }
    // Power iteration on the PSD curvature matrix.
    Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    double lambda = 0.0;
    for (int it = 0; it < 100; ++it) {
      const Vector mv = M * v;
      const double nv = mv.norm();
      if (nv == 0.0) break;
      const double next = v.dot(mv);
      v = mv / nv;
      if (std::abs(next - lambda) <= 1e-10 * std::abs(next)) {
        lambda = next;
        break;
      }
      lambda = next;
    }
    // Power iteration approaches from below; pad it.
    return curvature * lambda * 1.05;
  }

  bool empty() const { return idx_.empty(); }
  double total_weight() const {
    double W = 0.0;
    for (double w : w_) W += w;
    return W;
  }

 private:
  const LossAtom& atom_;
  const Dataset& data_;
  std::vector<Index> idx_;
  std::vector<double> w_;
};

struct FactorSolve {
  Vector theta;
  int iterations = 0;
  PFactorStatus status = PFactorStatus::Converged;
};

FactorSolve solve_normal_equations(const WeightedLoss& loss, Index n) {
  Matrix G;
  Vector h;
  loss.normal_equations(n, G, h);
  FactorSolve out;
  Eigen::LDLT<Matrix> ldlt(G);
  const double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
  const double dmin = ldlt.vectorD().minCoeff();
  if (ldlt.info() == Eigen::Success && dmin > 1e-12 * std::max(dmax, 1e-300)) {
    out.theta = ldlt.solve(h);
  } else {
    out.theta = G.completeOrthogonalDecomposition().solve(h);
  }
  out.iterations = 1;
  return out;
}

FactorSolve solve_qp(const WeightedLoss& loss, Index n, PSolveWorkspace::Factor& ws,
                     const SolverControls& controls, int k) {
  Matrix G;
  Vector h;
  loss.normal_equations(n, G, h);
  // Scale by the total weight so the QP data stay O(1) regardless of cluster size.
  const double W = loss.total_weight();
  QpProblem prob{2.0 * G / W, -2.0 * h / W, ws.linear->A, ws.linear->lo, ws.linear->hi};
  QpSettings settings;
  settings.max_iter = controls.qp_max_iter;
  auto sol = qp_solve(prob, ws.last, controls.qp_tol, settings, &ws.qp);
  if (sol.status != QpStatus::Solved)
    throw SubsolverFailure(k, "QP ended with status " + to_string(sol.status));
  FactorSolve out;
  out.theta = sol.x;
  out.iterations = sol.iterations;
  ws.last = std::move(sol);
  return out;
}

// Accelerated proximal gradient with monotone restarts and backtracking.
FactorSolve solve_prox_gradient(const WeightedLoss& loss, std::span<const RegularizerAtom> regs,
                                std::span<const ConstraintAtom> atoms, const Vector& start,
                                const SolverControls& controls) {
  const Index n = start.size();
  double L = loss.lipschitz(n);
  if (!(L > 0.0)) L = 1.0;
  double step = 1.0 / L;

  FactorSolve out;
  Vector x = start;
  double Fx = loss.value(x) + reg_value(regs, x);
  Vector yv = x;
  double t = 1.0;
  int quiet_steps = 0;
  Vector grad(n);
  out.status = PFactorStatus::IterationCap;
  bool momentum = false;
  int it = 0;
  for (it = 1; it <= controls.inner_max_iter; ++it) {
    const double fy = loss.value_grad(yv, grad);
    Vector xn;
    double fn = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      xn = prox_constrained(regs, atoms, yv - step * grad, step);
      fn = loss.value(xn);
      const Vector d = xn - yv;
      if (fn <= fy + grad.dot(d) + d.squaredNorm() / (2.0 * step) + 1e-12 * std::abs(fy)) break;
      step *= 0.5;
    }
    const double Fn = fn + reg_value(regs, xn);
    if (Fn > Fx) {
      if (!momentum) {
        out.status = PFactorStatus::Converged;
        break;
      }
      yv = x;
      t = 1.0;
      momentum = false;
      continue;
    }
    const double decrease = Fx - Fn;
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    yv = xn + ((t - 1.0) / tn) * (xn - x);
    momentum = true;
    t = tn;
    x = std::move(xn);
    Fx = Fn;
    quiet_steps = decrease <= controls.inner_tol * std::max(1.0, std::abs(Fx)) ? quiet_steps + 1 : 0;
    if (quiet_steps >= 3) {
      out.status = PFactorStatus::Converged;
      break;
    }
  }
  out.theta = x;
  out.iterations = std::min(it, controls.inner_max_iter);
  return out;
}

// Projected (proximal) subgradient with a diminishing step; returns the best iterate.
FactorSolve solve_subgradient(const WeightedLoss& loss, std::span<const RegularizerAtom> regs,
                              std::span<const ConstraintAtom> atoms, const Vector& start,
                              const SolverControls& controls) {
  const Index n = start.size();
  FactorSolve out;
  Vector x = start;
  Vector best = x;
  double Fbest = loss.value(x) + reg_value(regs, x);
  Vector g(n);
  loss.value_grad(x, g);
  const double g0 = g.norm();
  if (g0 == 0.0) {
    out.theta = x;
    return out;
  }
  const double scale = std::max(1.0, x.norm()) / g0;
  int since_best = 0;
  out.status = PFactorStatus::IterationCap;
  int it = 0;
  for (it = 1; it <= controls.inner_max_iter; ++it) {
    loss.value_grad(x, g);
    const double a = scale / std::sqrt(static_cast<double>(it));
    x = prox_constrained(regs, atoms, x - a * g, a);
    const double F = loss.value(x) + reg_value(regs, x);
    if (F < Fbest - controls.inner_tol * std::max(1.0, std::abs(Fbest))) {
      Fbest = F;
      best = x;
      since_best = 0;
    } else if (++since_best >= 500) {
      out.status = PFactorStatus::Converged;
      break;
    }
  }
  out.theta = best;
  out.iterations = std::min(it, controls.inner_max_iter);
  return out;
}

}  // namespace

PMethod p_method(const ModelSpec& spec, int k) {
  const auto& loss = spec.loss_per_factor[static_cast<std::size_t>(k)];
  const auto& atoms = spec.constraints_per_factor[static_cast<std::size_t>(k)];
  const bool regs = !active_regs(spec).empty();
  if (!regs && (loss.kind == LossKind::SquareRegression || loss.kind == LossKind::SquaredDistance)) {
    if (!has_constraints(atoms)) return PMethod::NormalEquations;
    if (as_linear(atoms, spec.n)) return PMethod::Qp;
  }
  return loss.smooth() ? PMethod::ProximalGradient : PMethod::Subgradient;
}

double p_factor_objective(const ModelSpec& spec, const Dataset& data, const FactorMatrix& Z, int k,
                          const Vector& theta) {
  const WeightedLoss loss(spec.loss_per_factor[static_cast<std::size_t>(k)], data,
                          Z.values().col(k));
  return loss.value(theta) + reg_value(active_regs(spec), theta);
}

double p_objective(const ModelSpec& spec, const Dataset& data, const FactorMatrix& Z,
                   std::span<const Vector> thetas) {
  double v = 0.0;
  for (int k = 0; k < spec.K; ++k) v += p_factor_objective(spec, data, Z, k, thetas[static_cast<std::size_t>(k)]);
  return v;
}

PSolveOutcome solve_p(const ModelSpec& spec, const Dataset& data, const FactorMatrix& Z,
                      std::optional<std::span<const Vector>> warm, PSolveWorkspace* workspace) {
  if (Z.rows() != data.size() || Z.cols() != spec.K)
    throw InvalidInput("Z", "factor matrix shape does not match the dataset and K");
  if (warm && warm->size() != static_cast<std::size_t>(spec.K))
    throw InvalidInput("warm", "expected one warm-start vector per factor");

  PSolveWorkspace local;
  PSolveWorkspace& ws = workspace ? *workspace : local;
  const auto regs = active_regs(spec);
  const Index n = spec.n;

  PSolveOutcome out;
  out.thetas.resize(static_cast<std::size_t>(spec.K));
  out.inner_iterations.assign(static_cast<std::size_t>(spec.K), 0);
  out.status.assign(static_cast<std::size_t>(spec.K), PFactorStatus::Converged);
  out.method.assign(static_cast<std::size_t>(spec.K), PMethod::ProximalGradient);

  for (int k = 0; k < spec.K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto& atoms = spec.constraints_per_factor[ku];
    const auto& atom = spec.loss_per_factor[ku];
    auto& fws = ws.factor(k);
    if (!fws.prepared) {
      fws.linear = as_linear(atoms, n);
      fws.prepared = true;
      ws.count_preparation();
    }
    const WeightedLoss loss(atom, data, Z.values().col(k));
    const PMethod method = p_method(spec, k);
    out.method[ku] = method;

    std::optional<Vector> warm_k;
    if (warm) {
      const Vector& w = (*warm)[ku];
      if (w.size() != n) throw InvalidInput("warm", "warm-start vector has the wrong length");
      warm_k = w;
    }

    FactorSolve solved;
    if (loss.empty()) {
      if (regs.empty()) {
        solved.theta = warm_k ? *warm_k : project(atoms, Vector::Zero(n));
        solved.status = PFactorStatus::Untouched;
      } else {
        // No data: the regularizer minimizer over C_k.
        Vector x = project(atoms, Vector::Zero(n));
        for (int it = 0; it < 50; ++it) x = prox_constrained(regs, atoms, x, 1e6);
        solved.theta = x;
      }
    } else {
      Vector start = warm_k ? *warm_k : Vector::Zero(n);
      if (constraint_violation(atoms, start) > 0.0) start = project(atoms, start);
      switch (method) {
        case PMethod::NormalEquations: solved = solve_normal_equations(loss, n); break;
        case PMethod::Qp: solved = solve_qp(loss, n, fws, spec.controls, k); break;
        case PMethod::ProximalGradient:
          solved = solve_prox_gradient(loss, regs, atoms, start, spec.controls);
          break;
        case PMethod::Subgradient:
          solved = solve_subgradient(loss, regs, atoms, start, spec.controls);
          break;
      }
      if (!solved.theta.allFinite()) throw SubsolverFailure(k, "non-finite parameter estimate");
    }

    // Never return something worse than a feasible warm start.
    if (warm_k && constraint_violation(atoms, *warm_k) <= 1e-9) {
      const double f_new = loss.value(solved.theta) + reg_value(regs, solved.theta);
      const double f_old = loss.value(*warm_k) + reg_value(regs, *warm_k);
      if (f_new > f_old) solved.theta = *warm_k;
    }
    out.thetas[ku] = std::move(solved.theta);
    out.inner_iterations[ku] = solved.iterations;
    out.status[ku] = solved.status;
    out.objective += loss.value(out.thetas[ku]) + reg_value(regs, out.thetas[ku]);
  }
  return out;
}

}  // namespace dlfm
