#include "dlfm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dlfm {

namespace {

bool box_like(ConstraintKind k) {
  return k == ConstraintKind::Nonneg || k == ConstraintKind::Nonpos || k == ConstraintKind::Box;
}

std::vector<ConstraintAtom> drop_free(std::span<const ConstraintAtom> atoms) {
  std::vector<ConstraintAtom> out;
  for (const auto& a : atoms)
    if (a.kind != ConstraintKind::Free) out.push_back(a);
  return out;
}

// Intersection of box-like atoms as a single [lo, hi].
std::pair<Vector, Vector> merged_box(std::span<const ConstraintAtom> atoms, Index n) {
  Vector lo = Vector::Constant(n, -kInf);
  Vector hi = Vector::Constant(n, kInf);
  for (const auto& a : atoms) {
    switch (a.kind) {
      case ConstraintKind::Nonneg: lo = lo.cwiseMax(0.0); break;
      case ConstraintKind::Nonpos: hi = hi.cwiseMin(0.0); break;
      case ConstraintKind::Box:
        lo = lo.cwiseMax(a.lo);
        hi = hi.cwiseMin(a.hi);
        break;
      default: break;
    }
  }
  return {lo, hi};
}

Vector soft_threshold(const Vector& v, double t) {
  return v.unaryExpr([t](double x) { return x > t ? x - t : (x < -t ? x + t : 0.0); });
}

Vector block_shrink(const Vector& v, double t) {
  const double nv = v.norm();
  if (nv <= t) return Vector::Zero(v.size());
  return v * ((nv - t) / nv);
}

// prox of step * (l1 * ||.||_1 + l2 * ||.||_2): soft threshold, then block shrink.
Vector prox_sum(double l1, double l2, const Vector& v, double step) {
  Vector x = l1 > 0.0 ? soft_threshold(v, step * l1) : v;
  return l2 > 0.0 ? block_shrink(x, step * l2) : x;
}

Vector project_linear(const LinearConstraints& lin, const Vector& v) {
  const Index n = v.size();
  QpProblem prob{Matrix::Identity(n, n), -v, lin.A, lin.lo, lin.hi};
  QpSettings settings;
  settings.max_iter = 50000;
  const auto sol = qp_solve(prob, std::nullopt, 1e-11, settings);
  if (sol.status != QpStatus::Solved)
    throw SubsolverFailure(-1, "projection QP ended with status " + to_string(sol.status));
  return sol.x;
}

Vector project_ball(const Vector& v, double radius) {
  const double nv = v.norm();
  return nv <= radius ? v : Vector(v * (radius / nv));
}

}  // namespace

std::optional<LinearConstraints> as_linear(std::span<const ConstraintAtom> atoms, Index n) {
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> lo, hi;
  auto add = [&](Eigen::RowVectorXd r, double l, double h) {
    rows.push_back(std::move(r));
    lo.push_back(l);
    hi.push_back(h);
  };
  for (const auto& a : atoms) {
    switch (a.kind) {
      case ConstraintKind::Free: break;
      case ConstraintKind::Nonneg:
      case ConstraintKind::Nonpos:
      case ConstraintKind::Box: {
        const ConstraintAtom single[] = {a};
        auto [l, h] = merged_box(single, n);
        for (Index j = 0; j < n; ++j) {
          if (is_neg_inf(l[j]) && is_pos_inf(h[j])) continue;
          add(Eigen::RowVectorXd::Unit(n, j), l[j], h[j]);
        }
        break;
      }
      case ConstraintKind::Polyhedron:
        for (Index i = 0; i < a.A.rows(); ++i) add(a.A.row(i), -kInf, a.b[i]);
        break;
      case ConstraintKind::MonotoneNonincreasing:
        for (Index j = 0; j + 1 < n; ++j) {
          Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
          r[j + 1] = 1.0;
          r[j] = -1.0;
          add(r, -kInf, 0.0);
        }
        break;
      case ConstraintKind::MonotoneNondecreasing:
        for (Index j = 0; j + 1 < n; ++j) {
          Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
          r[j] = 1.0;
          r[j + 1] = -1.0;
          add(r, -kInf, 0.0);
        }
        break;
      case ConstraintKind::SumEquals:
        add(Eigen::RowVectorXd::Ones(n), a.value, a.value);
        break;
      case ConstraintKind::NormBall2:
        return std::nullopt;
    }
  }
  LinearConstraints lin;
  lin.A.resize(static_cast<Index>(rows.size()), n);
  lin.lo.resize(static_cast<Index>(rows.size()));
  lin.hi.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    lin.A.row(static_cast<Index>(i)) = rows[i];
    lin.lo[static_cast<Index>(i)] = lo[i];
    lin.hi[static_cast<Index>(i)] = hi[i];
  }
  return lin;
}

double constraint_violation(std::span<const ConstraintAtom> atoms, const Vector& x) {
  double v = 0.0;
  const Index n = x.size();
  for (const auto& a : atoms) {
    switch (a.kind) {
      case ConstraintKind::Free: break;
      case ConstraintKind::Nonneg:
        if (n) v = std::max(v, -x.minCoeff());
        break;
      case ConstraintKind::Nonpos:
        if (n) v = std::max(v, x.maxCoeff());
        break;
      case ConstraintKind::Box:
        for (Index j = 0; j < n; ++j) {
          if (!is_neg_inf(a.lo[j])) v = std::max(v, a.lo[j] - x[j]);
          if (!is_pos_inf(a.hi[j])) v = std::max(v, x[j] - a.hi[j]);
        }
        break;
      case ConstraintKind::Polyhedron:
        if (a.A.rows()) v = std::max(v, (a.A * x - a.b).maxCoeff());
        break;
      case ConstraintKind::MonotoneNonincreasing:
        for (Index j = 0; j + 1 < n; ++j) v = std::max(v, x[j + 1] - x[j]);
        break;
      case ConstraintKind::MonotoneNondecreasing:
        for (Index j = 0; j + 1 < n; ++j) v = std::max(v, x[j] - x[j + 1]);
        break;
      case ConstraintKind::NormBall2:
        v = std::max(v, x.norm() - a.radius);
        break;
      case ConstraintKind::SumEquals:
        v = std::max(v, std::abs(x.sum() - a.value));
        break;
    }
  }
  return std::max(v, 0.0);
}

Vector project_simplex(const Vector& v, double total) {
  const Index n = v.size();
  if (total < 0.0) throw SubsolverFailure(-1, "simplex with negative total is empty");
  if (n == 0) return v;
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double t = (cumsum - total) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) tau = t;
  }
  return (v.array() - tau).cwiseMax(0.0).matrix();
}

Vector isotonic_nondecreasing(const Vector& v) {
  // Pool adjacent violators over a stack of (mean, count) blocks.
  std::vector<double> mean;
  std::vector<Index> count;
  mean.reserve(static_cast<std::size_t>(v.size()));
  count.reserve(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) {
    mean.push_back(v[i]);
    count.push_back(1);
    while (mean.size() > 1 && mean[mean.size() - 2] > mean.back()) {
      const double m2 = mean.back();
      const Index c2 = count.back();
      mean.pop_back();
      count.pop_back();
      const double c1 = static_cast<double>(count.back());
      mean.back() = (mean.back() * c1 + m2 * static_cast<double>(c2)) / (c1 + static_cast<double>(c2));
      count.back() += c2;
    }
  }
  Vector out(v.size());
  Index pos = 0;
  for (std::size_t b = 0; b < mean.size(); ++b)
    for (Index j = 0; j < count[b]; ++j) out[pos++] = mean[b];
  return out;
}

Vector isotonic_nonincreasing(const Vector& v) { return -isotonic_nondecreasing(-v); }

Vector project(std::span<const ConstraintAtom> all_atoms, const Vector& point) {
  const auto atoms = drop_free(all_atoms);
  const Index n = point.size();
  if (atoms.empty()) return point;

  if (std::all_of(atoms.begin(), atoms.end(), [](const auto& a) { return box_like(a.kind); })) {
    auto [lo, hi] = merged_box(atoms, n);
    if ((lo.array() > hi.array()).any()) throw SubsolverFailure(-1, "box intersection is empty");
    return point.cwiseMax(lo).cwiseMin(hi);
  }

  if (atoms.size() == 1) {
    const auto& a = atoms.front();
    switch (a.kind) {
      case ConstraintKind::NormBall2: return project_ball(point, a.radius);
      case ConstraintKind::SumEquals:
        return (point.array() + (a.value - point.sum()) / static_cast<double>(n)).matrix();
      case ConstraintKind::MonotoneNondecreasing: return isotonic_nondecreasing(point);
      case ConstraintKind::MonotoneNonincreasing: return isotonic_nonincreasing(point);
      default: break;
    }
  }

  // One monotone atom with sign atoms: isotonic fit, then clip (exact for constant bounds).
  {
    const ConstraintAtom* mono = nullptr;
    int monotone = 0;
    bool signs_only = true;
    double lo = -kInf;
    double hi = kInf;
    for (const auto& a : atoms) {
      if (a.kind == ConstraintKind::MonotoneNondecreasing ||
          a.kind == ConstraintKind::MonotoneNonincreasing) {
        mono = &a;
        ++monotone;
      } else if (a.kind == ConstraintKind::Nonneg) {
        lo = 0.0;
      } else if (a.kind == ConstraintKind::Nonpos) {
        hi = 0.0;
      } else {
        signs_only = false;
      }
    }
    if (monotone == 1 && signs_only && lo <= hi) {
      const Vector fitted = mono->kind == ConstraintKind::MonotoneNondecreasing
                                ? isotonic_nondecreasing(point)
                                : isotonic_nonincreasing(point);
      return fitted.cwiseMax(lo).cwiseMin(hi);
    }
  }

  // Scaled simplex {x >= 0, 1^T x = s}.
  if (atoms.size() == 2) {
    const ConstraintAtom* sum = nullptr;
    bool nonneg = false;
    for (const auto& a : atoms) {
      if (a.kind == ConstraintKind::SumEquals) sum = &a;
      if (a.kind == ConstraintKind::Nonneg) nonneg = true;
    }
    if (sum && nonneg) return project_simplex(point, sum->value);
  }

  std::vector<ConstraintAtom> balls;
  std::vector<ConstraintAtom> linear_atoms;
  for (const auto& a : atoms)
    (a.kind == ConstraintKind::NormBall2 ? balls : linear_atoms).push_back(a);

  if (balls.empty()) return project_linear(*as_linear(linear_atoms, n), point);

  // Dykstra's alternating projections over the balls and the polyhedral remainder.
  std::vector<std::vector<ConstraintAtom>> parts;
  for (const auto& b : balls) parts.push_back({b});
  if (!linear_atoms.empty()) parts.push_back(linear_atoms);
  std::vector<Vector> corrections(parts.size(), Vector::Zero(n));
  Vector x = point;
  for (int it = 0; it < 20000; ++it) {
    const Vector before = x;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const Vector shifted = x + corrections[p];
      x = project(parts[p], shifted);
      corrections[p] = shifted - x;
    }
    if ((x - before).cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, x.cwiseAbs().maxCoeff()) &&
        constraint_violation(atoms, x) <= 1e-10)
      return x;
  }
  if (constraint_violation(atoms, x) > 1e-6)
    throw SubsolverFailure(-1, "alternating projections did not reach a feasible point");
  return x;
}

Vector prox(const RegularizerAtom& reg, const Vector& point, double step) {
  switch (reg.kind) {
    case RegularizerKind::L1: return soft_threshold(point, step * reg.weight);
    case RegularizerKind::GroupL2: return block_shrink(point, step * reg.weight);
    case RegularizerKind::KLChain: break;
  }
  throw InvalidInput("regularizer", "kl_chain has no parameter-space prox");
}

bool is_cone(std::span<const ConstraintAtom> atoms) {
  for (const auto& a : atoms) {
    switch (a.kind) {
      case ConstraintKind::Free:
      case ConstraintKind::Nonneg:
      case ConstraintKind::Nonpos:
      case ConstraintKind::MonotoneNonincreasing:
      case ConstraintKind::MonotoneNondecreasing:
        break;
      case ConstraintKind::Box:
        for (Index j = 0; j < a.lo.size(); ++j) {
          if (!(is_neg_inf(a.lo[j]) || a.lo[j] == 0.0)) return false;
          if (!(is_pos_inf(a.hi[j]) || a.hi[j] == 0.0)) return false;
        }
        break;
      case ConstraintKind::Polyhedron:
        if (!a.b.isZero(0.0)) return false;
        break;
      case ConstraintKind::SumEquals:
        if (a.value != 0.0) return false;
        break;
      case ConstraintKind::NormBall2:
        return false;
    }
  }
  return true;
}

Vector prox_constrained(std::span<const RegularizerAtom> regs, std::span<const ConstraintAtom> all_atoms,
                        const Vector& v, double step) {
  double l1 = 0.0;
  double l2 = 0.0;
  for (const auto& r : regs) {
    if (r.kind == RegularizerKind::L1) l1 += r.weight;
    if (r.kind == RegularizerKind::GroupL2) l2 += r.weight;
  }
  const auto atoms = drop_free(all_atoms);
  if (l1 <= 0.0 && l2 <= 0.0) return project(atoms, v);
  if (atoms.empty()) return prox_sum(l1, l2, v, step);

  const bool boxes =
      std::all_of(atoms.begin(), atoms.end(), [](const auto& a) { return box_like(a.kind); });
  // Separable: the 1-D constrained minimizer is the clipped unconstrained one.
  if (boxes && l2 <= 0.0) return project(atoms, soft_threshold(v, step * l1));
  // Over a closed convex cone the norm prox commutes with the projection.
  if (l1 <= 0.0 && is_cone(atoms)) return block_shrink(project(atoms, v), step * l2);

  // General case: split x in C from w = x carrying the regularizer.
  const double rho = 1.0;
  Vector x = project(atoms, v);
  Vector w = x;
  Vector u = Vector::Zero(v.size());
  for (int it = 0; it < 20000; ++it) {
    x = project(atoms, (v + rho * (w - u)) / (1.0 + rho));
    const Vector w_prev = w;
    w = prox_sum(l1, l2, x + u, step / rho);
    u += x - w;
    const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
    if ((x - w).cwiseAbs().maxCoeff() <= 1e-13 * scale &&
        (w - w_prev).cwiseAbs().maxCoeff() <= 1e-13 * scale)
      break;
  }
  return x;
}

}  // namespace dlfm
