#include "dlfm/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace dlfm {

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Solved: return "solved";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::PrimalInfeasible: return "primal_infeasible";
  }
  return "unknown";
}

const Eigen::LLT<Matrix>& QpWorkspace::factor(const Matrix& P, const Matrix& A, const Vector& rho,
                                              double sigma) {
  const bool same = valid_ && sigma == sigma_ && P.rows() == P_.rows() && A.rows() == A_.rows() &&
                    A.cols() == A_.cols() && P == P_ && A == A_ && rho == rho_;
  if (same) {
    ++reuses_;
    return llt_;
  }
  P_ = P;
  A_ = A;
  rho_ = rho;
  sigma_ = sigma;
  Matrix M = P;
  M.diagonal().array() += sigma;
  if (A.rows() > 0) M.noalias() += A.transpose() * rho.asDiagonal() * A;
  llt_.compute(M);
  valid_ = llt_.info() == Eigen::Success;
  ++factorizations_;
  return llt_;
}

KktResiduals kkt_residuals(const QpProblem& prob, const Vector& x, const Vector& y) {
  KktResiduals r;
  Vector g = prob.P * x + prob.q;
  if (prob.A.rows() > 0) g.noalias() += prob.A.transpose() * y;
  r.stationarity = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  if (prob.A.rows() == 0) return r;
  const Vector ax = prob.A * x;
  for (Index i = 0; i < ax.size(); ++i) {
    const double lo = prob.lo[i];
    const double hi = prob.hi[i];
    r.primal = std::max({r.primal, lo - ax[i], ax[i] - hi});
    if (y[i] > 0.0) {
      if (is_pos_inf(hi))
        r.dual_sign = std::max(r.dual_sign, y[i]);
      else
        r.complementarity = std::max(r.complementarity, y[i] * std::abs(hi - ax[i]));
    } else if (y[i] < 0.0) {
      if (is_neg_inf(lo))
        r.dual_sign = std::max(r.dual_sign, -y[i]);
      else
        r.complementarity = std::max(r.complementarity, -y[i] * std::abs(ax[i] - lo));
    }
  }
  return r;
}

namespace {

constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kEqualityScale = 1e3;

Vector clip(const Vector& v, const Vector& lo, const Vector& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

Vector penalty(const QpProblem& prob, double rho) {
  Vector r(prob.A.rows());
  for (Index i = 0; i < r.size(); ++i) {
    const bool lo_inf = is_neg_inf(prob.lo[i]);
    const bool hi_inf = is_pos_inf(prob.hi[i]);
    if (lo_inf && hi_inf)
      r[i] = kRhoMin;
    else if (prob.lo[i] == prob.hi[i])
      r[i] = kEqualityScale * rho;
    else
      r[i] = rho;
  }
  return r;
}

struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
};

Residuals residuals(const QpProblem& prob, const Vector& x, const Vector& z, const Vector& y) {
  Residuals r;
  Vector g = prob.P * x + prob.q;
  if (prob.A.rows() > 0) {
    g.noalias() += prob.A.transpose() * y;
    r.primal = (prob.A * x - z).cwiseAbs().maxCoeff();
  }
  r.dual = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  return r;
}

bool certifies_infeasibility(const QpProblem& prob, const Vector& dy, double tol) {
  const double scale = dy.size() ? dy.cwiseAbs().maxCoeff() : 0.0;
  if (!(scale > 1e-30)) return false;
  const Vector d = dy / scale;
  if ((prob.A.transpose() * d).cwiseAbs().maxCoeff() > tol) return false;
  double support = 0.0;
  for (Index i = 0; i < d.size(); ++i) {
    if (d[i] > tol) {
      if (is_pos_inf(prob.hi[i])) return false;
      support += prob.hi[i] * d[i];
    } else if (d[i] < -tol) {
      if (is_neg_inf(prob.lo[i])) return false;
      support += prob.lo[i] * d[i];
    }
  }
  return support < -tol;
}

// Solves the equality-constrained QP on the guessed active set and accepts the
// result only if it satisfies every KKT condition to `tol`.
std::optional<QpSolution> polish(const QpProblem& prob, const Vector& z, const Vector& y,
                                 double tol) {
  const Index n = prob.P.rows();
  std::vector<Index> rows;
  std::vector<double> bound;
  std::vector<int> side;  // +1 upper, -1 lower, 0 equality
  for (Index i = 0; i < prob.A.rows(); ++i) {
    const double lo = prob.lo[i];
    const double hi = prob.hi[i];
    if (lo == hi) {
      rows.push_back(i);
      bound.push_back(lo);
      side.push_back(0);
    } else if (!is_neg_inf(lo) && z[i] - lo < -y[i]) {
      rows.push_back(i);
      bound.push_back(lo);
      side.push_back(-1);
    } else if (!is_pos_inf(hi) && hi - z[i] < y[i]) {
      rows.push_back(i);
      bound.push_back(hi);
      side.push_back(1);
    }
  }
  const Index a = static_cast<Index>(rows.size());
  Matrix K = Matrix::Zero(n + a, n + a);
  Vector rhs(n + a);
  K.topLeftCorner(n, n) = prob.P;
  rhs.head(n) = -prob.q;
  for (Index j = 0; j < a; ++j) {
    K.block(n + j, 0, 1, n) = prob.A.row(rows[static_cast<std::size_t>(j)]);
    K.block(0, n + j, n, 1) = prob.A.row(rows[static_cast<std::size_t>(j)]).transpose();
    rhs[n + j] = bound[static_cast<std::size_t>(j)];
  }
  // Regularized factorization plus iterative refinement against the exact system.
  constexpr double delta = 1e-9;
  Matrix Kreg = K;
  Kreg.topLeftCorner(n, n).diagonal().array() += delta;
  if (a > 0) Kreg.bottomRightCorner(a, a).diagonal().array() -= delta;
  Eigen::PartialPivLU<Matrix> lu(Kreg);
  Vector sol = lu.solve(rhs);
  for (int it = 0; it < 10; ++it) {
    const Vector res = rhs - K * sol;
    if (res.cwiseAbs().maxCoeff() < 1e-15) break;
    sol += lu.solve(res);
  }
  if (!sol.allFinite()) return std::nullopt;

  QpSolution out;
  out.x = sol.head(n);
  out.y = Vector::Zero(prob.A.rows());
  for (Index j = 0; j < a; ++j) {
    const double mult = sol[n + j];
    const int s = side[static_cast<std::size_t>(j)];
    if (s > 0 && mult < -tol) return std::nullopt;
    if (s < 0 && mult > tol) return std::nullopt;
    double v = mult;
    if (s > 0) v = std::max(v, 0.0);
    if (s < 0) v = std::min(v, 0.0);
    out.y[rows[static_cast<std::size_t>(j)]] = v;
  }
  const Vector ax = prob.A * out.x;
  out.z = clip(ax, prob.lo, prob.hi);
  const auto r = residuals(prob, out.x, out.z, out.y);
  out.primal_residual = r.primal;
  out.dual_residual = r.dual;
  if (r.primal > tol || r.dual > tol) return std::nullopt;
  out.status = QpStatus::Solved;
  out.polished = true;
  return out;
}

}  // namespace

QpSolution qp_solve(const QpProblem& prob, const std::optional<QpSolution>& warm_start, double tol,
                    const QpSettings& settings, QpWorkspace* workspace) {
  const Index n = prob.P.rows();
  const Index rows = prob.A.rows();
  if (prob.P.cols() != n || prob.q.size() != n || (rows > 0 && prob.A.cols() != n) ||
      prob.lo.size() != rows || prob.hi.size() != rows)
    throw InvalidInput("qp", "inconsistent QP dimensions");
  if ((prob.lo.array() > prob.hi.array()).any()) {
    QpSolution s;
    s.x = Vector::Zero(n);
    s.z = Vector::Zero(rows);
    s.y = Vector::Zero(rows);
    s.status = QpStatus::PrimalInfeasible;
    return s;
  }

  QpWorkspace local;
  QpWorkspace& ws = workspace ? *workspace : local;

  Vector x = Vector::Zero(n);
  Vector z = Vector::Zero(rows);
  Vector y = Vector::Zero(rows);
  if (warm_start && warm_start->x.size() == n && warm_start->z.size() == rows &&
      warm_start->y.size() == rows) {
    x = warm_start->x;
    z = warm_start->z;
    y = warm_start->y;
  } else if (rows > 0) {
    z = clip(prob.A * x, prob.lo, prob.hi);
  }

  // A warm solve resumes at the penalty the previous solve settled on.
  double rho_scale = warm_start && ws.rho_scale() > 0.0 ? ws.rho_scale() : settings.rho;
  Vector rho = penalty(prob, rho_scale);
  const Eigen::LLT<Matrix>* llt = &ws.factor(prob.P, prob.A, rho, settings.sigma);
  const double alpha = settings.alpha;

  QpSolution out;
  Residuals r;
  int it = 0;
  for (it = 1; it <= settings.max_iter; ++it) {
    Vector rhs = settings.sigma * x - prob.q;
    if (rows > 0) rhs.noalias() += prob.A.transpose() * (rho.cwiseProduct(z) - y);
    const Vector xt = llt->solve(rhs);
    const Vector x_next = alpha * xt + (1.0 - alpha) * x;
    Vector dy;
    if (rows > 0) {
      const Vector zt = prob.A * xt;
      const Vector zr = alpha * zt + (1.0 - alpha) * z;
      const Vector z_next = clip(zr + y.cwiseQuotient(rho), prob.lo, prob.hi);
      dy = rho.cwiseProduct(zr - z_next);
      y += dy;
      z = z_next;
    }
    x = x_next;

    if (it % settings.check_interval != 0 && it != settings.max_iter) continue;
    r = residuals(prob, x, z, y);
    if (r.primal <= tol && r.dual <= tol) {
      out.status = QpStatus::Solved;
      break;
    }
    if (rows > 0 && certifies_infeasibility(prob, dy, settings.infeasibility_tol)) {
      out.status = QpStatus::PrimalInfeasible;
      break;
    }
    if (settings.polish && std::max(r.primal, r.dual) <= 1e-3 &&
        (it / settings.check_interval) % 5 == 0) {
      if (auto p = polish(prob, z, y, tol)) {
        p->iterations = it;
        return *p;
      }
    }
    if (rows > 0) {
      double next = rho_scale;
      if (r.primal > 10.0 * r.dual) next = std::min(rho_scale * 2.0, kRhoMax);
      if (r.dual > 10.0 * r.primal) next = std::max(rho_scale / 2.0, kRhoMin);
      if (next != rho_scale) {
        rho_scale = next;
        rho = penalty(prob, rho_scale);
        llt = &ws.factor(prob.P, prob.A, rho, settings.sigma);
        ws.set_rho_scale(rho_scale);
      }
    }
  }
  out.iterations = std::min(it, settings.max_iter);
  out.x = x;
  out.z = z;
  out.y = y;
  out.primal_residual = r.primal;
  out.dual_residual = r.dual;

  if (out.status == QpStatus::Solved && settings.polish) {
    // Sharpen a converged iterate; keep the ADMM answer if the active set guess fails.
    if (auto p = polish(prob, z, y, tol)) {
      p->iterations = out.iterations;
      return *p;
    }
  }
  if (out.status == QpStatus::MaxIter && settings.polish) {
    if (auto p = polish(prob, z, y, tol)) {
      p->iterations = out.iterations;
      return *p;
    }
  }
  return out;
}

}  // namespace dlfm
