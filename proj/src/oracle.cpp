#include "dlfm/oracle.hpp"

#include <cmath>
#include <limits>

namespace dlfm {

Vector fd_gradient(const std::function<double(const Vector&)>& fun, const Vector& point,
                   double step) {
  Vector g(point.size());
  Vector x = point;
  for (Index j = 0; j < point.size(); ++j) {
    x[j] = point[j] + step;
    const double up = fun(x);
    x[j] = point[j] - step;
    const double down = fun(x);
    x[j] = point[j];
    g[j] = (up - down) / (2.0 * step);
  }
  return g;
}

Vector qp_active_set_oracle(const QpProblem& prob) {
  const Index n = prob.P.rows();
  const Index q = prob.A.rows();
  if (n > 6 || q > 8) throw InstanceTooLarge("active-set oracle supports n <= 6 and at most 8 rows");

  // Each row is inactive (0), at its lower bound (1) or at its upper bound (2).
  // The optimum solves the equality problem of its own active set, so the best
  // primal-feasible candidate over all patterns is optimal.
  std::vector<int> state(static_cast<std::size_t>(q), 0);
  Vector best;
  double best_value = std::numeric_limits<double>::infinity();
  const double feas_tol = 1e-9;
  while (true) {
    bool usable = true;
    std::vector<std::pair<Index, double>> active;
    for (Index i = 0; i < q; ++i) {
      const int s = state[static_cast<std::size_t>(i)];
      if (s == 1) {
        if (is_neg_inf(prob.lo[i])) usable = false;
        active.emplace_back(i, prob.lo[i]);
      } else if (s == 2) {
        if (is_pos_inf(prob.hi[i]) || prob.hi[i] == prob.lo[i]) usable = false;
        active.emplace_back(i, prob.hi[i]);
      }
    }
    if (usable) {
      const Index a = static_cast<Index>(active.size());
      Matrix kkt = Matrix::Zero(n + a, n + a);
      Vector rhs(n + a);
      kkt.topLeftCorner(n, n) = prob.P;
      rhs.head(n) = -prob.q;
      for (Index j = 0; j < a; ++j) {
        kkt.block(n + j, 0, 1, n) = prob.A.row(active[static_cast<std::size_t>(j)].first);
        kkt.block(0, n + j, n, 1) = prob.A.row(active[static_cast<std::size_t>(j)].first).transpose();
        rhs[n + j] = active[static_cast<std::size_t>(j)].second;
      }
      Eigen::FullPivLU<Matrix> lu(kkt);
      const Vector sol = lu.solve(rhs);
      const bool consistent = (kkt * sol - rhs).norm() <= 1e-9 * std::max(1.0, rhs.norm());
      if (consistent) {
        const Vector x = sol.head(n);
        const Vector Ax = prob.A * x;
        bool feasible = true;
        for (Index i = 0; i < q && feasible; ++i) {
          const double scale = 1.0 + std::abs(Ax[i]);
          if (!is_neg_inf(prob.lo[i]) && Ax[i] < prob.lo[i] - feas_tol * scale) feasible = false;
          if (!is_pos_inf(prob.hi[i]) && Ax[i] > prob.hi[i] + feas_tol * scale) feasible = false;
        }
        if (feasible) {
          const double value = 0.5 * x.dot(prob.P * x) + prob.q.dot(x);
          if (value < best_value) {
            best_value = value;
            best = x;
          }
        }
      }
    }
    Index i = 0;
    while (i < q && state[static_cast<std::size_t>(i)] == 2) state[static_cast<std::size_t>(i++)] = 0;
    if (i == q) break;
    ++state[static_cast<std::size_t>(i)];
  }
  if (best.size() == 0) throw SubsolverFailure(-1, "active-set oracle found no feasible point");
  return best;
}

namespace {

struct SubsetSolve {
  double cost = 0.0;
  Vector theta;
};

// Exact minimizer of sum_{i in S} f_k(x_i, y_i; theta) over C_k.
SubsetSolve solve_subset(const ModelSpec& spec, const Dataset& data, int k,
                         const std::vector<Index>& members) {
  const auto& atom = spec.loss_per_factor[static_cast<std::size_t>(k)];
  const auto& atoms = spec.constraints_per_factor[static_cast<std::size_t>(k)];
  const Index n = spec.n;
  SubsetSolve out;
  if (members.empty()) {
    out.theta = project(atoms, Vector::Zero(n));
    return out;
  }
  // Stack the quadratic as || M theta - c ||^2.
  const Index rows = atom.kind == LossKind::SquaredDistance ? n : data.rows;
  Matrix M(rows * static_cast<Index>(members.size()), n);
  Vector c(M.rows());
  for (std::size_t j = 0; j < members.size(); ++j) {
    const auto X = data.feature(members[j]);
    const auto y = data.observation(members[j]);
    const Index r0 = rows * static_cast<Index>(j);
    if (atom.kind == LossKind::SquaredDistance) {
      M.block(r0, 0, n, n).setIdentity();
      c.segment(r0, n) = X.row(0).transpose() + y;
    } else {
      M.block(r0, 0, rows, n) = X;
      c.segment(r0, rows) = y;
    }
  }
  bool constrained = false;
  for (const auto& a : atoms) constrained = constrained || a.kind != ConstraintKind::Free;
  if (!constrained) {
    out.theta = M.completeOrthogonalDecomposition().solve(c);
  } else {
    const auto lin = as_linear(atoms, n);
    if (!lin) throw InvalidInput("constraints", "oracle supports linear constraint atoms only");
    QpProblem prob{2.0 * M.transpose() * M, -2.0 * M.transpose() * c, lin->A, lin->lo, lin->hi};
    if (n <= 6 && lin->A.rows() <= 8) {
      // A tiny ridge keeps the KKT systems nonsingular when few points share a factor.
      prob.P += 1e-12 * Matrix::Identity(n, n);
      out.theta = qp_active_set_oracle(prob);
    } else {
      QpSettings settings;
      settings.max_iter = 200000;
      const auto sol = qp_solve(prob, std::nullopt, 1e-10, settings);
      if (sol.status != QpStatus::Solved) throw SubsolverFailure(k, "oracle QP did not solve");
      out.theta = sol.x;
    }
  }
  for (Index i : members)
    out.cost += loss_eval(atom, data.feature(i), data.observation(i), out.theta);
  return out;
}

}  // namespace

OracleResult brute_force_fit(const ModelSpec& spec, const Dataset& data) {
  for (const auto& l : spec.loss_per_factor)
    if (l.kind != LossKind::SquareRegression && l.kind != LossKind::SquaredDistance)
      throw InvalidInput("loss", "the oracle handles square and squared-distance losses only");
  if (spec.regularized()) throw InvalidInput("regularizers", "the oracle handles unregularized models only");
  require_valid(spec, data);

  const Index m = data.size();
  const int K = spec.K;
  double count = 1.0;
  for (Index i = 0; i < m; ++i) {
    count *= K;
    if (count > 1e6) throw InstanceTooLarge("K^m exceeds 1e6 assignments");
  }

  // Per-factor costs memoized by the subset of samples assigned to that factor.
  const bool memo = m <= 20;
  std::vector<std::vector<double>> cost_cache;
  if (memo)
    cost_cache.assign(static_cast<std::size_t>(K),
                      std::vector<double>(std::size_t{1} << m, std::numeric_limits<double>::quiet_NaN()));
  auto members_of = [&](const std::vector<int>& assign, int k) {
    std::vector<Index> members;
    for (Index i = 0; i < m; ++i)
      if (assign[static_cast<std::size_t>(i)] == k) members.push_back(i);
    return members;
  };
  auto factor_cost = [&](const std::vector<int>& assign, int k) {
    if (!memo) return solve_subset(spec, data, k, members_of(assign, k)).cost;
    std::size_t mask = 0;
    for (Index i = 0; i < m; ++i)
      if (assign[static_cast<std::size_t>(i)] == k) mask |= std::size_t{1} << i;
    double& slot = cost_cache[static_cast<std::size_t>(k)][mask];
    if (std::isnan(slot)) slot = solve_subset(spec, data, k, members_of(assign, k)).cost;
    return slot;
  };

  std::vector<int> assign(static_cast<std::size_t>(m), 0);
  std::vector<int> best_assign = assign;
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    double total = 0.0;
    for (int k = 0; k < K && total < best; ++k) total += factor_cost(assign, k);
    if (total < best) {
      best = total;
      best_assign = assign;
    }
    Index i = 0;
    while (i < m && assign[static_cast<std::size_t>(i)] == K - 1) assign[static_cast<std::size_t>(i++)] = 0;
    if (i == m) break;
    ++assign[static_cast<std::size_t>(i)];
  }

  OracleResult out;
  out.optimum = 0.0;
  std::vector<int> labels(best_assign.size());
  for (std::size_t i = 0; i < best_assign.size(); ++i) labels[i] = best_assign[i] + 1;
  out.best_assignment = Labels(std::move(labels));
  for (int k = 0; k < K; ++k) {
    auto s = solve_subset(spec, data, k, members_of(best_assign, k));
    out.optimum += s.cost;
    out.thetas_at_optimum.push_back(std::move(s.theta));
  }
  return out;
}

}  // namespace dlfm
