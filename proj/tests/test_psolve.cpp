#include "support/random.hpp"

#include "dlfm/experiments.hpp"
#include "dlfm/psolve.hpp"

#include <doctest.h>

using namespace dlfm;
using testsupport::Gen;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

struct Case {
  std::string name;
  ModelSpec spec;
  Dataset data;
};

// One instance per solver path, each with nontrivial constraints or regularizers.
std::vector<Case> solver_cases(Gen& g) {
  std::vector<Case> cases;
  const Index m = 30;
  const Matrix X = g.mat(m, 3, -2, 2);
  Vector y(m);
  for (Index i = 0; i < m; ++i) y[i] = X.row(i).dot(vec({1.0, -0.5, 0.3})) + g.normal(0.2);

  cases.push_back({"square free", ModelSpec::shared(2, 3, LossAtom::square()), testsupport::vector_dataset(X, y)});
  cases.push_back({"square polyhedron",
                   ModelSpec::shared(2, 3, LossAtom::square(),
                                     {ConstraintAtom::polyhedron(Matrix::Ones(1, 3), vec({0.2})),
                                      ConstraintAtom::nonneg()}),
                   testsupport::vector_dataset(X, y)});
  auto l1 = ModelSpec::shared(2, 3, LossAtom::square(), {ConstraintAtom::box(Vector::Constant(3, -0.4), Vector::Constant(3, 0.9))});
  l1.p_regularizers.push_back(RegularizerAtom::l1(3.0));
  cases.push_back({"square box l1", l1, testsupport::vector_dataset(X, y)});
  cases.push_back({"huber ball", ModelSpec::shared(2, 3, LossAtom::huber(0.5), {ConstraintAtom::norm_ball2(0.8)}),
                   testsupport::vector_dataset(X, y)});
  cases.push_back({"lp1 nonneg", ModelSpec::shared(2, 3, LossAtom::lp(1.0), {ConstraintAtom::nonneg()}),
                   testsupport::vector_dataset(X, y)});

  Vector yb(m);
  for (Index i = 0; i < m; ++i) yb[i] = g.uniform() < 0.5 ? 1.0 : 0.0;
  auto logit = ModelSpec::shared(2, 3, LossAtom::binary_logit(), {ConstraintAtom::box(vec({-kInf, 0, -kInf}), vec({0, kInf, kInf}))});
  logit.p_regularizers.push_back(RegularizerAtom::group_l2(0.5));
  cases.push_back({"binary group", logit, testsupport::vector_dataset(X, yb)});

  auto fq = experiments::ExperimentConfig::defaults(experiments::Experiment::ForgettingQ);
  fq.m = 60;
  fq.seed = 3;
  const auto synth = experiments::gen_forgetting_q(fq);
  cases.push_back({"multinomial monotone", experiments::forgetting_spec(fq, 0.0), synth.data});

  const auto km = experiments::ExperimentConfig::defaults(experiments::Experiment::ConstrainedKmeans);
  Matrix pts = g.mat(m, 2, -2, 2);
  cases.push_back({"location polyhedron", experiments::kmeans_spec(km, true), testsupport::point_dataset(pts)});
  return cases;
}

}  // namespace

TEST_CASE("one cluster of points on a line gives their mean") {
  Matrix pts(3, 1);
  pts << 0, 1, 2;
  const auto spec = ModelSpec::shared(1, 1, LossAtom::squared_distance());
  const auto out = solve_p(spec, testsupport::point_dataset(pts), FactorMatrix::ones(3));
  CHECK(out.thetas[0][0] == doctest::Approx(1.0));
  CHECK(out.method[0] == PMethod::NormalEquations);
}

TEST_CASE("a cluster outside the polyhedron gets a boundary center") {
  const auto cfg = experiments::ExperimentConfig::defaults(experiments::Experiment::ConstrainedKmeans);
  const auto spec = experiments::kmeans_spec(cfg, true);
  Matrix pts(4, 2);
  pts << 2.0, 0.1, 1.9, -0.1, 2.1, 0.0, 2.0, 0.05;
  Matrix z = Matrix::Zero(4, 4);
  z.col(0).setOnes();
  const auto out = solve_p(spec, testsupport::point_dataset(pts), FactorMatrix(z));
  CHECK(out.method[0] == PMethod::Qp);
  const Vector slack = cfg.polyhedron_A * out.thetas[0] - cfg.polyhedron_b;
  CHECK(slack.maxCoeff() <= 1e-6);
  CHECK(slack.maxCoeff() >= -1e-6);
}

TEST_CASE("free weighted square loss matches the normal equations") {
  Gen g(201);
  for (int trial = 0; trial < 10; ++trial) {
    const Index m = 25;
    const Index n = 4;
    const Matrix X = g.mat(m, n);
    const Vector y = g.vec(m);
    const auto Z = g.stochastic(m, 2);
    const auto spec = ModelSpec::shared(2, n, LossAtom::square());
    const auto out = solve_p(spec, testsupport::vector_dataset(X, y), Z);
    for (int k = 0; k < 2; ++k) {
      const Vector w = Z.values().col(k);
      const Matrix G = X.transpose() * w.asDiagonal() * X;
      const Vector h = X.transpose() * w.cwiseProduct(y);
      const Vector direct = G.ldlt().solve(h);
      CHECK((out.thetas[static_cast<std::size_t>(k)] - direct).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("the first-order path reaches the least-squares optimum") {
  // Huber with a huge delta is the square loss on this data.
  Gen g(211);
  const Index m = 40;
  const Matrix X = g.mat(m, 3);
  const Vector y = g.vec(m);
  const auto Z = g.stochastic(m, 1);
  auto spec = ModelSpec::shared(1, 3, LossAtom::huber(1e6));
  spec.controls.inner_tol = 1e-14;
  const auto out = solve_p(spec, testsupport::vector_dataset(X, y), Z);
  CHECK(out.method[0] == PMethod::ProximalGradient);
  const Vector direct = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  CHECK((out.thetas[0] - direct).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("dispatch follows the loss and constraint structure") {
  Gen g(221);
  const auto cases = solver_cases(g);
  const std::vector<PMethod> expected = {PMethod::NormalEquations, PMethod::Qp, PMethod::ProximalGradient,
                                         PMethod::ProximalGradient, PMethod::Subgradient,
                                         PMethod::ProximalGradient, PMethod::ProximalGradient, PMethod::Qp};
  REQUIRE(cases.size() == expected.size());
  for (std::size_t c = 0; c < cases.size(); ++c) {
    CAPTURE(cases[c].name);
    CHECK(p_method(cases[c].spec, 0) == expected[c]);
  }
}

TEST_CASE("P-solves never ascend from a warm start") {
  Gen g(231);
  for (const auto& c : solver_cases(g)) {
    CAPTURE(c.name);
    for (int trial = 0; trial < 5; ++trial) {
      const auto Z = g.stochastic(c.data.size(), c.spec.K);
      std::vector<Vector> warm;
      for (int k = 0; k < c.spec.K; ++k)
        warm.push_back(project(c.spec.constraints_per_factor[static_cast<std::size_t>(k)], g.vec(c.spec.n, -1, 1)));
      const double before = p_objective(c.spec, c.data, Z, warm);
      const auto out = solve_p(c.spec, c.data, Z, std::span<const Vector>(warm));
      CHECK(out.objective <= before + 1e-9);
      // Chaining a second solve from the first answer cannot go up either.
      const auto again = solve_p(c.spec, c.data, Z, std::span<const Vector>(out.thetas));
      CHECK(again.objective <= out.objective + 1e-9);
    }
  }
}

TEST_CASE("P-solve results are feasible and report their objective") {
  Gen g(241);
  for (const auto& c : solver_cases(g)) {
    CAPTURE(c.name);
    const auto Z = g.stochastic(c.data.size(), c.spec.K);
    const auto out = solve_p(c.spec, c.data, Z);
    for (int k = 0; k < c.spec.K; ++k) {
      const auto& atoms = c.spec.constraints_per_factor[static_cast<std::size_t>(k)];
      const Vector& th = out.thetas[static_cast<std::size_t>(k)];
      CHECK((project(atoms, th) - th).norm() <= 1e-6);
    }
    const double p_part = objective(c.spec, c.data, out.thetas, Z) - f_regularizer_value(c.spec, Z);
    CHECK(out.objective == doctest::Approx(p_part).epsilon(1e-9));
    CHECK(out.objective == doctest::Approx(p_objective(c.spec, c.data, Z, out.thetas)).epsilon(1e-12));
  }
}

TEST_CASE("a factor with no weight keeps its warm start") {
  Gen g(251);
  const Matrix X = g.mat(10, 2);
  const Vector y = g.vec(10);
  Matrix z = Matrix::Zero(10, 2);
  z.col(0).setOnes();
  const auto spec = ModelSpec::shared(2, 2, LossAtom::square());
  const std::vector<Vector> warm = {vec({0.1, 0.2}), vec({3.0, -4.0})};
  const auto out = solve_p(spec, testsupport::vector_dataset(X, y), FactorMatrix(z), std::span<const Vector>(warm));
  CHECK(out.thetas[1] == warm[1]);
  CHECK(out.status[1] == PFactorStatus::Untouched);

  auto reg = spec;
  reg.p_regularizers.push_back(RegularizerAtom::l1(0.5));
  const auto shrunk = solve_p(reg, testsupport::vector_dataset(X, y), FactorMatrix(z), std::span<const Vector>(warm));
  CHECK(shrunk.thetas[1].norm() <= 1e-12);
  auto grp = spec;
  grp.p_regularizers.push_back(RegularizerAtom::group_l2(0.5));
  const auto zeroed = solve_p(grp, testsupport::vector_dataset(X, y), FactorMatrix(z), std::span<const Vector>(warm));
  CHECK(zeroed.thetas[1].norm() <= 1e-12);
}

TEST_CASE("a failing QP names its factor") {
  const auto cfg = experiments::ExperimentConfig::defaults(experiments::Experiment::ConstrainedKmeans);
  auto spec = experiments::kmeans_spec(cfg, true);
  spec.controls.qp_max_iter = 1;
  Matrix pts(4, 2);
  pts << 3.0, 3.0, 3.1, 2.9, -3.0, 3.0, 0.0, -3.0;
  Matrix z = Matrix::Zero(4, 4);
  z(0, 1) = z(1, 1) = z(2, 1) = z(3, 1) = 1.0;
  try {
    solve_p(spec, testsupport::point_dataset(pts), FactorMatrix(z));
    FAIL("expected a subsolver failure");
  } catch (const SubsolverFailure& e) {
    CHECK(e.factor() == 1);
  }
}

TEST_CASE("workspaces cache constraint assembly and factorizations") {
  const auto cfg = experiments::ExperimentConfig::defaults(experiments::Experiment::ConstrainedKmeans);
  const auto spec = experiments::kmeans_spec(cfg, true);
  Gen g(261);
  const Dataset d = testsupport::point_dataset(g.mat(40, 2, -2, 2));
  PSolveWorkspace ws;
  auto out = solve_p(spec, d, g.stochastic(40, 4), std::nullopt, &ws);
  const int prepared = ws.preparations();
  CHECK(prepared == 4);
  out = solve_p(spec, d, g.stochastic(40, 4), std::span<const Vector>(out.thetas), &ws);
  CHECK(ws.preparations() == prepared);
  CHECK(ws.qp_reuses() > 0);
}
