#include "support/random.hpp"

#include "dlfm/experiments.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dlfm;
using namespace dlfm::experiments;
using testsupport::Gen;

namespace {

bool same_data(const SyntheticData& a, const SyntheticData& b) {
  return a.data.features == b.data.features && a.data.observations == b.data.observations &&
         a.truth == b.truth;
}

Labels relabel(const Labels& l, const std::vector<int>& perm) {
  std::vector<int> out;
  for (int v : l.values) out.push_back(perm[static_cast<std::size_t>(v - 1)] + 1);
  return Labels(out);
}

std::vector<int> random_perm(Gen& g, int K) {
  std::vector<int> p(static_cast<std::size_t>(K));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), g.engine());
  return p;
}

Labels markov_chain(Gen& g, const Matrix& P, const Vector& p0, Index m) {
  std::vector<int> out;
  auto draw = [&](const Vector& p) {
    double u = g.uniform();
    for (Index k = 0; k < p.size(); ++k) {
      if (u < p[k]) return static_cast<int>(k);
      u -= p[k];
    }
    return static_cast<int>(p.size() - 1);
  };
  int s = draw(p0);
  for (Index t = 0; t < m; ++t) {
    if (t > 0) s = draw(P.row(s).transpose());
    out.push_back(s + 1);
  }
  return Labels(out);
}

}  // namespace

TEST_CASE("experiment names round trip") {
  for (auto e : {Experiment::ConstrainedKmeans, Experiment::MixtureLinreg, Experiment::ForgettingQ,
                 Experiment::IoHmm})
    CHECK(parse_experiment(to_string(e)) == e);
  CHECK(!parse_experiment("kmeans").has_value());
}

TEST_CASE("default configurations are consistent") {
  for (auto e : {Experiment::ConstrainedKmeans, Experiment::MixtureLinreg, Experiment::ForgettingQ,
                 Experiment::IoHmm}) {
    const auto cfg = ExperimentConfig::defaults(e);
    CHECK(cfg.noise_sigma >= 0.0);
    if (cfg.category_probs.size()) CHECK(cfg.category_probs.sum() == doctest::Approx(1.0));
    if (cfg.p_init.size()) CHECK(cfg.p_init.sum() == doctest::Approx(1.0));
    if (cfg.transition.size())
      CHECK((cfg.transition.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    // The canned model accepts the generated data.
    CHECK(validate(default_spec(cfg), generate(cfg).data).ok());
  }
}

TEST_CASE("generators are pure functions of their configuration") {
  for (auto e : {Experiment::ConstrainedKmeans, Experiment::MixtureLinreg, Experiment::ForgettingQ,
                 Experiment::IoHmm}) {
    auto cfg = ExperimentConfig::defaults(e);
    cfg.seed = 17;
    CHECK(same_data(generate(cfg), generate(cfg)));
    auto other = cfg;
    other.seed = 18;
    CHECK(!same_data(generate(cfg), generate(other)));
  }
}

TEST_CASE("k-means points lie on the l1 sphere") {
  auto cfg = ExperimentConfig::defaults(Experiment::ConstrainedKmeans);
  auto noiseless = cfg;
  noiseless.noise_sigma = 0.0;
  const auto exact = gen_constrained_kmeans(noiseless);
  for (Index i = 0; i < exact.data.size(); ++i)
    CHECK(exact.data.features.row(i).lpNorm<1>() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(exact.data.observations.isZero());
  const auto noisy = gen_constrained_kmeans(cfg);
  double mean = 0.0;
  for (Index i = 0; i < noisy.data.size(); ++i) mean += noisy.data.features.row(i).lpNorm<1>();
  mean /= static_cast<double>(noisy.data.size());
  CHECK(std::abs(mean - 2.0) <= 0.05);
}

TEST_CASE("mixture data follow the generating lines") {
  auto cfg = ExperimentConfig::defaults(Experiment::MixtureLinreg);
  auto noiseless = cfg;
  noiseless.noise_sigma = 0.0;
  const auto s = gen_mixture_linreg(noiseless);
  for (Index i = 0; i < s.data.size(); ++i) {
    const Vector x = s.data.features.row(i).transpose();
    const double fitted = x.dot(s.true_thetas[static_cast<std::size_t>(s.truth[static_cast<std::size_t>(i)] - 1)]);
    CHECK(std::abs(s.data.observations(i, 0) - fitted) <= 1e-9);
    CHECK(x.minCoeff() >= cfg.feature_lo);
    CHECK(x.maxCoeff() <= cfg.feature_hi);
  }
  const auto d = gen_mixture_linreg(cfg);
  for (int k = 0; k < cfg.K; ++k) {
    const auto count = std::count(d.truth.values.begin(), d.truth.values.end(), k + 1);
    CHECK(std::abs(static_cast<double>(count) / static_cast<double>(cfg.m) - cfg.category_probs[k]) <= 0.06);
  }
}

TEST_CASE("forgetting Q features are reward indicators") {
  const auto cfg = ExperimentConfig::defaults(Experiment::ForgettingQ);
  const auto s = gen_forgetting_q(cfg);
  CHECK(s.data.rows == 3);
  CHECK(s.data.n() == 5);
  CHECK(s.data.ordered);
  for (Index t = 0; t < s.data.size(); ++t) {
    const auto X = s.data.feature(t);
    CHECK(((X.array() == 0.0) || (X.array() == 1.0)).all());
    CHECK((X.colwise().sum().array() <= 1.0).all());
    CHECK(s.data.observation(t).sum() == 1.0);
    // Column tau holds the reward signal that column 0 held tau steps earlier.
    for (Index tau = 1; tau < 5 && tau <= t; ++tau)
      CHECK(X.col(tau) == s.data.feature(t - tau).col(0));
  }
  CHECK(s.data.feature(0).isZero());
}

TEST_CASE("forgetting Q labels switch every twenty trials") {
  const auto s = gen_forgetting_q(ExperimentConfig::defaults(Experiment::ForgettingQ));
  for (std::size_t t = 0; t < s.truth.size(); ++t) CHECK(s.truth[t] == ((t / 20) % 2 == 0 ? 1 : 2));
}

TEST_CASE("a saturated agent repeats the last rewarded action") {
  auto cfg = ExperimentConfig::defaults(Experiment::ForgettingQ);
  cfg.true_thetas = {Vector::Zero(5), Vector::Zero(5)};
  for (auto& th : cfg.true_thetas) th[0] = 200.0;
  cfg.reward_probs = Vector::Ones(3);
  const auto s = gen_forgetting_q(cfg);
  for (Index t = 1; t < s.data.size(); ++t)
    CHECK(s.data.observation(t) == s.data.observation(t - 1));
}

TEST_CASE("io-hmm samples carry a bias and follow the chain") {
  const auto cfg = ExperimentConfig::defaults(Experiment::IoHmm);
  const auto s = gen_io_hmm(cfg);
  CHECK(s.data.ordered);
  for (Index t = 0; t < s.data.size(); ++t) {
    CHECK(s.data.features(t, cfg.n - 1) == 1.0);
    const double y = s.data.observations(t, 0);
    CHECK((y == 0.0 || y == 1.0));
  }
  CHECK((estimate_transition(s.truth, cfg.K) - cfg.transition).cwiseAbs().maxCoeff() <= 0.08);

  auto flat = cfg;
  for (auto& th : flat.true_thetas) th.setZero();
  const auto f = gen_io_hmm(flat);
  CHECK(std::abs(f.data.observations.mean() - 0.5) <= 0.05);
}

TEST_CASE("aligned accuracy") {
  auto a = aligned_accuracy(Labels({1, 1, 2}), Labels({2, 2, 1}), 2);
  CHECK(a.accuracy == 1.0);
  CHECK(a.permutation == std::vector<int>({1, 0}));
  a = aligned_accuracy(Labels({1, 2, 3, 3}), Labels({1, 2, 3, 3}), 3);
  CHECK(a.accuracy == 1.0);
  CHECK(a.permutation == std::vector<int>({0, 1, 2}));

  Gen g(601);
  const auto coin = aligned_accuracy(g.labels(1000, 2), g.labels(1000, 2), 2);
  CHECK(coin.accuracy >= 0.5);
  CHECK(coin.accuracy <= 0.55);
}

TEST_CASE("aligned accuracy ignores relabeling of either side") {
  Gen g(611);
  for (int trial = 0; trial < 50; ++trial) {
    const int K = g.integer(2, 5);
    const auto pred = g.labels(60, K);
    const auto truth = g.labels(60, K);
    const double base = aligned_accuracy(pred, truth, K).accuracy;
    CHECK(aligned_accuracy(relabel(pred, random_perm(g, K)), truth, K).accuracy == base);
    CHECK(aligned_accuracy(pred, relabel(truth, random_perm(g, K)), K).accuracy == base);
  }
}

TEST_CASE("transition estimates") {
  Matrix expected(2, 2);
  expected << 0.5, 0.5, 0.0, 1.0;
  CHECK(estimate_transition(Labels({1, 1, 2, 2}), 2) == expected);

  const Matrix constant = estimate_transition(Labels({2, 2, 2, 2}), 3);
  Matrix want(3, 3);
  want << 1.0 / 3, 1.0 / 3, 1.0 / 3, 0, 1, 0, 1.0 / 3, 1.0 / 3, 1.0 / 3;
  CHECK((constant - want).cwiseAbs().maxCoeff() <= 1e-15);

  const auto cfg = ExperimentConfig::defaults(Experiment::IoHmm);
  Gen g(621);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix est = estimate_transition(markov_chain(g, cfg.transition, cfg.p_init, 500), cfg.K);
    CHECK((est.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-15);
  }
  const Matrix est = estimate_transition(markov_chain(g, cfg.transition, cfg.p_init, 500), cfg.K);
  CHECK((est - cfg.transition).cwiseAbs().maxCoeff() <= 0.08);
}

TEST_CASE("aligning an estimate undoes a relabeling") {
  const auto cfg = ExperimentConfig::defaults(Experiment::IoHmm);
  Gen g(631);
  const Labels truth = markov_chain(g, cfg.transition, cfg.p_init, 400);
  const auto perm = random_perm(g, cfg.K);
  std::vector<int> inverse(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) inverse[static_cast<std::size_t>(perm[j])] = static_cast<int>(j);
  const Labels pred = relabel(truth, inverse);
  const auto a = aligned_accuracy(pred, truth, cfg.K);
  CHECK(a.accuracy == 1.0);
  CHECK(a.permutation == perm);
  CHECK(align_transition(estimate_transition(pred, cfg.K), a.permutation) == estimate_transition(truth, cfg.K));
}

TEST_CASE("parameter error after alignment") {
  const std::vector<Vector> truth = {Vector::Zero(2), Vector::Ones(2)};
  const std::vector<Vector> recovered = {Vector::Ones(2), Vector::Constant(2, 0.5)};
  const auto rmse = aligned_rmse(recovered, truth, {1, 0});
  CHECK(rmse[0] == doctest::Approx(0.0));
  CHECK(rmse[1] == doctest::Approx(0.5));
}

TEST_CASE("canned models carry the intended structure") {
  const auto fq = ExperimentConfig::defaults(Experiment::ForgettingQ);
  const auto spec = forgetting_spec(fq, 1.0);
  CHECK(spec.kl_weight() == 1.0);
  CHECK(spec.loss_per_factor[0].kind == LossKind::MultinomialLogit);
  CHECK(spec.loss_per_factor[0].map == FeatureMap::MatrixProduct);
  CHECK(forgetting_spec(fq, 0.0).kl_weight() == 0.0);

  const auto io = ExperimentConfig::defaults(Experiment::IoHmm);
  const auto hmm = io_hmm_spec(io);
  CHECK(hmm.kl_weight() == io.lambda_z);
  CHECK(hmm.regularized());

  const auto km = ExperimentConfig::defaults(Experiment::ConstrainedKmeans);
  CHECK(kmeans_spec(km, true).constraints_per_factor[0].size() == 1);
  CHECK(kmeans_spec(km, false).constraints_per_factor[0].empty());
}
