#include "dlfm/experiments.hpp"

#include "dlfm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dlfm::experiments {

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::ConstrainedKmeans: return "constrained_kmeans";
    case Experiment::MixtureLinreg: return "mixture_linreg";
    case Experiment::ForgettingQ: return "forgetting_q";
    case Experiment::IoHmm: return "io_hmm";
  }
  return "unknown";
}

std::optional<Experiment> parse_experiment(const std::string& name) {
  for (auto e : {Experiment::ConstrainedKmeans, Experiment::MixtureLinreg, Experiment::ForgettingQ,
                 Experiment::IoHmm})
    if (to_string(e) == name) return e;
  return std::nullopt;
}

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

int draw_category(std::mt19937_64& rng, const Eigen::Ref<const Vector>& p) {
  std::discrete_distribution<int> d(p.data(), p.data() + p.size());
  return d(rng);
}

double sigmoid(double u) { return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); }

ModelSpec with_controls(ModelSpec spec, const ExperimentConfig& cfg) {
  spec.controls.restarts = cfg.restarts;
  spec.controls.max_iter = cfg.max_iter;
  spec.controls.eps = cfg.eps;
  spec.controls.seed = cfg.seed;
  return spec;
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults(Experiment e) {
  ExperimentConfig c;
  c.name = e;
  switch (e) {
    case Experiment::ConstrainedKmeans:
      c.m = 500;
      c.n = 2;
      c.K = 4;
      c.l1_radius = 2.0;
      c.noise_sigma = 0.05;
      c.polyhedron_A.resize(5, 2);
      c.polyhedron_A << 0.8, 0.6, -0.7, 0.9, -1.0, -0.5, 1.0, -1.0, 0.3, 0.9;
      c.polyhedron_b = vec({1.0, 0.8, 0.6, 0.7, 0.8});
      break;
    case Experiment::MixtureLinreg:
      c.m = 500;
      c.n = 10;
      c.K = 3;
      c.feature_lo = -10.0;
      c.feature_hi = 10.0;
      c.noise_sigma = 1.5;
      c.category_probs = vec({0.4, 0.3, 0.3});
      c.true_thetas = {
          vec({-1.47, 0.07, 0.16, -2.02, 0.14, 0.33, 0.71, 0.80, 1.53, -0.26}),
          vec({-0.12, 1.38, -1.25, 0.88, -0.80, 1.33, -1.43, -0.42, 0.90, -0.47}),
          vec({1.14, -1.33, 0.16, 0.23, -1.20, -0.90, 1.40, 0.98, -1.11, 0.60}),
      };
      break;
    case Experiment::ForgettingQ:
      c.m = 200;
      c.n = 5;
      c.K = 2;
      c.actions = 3;
      c.reward_probs = vec({0.1, 0.2, 0.7});
      c.switch_period = 20;
      c.true_thetas = {
          vec({9.9, 9.9e-2, 9.9e-4, 9.9e-6, 9.9e-8}),
          vec({-4.0, -0.8, -0.16, -0.032, -0.0064}),
      };
      c.lambdas = {0.0, 1.0};
      break;
    case Experiment::IoHmm:
      c.m = 500;
      c.n = 2;
      c.K = 3;
      c.feature_lo = -5.0;
      c.feature_hi = 5.0;
      c.true_thetas = {vec({-2.0, 0.0}), vec({2.0, 6.0}), vec({3.0, -5.0})};
      c.p_init = vec({1.0, 0.0, 0.0});
      c.transition.resize(3, 3);
      c.transition << 0.90, 0.05, 0.05, 0.01, 0.98, 0.01, 0.03, 0.02, 0.95;
      c.lambda_theta = 0.5;
      c.lambda_z = 1.0;
      break;
  }
  return c;
}

SyntheticData gen_constrained_kmeans(const ExperimentConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> face(0, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  SyntheticData out;
  out.data.features.resize(cfg.m, 2);
  out.data.observations = RowMatrix::Zero(cfg.m, 2);
  std::vector<int> truth(static_cast<std::size_t>(cfg.m));
  for (Index i = 0; i < cfg.m; ++i) {
    const int f = face(rng);
    const double t = unit(rng);
    const double s1 = (f & 1) ? -1.0 : 1.0;
    const double s2 = (f & 2) ? -1.0 : 1.0;
    const double e1 = noise(rng);
    const double e2 = noise(rng);
    out.data.features(i, 0) = cfg.l1_radius * s1 * t + cfg.noise_sigma * e1;
    out.data.features(i, 1) = cfg.l1_radius * s2 * (1.0 - t) + cfg.noise_sigma * e2;
    truth[static_cast<std::size_t>(i)] = f + 1;
  }
  out.truth = Labels(std::move(truth));
  return out;
}

SyntheticData gen_mixture_linreg(const ExperimentConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> feature(cfg.feature_lo, cfg.feature_hi);
  std::normal_distribution<double> noise(0.0, 1.0);
  SyntheticData out;
  out.data.features.resize(cfg.m, cfg.n);
  out.data.observations.resize(cfg.m, 1);
  std::vector<int> truth(static_cast<std::size_t>(cfg.m));
  for (Index i = 0; i < cfg.m; ++i) {
    for (Index j = 0; j < cfg.n; ++j) out.data.features(i, j) = feature(rng);
    const int k = draw_category(rng, cfg.category_probs);
    const double mean = out.data.features.row(i).dot(cfg.true_thetas[static_cast<std::size_t>(k)].transpose());
    out.data.observations(i, 0) = mean + cfg.noise_sigma * noise(rng);
    truth[static_cast<std::size_t>(i)] = k + 1;
  }
  out.truth = Labels(std::move(truth));
  out.true_thetas = cfg.true_thetas;
  return out;
}

SyntheticData gen_forgetting_q(const ExperimentConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index p = cfg.actions;
  const Index n = cfg.n;
  SyntheticData out;
  out.data.rows = p;
  out.data.ordered = true;
  out.data.features = RowMatrix::Zero(cfg.m, p * n);
  out.data.observations = RowMatrix::Zero(cfg.m, p);
  std::vector<int> truth(static_cast<std::size_t>(cfg.m));
  // history[t] is the reward signal u(t); u(1) = 0 since nothing has been chosen yet.
  std::vector<Vector> history;
  history.reserve(static_cast<std::size_t>(cfg.m));
  Vector u = Vector::Zero(p);
  for (Index t = 0; t < cfg.m; ++t) {
    history.push_back(u);
    RowMatrix X = RowMatrix::Zero(p, n);
    for (Index tau = 0; tau < n && tau <= t; ++tau) X.col(tau) = history[static_cast<std::size_t>(t - tau)];
    const int k = static_cast<int>((t / cfg.switch_period) % cfg.K);
    const Vector v = X * cfg.true_thetas[static_cast<std::size_t>(k)];
    const Vector w = (v.array() - v.maxCoeff()).exp();
    const int action = draw_category(rng, w / w.sum());
    const bool rewarded = unit(rng) < cfg.reward_probs[action];
    out.data.features.row(t) = Eigen::Map<const Eigen::RowVectorXd>(X.data(), p * n);
    out.data.observations(t, action) = 1.0;
    truth[static_cast<std::size_t>(t)] = k + 1;
    u.setZero();
    if (rewarded) u[action] = 1.0;
  }
  out.truth = Labels(std::move(truth));
  out.true_thetas = cfg.true_thetas;
  return out;
}

SyntheticData gen_io_hmm(const ExperimentConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> feature(cfg.feature_lo, cfg.feature_hi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticData out;
  out.data.ordered = true;
  out.data.features.resize(cfg.m, cfg.n);
  out.data.observations.resize(cfg.m, 1);
  std::vector<int> truth(static_cast<std::size_t>(cfg.m));
  int state = 0;
  for (Index t = 0; t < cfg.m; ++t) {
    state = t == 0 ? draw_category(rng, cfg.p_init)
                   : draw_category(rng, cfg.transition.row(state).transpose());
    for (Index j = 0; j + 1 < cfg.n; ++j) out.data.features(t, j) = feature(rng);
    out.data.features(t, cfg.n - 1) = 1.0;
    const double u = out.data.features.row(t).dot(cfg.true_thetas[static_cast<std::size_t>(state)].transpose());
    out.data.observations(t, 0) = unit(rng) < sigmoid(u) ? 1.0 : 0.0;
    truth[static_cast<std::size_t>(t)] = state + 1;
  }
  out.truth = Labels(std::move(truth));
  out.true_thetas = cfg.true_thetas;
  return out;
}

SyntheticData generate(const ExperimentConfig& cfg) {
  switch (cfg.name) {
    case Experiment::ConstrainedKmeans: return gen_constrained_kmeans(cfg);
    case Experiment::MixtureLinreg: return gen_mixture_linreg(cfg);
    case Experiment::ForgettingQ: return gen_forgetting_q(cfg);
    case Experiment::IoHmm: return gen_io_hmm(cfg);
  }
  throw InvalidInput("name", "unknown experiment");
}

ModelSpec kmeans_spec(const ExperimentConfig& cfg, bool constrained) {
  std::vector<ConstraintAtom> atoms;
  if (constrained) atoms.push_back(ConstraintAtom::polyhedron(cfg.polyhedron_A, cfg.polyhedron_b));
  return with_controls(ModelSpec::shared(cfg.K, cfg.n, LossAtom::squared_distance(), atoms), cfg);
}

ModelSpec mixture_spec(const ExperimentConfig& cfg) {
  return with_controls(ModelSpec::shared(cfg.K, cfg.n, LossAtom::square()), cfg);
}

ModelSpec forgetting_spec(const ExperimentConfig& cfg, double lambda) {
  ModelSpec spec = ModelSpec::shared(cfg.K, cfg.n, LossAtom::multinomial_logit());
  spec.constraints_per_factor[0] = {ConstraintAtom::nonneg(), ConstraintAtom::monotone_nonincreasing()};
  spec.constraints_per_factor[1] = {ConstraintAtom::nonpos(), ConstraintAtom::monotone_nondecreasing()};
  spec.f_regularizers.push_back(RegularizerAtom::kl_chain(lambda));
  return with_controls(std::move(spec), cfg);
}

ModelSpec io_hmm_spec(const ExperimentConfig& cfg) {
  ModelSpec spec = ModelSpec::shared(cfg.K, cfg.n, LossAtom::binary_logit());
  const Vector lo = Vector::Constant(cfg.n, -kInf);
  const Vector hi = Vector::Constant(cfg.n, kInf);
  for (int k = 0; k < cfg.K; ++k) {
    Vector l = lo;
    Vector h = hi;
    // First coordinate: nonpositive for factor 1, nonnegative for the rest.
    if (k == 0)
      h[0] = 0.0;
    else
      l[0] = 0.0;
    spec.constraints_per_factor[static_cast<std::size_t>(k)] = {ConstraintAtom::box(l, h)};
  }
  spec.p_regularizers.push_back(RegularizerAtom::group_l2(cfg.lambda_theta));
  spec.f_regularizers.push_back(RegularizerAtom::kl_chain(cfg.lambda_z));
  return with_controls(std::move(spec), cfg);
}

ModelSpec default_spec(const ExperimentConfig& cfg) {
  switch (cfg.name) {
    case Experiment::ConstrainedKmeans: return kmeans_spec(cfg, true);
    case Experiment::MixtureLinreg: return mixture_spec(cfg);
    case Experiment::ForgettingQ:
      return forgetting_spec(cfg, cfg.lambdas.empty() ? 0.0 : cfg.lambdas.back());
    case Experiment::IoHmm: return io_hmm_spec(cfg);
  }
  throw InvalidInput("name", "unknown experiment");
}

Alignment aligned_accuracy(const Labels& pred, const Labels& truth, int K) {
  if (pred.size() != truth.size()) throw InvalidInput("labels", "length mismatch");
  if (K < 1 || K > 8) throw InvalidInput("K", "alignment supports 1 <= K <= 8");
  // confusion(j, l): samples predicted j whose truth is l.
  Matrix confusion = Matrix::Zero(K, K);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 1 || pred[i] > K || truth[i] < 1 || truth[i] > K)
      throw InvalidInput("labels", "label outside 1..K");
    confusion(pred[i] - 1, truth[i] - 1) += 1.0;
  }
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  Alignment best;
  double best_hits = -1.0;
  do {
    double hits = 0.0;
    for (int j = 0; j < K; ++j) hits += confusion(j, perm[static_cast<std::size_t>(j)]);
    if (hits > best_hits) {
      best_hits = hits;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.accuracy = pred.size() == 0 ? 1.0 : best_hits / static_cast<double>(pred.size());
  return best;
}

Matrix estimate_transition(const Labels& labels, int K) {
  if (labels.size() < 2) throw InvalidInput("labels", "need at least two labels");
  Matrix counts = Matrix::Zero(K, K);
  for (std::size_t t = 0; t + 1 < labels.size(); ++t) counts(labels[t] - 1, labels[t + 1] - 1) += 1.0;
  for (int a = 0; a < K; ++a) {
    const double s = counts.row(a).sum();
    if (s > 0.0)
      counts.row(a) /= s;
    else
      counts.row(a).setConstant(1.0 / K);
  }
  return counts;
}

Matrix align_transition(const Matrix& estimated, const std::vector<int>& permutation) {
  const Index K = estimated.rows();
  Matrix out(K, K);
  for (Index a = 0; a < K; ++a)
    for (Index b = 0; b < K; ++b)
      out(permutation[static_cast<std::size_t>(a)], permutation[static_cast<std::size_t>(b)]) = estimated(a, b);
  return out;
}

std::vector<double> aligned_rmse(const std::vector<Vector>& recovered,
                                 const std::vector<Vector>& truth,
                                 const std::vector<int>& permutation) {
  std::vector<double> out;
  for (std::size_t j = 0; j < recovered.size(); ++j) {
    const Vector& t = truth[static_cast<std::size_t>(permutation[j])];
    out.push_back(std::sqrt((recovered[j] - t).squaredNorm() / static_cast<double>(t.size())));
  }
  return out;
}

namespace {

double polyhedron_violation(const ExperimentConfig& cfg, const std::vector<Vector>& thetas) {
  double worst = 0.0;
  for (const auto& th : thetas)
    worst = std::max(worst, (cfg.polyhedron_A * th - cfg.polyhedron_b).maxCoeff());
  return std::max(worst, 0.0);
}

}  // namespace

KmeansRepro repro_constrained_kmeans(const ExperimentConfig& cfg, const FitOptions& opts) {
  KmeansRepro r;
  r.cfg = cfg;
  r.synth = gen_constrained_kmeans(cfg);
  r.constrained = fit(kmeans_spec(cfg, true), r.synth.data, opts);
  r.unconstrained = fit(kmeans_spec(cfg, false), r.synth.data, opts);
  r.constrained_violation = polyhedron_violation(cfg, r.constrained.thetas);
  r.unconstrained_violation = polyhedron_violation(cfg, r.unconstrained.thetas);
  return r;
}

MixtureRepro repro_mixture_linreg(const ExperimentConfig& cfg, const FitOptions& opts) {
  MixtureRepro r;
  r.cfg = cfg;
  r.synth = gen_mixture_linreg(cfg);
  r.fit = fit(mixture_spec(cfg), r.synth.data, opts);
  r.alignment = aligned_accuracy(r.fit.labels, r.synth.truth, cfg.K);
  r.rmse = aligned_rmse(r.fit.thetas, r.synth.true_thetas, r.alignment.permutation);
  return r;
}

ForgettingRepro repro_forgetting_q(const ExperimentConfig& cfg, const FitOptions& opts) {
  ForgettingRepro r;
  r.cfg = cfg;
  r.synth = gen_forgetting_q(cfg);
  for (double lambda : cfg.lambdas) {
    ForgettingRun run;
    run.lambda = lambda;
    run.fit = fit(forgetting_spec(cfg, lambda), r.synth.data, opts);
    run.alignment = aligned_accuracy(run.fit.labels, r.synth.truth, cfg.K);
    run.rmse = aligned_rmse(run.fit.thetas, r.synth.true_thetas, run.alignment.permutation);
    r.runs.push_back(std::move(run));
  }
  return r;
}

IoHmmRepro repro_io_hmm(const ExperimentConfig& cfg, const FitOptions& opts) {
  IoHmmRepro r;
  r.cfg = cfg;
  r.synth = gen_io_hmm(cfg);
  r.fit = fit(io_hmm_spec(cfg), r.synth.data, opts);
  r.alignment = aligned_accuracy(r.fit.labels, r.synth.truth, cfg.K);
  r.estimated = align_transition(estimate_transition(r.fit.labels, cfg.K), r.alignment.permutation);
  r.max_deviation = (r.estimated - cfg.transition).cwiseAbs().maxCoeff();
  return r;
}

}  // namespace dlfm::experiments
