#pragma once

// Synthetic datasets for the four reference experiments, the canned models that
// fit them, and the scoring helpers (label alignment, transition estimates).

#include "dlfm/engine.hpp"
#include "dlfm/factors.hpp"
#include "dlfm/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dlfm::experiments {

enum class Experiment { ConstrainedKmeans, MixtureLinreg, ForgettingQ, IoHmm };

std::string to_string(Experiment e);
std::optional<Experiment> parse_experiment(const std::string& name);

struct ExperimentConfig {
  Experiment name = Experiment::ConstrainedKmeans;
  Index m = 0;
  Index n = 0;
  int K = 0;
  std::uint64_t seed = 0;

  // constrained_kmeans: points uniform on {||x||_1 = l1_radius} plus N(0, noise^2 I);
  // centers restricted to {A theta <= b}.
  double l1_radius = 2.0;
  Matrix polyhedron_A;
  Vector polyhedron_b;

  // Shared by several generators.
  double noise_sigma = 0.0;
  double feature_lo = 0.0;  // a
  double feature_hi = 0.0;  // b
  std::vector<Vector> true_thetas;
  Vector category_probs;  // mixture_linreg

  // forgetting_q
  Index actions = 3;
  Vector reward_probs;
  Index switch_period = 20;
  std::vector<double> lambdas;  // KL-chain weights compared by the repro

  // io_hmm
  Matrix transition;
  Vector p_init;
  double lambda_theta = 0.0;
  double lambda_z = 0.0;

  // Fitting controls used by the repro.
  int restarts = 10;
  int max_iter = 500;
  double eps = 1e-6;

  static ExperimentConfig defaults(Experiment e);
};

// Seeds used by the multi-seed acceptance runs.
inline const std::vector<std::uint64_t> kAcceptanceSeeds = {1, 2, 3, 4, 5};

struct SyntheticData {
  Dataset data;
  Labels truth;  // 1-based generating factor of every sample
  std::vector<Vector> true_thetas;
};

SyntheticData gen_constrained_kmeans(const ExperimentConfig& cfg);
SyntheticData gen_mixture_linreg(const ExperimentConfig& cfg);
SyntheticData gen_forgetting_q(const ExperimentConfig& cfg);
SyntheticData gen_io_hmm(const ExperimentConfig& cfg);
SyntheticData generate(const ExperimentConfig& cfg);

// Models fitted by the repro runs.
ModelSpec kmeans_spec(const ExperimentConfig& cfg, bool constrained);
ModelSpec mixture_spec(const ExperimentConfig& cfg);
ModelSpec forgetting_spec(const ExperimentConfig& cfg, double lambda);
ModelSpec io_hmm_spec(const ExperimentConfig& cfg);
// The model `fit` would use by default for this experiment's dataset.
ModelSpec default_spec(const ExperimentConfig& cfg);

struct Alignment {
  double accuracy = 0.0;
  // permutation[j] is the truth label (0-based) assigned to predicted label j (0-based).
  std::vector<int> permutation;
};

// Best agreement over all K! relabelings of pred (K <= 8).
Alignment aligned_accuracy(const Labels& pred, const Labels& truth, int K);

// Row-normalized counts of consecutive labels; rows never visited become uniform.
Matrix estimate_transition(const Labels& labels, int K);

// Re-index a transition matrix estimated on predicted labels into truth labels.
Matrix align_transition(const Matrix& estimated, const std::vector<int>& permutation);

// RMSE between recovered theta of predicted factor j and the true theta it maps to.
std::vector<double> aligned_rmse(const std::vector<Vector>& recovered,
                                 const std::vector<Vector>& truth,
                                 const std::vector<int>& permutation);

// Repro drivers.
struct KmeansRepro {
  ExperimentConfig cfg;
  SyntheticData synth;
  FitResult constrained;
  FitResult unconstrained;
  double constrained_violation = 0.0;    // max_k max_j (A theta_k - b)_j^+
  double unconstrained_violation = 0.0;
};

struct MixtureRepro {
  ExperimentConfig cfg;
  SyntheticData synth;
  FitResult fit;
  Alignment alignment;
  std::vector<double> rmse;
};

struct ForgettingRun {
  double lambda = 0.0;
  FitResult fit;
  Alignment alignment;
  std::vector<double> rmse;
};

struct ForgettingRepro {
  ExperimentConfig cfg;
  SyntheticData synth;
  std::vector<ForgettingRun> runs;
};

struct IoHmmRepro {
  ExperimentConfig cfg;
  SyntheticData synth;
  FitResult fit;
  Alignment alignment;
  Matrix estimated;  // in truth label order
  double max_deviation = 0.0;
};

KmeansRepro repro_constrained_kmeans(const ExperimentConfig& cfg, const FitOptions& opts = {});
MixtureRepro repro_mixture_linreg(const ExperimentConfig& cfg, const FitOptions& opts = {});
ForgettingRepro repro_forgetting_q(const ExperimentConfig& cfg, const FitOptions& opts = {});
IoHmmRepro repro_io_hmm(const ExperimentConfig& cfg, const FitOptions& opts = {});

}  // namespace dlfm::experiments
