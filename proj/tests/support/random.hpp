#pragma once

// Small hand-rolled generators for property tests.

#include "dlfm/factors.hpp"
#include "dlfm/kernels.hpp"
#include "dlfm/model.hpp"

#include <random>

namespace testsupport {

using dlfm::Index;
using dlfm::Matrix;
using dlfm::Vector;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Vector vec(Index n, double lo = -1.0, double hi = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
  Vector gaussian(Index n, double sd = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(sd);
    return v;
  }
  Matrix mat(Index r, Index c, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = uniform(lo, hi);
    return m;
  }
  // Symmetric positive definite with eigenvalues bounded below by `floor`.
  Matrix spd(Index n, double floor = 0.1) {
    const Matrix B = mat(n, n);
    return B * B.transpose() + floor * Matrix::Identity(n, n);
  }
  // Strictly positive rows on the simplex.
  dlfm::FactorMatrix stochastic(Index m, int K) {
    Matrix z(m, K);
    for (Index i = 0; i < m; ++i) {
      for (int k = 0; k < K; ++k) z(i, k) = uniform(0.01, 1.0);
      z.row(i) /= z.row(i).sum();
    }
    return dlfm::FactorMatrix(z);
  }
  dlfm::Labels labels(std::size_t m, int K) {
    std::vector<int> v(m);
    for (auto& x : v) x = integer(1, K);
    return dlfm::Labels(v);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Random strictly convex QP with n variables and q two-sided rows; feasible by
// construction (the bounds bracket A x0 for a random x0).
inline dlfm::QpProblem random_qp(Gen& g, Index n, Index q) {
  dlfm::QpProblem p;
  p.P = g.spd(n);
  p.q = g.vec(n, -3.0, 3.0);
  p.A = g.mat(q, n);
  const Vector x0 = g.vec(n, -0.5, 0.5);
  const Vector ax = p.A * x0;
  p.lo.resize(q);
  p.hi.resize(q);
  for (Index i = 0; i < q; ++i) {
    const int shape = g.integer(0, 3);
    p.lo[i] = shape == 1 ? -dlfm::kInf : ax[i] - g.uniform(0.0, 0.5);
    p.hi[i] = shape == 2 ? dlfm::kInf : ax[i] + g.uniform(0.0, 0.5);
    if (shape == 3) p.lo[i] = p.hi[i] = ax[i];
  }
  return p;
}

// Scalar-observation dataset with vector features.
inline dlfm::Dataset vector_dataset(const Matrix& X, const Vector& y, bool ordered = false) {
  dlfm::Dataset d;
  d.features = X;
  d.observations = y;
  d.rows = 1;
  d.ordered = ordered;
  return d;
}

// Location-loss dataset: observations are zero offsets.
inline dlfm::Dataset point_dataset(const Matrix& points) {
  dlfm::Dataset d;
  d.features = points;
  d.observations = dlfm::RowMatrix::Zero(points.rows(), points.cols());
  return d;
}

}  // namespace testsupport
