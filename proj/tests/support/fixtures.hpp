#pragma once

// Shared instances: one sample per loss atom and a catalogue of constraint sets.

#include "support/random.hpp"

#include <algorithm>

#include <string>
#include <vector>

namespace testsupport {

// A random (feature, observation) pair that suits the atom.
struct Sample {
  dlfm::RowMatrix X;
  Vector y;
};

inline Sample random_sample(Gen& g, const dlfm::LossAtom& atom, Index n) {
  using dlfm::LossKind;
  Sample s;
  switch (atom.kind) {
    case LossKind::MultinomialLogit: {
      const Index p = 3;
      s.X = g.mat(p, n, -2.0, 2.0);
      s.y = Vector::Zero(p);
      s.y[g.integer(0, static_cast<int>(p) - 1)] = 1.0;
      break;
    }
    case LossKind::BinaryLogit:
      s.X = g.mat(1, n, -2.0, 2.0);
      s.y = Vector::Constant(1, g.integer(0, 1));
      break;
    case LossKind::SquaredDistance:
      s.X = g.mat(1, n, -2.0, 2.0);
      s.y = g.vec(n, -0.5, 0.5);
      break;
    default:
      s.X = g.mat(2, n, -2.0, 2.0);
      s.y = g.vec(2, -2.0, 2.0);
      break;
  }
  return s;
}

inline std::vector<dlfm::LossAtom> all_atoms() {
  using dlfm::FeatureMap;
  using dlfm::LossAtom;
  return {LossAtom::square(FeatureMap::MatrixProduct),
          LossAtom::lp(1.0, FeatureMap::MatrixProduct),
          LossAtom::lp(3.0, FeatureMap::MatrixProduct),
          LossAtom::lp(dlfm::kInf, FeatureMap::MatrixProduct),
          LossAtom::huber(0.7, FeatureMap::MatrixProduct),
          LossAtom::squared_distance(),
          LossAtom::multinomial_logit(),
          LossAtom::binary_logit()};
}

// Lp residuals away from kinks, where a difference quotient is meaningful.
inline bool smooth_at(const dlfm::LossAtom& atom, const Sample& s, const Vector& theta) {
  if (atom.kind != dlfm::LossKind::LpRegression) return true;
  Vector r = (s.X * theta - s.y).cwiseAbs();
  if (r.minCoeff() < 1e-3) return false;
  if (dlfm::is_pos_inf(atom.order)) {
    std::sort(r.data(), r.data() + r.size());
    if (r[r.size() - 1] - r[r.size() - 2] < 1e-3) return false;
  }
  return true;
}

struct NamedSet {
  std::string name;
  std::vector<dlfm::ConstraintAtom> atoms;
};

inline std::vector<NamedSet> constraint_sets(Index n) {
  using dlfm::ConstraintAtom;
  Matrix A(3, n);
  A.setZero();
  A(0, 0) = 1.0;
  A(1, n - 1) = -1.0;
  A.row(2).setOnes();
  Vector b(3);
  b << 0.5, 0.7, 1.0;
  return {
      {"nonneg", {ConstraintAtom::nonneg()}},
      {"nonpos", {ConstraintAtom::nonpos()}},
      {"box", {ConstraintAtom::box(Vector::Constant(n, -0.3), Vector::Constant(n, 0.8))}},
      {"polyhedron", {ConstraintAtom::polyhedron(A, b)}},
      {"nonincreasing", {ConstraintAtom::monotone_nonincreasing()}},
      {"nondecreasing", {ConstraintAtom::monotone_nondecreasing()}},
      {"ball", {ConstraintAtom::norm_ball2(0.9)}},
      {"sum", {ConstraintAtom::sum_equals(0.4)}},
      {"simplex", {ConstraintAtom::sum_equals(1.0), ConstraintAtom::nonneg()}},
      {"nonneg+nonincreasing", {ConstraintAtom::nonneg(), ConstraintAtom::monotone_nonincreasing()}},
      {"nonpos+nondecreasing", {ConstraintAtom::nonpos(), ConstraintAtom::monotone_nondecreasing()}},
      {"box+sum", {ConstraintAtom::box(Vector::Constant(n, -1.0), Vector::Constant(n, 1.0)),
                   ConstraintAtom::sum_equals(0.5)}},
      {"polyhedron+ball", {ConstraintAtom::polyhedron(A, b), ConstraintAtom::norm_ball2(0.8)}},
      {"ball+nonneg", {ConstraintAtom::norm_ball2(1.0), ConstraintAtom::nonneg()}},
  };
}

}  // namespace testsupport
