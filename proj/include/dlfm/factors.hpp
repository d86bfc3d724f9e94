#pragma once

#include "dlfm/types.hpp"

#include <vector>

namespace dlfm {

// Hardened latent factors, 1-based (values in 1..K).
struct Labels {
  std::vector<int> values;

  Labels() = default;
  explicit Labels(std::vector<int> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  int operator[](std::size_t i) const { return values[i]; }
  bool operator==(const Labels&) const = default;
};

// Relaxed latent factors: an m x K matrix whose rows lie on the probability simplex.
class FactorMatrix {
 public:
  static constexpr double kRowTolerance = 1e-9;

  FactorMatrix() = default;
  // Throws InvalidInput unless every row is nonnegative and sums to 1 within kRowTolerance.
  explicit FactorMatrix(Matrix z);

  static FactorMatrix ones(Index m);
  static FactorMatrix from_labels(const Labels& labels, int K);
  // Clamps negatives to zero and rescales each row to sum 1. Rows that are all zero
  // become uniform.
  static FactorMatrix normalized(Matrix z);

  const Matrix& values() const { return z_; }
  Index rows() const { return z_.rows(); }
  Index cols() const { return z_.cols(); }
  double operator()(Index i, Index k) const { return z_(i, k); }

 private:
  Matrix z_;
};

}  // namespace dlfm
