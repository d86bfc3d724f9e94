#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace dlfm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Stand-in for an infinite bound; keeps every bound finite in arithmetic.
inline constexpr double kInf = 1e30;

inline bool is_pos_inf(double v) { return v >= kInf; }
inline bool is_neg_inf(double v) { return v <= -kInf; }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model, dataset or configuration. `field` names the offending path.
class InvalidInput : public Error {
 public:
  InvalidInput(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// An inner convex solve did not produce a usable answer.
class SubsolverFailure : public Error {
 public:
  explicit SubsolverFailure(int factor, const std::string& what, int restart = -1,
                            int iteration = -1)
      : Error(describe(factor, what, restart, iteration)),
        factor_(factor),
        restart_(restart),
        iteration_(iteration),
        detail_(what) {}

  int factor() const { return factor_; }
  int restart() const { return restart_; }
  int iteration() const { return iteration_; }
  const std::string& detail() const { return detail_; }

  SubsolverFailure with_context(int restart, int iteration) const {
    return SubsolverFailure(factor_, detail_, restart, iteration);
  }

 private:
  static std::string describe(int factor, const std::string& what, int restart, int iteration) {
    std::string s = "subsolver failure";
    if (factor >= 0) s += " in factor " + std::to_string(factor + 1);
    if (restart >= 0) s += " (restart " + std::to_string(restart);
    if (iteration >= 0) s += ", iteration " + std::to_string(iteration);
    if (restart >= 0) s += ")";
    return s + ": " + what;
  }

  int factor_;
  int restart_;
  int iteration_;
  std::string detail_;
};

class InstanceTooLarge : public Error {
 public:
  using Error::Error;
};

}  // namespace dlfm
