#include "dlfm/fsolve.hpp"

#include "dlfm/model.hpp"

#include <cmath>
#include <limits>

namespace dlfm {

FactorMatrix solve_f_plain(const Matrix& R) {
  Matrix Z = Matrix::Zero(R.rows(), R.cols());
  for (Index i = 0; i < R.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < R.cols(); ++k)
      if (R(i, k) < R(i, best)) best = k;
    Z(i, best) = 1.0;
  }
  return FactorMatrix(std::move(Z));
}

double f_objective(const Matrix& R, double lambda, const Matrix& Z) {
  double v = Z.cwiseProduct(R).sum();
  if (lambda > 0.0) v += lambda * kl_chain(Z);
  return v;
}

Labels harden(const FactorMatrix& Z) {
  std::vector<int> out(static_cast<std::size_t>(Z.rows()));
  const Matrix& z = Z.values();
  for (Index i = 0; i < z.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < z.cols(); ++k)
      if (z(i, k) > z(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best) + 1;
  }
  return Labels(std::move(out));
}

namespace {

using Array = Eigen::ArrayXXd;

void floor_rows(Array& Z, double floor) {
  Z = Z.max(floor);
  Z.colwise() /= Z.rowwise().sum();
}

// Objective from Z and its elementwise log, so logs are taken once per iterate.
double kl_objective(const Array& R, double lambda, const Array& Z, const Array& logZ) {
  double v = (Z * R).sum();
  const Index m = Z.rows();
  if (lambda > 0.0 && m > 1) {
    const auto head = Z.topRows(m - 1);
    const auto tail = Z.bottomRows(m - 1);
    v += lambda * (head * (logZ.topRows(m - 1) - logZ.bottomRows(m - 1)) - head + tail).sum();
  }
  return v;
}

Array kl_gradient(const Array& R, double lambda, const Array& Z, const Array& logZ) {
  Array G = R;
  const Index m = Z.rows();
  if (lambda > 0.0 && m > 1) {
    G.topRows(m - 1) += lambda * (logZ.topRows(m - 1) - logZ.bottomRows(m - 1));
    G.bottomRows(m - 1) += lambda * (1.0 - Z.topRows(m - 1) / Z.bottomRows(m - 1));
  }
  return G;
}

}  // namespace

KlResult solve_f_kl(const Matrix& R_in, double lambda, const FactorMatrix& Z_init,
                    const KlSettings& settings) {
  if (Z_init.rows() != R_in.rows() || Z_init.cols() != R_in.cols())
    throw InvalidInput("Z_init", "shape does not match the loss matrix");
  const Array R = R_in.array();
  Array Z = Z_init.values().array();
  floor_rows(Z, settings.floor);
  Array logZ = Z.log();
  double F = kl_objective(R, lambda, Z, logZ);

  KlResult out;
  if (settings.record_trace) out.trace.push_back(F);
  double eta = 1.0;
  constexpr double kMaxStep = 1e8;
  constexpr double kMinStep = 1e-20;
  int it = 0;
  for (it = 1; it <= settings.max_iter; ++it) {
    Array G = kl_gradient(R, lambda, Z, logZ);
    G.colwise() -= G.rowwise().minCoeff();
    bool accepted = false;
    Array Zn;
    Array logZn;
    double Fn = F;
    while (eta >= kMinStep) {
      Zn = Z * (-eta * G).exp();
      Zn.colwise() /= Zn.rowwise().sum();
      floor_rows(Zn, settings.floor);
      logZn = Zn.log();
      Fn = kl_objective(R, lambda, Zn, logZn);
      // Shifting G by a per-row constant leaves <G, Zn - Z> unchanged on the simplex.
      const Array D = Zn - Z;
      const double model = F + (G * D).sum() + (Zn * (logZn - logZ) - D).sum() / eta;
      if (std::isfinite(Fn) && Fn <= F && Fn <= model + 1e-12 * std::abs(F)) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) {
      out.converged = true;
      break;
    }
    const double decrease = F - Fn;
    Z = std::move(Zn);
    logZ = std::move(logZn);
    F = Fn;
    if (settings.record_trace) out.trace.push_back(F);
    if (decrease <= settings.tol * std::max(1.0, std::abs(F))) {
      out.converged = true;
      break;
    }
    eta = std::min(2.0 * eta, kMaxStep);
  }
  out.iterations = std::min(it, settings.max_iter);
  out.objective = F;
  out.Z = FactorMatrix(Z.matrix());
  return out;
}

}  // namespace dlfm
