#include "dlfm/model.hpp"

#include "dlfm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dlfm {

LossAtom LossAtom::square(FeatureMap map) { return {LossKind::SquareRegression, map, 2.0, 1.0}; }
LossAtom LossAtom::lp(double order, FeatureMap map) { return {LossKind::LpRegression, map, order, 1.0}; }
LossAtom LossAtom::huber(double delta, FeatureMap map) { return {LossKind::Huber, map, 2.0, delta}; }
LossAtom LossAtom::squared_distance() {
  return {LossKind::SquaredDistance, FeatureMap::InnerProduct, 2.0, 1.0};
}
LossAtom LossAtom::multinomial_logit() {
  return {LossKind::MultinomialLogit, FeatureMap::MatrixProduct, 2.0, 1.0};
}
LossAtom LossAtom::binary_logit() {
  return {LossKind::BinaryLogit, FeatureMap::InnerProduct, 2.0, 1.0};
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::SquareRegression: return "square";
    case LossKind::LpRegression: return "lp";
    case LossKind::Huber: return "huber";
    case LossKind::SquaredDistance: return "squared_distance";
    case LossKind::MultinomialLogit: return "multinomial_logit";
    case LossKind::BinaryLogit: return "binary_logit";
  }
  return "unknown";
}

std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::Free: return "free";
    case ConstraintKind::Nonneg: return "nonneg";
    case ConstraintKind::Nonpos: return "nonpos";
    case ConstraintKind::Box: return "box";
    case ConstraintKind::Polyhedron: return "polyhedron";
    case ConstraintKind::MonotoneNonincreasing: return "monotone_nonincreasing";
    case ConstraintKind::MonotoneNondecreasing: return "monotone_nondecreasing";
    case ConstraintKind::NormBall2: return "norm_ball2";
    case ConstraintKind::SumEquals: return "sum_equals";
  }
  return "unknown";
}

std::string to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::L1: return "l1";
    case RegularizerKind::GroupL2: return "group_l2";
    case RegularizerKind::KLChain: return "kl_chain";
  }
  return "unknown";
}

ConstraintAtom ConstraintAtom::free() { return {}; }
ConstraintAtom ConstraintAtom::nonneg() {
  ConstraintAtom c;
  c.kind = ConstraintKind::Nonneg;
  return c;
}
ConstraintAtom ConstraintAtom::nonpos() {
  ConstraintAtom c;
  c.kind = ConstraintKind::Nonpos;
  return c;
}
ConstraintAtom ConstraintAtom::box(Vector lo, Vector hi) {
  ConstraintAtom c;
  c.kind = ConstraintKind::Box;
  c.lo = std::move(lo);
  c.hi = std::move(hi);
  return c;
}
ConstraintAtom ConstraintAtom::polyhedron(Matrix A, Vector b) {
  ConstraintAtom c;
  c.kind = ConstraintKind::Polyhedron;
  c.A = std::move(A);
  c.b = std::move(b);
  return c;
}
ConstraintAtom ConstraintAtom::monotone_nonincreasing() {
  ConstraintAtom c;
  c.kind = ConstraintKind::MonotoneNonincreasing;
  return c;
}
ConstraintAtom ConstraintAtom::monotone_nondecreasing() {
  ConstraintAtom c;
  c.kind = ConstraintKind::MonotoneNondecreasing;
  return c;
}
ConstraintAtom ConstraintAtom::norm_ball2(double radius) {
  ConstraintAtom c;
  c.kind = ConstraintKind::NormBall2;
  c.radius = radius;
  return c;
}
ConstraintAtom ConstraintAtom::sum_equals(double value) {
  ConstraintAtom c;
  c.kind = ConstraintKind::SumEquals;
  c.value = value;
  return c;
}

ModelSpec ModelSpec::shared(int K, Index n, LossAtom loss, std::vector<ConstraintAtom> constraints) {
  ModelSpec spec;
  spec.K = K;
  spec.n = n;
  spec.loss_per_factor.assign(static_cast<std::size_t>(std::max(K, 0)), loss);
  spec.constraints_per_factor.assign(static_cast<std::size_t>(std::max(K, 0)), constraints);
  return spec;
}

double ModelSpec::kl_weight() const {
  double w = 0.0;
  for (const auto& r : f_regularizers)
    if (r.kind == RegularizerKind::KLChain && r.weight > 0.0) w += r.weight;
  return w;
}

bool ModelSpec::regularized() const {
  auto active = [](const RegularizerAtom& r) { return r.weight > 0.0; };
  return std::any_of(p_regularizers.begin(), p_regularizers.end(), active) ||
         std::any_of(f_regularizers.begin(), f_regularizers.end(), active);
}

Index observation_width(const LossAtom& atom, Index rows, Index n) {
  switch (atom.kind) {
    case LossKind::SquareRegression:
    case LossKind::LpRegression:
    case LossKind::Huber:
    case LossKind::MultinomialLogit:
      return rows;
    case LossKind::SquaredDistance:
      return n;
    case LossKind::BinaryLogit:
      return 1;
  }
  return rows;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].field << ": " << violations[i].message;
  }
  return os.str();
}

namespace {

std::string idx(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

bool all_finite(const Eigen::Ref<const RowMatrix>& m) { return m.allFinite(); }

void check_loss(const LossAtom& atom, const std::string& path, const Dataset* data,
                std::vector<Violation>& out) {
  if (atom.kind == LossKind::Huber && !(atom.delta > 0.0 && std::isfinite(atom.delta)))
    out.push_back({path + ".delta", "delta must be > 0"});
  if (atom.kind == LossKind::LpRegression && !(atom.order >= 1.0))
    out.push_back({path + ".order", "order must be >= 1"});
  if ((atom.kind == LossKind::SquaredDistance || atom.kind == LossKind::BinaryLogit) &&
      atom.map != FeatureMap::InnerProduct)
    out.push_back({path + ".map", to_string(atom.kind) + " requires vector features"});
  if (atom.kind == LossKind::MultinomialLogit && atom.map != FeatureMap::MatrixProduct)
    out.push_back({path + ".map", "multinomial_logit requires matrix features"});
  if (data == nullptr) return;
  if (atom.map == FeatureMap::InnerProduct && data->rows != 1)
    out.push_back({path + ".map", "vector-feature loss on a dataset with " +
                                      std::to_string(data->rows) + " feature rows"});
}

void check_observations(const LossAtom& atom, const std::string& path, const Dataset& data,
                        Index n, std::vector<Violation>& out) {
  const Index width = observation_width(atom, data.rows, n);
  if (data.observations.cols() != width) {
    out.push_back({"data.observations", "expected " + std::to_string(width) +
                                            " observation columns for " + to_string(atom.kind) +
                                            " (" + path + "), got " +
                                            std::to_string(data.observations.cols())});
    return;
  }
  if (atom.kind == LossKind::MultinomialLogit) {
    for (Index i = 0; i < data.size(); ++i) {
      const auto y = data.observation(i);
      bool binary = (y.array() == 0.0 || y.array() == 1.0).all();
      if (!binary || y.sum() != 1.0) {
        out.push_back({idx("data.observations", static_cast<std::size_t>(i)),
                       "multinomial_logit observations must be one-hot"});
        return;
      }
    }
  }
  if (atom.kind == LossKind::BinaryLogit) {
    for (Index i = 0; i < data.size(); ++i) {
      const double y = data.observations(i, 0);
      if (y != 0.0 && y != 1.0) {
        out.push_back({idx("data.observations", static_cast<std::size_t>(i)),
                       "binary_logit observations must be 0 or 1"});
        return;
      }
    }
  }
}

void check_constraints(const std::vector<ConstraintAtom>& atoms, const std::string& path, Index n,
                       std::vector<Violation>& out) {
  bool shapes_ok = true;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    const auto& a = atoms[j];
    const std::string p = idx(path, j);
    switch (a.kind) {
      case ConstraintKind::Box:
        if (a.lo.size() != n || a.hi.size() != n) {
          out.push_back({p, "box bounds must have length " + std::to_string(n)});
          shapes_ok = false;
        } else if ((a.lo.array() > a.hi.array()).any()) {
          out.push_back({p, "box lower bound exceeds upper bound"});
          shapes_ok = false;
        } else if (a.lo.hasNaN() || a.hi.hasNaN()) {
          out.push_back({p, "box bounds must not be NaN"});
          shapes_ok = false;
        }
        break;
      case ConstraintKind::Polyhedron:
        if (a.A.cols() != n || a.A.rows() != a.b.size() || a.A.rows() == 0) {
          out.push_back({p, "polyhedron A must be q x " + std::to_string(n) +
                                " with b of length q"});
          shapes_ok = false;
        } else if (!a.A.allFinite() || a.b.hasNaN()) {
          out.push_back({p, "polyhedron data must be finite"});
          shapes_ok = false;
        }
        break;
      case ConstraintKind::NormBall2:
        if (!(a.radius > 0.0) || !std::isfinite(a.radius)) {
          out.push_back({p + ".radius", "radius must be > 0"});
          shapes_ok = false;
        }
        break;
      case ConstraintKind::SumEquals:
        if (!std::isfinite(a.value)) {
          out.push_back({p + ".value", "value must be finite"});
          shapes_ok = false;
        }
        break;
      default:
        break;
    }
  }
  if (!shapes_ok || atoms.empty()) return;

  bool feasible = false;
  try {
    const Vector x = project(atoms, Vector::Zero(n));
    feasible = constraint_violation(atoms, x) <= 1e-6;
  } catch (const Error&) {
    feasible = false;
  }
  if (!feasible) out.push_back({path, "feasible set is empty"});
}

void check_regularizers(const std::vector<RegularizerAtom>& regs, const std::string& path,
                        bool p_side, bool ordered, std::vector<Violation>& out) {
  for (std::size_t j = 0; j < regs.size(); ++j) {
    const auto& r = regs[j];
    const std::string p = idx(path, j);
    if (!(r.weight >= 0.0) || !std::isfinite(r.weight))
      out.push_back({p + ".weight", "weight must be >= 0"});
    const bool is_p = r.kind != RegularizerKind::KLChain;
    if (is_p != p_side)
      out.push_back({p, to_string(r.kind) + " belongs to the " +
                            std::string(is_p ? "P" : "F") + "-problem"});
    if (r.kind == RegularizerKind::KLChain && !ordered)
      out.push_back({p, "kl_chain requires an ordered (time-series) dataset"});
  }
}

}  // namespace

ValidationReport validate(const ModelSpec& spec, const Dataset& data) {
  ValidationReport report;
  auto& out = report.violations;

  if (spec.K < 1) out.push_back({"K", "K must be >= 1"});
  if (spec.n < 1) out.push_back({"n", "n must be >= 1"});
  const auto K = static_cast<std::size_t>(std::max(spec.K, 0));
  if (spec.loss_per_factor.size() != K)
    out.push_back({"loss_per_factor", "expected " + std::to_string(K) + " losses, got " +
                                          std::to_string(spec.loss_per_factor.size())});
  if (spec.constraints_per_factor.size() != K)
    out.push_back({"constraints_per_factor",
                   "expected " + std::to_string(K) + " constraint lists, got " +
                       std::to_string(spec.constraints_per_factor.size())});

  const auto& c = spec.controls;
  if (!(c.eps >= 0.0)) out.push_back({"controls.eps", "eps must be >= 0"});
  if (c.max_iter < 1) out.push_back({"controls.max_iter", "max_iter must be >= 1"});
  if (c.restarts < 1) out.push_back({"controls.restarts", "restarts must be >= 1"});
  if (!(c.qp_tol > 0.0)) out.push_back({"controls.qp_tol", "qp_tol must be > 0"});
  if (c.qp_max_iter < 1) out.push_back({"controls.qp_max_iter", "qp_max_iter must be >= 1"});
  if (!(c.inner_tol > 0.0)) out.push_back({"controls.inner_tol", "inner_tol must be > 0"});
  if (c.inner_max_iter < 1)
    out.push_back({"controls.inner_max_iter", "inner_max_iter must be >= 1"});
  if (!(c.f_tol > 0.0)) out.push_back({"controls.f_tol", "f_tol must be > 0"});
  if (c.f_max_iter < 1) out.push_back({"controls.f_max_iter", "f_max_iter must be >= 1"});

  // Dataset shape.
  bool data_ok = true;
  if (data.size() < 1) {
    out.push_back({"data", "dataset must contain at least one sample"});
    data_ok = false;
  }
  if (data.rows < 1) {
    out.push_back({"data.rows", "feature rows must be >= 1"});
    data_ok = false;
  } else if (spec.n >= 1 && data.features.cols() != data.rows * spec.n) {
    out.push_back({"data.features", "expected " + std::to_string(data.rows * spec.n) +
                                        " feature columns, got " +
                                        std::to_string(data.features.cols())});
    data_ok = false;
  }
  if (data.observations.rows() != data.features.rows()) {
    out.push_back({"data.observations", "observation count differs from feature count"});
    data_ok = false;
  }
  if (data_ok && (!all_finite(data.features) || !all_finite(data.observations))) {
    out.push_back({"data", "features and observations must be finite"});
    data_ok = false;
  }

  for (std::size_t k = 0; k < spec.loss_per_factor.size(); ++k) {
    const std::string path = idx("loss_per_factor", k);
    check_loss(spec.loss_per_factor[k], path, data_ok ? &data : nullptr, out);
    if (data_ok && spec.n >= 1) check_observations(spec.loss_per_factor[k], path, data, spec.n, out);
  }
  if (spec.n >= 1) {
    for (std::size_t k = 0; k < spec.constraints_per_factor.size(); ++k)
      check_constraints(spec.constraints_per_factor[k], idx("constraints_per_factor", k), spec.n,
                        out);
  }
  check_regularizers(spec.p_regularizers, "p_regularizers", true, data.ordered, out);
  check_regularizers(spec.f_regularizers, "f_regularizers", false, data.ordered, out);
  return report;
}

void require_valid(const ModelSpec& spec, const Dataset& data) {
  const auto report = validate(spec, data);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    throw InvalidInput(v.field, v.message);
  }
}

namespace {

double huber(double u, double delta) {
  const double a = std::abs(u);
  return a <= delta ? u * u : 2.0 * delta * a - delta * delta;
}

double huber_d(double u, double delta) {
  if (std::abs(u) <= delta) return 2.0 * u;
  return u > 0 ? 2.0 * delta : -2.0 * delta;
}

double sign(double u) { return (u > 0) - (u < 0); }

double log1pexp(double u) { return u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

double sigmoid(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

// Value of the outer atom at the inner residual u and, optionally, its derivative.
double outer(const LossAtom& atom, const Vector& u, const Eigen::Ref<const Vector>& y,
             Vector* du) {
  switch (atom.kind) {
    case LossKind::SquareRegression:
    case LossKind::SquaredDistance: {
      if (du) *du = 2.0 * u;
      return u.squaredNorm();
    }
    case LossKind::Huber: {
      double v = 0.0;
      if (du) du->resize(u.size());
      for (Index j = 0; j < u.size(); ++j) {
        v += huber(u[j], atom.delta);
        if (du) (*du)[j] = huber_d(u[j], atom.delta);
      }
      return v;
    }
    case LossKind::LpRegression: {
      const double p = atom.order;
      if (du) du->setZero(u.size());
      if (is_pos_inf(p) || std::isinf(p)) {
        Index arg = 0;
        const double v = u.cwiseAbs().maxCoeff(&arg);
        if (du && v > 0.0) (*du)[arg] = sign(u[arg]);
        return v;
      }
      if (p == 1.0) {
        if (du) *du = u.unaryExpr([](double t) { return sign(t); });
        return u.cwiseAbs().sum();
      }
      const double scale = u.cwiseAbs().maxCoeff();
      if (scale == 0.0) return 0.0;
      const Vector w = u.cwiseAbs() / scale;
      const double s = w.array().pow(p).sum();
      const double norm = scale * std::pow(s, 1.0 / p);
      if (du) {
        // d||u||_p / du_j = sign(u_j) (|u_j| / ||u||_p)^{p-1}
        for (Index j = 0; j < u.size(); ++j)
          (*du)[j] = sign(u[j]) * std::pow(std::abs(u[j]) / norm, p - 1.0);
      }
      return norm;
    }
    case LossKind::MultinomialLogit: {
      const double mx = u.maxCoeff();
      const Vector e = (u.array() - mx).exp().matrix();
      const double s = e.sum();
      if (du) *du = e / s - y;
      return mx + std::log(s) - y.dot(u);
    }
    case LossKind::BinaryLogit: {
      const double t = u[0];
      if (du) *du = Vector::Constant(1, sigmoid(t) - y[0]);
      return log1pexp(t) - y[0] * t;
    }
  }
  return 0.0;
}

Vector inner(const LossAtom& atom, const Eigen::Ref<const RowMatrix>& X,
             const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& theta) {
  switch (atom.kind) {
    case LossKind::SquaredDistance: {
      if (X.rows() != 1 || X.cols() != theta.size() || y.size() != theta.size())
        throw InvalidInput("feature", "squared_distance expects feature and observation of length n");
      return theta - X.row(0).transpose() - y;
    }
    case LossKind::SquareRegression:
    case LossKind::LpRegression:
    case LossKind::Huber: {
      if (X.cols() != theta.size() || y.size() != X.rows())
        throw InvalidInput("feature", "regression shapes do not match");
      return X * theta - y;
    }
    case LossKind::MultinomialLogit: {
      if (X.cols() != theta.size() || y.size() != X.rows())
        throw InvalidInput("feature", "multinomial_logit shapes do not match");
      return X * theta;
    }
    case LossKind::BinaryLogit: {
      if (X.size() != theta.size() || y.size() != 1)
        throw InvalidInput("feature", "binary_logit shapes do not match");
      return Vector::Constant(1, X.row(0).dot(theta));
    }
  }
  return {};
}

}  // namespace

double loss_eval(const LossAtom& atom, const Eigen::Ref<const RowMatrix>& feature,
                 const Eigen::Ref<const Vector>& observation, const Eigen::Ref<const Vector>& theta) {
  const Vector u = inner(atom, feature, observation, theta);
  return outer(atom, u, observation, nullptr);
}

Vector loss_grad(const LossAtom& atom, const Eigen::Ref<const RowMatrix>& feature,
                 const Eigen::Ref<const Vector>& observation, const Eigen::Ref<const Vector>& theta) {
  Vector g = Vector::Zero(theta.size());
  loss_eval_accumulate(atom, feature, observation, theta, 1.0, g);
  return g;
}

double loss_eval_accumulate(const LossAtom& atom, const Eigen::Ref<const RowMatrix>& feature,
                            const Eigen::Ref<const Vector>& observation,
                            const Eigen::Ref<const Vector>& theta, double weight, Vector& grad) {
  const Vector u = inner(atom, feature, observation, theta);
  Vector du;
  const double v = outer(atom, u, observation, &du);
  if (weight != 0.0) {
    if (atom.kind == LossKind::SquaredDistance)
      grad.noalias() += weight * du;
    else
      grad.noalias() += weight * (feature.transpose() * du);
  }
  return v;
}

Matrix loss_matrix(const ModelSpec& spec, const Dataset& data, std::span<const Vector> thetas) {
  const Index m = data.size();
  Matrix R(m, spec.K);
  for (int k = 0; k < spec.K; ++k) {
    const auto& atom = spec.loss_per_factor[static_cast<std::size_t>(k)];
    const auto& theta = thetas[static_cast<std::size_t>(k)];
    for (Index i = 0; i < m; ++i) R(i, k) = loss_eval(atom, data.feature(i), data.observation(i), theta);
  }
  return R;
}

double kl_divergence(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
  double d = 0.0;
  for (Index j = 0; j < u.size(); ++j) {
    const double a = u[j];
    const double b = v[j];
    if (a > 0.0) {
      if (b <= 0.0) return std::numeric_limits<double>::infinity();
      d += a * std::log(a / b) - a + b;
    } else {
      d += b;
    }
  }
  return d;
}

double kl_chain(const Matrix& z) {
  double s = 0.0;
  for (Index t = 0; t + 1 < z.rows(); ++t)
    s += kl_divergence(z.row(t).transpose(), z.row(t + 1).transpose());
  return s;
}

double p_regularizer_value(const ModelSpec& spec, std::span<const Vector> thetas) {
  double v = 0.0;
  for (const auto& r : spec.p_regularizers) {
    if (r.weight == 0.0) continue;
    for (const auto& th : thetas) {
      if (r.kind == RegularizerKind::L1) v += r.weight * th.lpNorm<1>();
      if (r.kind == RegularizerKind::GroupL2) v += r.weight * th.norm();
    }
  }
  return v;
}

double f_regularizer_value(const ModelSpec& spec, const FactorMatrix& Z) {
  const double w = spec.kl_weight();
  return w > 0.0 ? w * kl_chain(Z.values()) : 0.0;
}

double objective(const ModelSpec& spec, const Dataset& data, std::span<const Vector> thetas,
                 const FactorMatrix& Z) {
  const Matrix R = loss_matrix(spec, data, thetas);
  return Z.values().cwiseProduct(R).sum() + p_regularizer_value(spec, thetas) +
         f_regularizer_value(spec, Z);
}

// FactorMatrix lives with the model since the objective is defined on it.
FactorMatrix::FactorMatrix(Matrix z) : z_(std::move(z)) {
  if (!z_.allFinite()) throw InvalidInput("Z", "factor matrix must be finite");
  for (Index i = 0; i < z_.rows(); ++i) {
    if ((z_.row(i).array() < 0.0).any() || (z_.row(i).array() > 1.0 + kRowTolerance).any())
      throw InvalidInput("Z[" + std::to_string(i) + "]", "entries must lie in [0, 1]");
    if (std::abs(z_.row(i).sum() - 1.0) > kRowTolerance)
      throw InvalidInput("Z[" + std::to_string(i) + "]", "row must sum to 1");
  }
}

FactorMatrix FactorMatrix::ones(Index m) { return FactorMatrix(Matrix::Ones(m, 1)); }

FactorMatrix FactorMatrix::from_labels(const Labels& labels, int K) {
  Matrix z = Matrix::Zero(static_cast<Index>(labels.size()), K);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 1 || l > K) throw InvalidInput("labels", "label out of range 1..K");
    z(static_cast<Index>(i), l - 1) = 1.0;
  }
  return FactorMatrix(std::move(z));
}

FactorMatrix FactorMatrix::normalized(Matrix z) {
  z = z.cwiseMax(0.0);
  for (Index i = 0; i < z.rows(); ++i) {
    const double s = z.row(i).sum();
    if (s > 0.0)
      z.row(i) /= s;
    else
      z.row(i).setConstant(1.0 / static_cast<double>(z.cols()));
  }
  return FactorMatrix(std::move(z));
}

}  // namespace dlfm
