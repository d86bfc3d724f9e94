#include "dlfm/cli/config.hpp"

#include <fstream>
#include <set>

namespace dlfm::cli {

using nlohmann::json;

namespace {

std::string at(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw InvalidInput(path, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw InvalidInput(at(path, key), "unknown key");
}

const json& need(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw InvalidInput(at(path, key), "missing required key");
  return j.at(key);
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw InvalidInput(path, "expected a number");
  return j.get<double>();
}

// Infinite bounds are written as null.
double bound(const json& j, const std::string& path, double inf) {
  if (j.is_null()) return inf;
  return number(j, path);
}

long long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw InvalidInput(path, "expected an integer");
  return j.get<long long>();
}

bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw InvalidInput(path, "expected true or false");
  return j.get<bool>();
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw InvalidInput(path, "expected a string");
  return j.get<std::string>();
}

const json& array(const json& j, const std::string& path) {
  if (!j.is_array()) throw InvalidInput(path, "expected an array");
  return j;
}

Vector vector_of(const json& j, const std::string& path, double inf_lo = 0.0, bool allow_null = false) {
  array(j, path);
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Index>(i)] = allow_null ? bound(j[i], at(path, i), inf_lo) : number(j[i], at(path, i));
  return v;
}

FeatureMap parse_map(const json& j, const std::string& path) {
  const auto s = text(j, path);
  if (s == "inner") return FeatureMap::InnerProduct;
  if (s == "matrix") return FeatureMap::MatrixProduct;
  throw InvalidInput(path, "expected \"inner\" or \"matrix\"");
}

LossAtom parse_loss(const json& j, const std::string& path, Index rows) {
  only_keys(j, path, {"kind", "order", "delta", "map"});
  const auto kind = text(need(j, path, "kind"), at(path, "kind"));
  FeatureMap map = rows > 1 ? FeatureMap::MatrixProduct : FeatureMap::InnerProduct;
  if (j.contains("map")) map = parse_map(j["map"], at(path, "map"));
  LossAtom atom;
  if (kind == "square") {
    atom = LossAtom::square(map);
  } else if (kind == "lp") {
    const json& o = need(j, path, "order");
    double order = 0.0;
    if (o.is_string() && o.get<std::string>() == "inf")
      order = kInf;
    else
      order = number(o, at(path, "order"));
    atom = LossAtom::lp(order, map);
  } else if (kind == "huber") {
    atom = LossAtom::huber(number(need(j, path, "delta"), at(path, "delta")), map);
  } else if (kind == "squared_distance") {
    atom = LossAtom::squared_distance();
  } else if (kind == "multinomial_logit") {
    atom = LossAtom::multinomial_logit();
  } else if (kind == "binary_logit") {
    atom = LossAtom::binary_logit();
  } else {
    throw InvalidInput(at(path, "kind"), "unknown loss kind \"" + kind + "\"");
  }
  if (kind != "lp" && j.contains("order")) throw InvalidInput(at(path, "order"), "only lp takes an order");
  if (kind != "huber" && j.contains("delta")) throw InvalidInput(at(path, "delta"), "only huber takes a delta");
  return atom;
}

ConstraintAtom parse_constraint(const json& j, const std::string& path) {
  if (!j.is_object()) throw InvalidInput(path, "expected an object");
  const auto kind = text(need(j, path, "kind"), at(path, "kind"));
  if (kind == "free" || kind == "nonneg" || kind == "nonpos" || kind == "monotone_nonincreasing" ||
      kind == "monotone_nondecreasing") {
    only_keys(j, path, {"kind"});
    if (kind == "free") return ConstraintAtom::free();
    if (kind == "nonneg") return ConstraintAtom::nonneg();
    if (kind == "nonpos") return ConstraintAtom::nonpos();
    if (kind == "monotone_nonincreasing") return ConstraintAtom::monotone_nonincreasing();
    return ConstraintAtom::monotone_nondecreasing();
  }
  if (kind == "box") {
    only_keys(j, path, {"kind", "lo", "hi"});
    return ConstraintAtom::box(vector_of(need(j, path, "lo"), at(path, "lo"), -kInf, true),
                               vector_of(need(j, path, "hi"), at(path, "hi"), kInf, true));
  }
  if (kind == "polyhedron") {
    only_keys(j, path, {"kind", "A", "b"});
    const json& A = array(need(j, path, "A"), at(path, "A"));
    const Vector b = vector_of(need(j, path, "b"), at(path, "b"));
    Index cols = A.empty() ? 0 : static_cast<Index>(array(A[0], at(at(path, "A"), 0)).size());
    Matrix M(static_cast<Index>(A.size()), cols);
    for (std::size_t r = 0; r < A.size(); ++r) {
      const Vector row = vector_of(A[r], at(at(path, "A"), r));
      if (row.size() != cols) throw InvalidInput(at(at(path, "A"), r), "rows of A must have equal length");
      M.row(static_cast<Index>(r)) = row.transpose();
    }
    return ConstraintAtom::polyhedron(std::move(M), b);
  }
  if (kind == "norm_ball2") {
    only_keys(j, path, {"kind", "radius"});
    return ConstraintAtom::norm_ball2(number(need(j, path, "radius"), at(path, "radius")));
  }
  if (kind == "sum_equals") {
    only_keys(j, path, {"kind", "value"});
    return ConstraintAtom::sum_equals(number(need(j, path, "value"), at(path, "value")));
  }
  throw InvalidInput(at(path, "kind"), "unknown constraint kind \"" + kind + "\"");
}

std::vector<ConstraintAtom> parse_constraints(const json& j, const std::string& path) {
  array(j, path);
  std::vector<ConstraintAtom> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_constraint(j[i], at(path, i)));
  return out;
}

RegularizerAtom parse_regularizer(const json& j, const std::string& path) {
  only_keys(j, path, {"kind", "weight"});
  const auto kind = text(need(j, path, "kind"), at(path, "kind"));
  const double w = number(need(j, path, "weight"), at(path, "weight"));
  if (kind == "l1") return RegularizerAtom::l1(w);
  if (kind == "group_l2") return RegularizerAtom::group_l2(w);
  if (kind == "kl_chain") return RegularizerAtom::kl_chain(w);
  throw InvalidInput(at(path, "kind"), "unknown regularizer kind \"" + kind + "\"");
}

std::vector<RegularizerAtom> parse_regularizers(const json& j, const std::string& path) {
  array(j, path);
  std::vector<RegularizerAtom> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_regularizer(j[i], at(path, i)));
  return out;
}

void parse_controls(const json& j, SolverControls& c) {
  const std::string path = "controls";
  only_keys(j, path, {"eps", "max_iter", "restarts", "seed", "qp_tol", "qp_max_iter", "inner_tol",
                      "inner_max_iter", "f_tol", "f_max_iter"});
  auto int_field = [&](const char* key, int& out) {
    if (!j.contains(key)) return;
    const long long v = integer(j[key], at(path, key));
    if (v < 1 || v > 1000000000LL) throw InvalidInput(at(path, key), "must be in [1, 1e9]");
    out = static_cast<int>(v);
  };
  auto real_field = [&](const char* key, double& out) {
    if (j.contains(key)) out = number(j[key], at(path, key));
  };
  real_field("eps", c.eps);
  int_field("max_iter", c.max_iter);
  int_field("restarts", c.restarts);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0))
      throw InvalidInput("controls.seed", "expected a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  real_field("qp_tol", c.qp_tol);
  int_field("qp_max_iter", c.qp_max_iter);
  real_field("inner_tol", c.inner_tol);
  int_field("inner_max_iter", c.inner_max_iter);
  real_field("f_tol", c.f_tol);
  int_field("f_max_iter", c.f_max_iter);
}

json bound_json(double v) {
  if (is_pos_inf(v) || is_neg_inf(v)) return nullptr;
  return v;
}

json vector_json(const Vector& v, bool bounds = false) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(bounds ? bound_json(v[i]) : json(v[i]));
  return a;
}

json loss_json(const LossAtom& a) {
  json j;
  switch (a.kind) {
    case LossKind::SquareRegression: j["kind"] = "square"; break;
    case LossKind::LpRegression:
      j["kind"] = "lp";
      j["order"] = is_pos_inf(a.order) ? json("inf") : json(a.order);
      break;
    case LossKind::Huber:
      j["kind"] = "huber";
      j["delta"] = a.delta;
      break;
    case LossKind::SquaredDistance: j["kind"] = "squared_distance"; break;
    case LossKind::MultinomialLogit: j["kind"] = "multinomial_logit"; break;
    case LossKind::BinaryLogit: j["kind"] = "binary_logit"; break;
  }
  j["map"] = a.map == FeatureMap::MatrixProduct ? "matrix" : "inner";
  return j;
}

json constraint_json(const ConstraintAtom& a) {
  json j;
  switch (a.kind) {
    case ConstraintKind::Free: j["kind"] = "free"; break;
    case ConstraintKind::Nonneg: j["kind"] = "nonneg"; break;
    case ConstraintKind::Nonpos: j["kind"] = "nonpos"; break;
    case ConstraintKind::MonotoneNonincreasing: j["kind"] = "monotone_nonincreasing"; break;
    case ConstraintKind::MonotoneNondecreasing: j["kind"] = "monotone_nondecreasing"; break;
    case ConstraintKind::Box:
      j["kind"] = "box";
      j["lo"] = vector_json(a.lo, true);
      j["hi"] = vector_json(a.hi, true);
      break;
    case ConstraintKind::Polyhedron: {
      j["kind"] = "polyhedron";
      json A = json::array();
      for (Index r = 0; r < a.A.rows(); ++r) A.push_back(vector_json(a.A.row(r).transpose()));
      j["A"] = A;
      j["b"] = vector_json(a.b);
      break;
    }
    case ConstraintKind::NormBall2:
      j["kind"] = "norm_ball2";
      j["radius"] = a.radius;
      break;
    case ConstraintKind::SumEquals:
      j["kind"] = "sum_equals";
      j["value"] = a.value;
      break;
  }
  return j;
}

json regularizer_json(const RegularizerAtom& r) {
  const char* kind = r.kind == RegularizerKind::L1        ? "l1"
                     : r.kind == RegularizerKind::GroupL2 ? "group_l2"
                                                          : "kl_chain";
  return {{"kind", kind}, {"weight", r.weight}};
}

}  // namespace

FitConfig parse_config(const json& j) {
  only_keys(j, "", {"schema_version", "K", "n", "feature_rows", "ordered", "loss", "losses",
                    "constraints", "constraints_per_factor", "p_regularizers", "f_regularizers",
                    "controls"});
  const long long version = integer(need(j, "", "schema_version"), "schema_version");
  if (version != kSchemaVersion)
    throw InvalidInput("schema_version", "unsupported schema version " + std::to_string(version));

  FitConfig cfg;
  const long long K = integer(need(j, "", "K"), "K");
  const long long n = integer(need(j, "", "n"), "n");
  if (K < 1 || K > 64) throw InvalidInput("K", "K must be in [1, 64]");
  if (n < 1 || n > 100000) throw InvalidInput("n", "n must be in [1, 100000]");
  if (j.contains("feature_rows")) {
    const long long rows = integer(j["feature_rows"], "feature_rows");
    if (rows < 1 || rows > 100000) throw InvalidInput("feature_rows", "feature_rows must be >= 1");
    cfg.feature_rows = rows;
  }
  if (j.contains("ordered")) cfg.ordered = boolean(j["ordered"], "ordered");

  ModelSpec& spec = cfg.spec;
  spec.K = static_cast<int>(K);
  spec.n = n;
  if (j.contains("loss") == j.contains("losses"))
    throw InvalidInput("loss", "give exactly one of \"loss\" and \"losses\"");
  if (j.contains("loss")) {
    spec.loss_per_factor.assign(static_cast<std::size_t>(K), parse_loss(j["loss"], "loss", cfg.feature_rows));
  } else {
    const json& ls = array(j["losses"], "losses");
    if (ls.size() != static_cast<std::size_t>(K))
      throw InvalidInput("losses", "expected " + std::to_string(K) + " entries");
    for (std::size_t k = 0; k < ls.size(); ++k)
      spec.loss_per_factor.push_back(parse_loss(ls[k], at("losses", k), cfg.feature_rows));
  }

  if (j.contains("constraints") && j.contains("constraints_per_factor"))
    throw InvalidInput("constraints", "give at most one of \"constraints\" and \"constraints_per_factor\"");
  if (j.contains("constraints_per_factor")) {
    const json& cs = array(j["constraints_per_factor"], "constraints_per_factor");
    if (cs.size() != static_cast<std::size_t>(K))
      throw InvalidInput("constraints_per_factor", "expected " + std::to_string(K) + " entries");
    for (std::size_t k = 0; k < cs.size(); ++k)
      spec.constraints_per_factor.push_back(parse_constraints(cs[k], at("constraints_per_factor", k)));
  } else {
    const auto shared = j.contains("constraints") ? parse_constraints(j["constraints"], "constraints")
                                                  : std::vector<ConstraintAtom>{};
    spec.constraints_per_factor.assign(static_cast<std::size_t>(K), shared);
  }
  if (j.contains("p_regularizers")) spec.p_regularizers = parse_regularizers(j["p_regularizers"], "p_regularizers");
  if (j.contains("f_regularizers")) spec.f_regularizers = parse_regularizers(j["f_regularizers"], "f_regularizers");
  if (j.contains("controls")) parse_controls(j["controls"], spec.controls);
  return cfg;
}

FitConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config", "cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput("config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

json config_to_json(const FitConfig& cfg) {
  const ModelSpec& s = cfg.spec;
  json j;
  j["schema_version"] = kSchemaVersion;
  j["K"] = s.K;
  j["n"] = s.n;
  j["feature_rows"] = cfg.feature_rows;
  j["ordered"] = cfg.ordered;
  json losses = json::array();
  for (const auto& l : s.loss_per_factor) losses.push_back(loss_json(l));
  j["losses"] = losses;
  json cons = json::array();
  for (const auto& atoms : s.constraints_per_factor) {
    json list = json::array();
    for (const auto& a : atoms) list.push_back(constraint_json(a));
    cons.push_back(list);
  }
  j["constraints_per_factor"] = cons;
  json pr = json::array();
  for (const auto& r : s.p_regularizers) pr.push_back(regularizer_json(r));
  json fr = json::array();
  for (const auto& r : s.f_regularizers) fr.push_back(regularizer_json(r));
  j["p_regularizers"] = pr;
  j["f_regularizers"] = fr;
  const auto& c = s.controls;
  j["controls"] = {{"eps", c.eps},
                   {"max_iter", c.max_iter},
                   {"restarts", c.restarts},
                   {"seed", c.seed},
                   {"qp_tol", c.qp_tol},
                   {"qp_max_iter", c.qp_max_iter},
                   {"inner_tol", c.inner_tol},
                   {"inner_max_iter", c.inner_max_iter},
                   {"f_tol", c.f_tol},
                   {"f_max_iter", c.f_max_iter}};
  return j;
}

}  // namespace dlfm::cli
