#pragma once

// JSON model configuration. Schema (version 1):
//
//   {
//     "schema_version": 1,
//     "K": 3, "n": 10,
//     "feature_rows": 1,            optional, rows of each sample's feature matrix
//     "ordered": false,             optional, time-series flag
//     "loss": {...} | "losses": [{...} x K],
//     "constraints": [...] | "constraints_per_factor": [[...] x K],   optional
//     "p_regularizers": [...], "f_regularizers": [...],                optional
//     "controls": {"eps", "max_iter", "restarts", "seed", "qp_tol", "qp_max_iter",
//                  "inner_tol", "inner_max_iter", "f_tol", "f_max_iter"}   optional
//   }
//
// Loss:        {"kind": "square" | "lp" | "huber" | "squared_distance" |
//               "multinomial_logit" | "binary_logit", "order": p or "inf",
//               "delta": d, "map": "inner" | "matrix"}
// Constraint:  {"kind": "free" | "nonneg" | "nonpos" | "monotone_nonincreasing" |
//               "monotone_nondecreasing"}, {"kind": "box", "lo": [...], "hi": [...]}
//               (null for an infinite bound), {"kind": "polyhedron", "A": [[...]],
//               "b": [...]}, {"kind": "norm_ball2", "radius": r},
//               {"kind": "sum_equals", "value": v}
// Regularizer: {"kind": "l1" | "group_l2" | "kl_chain", "weight": w}
//
// Unknown keys are rejected.

#include "dlfm/model.hpp"

#include <json.hpp>

#include <string>

namespace dlfm::cli {

inline constexpr int kSchemaVersion = 1;

struct FitConfig {
  ModelSpec spec;
  Index feature_rows = 1;
  bool ordered = false;
};

// Throws InvalidInput naming the offending key path.
FitConfig parse_config(const nlohmann::json& j);
FitConfig load_config(const std::string& path);

nlohmann::json config_to_json(const FitConfig& cfg);

}  // namespace dlfm::cli
