#include "dlfm/cli/record.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

namespace dlfm::cli {

using nlohmann::json;

namespace {

void mix(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

template <class T>
void mix_value(std::uint64_t& h, T v) {
  mix(h, &v, sizeof v);
}

// JSON has no infinities or NaN; such values become null.
json finite(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::uint64_t fingerprint(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  mix_value<std::int64_t>(h, data.size());
  mix_value<std::int64_t>(h, data.rows);
  mix_value<std::int64_t>(h, data.features.cols());
  mix_value<std::int64_t>(h, data.observations.cols());
  mix_value<std::uint8_t>(h, data.ordered ? 1 : 0);
  mix(h, data.features.data(), sizeof(double) * static_cast<std::size_t>(data.features.size()));
  mix(h, data.observations.data(), sizeof(double) * static_cast<std::size_t>(data.observations.size()));
  return h;
}

std::string fingerprint_hex(const Dataset& data) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(fingerprint(data)));
  return buf;
}

json fit_result_json(const FitResult& r) {
  json j;
  json thetas = json::array();
  for (const auto& th : r.thetas) {
    json v = json::array();
    for (Index i = 0; i < th.size(); ++i) v.push_back(finite(th[i]));
    thetas.push_back(v);
  }
  j["thetas"] = thetas;
  j["labels"] = r.labels.values;
  json Z = json::array();
  for (Index i = 0; i < r.Z.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < r.Z.cols(); ++k) row.push_back(r.Z(i, k));
    Z.push_back(row);
  }
  j["Z"] = Z;
  json trace = json::array();
  for (const auto& t : r.objective_trace)
    trace.push_back({{"iteration", t.iteration}, {"after_p", finite(t.after_p)}, {"after_f", finite(t.after_f)}});
  j["objective_trace"] = trace;
  j["status"] = to_string(r.status);
  j["iterations"] = r.iterations;
  j["restart_index_of_best"] = r.restart_index_of_best;
  j["seed_used"] = r.seed_used;
  j["objective"] = finite(r.objective);
  j["failed_restarts"] = r.failed_restarts;
  return j;
}

json run_record(const FitConfig& cfg, const Dataset& data, const FitResult& result,
                const PhaseTimes& times) {
  json j;
  j["tool"] = {{"name", "dlfm"}, {"version", kToolVersion}};
  j["spec"] = config_to_json(cfg);
  j["dataset"] = {{"fingerprint", fingerprint_hex(data)},
                  {"samples", data.size()},
                  {"feature_rows", data.rows},
                  {"ordered", data.ordered}};
  j["result"] = fit_result_json(result);
  json per_iter = json::array();
  for (double s : result.iteration_seconds) per_iter.push_back(s);
  j["timing"] = {{"load_seconds", times.load_seconds},
                 {"fit_seconds", times.fit_seconds},
                 {"iteration_seconds", per_iter}};
  return j;
}

std::string serialize(const json& j) { return j.dump(2) + "\n"; }

}  // namespace dlfm::cli
