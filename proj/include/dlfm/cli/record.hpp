#pragma once

// Result file written by `dlfm fit`: model echo, dataset fingerprint, fit result,
// per-phase wall time and tool version.

#include "dlfm/cli/config.hpp"
#include "dlfm/engine.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace dlfm::cli {

inline constexpr const char* kToolVersion = "1.0.0";

// FNV-1a over the dataset shape and the bytes of every value.
std::uint64_t fingerprint(const Dataset& data);
std::string fingerprint_hex(const Dataset& data);

struct PhaseTimes {
  double load_seconds = 0.0;
  double fit_seconds = 0.0;
};

nlohmann::json fit_result_json(const FitResult& result);
nlohmann::json run_record(const FitConfig& cfg, const Dataset& data, const FitResult& result,
                          const PhaseTimes& times);

// Two-space indented JSON with sorted keys and a trailing newline.
std::string serialize(const nlohmann::json& j);

}  // namespace dlfm::cli
