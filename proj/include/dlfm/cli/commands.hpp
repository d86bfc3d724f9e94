#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace dlfm::cli {

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitSolver = 3 };

// Command-line overrides; a set flag wins over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> restarts;
  std::optional<double> eps;
  std::optional<int> max_iter;
  bool quiet = false;
  int jobs = 0;  // 0: one per logical processor
};

int cmd_fit(const std::string& config_path, const std::string& data_path,
            const std::string& out_path, const Overrides& flags, std::ostream& log,
            std::ostream& err);

// Writes the dataset CSV plus <stem>.truth.csv, <stem>.thetas.csv (when true
// parameters exist) and <stem>.config.json, a model config that fits it.
int cmd_synth(const std::string& experiment, std::uint64_t seed, const std::string& out_path,
              std::ostream& log, std::ostream& err, bool quiet = false);

int cmd_repro(const std::string& experiment, const std::string& out_dir, const Overrides& flags,
              std::ostream& log, std::ostream& err);

}  // namespace dlfm::cli
