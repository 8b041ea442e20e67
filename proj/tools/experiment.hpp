#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cgeo_cli {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumeric = 3 };

// Command-line values that take precedence over the config document.
struct RunOverrides {
  std::optional<int> threads;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> units;
  std::optional<bool> plot;
};

int run_experiment(const std::string& config_path, const RunOverrides& overrides, std::ostream& out,
                   std::ostream& err);

int list_models(bool as_json, std::ostream& out, std::ostream& err);

// `sets` holds key=value strings layered on top of params_json.
int eigen_query(const std::string& model, const std::string& theta, const std::string& params_json,
                const std::vector<std::string>& sets, std::ostream& out, std::ostream& err);

// CG_THREADS, if set. Throws std::invalid_argument on a malformed value.
std::optional<int> threads_from_env();

}  // namespace cgeo_cli
