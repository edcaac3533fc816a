#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "mfdgm/config.hpp"

namespace mfdgm {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int verification_failed = 1;
inline constexpr int config_error = 2;
inline constexpr int numeric_abort = 3;
}  // namespace exit_code

/// Environment variable that overrides the configured output directory.
inline constexpr const char* output_dir_env = "MFDGM_OUT_DIR";

struct CommandLine {
  std::string command;      // train | gradcheck | compare | traffic
  std::string config_path;  // may be empty when a preset is given
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string resume;  // checkpoint to continue from (train, traffic)
};

/// Base configuration: --preset, else the file's own preset, else defaults;
/// then the file's keys; then --seed; then the output directory from --out,
/// the environment, or the config, in that order.  Throws ConfigError.
ExperimentConfig resolve_config(const CommandLine& cl);

/// Runs one command and returns its exit code.  Progress goes to `log`.
int run_command(const CommandLine& cl, std::ostream& log);

int cmd_train(const ExperimentConfig& config, const std::string& resume, std::ostream& log);
int cmd_gradcheck(const ExperimentConfig& config, std::ostream& log);
int cmd_compare(const ExperimentConfig& config, std::ostream& log);
int cmd_traffic(const ExperimentConfig& config, const std::string& resume, std::ostream& log);

}  // namespace mfdgm
