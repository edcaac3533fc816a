#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfdgm/problem.hpp"
#include "mfdgm/training.hpp"

namespace mfdgm {

enum class ProblemKind { analytic, traffic };

struct ProblemSettings {
  ProblemKind kind = ProblemKind::analytic;
  int d = 1;
  double nu = 1.0;
  double beta = 1.0;
  double gamma = 0.0;
  double rho0_amplitude = -0.6;
  double rho0_offset = 0.2;
  bool operator==(const ProblemSettings&) const = default;
};

struct OutputSettings {
  std::string dir = "out";
  /// Write checkpoint_<k>.txt every this many iterations; 0 = final checkpoint only.
  std::int64_t checkpoint_every = 0;
  bool operator==(const OutputSettings&) const = default;
};

struct CompareSettings {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  double sgd_lr = 1e-3;
  double sgd_weight_decay = 1e-3;
  bool operator==(const CompareSettings&) const = default;
};

struct GradcheckSettings {
  int points = 100;
  std::uint64_t seed = 0;
  /// Added to every scalar activation derivative during the check (fault injection).
  double inject_fault = 0.0;
  bool operator==(const GradcheckSettings&) const = default;
};

struct TrafficSettings {
  int grid_x = 101;
  bool operator==(const TrafficSettings&) const = default;
};

struct ExperimentConfig {
  std::string preset;  // empty for a hand-written config
  std::string source;  // where the preset hyperparameters come from
  ProblemSettings problem;
  TrainConfig train;
  OutputSettings output;
  CompareSettings compare;
  GradcheckSettings gradcheck;
  TrafficSettings traffic;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Names accepted by make_preset.
std::vector<std::string> preset_names();

/// Throws ConfigError for an unknown name.
ExperimentConfig make_preset(const std::string& name);

/// Parses the sectioned key = value format.  A `preset` key in [experiment]
/// selects the starting point, which must come before any other key; every
/// other key overrides it.  Unknown sections or keys, duplicate keys and
/// malformed values raise ConfigError with the line number.  With `base` the
/// starting point is fixed and a preset key in the text is ignored.
ExperimentConfig parse_config(const std::string& text, const ExperimentConfig* base = nullptr);

/// Every field, doubles with 17 significant digits, so
/// parse_config(format_config(c)) == c.
std::string format_config(const ExperimentConfig& config);

ExperimentConfig load_config_file(const std::string& path);

MFGProblem make_problem(const ProblemSettings& settings);

/// FNV-1a of format_config(config) with the fields that may differ between a run
/// and its resumption (output directory, checkpoint cadence, iteration count)
/// normalised away.
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace mfdgm
