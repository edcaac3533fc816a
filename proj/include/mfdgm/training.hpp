#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfdgm/error.hpp"
#include "mfdgm/evaluation.hpp"
#include "mfdgm/network.hpp"
#include "mfdgm/optimizer.hpp"
#include "mfdgm/problem.hpp"
#include "mfdgm/residuals.hpp"
#include "mfdgm/sampling.hpp"

namespace mfdgm {

enum class TrainMode { mfdgm, dgm_mfg };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::mfdgm;
  std::int64_t iterations = 1;
  int batch_interior = 1;
  int batch_condition = 1;
  std::uint64_t seed = 0;
  OptimizerSettings phi_opt;
  OptimizerSettings rho_opt;
  NetworkSpec phi_net;
  NetworkSpec rho_net;
  int record_every = 100;
  /// Record relative errors when the problem has an exact solution.
  bool track_error = true;
  ProbeSettings probe;

  /// Throws UsageError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct MetricsRecord {
  std::int64_t iteration = 0;  // completed iterations
  LossParts hjb;
  LossParts fp;
  std::optional<RelativeErrors> error;
};

/// Everything training needs to continue bit-exactly.
struct TrainingState {
  NetworkParams phi;
  NetworkParams rho;
  OptimizerState phi_opt;
  OptimizerState rho_opt;
  Rng rng;
  std::int64_t iteration = 0;
  std::vector<MetricsRecord> metrics;
};

/// Networks initialised from seed*2 (phi) and seed*2+1 (rho); sampling stream
/// keyed on seed.
TrainingState init_training(const MFGProblem& problem, const TrainConfig& config);

/// Raised when a loss or gradient turns non-finite.  The training state keeps
/// the parameters and metrics from before the failing iteration.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::int64_t iteration)
      : NumericError(what), iteration_(iteration) {}
  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

struct TrainHooks {
  /// Called after every completed iteration.
  std::function<void(const TrainingState&)> after_iteration;
  /// Called after a metrics record is appended.
  std::function<void(const TrainingState&, const MetricsRecord&)> on_record;
};

/// Runs iterations state.iteration .. config.iterations-1.
/// mfdgm:   sample, HJB loss, update both networks; sample again, FP loss with the
///          updated weights, update both networks.
/// dgm_mfg: one sample set, HJB + FP summed, one update of both networks.
void train(const MFGProblem& problem, const TrainConfig& config, TrainingState& state, const TrainHooks& hooks = {});

TrainingState train_mfdgm(const MFGProblem& problem, TrainConfig config);
TrainingState train_dgm_mfg(const MFGProblem& problem, TrainConfig config);

}  // namespace mfdgm
