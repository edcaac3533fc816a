#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfdgm/jet.hpp"
#include "mfdgm/network.hpp"

namespace mfdgm {

enum class OptimizerKind { adam, sgd };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Throws UsageError unless lr > 0, weight_decay >= 0 and the betas are in [0, 1).
  void validate() const;
  bool operator==(const OptimizerSettings&) const = default;
};

struct OptimizerState {
  OptimizerSettings settings;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step_count = 0;

  bool operator==(const OptimizerState&) const = default;
};

OptimizerState make_optimizer(const OptimizerSettings& settings, std::size_t n_params);

/// Weight decay is coupled: g' = g + weight_decay * theta feeds the moments.
void adam_step(OptimizerState& state, NetworkParams& params, const std::vector<double>& grads);
void sgd_step(OptimizerState& state, NetworkParams& params, const std::vector<double>& grads);

/// Dispatches on state.settings.kind.
void optimizer_step(OptimizerState& state, NetworkParams& params, const std::vector<double>& grads);
inline void optimizer_step(OptimizerState& state, NetworkParams& params, const ParamGradient& grads) {
  optimizer_step(state, params, grads.values);
}

}  // namespace mfdgm
