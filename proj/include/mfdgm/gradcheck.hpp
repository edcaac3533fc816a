#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfdgm/activation.hpp"
#include "mfdgm/problem.hpp"

namespace mfdgm {

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_error <= tolerance; }
};

struct GradcheckReport {
  std::vector<CheckResult> checks;

  bool passed() const;
  /// Largest error-to-tolerance ratio.  Throws std::logic_error when empty.
  const CheckResult& worst() const;
  void append(const GradcheckReport& other);
  /// One line per check: name, max relative error, tolerance, PASS/FAIL.
  std::string str() const;
};

struct GradcheckOptions {
  int points = 100;
  std::uint64_t seed = 0;
  std::vector<int> dims{1, 2, 10};
  std::vector<Activation> activations{Activation::tanh, Activation::softplus, Activation::relu, Activation::softmax};
  double jet_step = 1e-5;
  double jet_tolerance = 1e-6;
  double param_step = 1e-4;
  double param_tolerance = 1e-5;
  int param_directions = 3;
  int param_batch = 8;
  double consistency_tolerance = 1e-5;
  double divergence_step = 1e-5;
  double divergence_tolerance = 1e-5;
};

/// d/dt and grad_x against central differences of the value, d^2/dx_i^2 and
/// the mixed Hessian against central differences of the jet gradient.  Relative
/// errors use a floor of 1e-3 so fields that vanish are compared absolutely.
GradcheckReport check_jets(const GradcheckOptions& options);

/// Exact parameter gradients (generic jet loss at both orders, HJB and FP
/// network losses) against directional central differences.
GradcheckReport check_param_gradients(const GradcheckOptions& options);

/// Problem callbacks against finite differences of themselves, both built-in problems.
GradcheckReport check_problems(const GradcheckOptions& options);

/// Expanded divergence against central differences of the flux rho grad_p H.
GradcheckReport check_divergence(const MFGProblem& problem, const GradcheckOptions& options,
                                 const std::string& label);

/// Everything above.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace mfdgm
