#pragma once

#include <functional>
#include <vector>

#include "mfdgm/jet.hpp"
#include "mfdgm/problem.hpp"
#include "mfdgm/sampling.hpp"

namespace mfdgm {

/// Anything that can produce jets of a scalar field: a trained network or a
/// closed-form function.
class Field {
 public:
  virtual ~Field() = default;
  virtual Jet jet(double t, PointRef x, JetOrder order) const = 0;
};

class NetworkField final : public Field {
 public:
  NetworkField(const NetworkSpec& spec, const NetworkParams& params) : spec_(spec), params_(params) {}
  Jet jet(double t, PointRef x, JetOrder order) const override;

 private:
  const NetworkSpec& spec_;
  const NetworkParams& params_;
};

/// Wraps a callable returning a full jet (mixed Hessian included).
class ClosedFormField final : public Field {
 public:
  explicit ClosedFormField(std::function<Jet(double, PointRef)> f) : f_(std::move(f)) {}
  Jet jet(double t, PointRef x, JetOrder) const override { return f_(t, x); }

 private:
  std::function<Jet(double, PointRef)> f_;
};

/// d_t phi + nu Lap phi - H(x, rho, grad phi)
double hjb_residual(const MFGProblem& problem, const Jet& phi, const Jet& rho, PointRef x);

/// d_t rho - nu Lap rho - div(rho grad_p H), the divergence expanded as
///   grad_p H . grad rho + rho (grad_rho grad_p H . grad rho) + rho sum_ij (grad_pp H)_ij d_ij phi.
/// `phi` must carry the mixed Hessian unless problem.dH_dpp_diagonal.
double fp_residual(const MFGProblem& problem, const Jet& phi, const Jet& rho, PointRef x);

/// The expanded divergence div(rho grad_p H) alone, from the same jets.
double fp_divergence(const MFGProblem& problem, const Jet& phi, const Jet& rho, PointRef x);

double hjb_residual(const MFGProblem& problem, const Field& phi, const Field& rho, double t, PointRef x);
double fp_residual(const MFGProblem& problem, const Field& phi, const Field& rho, double t, PointRef x);

/// Jet order the phi network needs for the Fokker-Planck residual.
JetOrder fp_phi_order(const MFGProblem& problem);

struct LossParts {
  double residual = 0.0;   // mean squared PDE residual over the interior batch
  double condition = 0.0;  // mean squared terminal / initial mismatch
  double total() const { return residual + condition; }
};

/// Residual loss over `interior` plus terminal-condition loss over the spatial
/// batch `terminal` (evaluated at t = T).  Throws UsageError for empty batches.
LossParts hjb_loss(const MFGProblem& problem, const Field& phi, const Field& rho, const SampleBatch& interior,
                   const SampleBatch& terminal);
/// Residual loss over `interior` plus initial-condition loss over the spatial
/// batch `initial` (evaluated at t = 0).
LossParts fp_loss(const MFGProblem& problem, const Field& phi, const Field& rho, const SampleBatch& interior,
                  const SampleBatch& initial);

struct NetworkRef {
  const NetworkSpec& spec;
  const NetworkParams& params;
};

/// Gradients of a loss with respect to both parameter vectors.
struct LossGradients {
  std::vector<double> phi;
  std::vector<double> rho;
};

/// Network versions of the losses, evaluated with the batched kernel.  When
/// `grads` is non-null it receives the exact gradient of total() with respect
/// to both networks' parameters.
LossParts hjb_loss(const MFGProblem& problem, NetworkRef phi, NetworkRef rho, const SampleBatch& interior,
                   const SampleBatch& terminal, LossGradients* grads = nullptr);
LossParts fp_loss(const MFGProblem& problem, NetworkRef phi, NetworkRef rho, const SampleBatch& interior,
                  const SampleBatch& initial, LossGradients* grads = nullptr);

}  // namespace mfdgm
