#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfdgm/jet.hpp"

namespace mfdgm {

using PointRef = const Eigen::Ref<const Eigen::VectorXd>&;

using HamiltonianFn = std::function<double(PointRef x, double rho, PointRef p)>;
using HamiltonianVecFn = std::function<Eigen::VectorXd(PointRef x, double rho, PointRef p)>;
using HamiltonianMatFn = std::function<Eigen::MatrixXd(PointRef x, double rho, PointRef p)>;
/// k -> sum_ij d^3 H / dp_k dp_i dp_j * m_ij
using HamiltonianContractFn =
    std::function<Eigen::VectorXd(PointRef x, double rho, PointRef p, const Eigen::MatrixXd& m)>;

/// Closed-form solution, returned as full jets (mixed Hessian included).
struct ExactSolution {
  std::function<Jet(double t, PointRef x)> phi;
  std::function<Jet(double t, PointRef x)> rho;
};

/// Mean-field game on E = [0,T] x Omega, Omega a box:
///   -d_t phi - nu Lap phi + H(x, rho, grad phi) = 0
///    d_t rho - nu Lap rho - div(rho grad_p H(x, rho, grad phi)) = 0
///    rho(0, x) = rho0(x),  phi(T, x) = g(x, rho(T, x))
///
/// Besides H and the derivatives that appear in the residuals (grad_p H,
/// grad_rho grad_p H, grad_pp H) the problem carries the next order of
/// derivatives, which the exact parameter gradients of the Fokker-Planck loss
/// need.  check_problem_consistency verifies all of them by finite differences.
struct MFGProblem {
  std::string name;
  int d = 1;
  double T = 1.0;
  Eigen::VectorXd omega_lo;
  Eigen::VectorXd omega_hi;
  double nu = 0.0;

  HamiltonianFn H;
  HamiltonianVecFn dH_dp;
  HamiltonianVecFn dH_drho_dp;
  HamiltonianMatFn dH_dpp;
  /// grad_pp H is diagonal for every argument; only d^2 phi / dx_i^2 is needed.
  bool dH_dpp_diagonal = false;

  HamiltonianFn dH_drho;
  HamiltonianVecFn dH_drho_drho_dp;
  HamiltonianMatFn dH_drho_dpp;
  HamiltonianContractFn dH_dppp_contract;

  std::function<double(PointRef x, double rho_T)> g;
  std::function<double(PointRef x, double rho_T)> dg_drho;
  std::function<double(PointRef x)> rho0;

  std::optional<ExactSolution> exact;

  /// Throws UsageError when the box, horizon, viscosity or a callback is invalid.
  void validate() const;
};

/// H(x, rho, p) = |p|^2/2 - beta |x|^2/2 - gamma ln(rho) on [-2,2]^d, T = 1, with
/// the Gaussian closed-form solution.  alpha = (-gamma + sqrt(gamma^2 + 4 nu^2 beta)) / (2 nu).
MFGProblem make_analytic_gaussian(int d, double nu, double beta, double gamma);

/// Traffic flow (LWR) game on [0,1], T = 1:
///   H = p^2/2 - (1 - rho) p,  g = 0,
///   rho0(x) = offset + amplitude exp(-((x - 0.5)/0.1)^2 / 2).
MFGProblem make_traffic_lwr(double nu, double rho0_amplitude = -0.6, double rho0_offset = 0.2);

double analytic_alpha(double nu, double beta, double gamma);

struct ConsistencyEntry {
  std::string name;
  double max_error = 0.0;
};

struct ConsistencyReport {
  std::vector<ConsistencyEntry> entries;
  double tolerance = 1e-5;
  bool passed() const;
  const ConsistencyEntry& worst() const;
};

/// Compares every derivative callback with central differences of the callback
/// one order below at `n_probes` random (x, rho, p), x uniform in Omega,
/// rho uniform in [0.05, 1], p uniform in [-2, 2]^d.  Errors are relative with a
/// unit floor.  Never throws for an inconsistent problem; see passed().
ConsistencyReport check_problem_consistency(const MFGProblem& problem, int n_probes, std::uint64_t seed);

}  // namespace mfdgm
