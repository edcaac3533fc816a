#include "mfdgm/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mfdgm/error.hpp"
#include "mfdgm/finite_diff.hpp"
#include "mfdgm/sampling.hpp"

namespace mfdgm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void MFGProblem::validate() const {
  if (d < 1) throw UsageError("problem dimension must be >= 1");
  if (!(T > 0.0)) throw UsageError("time horizon must be positive");
  if (!(nu >= 0.0)) throw UsageError("viscosity must be non-negative");
  if (omega_lo.size() != d || omega_hi.size() != d) throw UsageError("domain bounds must have length d");
  if (!(omega_lo.array() < omega_hi.array()).all()) throw UsageError("domain must satisfy lo < hi");
  if (!H || !dH_dp || !dH_drho_dp || !dH_dpp || !dH_drho || !dH_drho_drho_dp || !dH_drho_dpp ||
      !dH_dppp_contract || !g || !dg_drho || !rho0) {
    throw UsageError("problem '" + name + "' is missing a callback");
  }
}

double analytic_alpha(double nu, double beta, double gamma) {
  return (-gamma + std::sqrt(gamma * gamma + 4.0 * nu * nu * beta)) / (2.0 * nu);
}

MFGProblem make_analytic_gaussian(int d, double nu, double beta, double gamma) {
  if (d < 1) throw UsageError("analytic problem needs d >= 1");
  if (!(nu > 0.0)) throw UsageError("analytic problem needs nu > 0");
  if (!(beta > 0.0)) throw UsageError("analytic problem needs beta > 0");
  if (!(gamma >= 0.0)) throw UsageError("analytic problem needs gamma >= 0");

  MFGProblem p;
  p.name = "analytic_gaussian";
  p.d = d;
  p.T = 1.0;
  p.omega_lo = VectorXd::Constant(d, -2.0);
  p.omega_hi = VectorXd::Constant(d, 2.0);
  p.nu = nu;

  const double alpha = analytic_alpha(nu, beta, gamma);
  const double dd = static_cast<double>(d);
  // phi(t,x) = alpha |x|^2 / 2 + drift t, rho(t,x) = norm exp(-k |x|^2 / 2)
  const double drift = -(nu * dd * alpha + gamma * 0.5 * dd * std::log(alpha / (2.0 * std::numbers::pi * nu)));
  const double k = alpha / nu;
  const double norm = std::pow(k / (2.0 * std::numbers::pi), 0.5 * dd);
  const double T = p.T;

  p.H = [beta, gamma](PointRef x, double rho, PointRef q) {
    double h = 0.5 * q.squaredNorm() - 0.5 * beta * x.squaredNorm();
    if (gamma != 0.0) {
      if (!(rho > 0.0)) throw DomainError("ln(rho) coupling needs rho > 0");
      h -= gamma * std::log(rho);
    }
    return h;
  };
  p.dH_dp = [](PointRef, double, PointRef q) -> VectorXd { return q; };
  p.dH_drho_dp = [d](PointRef, double, PointRef) -> VectorXd { return VectorXd::Zero(d); };
  p.dH_dpp = [d](PointRef, double, PointRef) -> MatrixXd { return MatrixXd::Identity(d, d); };
  p.dH_dpp_diagonal = true;
  p.dH_drho = [gamma](PointRef, double rho, PointRef) {
    if (gamma == 0.0) return 0.0;
    if (!(rho > 0.0)) throw DomainError("ln(rho) coupling needs rho > 0");
    return -gamma / rho;
  };
  p.dH_drho_drho_dp = [d](PointRef, double, PointRef) -> VectorXd { return VectorXd::Zero(d); };
  p.dH_drho_dpp = [d](PointRef, double, PointRef) -> MatrixXd { return MatrixXd::Zero(d, d); };
  p.dH_dppp_contract = [d](PointRef, double, PointRef, const MatrixXd&) -> VectorXd { return VectorXd::Zero(d); };

  p.g = [alpha, drift, T](PointRef x, double) { return 0.5 * alpha * x.squaredNorm() + drift * T; };
  p.dg_drho = [](PointRef, double) { return 0.0; };
  p.rho0 = [norm, k](PointRef x) { return norm * std::exp(-0.5 * k * x.squaredNorm()); };

  ExactSolution ex;
  ex.phi = [alpha, drift, d](double t, PointRef x) {
    Jet j;
    j.value = 0.5 * alpha * x.squaredNorm() + drift * t;
    j.dt = drift;
    j.grad_x = alpha * x;
    j.diag_hess = VectorXd::Constant(d, alpha);
    j.mixed_hess = alpha * MatrixXd::Identity(d, d);
    return j;
  };
  ex.rho = [norm, k, d](double, PointRef x) {
    Jet j;
    const double r = norm * std::exp(-0.5 * k * x.squaredNorm());
    j.value = r;
    j.dt = 0.0;
    j.grad_x = -k * r * x;
    MatrixXd hess = r * (k * k * x * x.transpose() - k * MatrixXd::Identity(d, d));
    j.diag_hess = hess.diagonal();
    j.mixed_hess = std::move(hess);
    return j;
  };
  p.exact = std::move(ex);
  return p;
}

MFGProblem make_traffic_lwr(double nu, double rho0_amplitude, double rho0_offset) {
  if (!(nu >= 0.0)) throw UsageError("traffic problem needs nu >= 0");
  MFGProblem p;
  p.name = "traffic_lwr";
  p.d = 1;
  p.T = 1.0;
  p.omega_lo = VectorXd::Constant(1, 0.0);
  p.omega_hi = VectorXd::Constant(1, 1.0);
  p.nu = nu;

  p.H = [](PointRef, double rho, PointRef q) { return 0.5 * q.squaredNorm() - (1.0 - rho) * q[0]; };
  p.dH_dp = [](PointRef, double rho, PointRef q) -> VectorXd { return VectorXd::Constant(1, q[0] - (1.0 - rho)); };
  p.dH_drho_dp = [](PointRef, double, PointRef) -> VectorXd { return VectorXd::Constant(1, 1.0); };
  p.dH_dpp = [](PointRef, double, PointRef) -> MatrixXd { return MatrixXd::Constant(1, 1, 1.0); };
  p.dH_dpp_diagonal = true;
  p.dH_drho = [](PointRef, double, PointRef q) { return q[0]; };
  p.dH_drho_drho_dp = [](PointRef, double, PointRef) -> VectorXd { return VectorXd::Zero(1); };
  p.dH_drho_dpp = [](PointRef, double, PointRef) -> MatrixXd { return MatrixXd::Zero(1, 1); };
  p.dH_dppp_contract = [](PointRef, double, PointRef, const MatrixXd&) -> VectorXd { return VectorXd::Zero(1); };

  p.g = [](PointRef, double) { return 0.0; };
  p.dg_drho = [](PointRef, double) { return 0.0; };
  p.rho0 = [rho0_amplitude, rho0_offset](PointRef x) {
    const double z = (x[0] - 0.5) / 0.1;
    return rho0_offset + rho0_amplitude * std::exp(-0.5 * z * z);
  };
  return p;
}

bool ConsistencyReport::passed() const {
  return std::all_of(entries.begin(), entries.end(),
                     [this](const ConsistencyEntry& e) { return std::isfinite(e.max_error) && e.max_error <= tolerance; });
}

const ConsistencyEntry& ConsistencyReport::worst() const {
  if (entries.empty()) throw UsageError("empty consistency report");
  return *std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (!std::isfinite(a.max_error)) return false;
    if (!std::isfinite(b.max_error)) return true;
    return a.max_error < b.max_error;
  });
}

ConsistencyReport check_problem_consistency(const MFGProblem& problem, int n_probes, std::uint64_t seed) {
  if (n_probes < 1) throw UsageError("check_problem_consistency: need at least one probe");
  problem.validate();
  const int d = problem.d;
  const double h = 1e-5;
  Rng rng(seed, 0x636865636bULL);

  ConsistencyReport rep;
  rep.entries.reserve(16);  // entry() hands out references into this vector
  auto entry = [&rep](const char* name) -> double& {
    for (auto& e : rep.entries)
      if (e.name == name) return e.max_error;
    rep.entries.push_back({name, 0.0});
    return rep.entries.back().max_error;
  };
  auto track = [](double& slot, double a, double b) {
    const double err = relative_difference(a, b, 1.0);
    slot = std::isfinite(err) ? std::max(slot, err) : err;
  };
  double& e_dp = entry("dH_dp");
  double& e_drho = entry("dH_drho");
  double& e_drho_dp = entry("dH_drho_dp");
  double& e_dpp = entry("dH_dpp");
  double& e_dpp_diag = entry("dH_dpp_diagonal");
  double& e_drho_drho_dp = entry("dH_drho_drho_dp");
  double& e_drho_dpp = entry("dH_drho_dpp");
  double& e_dppp = entry("dH_dppp_contract");
  double& e_dg = entry("dg_drho");

  for (int probe = 0; probe < n_probes; ++probe) {
    VectorXd x(d), p(d);
    for (int i = 0; i < d; ++i) x[i] = rng.uniform(problem.omega_lo[i], problem.omega_hi[i]);
    const double rho = rng.uniform(0.05, 1.0);
    for (int i = 0; i < d; ++i) p[i] = rng.uniform(-2.0, 2.0);
    MatrixXd m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = rng.uniform(-1.0, 1.0);

    const VectorXd hp = problem.dH_dp(x, rho, p);
    const VectorXd hrp = problem.dH_drho_dp(x, rho, p);
    const MatrixXd hpp = problem.dH_dpp(x, rho, p);
    const VectorXd hrrp = problem.dH_drho_drho_dp(x, rho, p);
    const MatrixXd hrpp = problem.dH_drho_dpp(x, rho, p);
    const VectorXd hppp = problem.dH_dppp_contract(x, rho, p, m);

    const VectorXd fd_hp = finite_diff_probe([&](const VectorXd& q) { return problem.H(x, rho, q); }, p, h);
    for (int i = 0; i < d; ++i) track(e_dp, hp[i], fd_hp[i]);

    const double fd_hr = (problem.H(x, rho + h, p) - problem.H(x, rho - h, p)) / (2.0 * h);
    track(e_drho, problem.dH_drho(x, rho, p), fd_hr);

    const VectorXd fd_hrp = (problem.dH_dp(x, rho + h, p) - problem.dH_dp(x, rho - h, p)) / (2.0 * h);
    for (int i = 0; i < d; ++i) track(e_drho_dp, hrp[i], fd_hrp[i]);

    for (int k = 0; k < d; ++k) {
      VectorXd qp = p, qm = p;
      qp[k] += h;
      qm[k] -= h;
      const VectorXd col = (problem.dH_dp(x, rho, qp) - problem.dH_dp(x, rho, qm)) / (2.0 * h);
      for (int i = 0; i < d; ++i) track(e_dpp, hpp(i, k), col[i]);
      const double contract_fd =
          ((problem.dH_dpp(x, rho, qp) - problem.dH_dpp(x, rho, qm)).cwiseProduct(m)).sum() / (2.0 * h);
      track(e_dppp, hppp[k], contract_fd);
    }
    if (problem.dH_dpp_diagonal) {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          if (i != j) track(e_dpp_diag, hpp(i, j), 0.0);
    }

    const VectorXd fd_hrrp =
        (problem.dH_drho_dp(x, rho + h, p) - problem.dH_drho_dp(x, rho - h, p)) / (2.0 * h);
    for (int i = 0; i < d; ++i) track(e_drho_drho_dp, hrrp[i], fd_hrrp[i]);

    const MatrixXd fd_hrpp = (problem.dH_dpp(x, rho + h, p) - problem.dH_dpp(x, rho - h, p)) / (2.0 * h);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) track(e_drho_dpp, hrpp(i, j), fd_hrpp(i, j));

    const double fd_g = (problem.g(x, rho + h) - problem.g(x, rho - h)) / (2.0 * h);
    track(e_dg, problem.dg_drho(x, rho), fd_g);
  }
  return rep;
}

}  // namespace mfdgm
