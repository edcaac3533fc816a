#include "mfdgm/residuals.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "mfdgm/error.hpp"

namespace mfdgm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Jet NetworkField::jet(double t, PointRef x, JetOrder order) const { return eval_jet(params_, spec_, t, x, order); }

JetOrder fp_phi_order(const MFGProblem& problem) {
  return problem.dH_dpp_diagonal ? JetOrder::diagonal : JetOrder::mixed;
}

namespace {

[[noreturn]] void rethrow_at(const DomainError& e, double t, PointRef x) {
  std::ostringstream os;
  os.precision(17);
  os << e.what() << " at t=" << t << ", x=[";
  for (Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << "]";
  throw DomainError(os.str());
}

// d r / d(jet field) for one sample's HJB residual.
struct HjbPartials {
  VectorXd phi_grad;  // -grad_p H
  double rho_value = 0.0;  // -dH/drho
};

double hjb_eval(const MFGProblem& pr, const Jet& phi, const Jet& rho, PointRef x, HjbPartials* part) {
  const double r = phi.dt + pr.nu * phi.laplacian() - pr.H(x, rho.value, phi.grad_x);
  if (part) {
    part->phi_grad = -pr.dH_dp(x, rho.value, phi.grad_x);
    part->rho_value = -pr.dH_drho(x, rho.value, phi.grad_x);
  }
  return r;
}

struct FpPartials {
  VectorXd rho_grad;
  double rho_value = 0.0;
  VectorXd phi_grad;
  MatrixXd phi_hess;  // d r / d(d_ij phi); only the diagonal is used in diagonal mode
};

double fp_eval(const MFGProblem& pr, const Jet& phi, const Jet& rho, PointRef x, FpPartials* part) {
  const bool diagonal = pr.dH_dpp_diagonal;
  if (!diagonal && !phi.mixed_hess) throw ShapeError("Fokker-Planck residual needs the mixed Hessian of phi");
  const VectorXd& p = phi.grad_x;
  const double rv = rho.value;
  const VectorXd hp = pr.dH_dp(x, rv, p);
  const VectorXd hrp = pr.dH_drho_dp(x, rv, p);
  const MatrixXd hpp = pr.dH_dpp(x, rv, p);

  MatrixXd hess;
  double hpp_hess;
  if (diagonal) {
    hess = MatrixXd(phi.diag_hess.asDiagonal());
    hpp_hess = hpp.diagonal().dot(phi.diag_hess);
  } else {
    hess = *phi.mixed_hess;
    hpp_hess = hpp.cwiseProduct(hess).sum();
  }
  const double hrp_grad = hrp.dot(rho.grad_x);
  const double divergence = hp.dot(rho.grad_x) + rv * hrp_grad + rv * hpp_hess;
  const double r = rho.dt - pr.nu * rho.laplacian() - divergence;

  if (part) {
    const VectorXd hrrp = pr.dH_drho_drho_dp(x, rv, p);
    const MatrixXd hrpp = pr.dH_drho_dpp(x, rv, p);
    const VectorXd hppp = pr.dH_dppp_contract(x, rv, p, hess);
    const double hrpp_hess = diagonal ? hrpp.diagonal().dot(phi.diag_hess) : hrpp.cwiseProduct(hess).sum();
    part->rho_grad = -(hp + rv * hrp);
    part->rho_value = -(2.0 * hrp_grad + rv * hrrp.dot(rho.grad_x) + hpp_hess + rv * hrpp_hess);
    part->phi_grad = -(hpp * rho.grad_x + rv * (hrpp * rho.grad_x) + rv * hppp);
    part->phi_hess = -rv * hpp;
  }
  return r;
}

void require_nonempty(const SampleBatch& a, const SampleBatch& b, const char* who) {
  if (a.size() == 0 || b.size() == 0) throw UsageError(std::string(who) + ": empty batch");
}

void require_dims(const MFGProblem& pr, const SampleBatch& interior, const SampleBatch& cond) {
  if (interior.dim() != pr.d || cond.dim() != pr.d) throw ShapeError("batch dimension does not match problem");
  if (interior.times.size() != interior.size()) throw ShapeError("interior batch needs times");
}

}  // namespace

double fp_divergence(const MFGProblem& problem, const Jet& phi, const Jet& rho, PointRef x) {
  if (!problem.dH_dpp_diagonal && !phi.mixed_hess) throw ShapeError("divergence needs the mixed Hessian of phi");
  const VectorXd& p = phi.grad_x;
  const MatrixXd hpp = problem.dH_dpp(x, rho.value, p);
  const double hpp_hess =
      problem.dH_dpp_diagonal ? hpp.diagonal().dot(phi.diag_hess) : hpp.cwiseProduct(*phi.mixed_hess).sum();
  return problem.dH_dp(x, rho.value, p).dot(rho.grad_x) +
         rho.value * problem.dH_drho_dp(x, rho.value, p).dot(rho.grad_x) + rho.value * hpp_hess;
}

double hjb_residual(const MFGProblem& problem, const Jet& phi, const Jet& rho, PointRef x) {
  return hjb_eval(problem, phi, rho, x, nullptr);
}

double fp_residual(const MFGProblem& problem, const Jet& phi, const Jet& rho, PointRef x) {
  return fp_eval(problem, phi, rho, x, nullptr);
}

double hjb_residual(const MFGProblem& problem, const Field& phi, const Field& rho, double t, PointRef x) {
  try {
    return hjb_eval(problem, phi.jet(t, x, JetOrder::diagonal), rho.jet(t, x, JetOrder::value), x, nullptr);
  } catch (const DomainError& e) {
    rethrow_at(e, t, x);
  }
}

double fp_residual(const MFGProblem& problem, const Field& phi, const Field& rho, double t, PointRef x) {
  try {
    return fp_eval(problem, phi.jet(t, x, fp_phi_order(problem)), rho.jet(t, x, JetOrder::diagonal), x, nullptr);
  } catch (const DomainError& e) {
    rethrow_at(e, t, x);
  }
}

LossParts hjb_loss(const MFGProblem& problem, const Field& phi, const Field& rho, const SampleBatch& interior,
                   const SampleBatch& terminal) {
  require_nonempty(interior, terminal, "hjb_loss");
  require_dims(problem, interior, terminal);
  LossParts out;
  for (Index b = 0; b < interior.size(); ++b) {
    const double r = hjb_residual(problem, phi, rho, interior.times[b], interior.points.col(b));
    out.residual += r * r;
  }
  out.residual /= static_cast<double>(interior.size());
  for (Index s = 0; s < terminal.size(); ++s) {
    const VectorXd x = terminal.points.col(s);
    const double m = phi.jet(problem.T, x, JetOrder::value).value - problem.g(x, rho.jet(problem.T, x, JetOrder::value).value);
    out.condition += m * m;
  }
  out.condition /= static_cast<double>(terminal.size());
  return out;
}

LossParts fp_loss(const MFGProblem& problem, const Field& phi, const Field& rho, const SampleBatch& interior,
                  const SampleBatch& initial) {
  require_nonempty(interior, initial, "fp_loss");
  require_dims(problem, interior, initial);
  LossParts out;
  for (Index b = 0; b < interior.size(); ++b) {
    const double r = fp_residual(problem, phi, rho, interior.times[b], interior.points.col(b));
    out.residual += r * r;
  }
  out.residual /= static_cast<double>(interior.size());
  for (Index s = 0; s < initial.size(); ++s) {
    const VectorXd x = initial.points.col(s);
    const double m = rho.jet(0.0, x, JetOrder::value).value - problem.rho0(x);
    out.condition += m * m;
  }
  out.condition /= static_cast<double>(initial.size());
  return out;
}

LossParts hjb_loss(const MFGProblem& problem, NetworkRef phi, NetworkRef rho, const SampleBatch& interior,
                   const SampleBatch& terminal, LossGradients* grads) {
  require_nonempty(interior, terminal, "hjb_loss");
  require_dims(problem, interior, terminal);
  const int d = problem.d;
  const Index nb = interior.size();
  const Index ns = terminal.size();
  const SampleBatch term = at_time(terminal, problem.T);

  const batched::JetEvaluation phi_in(phi.spec, phi.params.flat, interior, JetOrder::diagonal);
  const batched::JetEvaluation rho_in(rho.spec, rho.params.flat, interior, JetOrder::value);
  const batched::JetEvaluation phi_T(phi.spec, phi.params.flat, term, JetOrder::value);
  const batched::JetEvaluation rho_T(rho.spec, rho.params.flat, term, JetOrder::value);

  JetBatch phi_in_seed = JetBatch::zeros(JetOrder::diagonal, d, nb);
  JetBatch rho_in_seed = JetBatch::zeros(JetOrder::value, d, nb);
  JetBatch phi_T_seed = JetBatch::zeros(JetOrder::value, d, ns);
  JetBatch rho_T_seed = JetBatch::zeros(JetOrder::value, d, ns);

  LossParts out;
  HjbPartials part;
  const double wb = 2.0 / static_cast<double>(nb);
  for (Index b = 0; b < nb; ++b) {
    const Jet pj = phi_in.jets().at(b);
    const Jet rj = rho_in.jets().at(b);
    const auto x = interior.points.col(b);
    double r;
    try {
      r = hjb_eval(problem, pj, rj, x, grads ? &part : nullptr);
    } catch (const DomainError& e) {
      rethrow_at(e, interior.times[b], x);
    }
    if (!std::isfinite(r)) throw NumericError("non-finite HJB residual at sample " + std::to_string(b), b);
    out.residual += r * r;
    if (grads) {
      const double w = wb * r;
      phi_in_seed.dt[b] = w;
      phi_in_seed.diag.col(b).setConstant(w * problem.nu);
      phi_in_seed.grad.col(b) = w * part.phi_grad;
      rho_in_seed.value[b] = w * part.rho_value;
    }
  }
  out.residual /= static_cast<double>(nb);

  const double ws = 2.0 / static_cast<double>(ns);
  for (Index s = 0; s < ns; ++s) {
    const auto x = terminal.points.col(s);
    const double rT = rho_T.jets().value[s];
    const double m = phi_T.jets().value[s] - problem.g(x, rT);
    if (!std::isfinite(m)) throw NumericError("non-finite terminal mismatch at sample " + std::to_string(s), s);
    out.condition += m * m;
    if (grads) {
      phi_T_seed.value[s] = ws * m;
      rho_T_seed.value[s] = -ws * m * problem.dg_drho(x, rT);
    }
  }
  out.condition /= static_cast<double>(ns);

  if (grads) {
    grads->phi.assign(phi.params.count(), 0.0);
    grads->rho.assign(rho.params.count(), 0.0);
    phi_in.backward(phi_in_seed, grads->phi);
    phi_T.backward(phi_T_seed, grads->phi);
    rho_in.backward(rho_in_seed, grads->rho);
    rho_T.backward(rho_T_seed, grads->rho);
  }
  return out;
}

LossParts fp_loss(const MFGProblem& problem, NetworkRef phi, NetworkRef rho, const SampleBatch& interior,
                  const SampleBatch& initial, LossGradients* grads) {
  require_nonempty(interior, initial, "fp_loss");
  require_dims(problem, interior, initial);
  const int d = problem.d;
  const Index nb = interior.size();
  const Index ns = initial.size();
  const JetOrder phi_order = fp_phi_order(problem);
  const SampleBatch init = at_time(initial, 0.0);

  const batched::JetEvaluation phi_in(phi.spec, phi.params.flat, interior, phi_order);
  const batched::JetEvaluation rho_in(rho.spec, rho.params.flat, interior, JetOrder::diagonal);
  const batched::JetEvaluation rho_0(rho.spec, rho.params.flat, init, JetOrder::value);

  JetBatch phi_in_seed = JetBatch::zeros(phi_order, d, nb);
  JetBatch rho_in_seed = JetBatch::zeros(JetOrder::diagonal, d, nb);
  JetBatch rho_0_seed = JetBatch::zeros(JetOrder::value, d, ns);

  LossParts out;
  FpPartials part;
  const double wb = 2.0 / static_cast<double>(nb);
  for (Index b = 0; b < nb; ++b) {
    const Jet pj = phi_in.jets().at(b);
    const Jet rj = rho_in.jets().at(b);
    const auto x = interior.points.col(b);
    double r;
    try {
      r = fp_eval(problem, pj, rj, x, grads ? &part : nullptr);
    } catch (const DomainError& e) {
      rethrow_at(e, interior.times[b], x);
    }
    if (!std::isfinite(r)) throw NumericError("non-finite Fokker-Planck residual at sample " + std::to_string(b), b);
    out.residual += r * r;
    if (grads) {
      const double w = wb * r;
      rho_in_seed.dt[b] = w;
      rho_in_seed.diag.col(b).setConstant(-w * problem.nu);
      rho_in_seed.grad.col(b) = w * part.rho_grad;
      rho_in_seed.value[b] = w * part.rho_value;
      phi_in_seed.grad.col(b) = w * part.phi_grad;
      if (phi_order == JetOrder::diagonal) {
        phi_in_seed.diag.col(b) = w * part.phi_hess.diagonal();
      } else {
        phi_in_seed.mixed.col(b) = (w * part.phi_hess).reshaped();
      }
    }
  }
  out.residual /= static_cast<double>(nb);

  const double ws = 2.0 / static_cast<double>(ns);
  for (Index s = 0; s < ns; ++s) {
    const auto x = initial.points.col(s);
    const double m = rho_0.jets().value[s] - problem.rho0(x);
    if (!std::isfinite(m)) throw NumericError("non-finite initial mismatch at sample " + std::to_string(s), s);
    out.condition += m * m;
    if (grads) rho_0_seed.value[s] = ws * m;
  }
  out.condition /= static_cast<double>(ns);

  if (grads) {
    grads->phi.assign(phi.params.count(), 0.0);
    grads->rho.assign(rho.params.count(), 0.0);
    phi_in.backward(phi_in_seed, grads->phi);
    rho_in.backward(rho_in_seed, grads->rho);
    rho_0.backward(rho_0_seed, grads->rho);
  }
  return out;
}

}  // namespace mfdgm
