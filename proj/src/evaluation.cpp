#include "mfdgm/evaluation.hpp"

#include <cmath>

#include "mfdgm/error.hpp"
#include "mfdgm/jet.hpp"
#include "mfdgm/sampling.hpp"

namespace mfdgm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::VectorXd uniform_axis(double lo, double hi, int n) {
  if (n < 1) throw UsageError("grid axis needs at least one point");
  VectorXd a(n);
  for (int i = 0; i < n; ++i) a[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  if (n > 1) a[n - 1] = hi;
  return a;
}

namespace {
void same_axes(const GridEval& a, const GridEval& b) {
  if (a.t_axis.size() != b.t_axis.size() || a.x_axis.size() != b.x_axis.size() || a.t_axis != b.t_axis ||
      a.x_axis != b.x_axis)
    throw UsageError("grid axes differ");
  if (a.values.rows() != a.t_axis.size() || a.values.cols() != a.x_axis.size() || b.values.rows() != a.values.rows() ||
      b.values.cols() != a.values.cols())
    throw UsageError("grid values do not match the axes");
}

GridEval like(const GridEval& g) {
  GridEval out;
  out.t_axis = g.t_axis;
  out.x_axis = g.x_axis;
  return out;
}
}  // namespace

double relative_error(const GridEval& pred, const GridEval& exact) {
  same_axes(pred, exact);
  const double den = exact.values.norm();
  if (den == 0.0) throw UsageError("relative error against a zero reference");
  return (pred.values - exact.values).norm() / den;
}

std::vector<double> rolling_average(const std::vector<double>& series, int window) {
  if (window < 1) throw UsageError("rolling window must be >= 1");
  if (series.size() < static_cast<std::size_t>(window)) throw UsageError("series shorter than the rolling window");
  std::vector<double> out(series.size() - window + 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (int k = 0; k < window; ++k) s += series[i + k];
    out[i] = s / window;
  }
  return out;
}

GridEval speed_field(const GridEval& rho, const GridEval& v_x, double u_max, double rho_jam) {
  same_axes(rho, v_x);
  GridEval u = like(rho);
  u.values = (u_max * (1.0 - rho.values.array() / rho_jam) - v_x.values.array()).matrix();
  return u;
}

GridEval fundamental_diagram(const GridEval& rho, const GridEval& u) {
  same_axes(rho, u);
  GridEval q = like(rho);
  q.values = rho.values.cwiseProduct(u.values);
  return q;
}

GridEval evaluate_network_grid(const NetworkParams& params, const NetworkSpec& spec, const Eigen::VectorXd& t_axis,
                               const Eigen::VectorXd& x_axis, GridQuantity which) {
  try {
    check_shape(spec, params.flat);
  } catch (const ShapeError& e) {
    throw UsageError(std::string("grid evaluation: ") + e.what());
  }
  if (spec.spatial_dim() != 1) throw UsageError("grid evaluation needs a network with one spatial dimension");
  GridEval g;
  g.t_axis = t_axis;
  g.x_axis = x_axis;
  const Index nt = t_axis.size();
  const Index nx = x_axis.size();
  g.values.resize(nt, nx);
  const JetOrder order = which == GridQuantity::value ? JetOrder::value : JetOrder::diagonal;
#pragma omp parallel for schedule(static)
  for (Index k = 0; k < nt * nx; ++k) {
    const Index i = k / nx;
    const Index j = k % nx;
    VectorXd x(1);
    x[0] = x_axis[j];
    const Jet jet = serial::eval(spec, params.flat, t_axis[i], x, order);
    g.values(i, j) = which == GridQuantity::value ? jet.value : jet.grad_x[0];
  }
  return g;
}

ErrorProbe make_error_probe(const MFGProblem& problem, const ProbeSettings& s) {
  if (!problem.exact) throw UsageError("problem '" + problem.name + "' has no exact solution");
  ErrorProbe p;
  if (problem.d == 1) {
    const VectorXd ta = uniform_axis(0.0, problem.T, s.grid_t);
    const VectorXd xa = uniform_axis(problem.omega_lo[0], problem.omega_hi[0], s.grid_x);
    p.times.resize(ta.size() * xa.size());
    p.points.resize(1, p.times.size());
    for (Index i = 0; i < ta.size(); ++i)
      for (Index j = 0; j < xa.size(); ++j) {
        p.times[i * xa.size() + j] = ta[i];
        p.points(0, i * xa.size() + j) = xa[j];
      }
  } else {
    if (s.mc_points < 1) throw UsageError("need at least one Monte-Carlo evaluation point");
    Rng rng(s.mc_seed, 0x6576616cULL);
    const SampleBatch b = sample_interior(rng, problem, s.mc_points);
    p.times = b.times;
    p.points = b.points;
  }
  const Index n = p.times.size();
  p.exact_phi.resize(n);
  p.exact_rho.resize(n);
  for (Index k = 0; k < n; ++k) {
    p.exact_phi[k] = problem.exact->phi(p.times[k], p.points.col(k)).value;
    p.exact_rho[k] = problem.exact->rho(p.times[k], p.points.col(k)).value;
  }
  return p;
}

RelativeErrors probe_errors(const ErrorProbe& probe, const NetworkSpec& phi_spec, const NetworkParams& phi,
                            const NetworkSpec& rho_spec, const NetworkParams& rho) {
  check_shape(phi_spec, phi.flat);
  check_shape(rho_spec, rho.flat);
  const Index n = probe.times.size();
  VectorXd pp(n), pr(n);
#pragma omp parallel for schedule(static)
  for (Index k = 0; k < n; ++k) {
    pp[k] = serial::eval(phi_spec, phi.flat, probe.times[k], probe.points.col(k), JetOrder::value).value;
    pr[k] = serial::eval(rho_spec, rho.flat, probe.times[k], probe.points.col(k), JetOrder::value).value;
  }
  RelativeErrors e;
  e.phi = (pp - probe.exact_phi).norm() / probe.exact_phi.norm();
  e.rho = (pr - probe.exact_rho).norm() / probe.exact_rho.norm();
  return e;
}

}  // namespace mfdgm
