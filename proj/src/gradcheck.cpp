#include "mfdgm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "mfdgm/finite_diff.hpp"
#include "mfdgm/jet.hpp"
#include "mfdgm/network.hpp"
#include "mfdgm/residuals.hpp"
#include "mfdgm/sampling.hpp"

namespace mfdgm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

bool GradcheckReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
}

const CheckResult& GradcheckReport::worst() const {
  if (checks.empty()) throw std::logic_error("empty gradcheck report");
  return *std::max_element(checks.begin(), checks.end(), [](const CheckResult& a, const CheckResult& b) {
    return a.max_error / a.tolerance < b.max_error / b.tolerance;
  });
}

void GradcheckReport::append(const GradcheckReport& other) {
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
}

std::string GradcheckReport::str() const {
  std::string out;
  char buf[256];
  for (const CheckResult& c : checks) {
    std::snprintf(buf, sizeof buf, "%-40s %.3e  tol %.1e  %s\n", c.name.c_str(), c.max_error, c.tolerance,
                  c.passed() ? "PASS" : "FAIL");
    out += buf;
  }
  return out;
}

namespace {

constexpr double kJetFloor = 1e-3;

// Generic network for the checks: two hidden layers so both the input layer and
// a residual block are exercised, with every parameter perturbed off the
// zero-bias initialisation.
NetworkSpec check_spec(int d, Activation act) {
  NetworkSpec s;
  s.input_dim = d + 1;
  s.hidden_width = 16;
  s.hidden_layers = 2;
  s.activation = act;
  s.skip_weight = 0.5;
  return s;
}

NetworkParams check_params(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkParams p = init_network(spec, seed);
  Rng rng(seed, 0x7065727475ULL);
  for (double& v : p.flat) v += rng.uniform(-0.1, 0.1);
  return p;
}

std::string tag(Activation a, int d) { return std::string(to_string(a)) + "/d" + std::to_string(d); }

VectorXd random_point(Rng& rng, int d, double lo, double hi) {
  VectorXd x(d);
  for (int i = 0; i < d; ++i) x[i] = rng.uniform(lo, hi);
  return x;
}

// Smallest |pre-activation| over all hidden units.  Central differences are no
// oracle for a ReLU network when the stencil crosses a kink, so probe points
// closer than a margin are redrawn.
double kink_margin(const NetworkSpec& spec, const NetworkParams& p, double t, const VectorXd& x) {
  if (spec.activation != Activation::relu) return INFINITY;
  const auto layers = layer_layout(spec);
  VectorXd in(spec.input_dim);
  in << t, x;
  VectorXd h;
  double margin = INFINITY;
  for (int l = 0; l < spec.hidden_layers; ++l) {
    const LayerLayout& L = layers[l];
    const Eigen::Map<const MatrixXd> A(p.flat.data() + L.weight_offset, L.outputs, L.inputs);
    const Eigen::Map<const VectorXd> b(p.flat.data() + L.bias_offset, L.outputs);
    const VectorXd z = A * (l == 0 ? in : h) + b;
    margin = std::min(margin, z.cwiseAbs().minCoeff());
    const VectorXd a = z.cwiseMax(0.0);
    h = l == 0 ? a : VectorXd(a + spec.skip_weight * h);
  }
  return margin;
}

void keep_max(double& m, double v) { m = std::max(m, std::isnan(v) ? INFINITY : v); }

}  // namespace

GradcheckReport check_jets(const GradcheckOptions& o) {
  GradcheckReport rep;
  const double h = o.jet_step;
  for (int d : o.dims)
    for (Activation act : o.activations) {
      const NetworkSpec spec = check_spec(d, act);
      const NetworkParams params = check_params(spec, o.seed + 17 * d + static_cast<int>(act));
      Rng rng(o.seed, 0x6a6574ULL + d);
      double e_dt = 0, e_grad = 0, e_diag = 0, e_mixed = 0;
      for (int k = 0; k < o.points; ++k) {
        double t;
        VectorXd x;
        do {
          t = rng.uniform(0.0, 1.0);
          x = random_point(rng, d, -2.0, 2.0);
        } while (kink_margin(spec, params, t, x) < 1e-3);
        const Jet jet = eval_jet(params, spec, t, x, JetOrder::mixed);
        const VectorXd tx = (VectorXd(d + 1) << t, x).finished();
        const VectorXd fd1 = finite_diff_probe(
            [&](const VectorXd& q) { return forward(params, spec, q[0], q.tail(d)); }, tx, h);
        keep_max(e_dt, relative_difference(jet.dt, fd1[0], kJetFloor));
        for (int i = 0; i < d; ++i) keep_max(e_grad, relative_difference(jet.grad_x[i], fd1[1 + i], kJetFloor));
        for (int j = 0; j < d; ++j) {
          const VectorXd fd2 = finite_diff_probe(
              [&](const VectorXd& q) { return eval_jet(params, spec, t, q, JetOrder::diagonal).grad_x[j]; }, x, h);
          for (int i = 0; i < d; ++i) {
            const double e = relative_difference((*jet.mixed_hess)(i, j), fd2[i], kJetFloor);
            keep_max(i == j ? e_diag : e_mixed, e);
            if (i == j) keep_max(e_diag, relative_difference(jet.diag_hess[i], fd2[i], kJetFloor));
          }
        }
      }
      const std::string base = "jet/" + tag(act, d) + "/";
      rep.checks.push_back({base + "dt", e_dt, o.jet_tolerance});
      rep.checks.push_back({base + "grad", e_grad, o.jet_tolerance});
      rep.checks.push_back({base + "diag_hess", e_diag, o.jet_tolerance});
      if (d > 1) rep.checks.push_back({base + "mixed_hess", e_mixed, o.jet_tolerance});
    }
  return rep;
}

namespace {

// 1/2 sum c_k y_k^2 over every jet entry, with fixed random weights c_k.
struct QuadraticJetLoss {
  JetBatch weights;
  double operator()(const JetBatch& j, JetBatch& seeds) const {
    double loss = 0.0;
    auto term = [&](const auto& y, const auto& c, auto& s) {
      loss += 0.5 * (c.array() * y.array().square()).sum();
      s = (c.array() * y.array()).matrix();
    };
    term(j.value, weights.value, seeds.value);
    if (j.order != JetOrder::value) {
      term(j.dt, weights.dt, seeds.dt);
      term(j.grad, weights.grad, seeds.grad);
      term(j.diag, weights.diag, seeds.diag);
    }
    if (j.order == JetOrder::mixed) term(j.mixed, weights.mixed, seeds.mixed);
    return loss;
  }
};

JetBatch random_weights(Rng& rng, JetOrder order, int d, Index n) {
  JetBatch w = JetBatch::zeros(order, d, n);
  auto fill = [&](auto& m) {
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(0.5, 1.5);
  };
  fill(w.value);
  fill(w.dt);
  fill(w.grad);
  fill(w.diag);
  fill(w.mixed);
  return w;
}

VectorXd random_direction(Rng& rng, std::size_t n) {
  VectorXd v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
  return v / v.norm();
}

SampleBatch random_batch(Rng& rng, int d, Index n, double lo, double hi, double T,
                         const NetworkSpec* spec = nullptr, const NetworkParams* params = nullptr) {
  SampleBatch b;
  b.times.resize(n);
  b.points.resize(d, n);
  for (Index s = 0; s < n; ++s) {
    do {
      b.times[s] = rng.uniform(0.0, T);
      for (int i = 0; i < d; ++i) b.points(i, s) = rng.uniform(lo, hi);
    } while (spec && kink_margin(*spec, *params, b.times[s], b.points.col(s)) < 1e-2);
  }
  return b;
}

double directional_error(const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& theta,
                         const std::vector<double>& grad, const VectorXd& v, double h) {
  const Eigen::Map<const VectorXd> th(theta.data(), static_cast<Index>(theta.size()));
  const double fd = finite_diff_directional(
      [&](const VectorXd& q) { return f(std::vector<double>(q.data(), q.data() + q.size())); }, th, v, h);
  const double an = Eigen::Map<const VectorXd>(grad.data(), static_cast<Index>(grad.size())).dot(v);
  return relative_difference(an, fd);
}

}  // namespace

GradcheckReport check_param_gradients(const GradcheckOptions& o) {
  GradcheckReport rep;
  const double h = o.param_step;
  for (int d : o.dims)
    for (Activation act : o.activations) {
      const NetworkSpec spec = check_spec(d, act);
      const NetworkParams params = check_params(spec, o.seed + 31 * d + static_cast<int>(act));
      Rng rng(o.seed, 0x706172616dULL + d);
      for (JetOrder order : {JetOrder::value, JetOrder::diagonal, JetOrder::mixed}) {
        const SampleBatch batch = random_batch(rng, d, o.param_batch, -2.0, 2.0, 1.0, &spec, &params);
        const QuadraticJetLoss loss{random_weights(rng, order, d, batch.size())};
        const ParamGradient g = loss_param_gradient(params, spec, batch, order, loss);
        auto f = [&](const std::vector<double>& th) {
          NetworkParams p{th};
          double value = 0.0;
          loss_param_gradient(p, spec, batch, order, loss, &value);
          return value;
        };
        double err = 0.0;
        for (int k = 0; k < o.param_directions; ++k)
          keep_max(err, directional_error(f, params.flat, g.values, random_direction(rng, params.count()), h));
        const char* oname = order == JetOrder::value ? "value" : order == JetOrder::diagonal ? "diagonal" : "mixed";
        rep.checks.push_back({"param/" + tag(act, d) + "/jet_loss_" + oname, err, o.param_tolerance});
      }
    }

  // Network losses of the PDE system: analytic problem (also with the general
  // non-diagonal Hessian path forced) and the traffic problem.
  struct Case {
    std::string name;
    MFGProblem problem;
  };
  std::vector<Case> cases;
  for (int d : o.dims) {
    cases.push_back({"analytic/d" + std::to_string(d), make_analytic_gaussian(d, 1.0, 1.0, 0.0)});
    MFGProblem full = make_analytic_gaussian(d, 0.7, 1.3, 0.0);
    full.dH_dpp_diagonal = false;
    cases.push_back({"analytic_mixed/d" + std::to_string(d), full});
  }
  cases.push_back({"traffic/nu0.5", make_traffic_lwr(0.5)});
  cases.push_back({"traffic/nu0", make_traffic_lwr(0.0)});
  for (const Case& c : cases) {
    const MFGProblem& pr = c.problem;
    const NetworkSpec ps = check_spec(pr.d, Activation::softplus);
    const NetworkSpec rs = check_spec(pr.d, Activation::tanh);
    const NetworkParams phi = check_params(ps, o.seed + 101 + pr.d);
    NetworkParams rho = check_params(rs, o.seed + 202 + pr.d);
    Rng rng(o.seed, 0x6c6f7373ULL + pr.d);
    const SampleBatch in = random_batch(rng, pr.d, o.param_batch, pr.omega_lo[0], pr.omega_hi[0], pr.T);
    SampleBatch cond = random_batch(rng, pr.d, o.param_batch, pr.omega_lo[0], pr.omega_hi[0], pr.T);
    cond.times.resize(0);
    for (bool hjb : {true, false}) {
      auto loss = [&](const NetworkParams& p, const NetworkParams& r, LossGradients* g) {
        return hjb ? hjb_loss(pr, {ps, p}, {rs, r}, in, cond, g).total()
                   : fp_loss(pr, {ps, p}, {rs, r}, in, cond, g).total();
      };
      LossGradients g;
      loss(phi, rho, &g);
      double err = 0.0;
      for (int k = 0; k < o.param_directions; ++k) {
        keep_max(err, directional_error([&](const std::vector<double>& th) { return loss({th}, rho, nullptr); },
                                        phi.flat, g.phi, random_direction(rng, phi.count()), h));
        keep_max(err, directional_error([&](const std::vector<double>& th) { return loss(phi, {th}, nullptr); },
                                        rho.flat, g.rho, random_direction(rng, rho.count()), h));
      }
      rep.checks.push_back({std::string("param/") + (hjb ? "hjb_loss/" : "fp_loss/") + c.name, err,
                            o.param_tolerance});
    }
  }
  return rep;
}

GradcheckReport check_problems(const GradcheckOptions& o) {
  GradcheckReport rep;
  const std::vector<std::pair<std::string, MFGProblem>> problems = {
      {"analytic/d1", make_analytic_gaussian(1, 1.0, 1.0, 0.0)},
      {"analytic_gamma/d3", make_analytic_gaussian(3, 0.8, 1.2, 0.4)},
      {"traffic/nu0.5", make_traffic_lwr(0.5)},
  };
  for (const auto& [name, pr] : problems) {
    ConsistencyReport c = check_problem_consistency(pr, o.points, o.seed);
    c.tolerance = o.consistency_tolerance;
    for (const ConsistencyEntry& e : c.entries)
      rep.checks.push_back({"problem/" + name + "/" + e.name, e.max_error, c.tolerance});
  }
  return rep;
}

GradcheckReport check_divergence(const MFGProblem& pr, const GradcheckOptions& o, const std::string& label) {
  const int d = pr.d;
  const NetworkSpec ps = check_spec(d, Activation::softplus);
  const NetworkSpec rs = check_spec(d, Activation::tanh);
  const NetworkParams phi = check_params(ps, o.seed + 303 + d);
  const NetworkParams rho = check_params(rs, o.seed + 404 + d);
  const double h = o.divergence_step;
  Rng rng(o.seed, 0x646976ULL + d);

  auto flux = [&](double t, const VectorXd& x, int i) {
    const Jet pj = eval_jet(phi, ps, t, x, JetOrder::diagonal);
    const double r = forward(rho, rs, t, x);
    return r * pr.dH_dp(x, r, pj.grad_x)[i];
  };
  double err = 0.0;
  for (int k = 0; k < o.points; ++k) {
    const double t = rng.uniform(0.0, pr.T);
    VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = rng.uniform(pr.omega_lo[i], pr.omega_hi[i]);
    const Jet pj = eval_jet(phi, ps, t, x, JetOrder::mixed);
    const Jet rj = eval_jet(rho, rs, t, x, JetOrder::diagonal);
    const double expanded = fp_divergence(pr, pj, rj, x);
    double fd = 0.0;
    for (int i = 0; i < d; ++i) {
      VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      fd += (flux(t, xp, i) - flux(t, xm, i)) / (2.0 * h);
    }
    keep_max(err, relative_difference(expanded, fd, 1.0));
  }
  GradcheckReport rep;
  rep.checks.push_back({"divergence/" + label, err, o.divergence_tolerance});
  return rep;
}

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  GradcheckReport rep = check_jets(o);
  rep.append(check_param_gradients(o));
  rep.append(check_problems(o));
  rep.append(check_divergence(make_analytic_gaussian(2, 1.0, 1.0, 0.0), o, "analytic/d2"));
  rep.append(check_divergence(make_traffic_lwr(0.5), o, "traffic"));
  return rep;
}

}  // namespace mfdgm
