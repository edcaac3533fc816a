#include <doctest.h>

#include <cmath>

#include "mfdgm/error.hpp"
#include "mfdgm/evaluation.hpp"
#include "mfdgm/jet.hpp"
#include "mfdgm/sampling.hpp"

using namespace mfdgm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

GridEval grid(const MatrixXd& values) {
  GridEval g;
  g.t_axis = uniform_axis(0.0, 1.0, static_cast<int>(values.rows()));
  g.x_axis = uniform_axis(-2.0, 2.0, static_cast<int>(values.cols()));
  g.values = values;
  return g;
}

NetworkSpec net(Activation a) {
  NetworkSpec s;
  s.input_dim = 2;
  s.hidden_width = 7;
  s.hidden_layers = 2;
  s.activation = a;
  s.skip_weight = 0.5;
  return s;
}

}  // namespace

TEST_CASE("uniform axis") {
  const VectorXd a = uniform_axis(-2.0, 2.0, 5);
  CHECK(a.size() == 5);
  CHECK(a[0] == -2.0);
  CHECK(a[4] == 2.0);
  CHECK(a[2] == doctest::Approx(0.0));
  CHECK(uniform_axis(0.3, 1.0, 1)[0] == 0.3);
}

TEST_CASE("relative error") {
  MatrixXd e(3, 4);
  e << 1, 2, 3, 4, -1, 0.5, 2, 7, 0, 0, 1, -3;
  const GridEval exact = grid(e);
  CHECK(relative_error(exact, exact) == 0.0);
  CHECK(relative_error(grid(1.1 * e), exact) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(relative_error(grid(MatrixXd::Constant(2, 2, 2.0)), grid(MatrixXd::Ones(2, 2))) == doctest::Approx(1.0));
  // scale equivariance
  const GridEval pred = grid(e.array() + 0.3);
  CHECK(relative_error(grid(-2.5 * pred.values), grid(-2.5 * e)) ==
        doctest::Approx(relative_error(pred, exact)).epsilon(1e-14));
  CHECK_THROWS_AS(relative_error(grid(MatrixXd::Ones(2, 3)), grid(MatrixXd::Ones(3, 2))), UsageError);
  GridEval shifted = exact;
  shifted.x_axis[1] += 1e-3;
  CHECK_THROWS_AS(relative_error(exact, shifted), UsageError);
  CHECK_THROWS_AS(relative_error(exact, grid(MatrixXd::Zero(3, 4))), UsageError);
}

TEST_CASE("rolling average") {
  CHECK(rolling_average({1, 2, 3, 4, 5}, 5) == std::vector<double>{3.0});
  CHECK(rolling_average({0, 0, 0, 0, 10}, 5) == std::vector<double>{2.0});
  const auto c = rolling_average(std::vector<double>(9, 1.25), 5);
  CHECK(c.size() == 5);
  for (double v : c) CHECK(v == 1.25);
  const auto r = rolling_average({1, 3, 5, 7}, 2);
  REQUIRE(r.size() == 3);
  CHECK(r[0] == 2.0);
  CHECK(r[2] == 6.0);
  // affine maps commute with the average
  const std::vector<double> s{0.3, -1.0, 4.0, 2.5, 9.0, -3.0};
  std::vector<double> as;
  for (double v : s) as.push_back(2.0 * v + 1.0);
  const auto lhs = rolling_average(as, 3), rhs = rolling_average(s, 3);
  for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(lhs[i] == doctest::Approx(2.0 * rhs[i] + 1.0));
  CHECK_THROWS_AS(rolling_average({1, 2}, 5), UsageError);
  CHECK_THROWS_AS(rolling_average({1, 2}, 0), UsageError);
}

TEST_CASE("speed field and fundamental diagram") {
  MatrixXd rho(1, 3), vx(1, 3);
  rho << 0.0, 1.0, 0.5;
  vx << 0.0, 0.0, 0.25;
  const GridEval u = speed_field(grid(rho), grid(vx));
  CHECK(u.values(0, 0) == 1.0);
  CHECK(u.values(0, 1) == 0.0);
  CHECK(u.values(0, 2) == 0.25);
  CHECK(u.t_axis == grid(rho).t_axis);
  MatrixXd uu(1, 3);
  uu << 0.5, 0.0, 2.0;
  const GridEval q = fundamental_diagram(grid(rho), grid(uu));
  CHECK(q.values(0, 0) == 0.0);
  CHECK(q.values(0, 1) == 0.0);
  CHECK(q.values(0, 2) == 1.0);
  MatrixXd half(1, 1);
  half << 0.5;
  CHECK(fundamental_diagram(grid(half), grid(half)).values(0, 0) == 0.25);
  CHECK_THROWS_AS(speed_field(grid(rho), grid(MatrixXd::Zero(2, 3))), UsageError);
  CHECK_THROWS_AS(fundamental_diagram(grid(rho), grid(MatrixXd::Zero(1, 2))), UsageError);

  // Greenshields with no value gradient: q = rho (1 - rho), peak 0.25 at rho = 0.5
  const VectorXd r = uniform_axis(0.0, 1.0, 101);
  GridEval gr = grid(r.transpose());
  const GridEval gu = speed_field(gr, grid(MatrixXd::Zero(1, 101)));
  const GridEval gq = fundamental_diagram(gr, gu);
  Eigen::Index arg = 0;
  const double peak = gq.values.row(0).maxCoeff(&arg);
  CHECK(peak == doctest::Approx(0.25));
  CHECK(r[arg] == doctest::Approx(0.5));
}

TEST_CASE("network grid") {
  const VectorXd t = uniform_axis(0.0, 1.0, 6), x = uniform_axis(-2.0, 2.0, 9);
  for (Activation a : {Activation::tanh, Activation::softmax}) {
    const NetworkSpec s = net(a);
    NetworkParams c = init_network(s, 1);
    make_constant(s, c, 0.37);
    const GridEval v = evaluate_network_grid(c, s, t, x, GridQuantity::value);
    CHECK(v.values.rows() == 6);
    CHECK(v.values.cols() == 9);
    CHECK((v.values.array() == 0.37).all());
    const GridEval dx = evaluate_network_grid(c, s, t, x, GridQuantity::x_derivative);
    CHECK((dx.values.array() == 0.0).all());

    const NetworkParams p = init_network(s, 2);
    const GridEval pv = evaluate_network_grid(p, s, t, x, GridQuantity::value);
    const GridEval pd = evaluate_network_grid(p, s, t, x, GridQuantity::x_derivative);
    Rng rng(3);
    for (int k = 0; k < 10; ++k) {
      const int i = static_cast<int>(rng.next_u64() % 6), j = static_cast<int>(rng.next_u64() % 9);
      CHECK(pv.values(i, j) == forward(p, s, t[i], VectorXd::Constant(1, x[j])));
      CHECK(pd.values(i, j) == eval_jet(p, s, t[i], VectorXd::Constant(1, x[j]), false).grad_x[0]);
    }
  }
  NetworkSpec s2 = net(Activation::tanh);
  s2.input_dim = 3;
  CHECK_THROWS_AS(evaluate_network_grid(init_network(s2, 0), s2, t, x, GridQuantity::value), UsageError);
  CHECK_THROWS_AS(evaluate_network_grid(NetworkParams{{1.0}}, net(Activation::tanh), t, x, GridQuantity::value),
                  UsageError);
}

TEST_CASE("error probe on the grid equals grid relative error") {
  const MFGProblem p = make_analytic_gaussian(1, 1.0, 1.0, 0.0);
  ProbeSettings ps;
  ps.grid_t = 11;
  ps.grid_x = 13;
  const ErrorProbe probe = make_error_probe(p, ps);
  CHECK(probe.times.size() == 11 * 13);
  const NetworkSpec s = net(Activation::tanh);
  const NetworkParams phi = init_network(s, 4), rho = init_network(s, 5);
  const RelativeErrors e = probe_errors(probe, s, phi, s, rho);

  const VectorXd t = uniform_axis(0.0, 1.0, 11), x = uniform_axis(-2.0, 2.0, 13);
  GridEval ex_phi, ex_rho;
  ex_phi.t_axis = ex_rho.t_axis = t;
  ex_phi.x_axis = ex_rho.x_axis = x;
  ex_phi.values.resize(11, 13);
  ex_rho.values.resize(11, 13);
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 13; ++j) {
      ex_phi.values(i, j) = p.exact->phi(t[i], VectorXd::Constant(1, x[j])).value;
      ex_rho.values(i, j) = p.exact->rho(t[i], VectorXd::Constant(1, x[j])).value;
    }
  const double want_phi = relative_error(evaluate_network_grid(phi, s, t, x, GridQuantity::value), ex_phi);
  const double want_rho = relative_error(evaluate_network_grid(rho, s, t, x, GridQuantity::value), ex_rho);
  CHECK(e.phi == doctest::Approx(want_phi).epsilon(1e-13));
  CHECK(e.rho == doctest::Approx(want_rho).epsilon(1e-13));

  CHECK_THROWS_AS(make_error_probe(make_traffic_lwr(0.0), ps), UsageError);
}

TEST_CASE("Monte-Carlo probe in higher dimension") {
  const MFGProblem p = make_analytic_gaussian(5, 1.0, 1.0, 0.0);
  ProbeSettings ps;
  ps.mc_points = 300;
  const ErrorProbe a = make_error_probe(p, ps), b = make_error_probe(p, ps);
  CHECK(a.points.cols() == 300);
  CHECK(a.points.rows() == 5);
  CHECK(a.points == b.points);
  CHECK((a.points.array().abs() <= 2.0).all());
  CHECK((a.times.array() >= 0.0).all());
  CHECK((a.times.array() <= 1.0).all());
  ps.mc_seed = 1;
  CHECK_FALSE(make_error_probe(p, ps).points == a.points);
}
