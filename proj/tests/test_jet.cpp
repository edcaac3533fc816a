#include <doctest.h>

#include <cmath>

#include "mfdgm/error.hpp"
#include "mfdgm/finite_diff.hpp"
#include "mfdgm/jet.hpp"
#include "mfdgm/network.hpp"
#include "mfdgm/sampling.hpp"

using namespace mfdgm;
using Eigen::VectorXd;

namespace {

// One tanh unit: h = tanh(w_t t + w_x x + b), N = c h + c0.
NetworkSpec unit_spec(Activation a) {
  NetworkSpec s;
  s.input_dim = 2;
  s.hidden_width = 1;
  s.hidden_layers = 1;
  s.activation = a;
  return s;
}

NetworkParams unit_params() { return NetworkParams{{0.0, 1.0, 0.0, 1.0, 0.0}}; }

NetworkSpec deep_spec(int d, Activation a, int width = 12, int layers = 3) {
  NetworkSpec s;
  s.input_dim = d + 1;
  s.hidden_width = width;
  s.hidden_layers = layers;
  s.activation = a;
  s.skip_weight = 0.5;
  return s;
}

NetworkParams perturbed(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkParams p = init_network(spec, seed);
  Rng rng(seed, 99);
  for (double& v : p.flat) v += rng.uniform(-0.2, 0.2);
  return p;
}

SampleBatch random_batch(int d, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed, 7);
  SampleBatch b;
  b.times.resize(n);
  b.points.resize(d, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    b.times[s] = rng.uniform(0.0, 1.0);
    for (int i = 0; i < d; ++i) b.points(i, s) = rng.uniform(-2.0, 2.0);
  }
  return b;
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("parameter count") {
  NetworkSpec s = unit_spec(Activation::tanh);
  s.hidden_width = 50;
  CHECK(parameter_count(s) == 201);
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    NetworkSpec r;
    r.input_dim = 2 + static_cast<int>(rng.next_u64() % 6);
    r.hidden_width = 1 + static_cast<int>(rng.next_u64() % 20);
    r.hidden_layers = 1 + static_cast<int>(rng.next_u64() % 4);
    const std::size_t w = static_cast<std::size_t>(r.hidden_width);
    const std::size_t expect = (static_cast<std::size_t>(r.input_dim) + 1) * w +
                               static_cast<std::size_t>(r.hidden_layers - 1) * (w + 1) * w + (w + 1);
    CHECK(parameter_count(r) == expect);
    CHECK(init_network(r, k).count() == expect);
  }
}

TEST_CASE("init is deterministic, Glorot bounded, zero bias") {
  const NetworkSpec s = deep_spec(3, Activation::tanh);
  const NetworkParams a = init_network(s, 11);
  const NetworkParams b = init_network(s, 11);
  CHECK(a == b);
  CHECK_FALSE(a == init_network(s, 12));
  for (const auto& lay : layer_layout(s)) {
    const double bound = std::sqrt(6.0 / (lay.inputs + lay.outputs));
    for (int i = 0; i < lay.inputs * lay.outputs; ++i) CHECK(std::abs(a.flat[lay.weight_offset + i]) <= bound);
    for (int i = 0; i < lay.outputs; ++i) CHECK(a.flat[lay.bias_offset + i] == 0.0);
  }
}

TEST_CASE("invalid specs and shapes") {
  NetworkSpec s = unit_spec(Activation::tanh);
  s.input_dim = 1;
  CHECK_THROWS_AS(s.validate(), UsageError);
  s = unit_spec(Activation::tanh);
  s.hidden_width = 0;
  CHECK_THROWS_AS(init_network(s, 0), UsageError);
  s = unit_spec(Activation::tanh);
  const NetworkParams p{{1.0, 2.0}};
  CHECK_THROWS_AS(forward(p, s, 0.0, VectorXd::Zero(1)), ShapeError);
  CHECK_THROWS_AS(eval_jet(unit_params(), s, 0.0, VectorXd::Zero(2), false), ShapeError);
  CHECK_THROWS_AS(eval_jet(unit_params(), s, 0.0, VectorXd::Constant(1, NAN), false), DomainError);
}

TEST_CASE("activation derivatives") {
  auto t = scalar_derivatives(Activation::tanh, 0.0);
  CHECK(t.value == 0.0);
  CHECK(t.first == 1.0);
  CHECK(t.second == 0.0);
  auto sp = scalar_derivatives(Activation::softplus, 0.0);
  CHECK(sp.first == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sp.second == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(sp.value == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  auto r = scalar_derivatives(Activation::relu, 0.0);
  CHECK(r.first == 0.0);
  CHECK(r.second == 0.0);

  const auto sm = activation_values(Activation::softmax, VectorXd::Zero(2));
  CHECK(sm.value[0] == doctest::Approx(0.5));
  CHECK(sm.value[1] == doctest::Approx(0.5));
  CHECK(sm.jacobian(0, 0) == doctest::Approx(0.25));
  CHECK(sm.jacobian(0, 1) == doctest::Approx(-0.25));
  CHECK(sm.jacobian(1, 0) == doctest::Approx(-0.25));
  CHECK(sm.jacobian(1, 1) == doctest::Approx(0.25));
  CHECK_THROWS_AS(scalar_derivatives(Activation::softmax, 0.0), UsageError);
}

TEST_CASE("vectorised activation arrays match the scalar ones") {
  Eigen::ArrayXXd z(1, 41);
  for (int i = 0; i < 41; ++i) z(0, i) = -40.0 + 2.0 * i + 0.37;
  z(0, 20) = 1e-9;
  for (Activation a : {Activation::tanh, Activation::softplus, Activation::relu}) {
    Eigen::ArrayXXd v, d1, d2, d3;
    derivative_arrays(a, z, v, d1, d2, &d3);
    for (int i = 0; i < z.cols(); ++i) {
      const auto s = scalar_derivatives(a, z(0, i));
      CHECK(std::abs(v(0, i) - s.value) <= 1e-15 * std::max(1.0, std::abs(s.value)));
      CHECK(std::abs(d1(0, i) - s.first) <= 1e-15);
      CHECK(std::abs(d2(0, i) - s.second) <= 1e-15);
      CHECK(std::abs(d3(0, i) - s.third) <= 1e-15);
    }
  }
}

TEST_CASE("finite differences") {
  const ScalarFunction sq = [](const VectorXd& x) { return x[0] * x[0]; };
  CHECK(std::abs(finite_diff_probe(sq, VectorXd::Constant(1, 3.0), 1e-5)[0] - 6.0) <= 1e-9);
  const ScalarFunction c = [](const VectorXd&) { return 4.2; };
  CHECK(finite_diff_probe(c, VectorXd::Ones(3), 1e-5).cwiseAbs().maxCoeff() == 0.0);
  const ScalarFunction sp = [](const VectorXd& x) { return std::log1p(std::exp(x[0])); };
  CHECK(finite_diff_probe(sp, VectorXd::Zero(1), 1e-5)[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK_THROWS_AS(finite_diff_probe(sq, VectorXd::Zero(1), 0.0), UsageError);
  CHECK_THROWS_AS(finite_diff_probe(sq, VectorXd::Zero(1), -1e-3), UsageError);
}

TEST_CASE("single tanh unit jet") {
  const Jet j = eval_jet(unit_params(), unit_spec(Activation::tanh), 0.0, VectorXd::Zero(1), false);
  CHECK(j.value == 0.0);
  CHECK(j.dt == 0.0);
  CHECK(j.grad_x.size() == 1);
  CHECK(j.grad_x[0] == 1.0);
  CHECK(j.diag_hess[0] == 0.0);
  CHECK_FALSE(j.mixed_hess.has_value());
  CHECK(eval_jet(unit_params(), unit_spec(Activation::tanh), 0.0, VectorXd::Zero(1), true).mixed_hess.has_value());
}

TEST_CASE("single softplus unit value") {
  const double v = forward(unit_params(), unit_spec(Activation::softplus), 0.0, VectorXd::Zero(1));
  CHECK(v == doctest::Approx(0.6931471805599453).epsilon(1e-15));
}

TEST_CASE("constant network has a constant jet") {
  for (Activation a : {Activation::tanh, Activation::softplus, Activation::relu, Activation::softmax}) {
    const NetworkSpec s = deep_spec(3, a);
    NetworkParams p = perturbed(s, 5);
    make_constant(s, p, 1.7);
    const VectorXd x = VectorXd::LinSpaced(3, -1.0, 1.5);
    CHECK(forward(p, s, 0.4, x) == 1.7);
    const Jet j = eval_jet(p, s, 0.4, x, true);
    CHECK(j.value == 1.7);
    CHECK(j.dt == 0.0);
    CHECK(j.grad_x.cwiseAbs().maxCoeff() == 0.0);
    CHECK(j.diag_hess.cwiseAbs().maxCoeff() == 0.0);
    CHECK(j.mixed_hess->cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("skip connection adds half the previous state") {
  // Two tanh layers of width 1.  With the second layer's weight and bias zero
  // the block output is tanh(0) + 0.5 h = 0.5 h.
  NetworkSpec s = unit_spec(Activation::tanh);
  s.hidden_layers = 2;
  s.skip_weight = 0.5;
  // layer 0: w_t, w_x, b; layer 1: w, b; output: c, c0
  const NetworkParams p{{0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0}};
  CHECK(forward(p, s, 0.0, VectorXd::Constant(1, 0.3)) == doctest::Approx(0.5 * std::tanh(0.3)).epsilon(1e-15));
  const NetworkParams q{{0.0, 1.0, 0.0, 2.0, 0.1, 1.0, 0.0}};
  const double h = std::tanh(0.3);
  CHECK(forward(q, s, 0.0, VectorXd::Constant(1, 0.3)) == doctest::Approx(std::tanh(2.0 * h + 0.1) + 0.5 * h).epsilon(1e-15));
}

TEST_CASE("jet invariants") {
  for (Activation a : {Activation::tanh, Activation::softplus, Activation::relu, Activation::softmax}) {
    CAPTURE(to_string(a));
    const NetworkSpec s = deep_spec(4, a);
    const NetworkParams p = perturbed(s, 2);
    const VectorXd x = VectorXd::LinSpaced(4, -1.3, 1.1);
    const Jet j = eval_jet(p, s, 0.6, x, true);
    CHECK(j.grad_x.size() == 4);
    CHECK(j.diag_hess.size() == 4);
    CHECK((j.mixed_hess->diagonal() - j.diag_hess).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(j.laplacian() - j.mixed_hess->trace()) <= 1e-12);
    CHECK((*j.mixed_hess - j.mixed_hess->transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(forward(p, s, 0.6, x) == j.value);
    const Jet k = eval_jet(p, s, 0.6, x, true);
    CHECK(k.value == j.value);
    CHECK(k.grad_x == j.grad_x);
    CHECK(*k.mixed_hess == *j.mixed_hess);
  }
}

TEST_CASE("1x50 tanh jet against finite differences, d=2") {
  NetworkSpec s = unit_spec(Activation::tanh);
  s.input_dim = 3;
  s.hidden_width = 50;
  const NetworkParams p = init_network(s, 4);
  Rng rng(8);
  const double h = 1e-5;
  for (int k = 0; k < 20; ++k) {
    const double t = rng.uniform(0.0, 1.0);
    VectorXd x(2);
    x << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    const Jet j = eval_jet(p, s, t, x, true);
    const ScalarFunction f = [&](const VectorXd& tx) { return forward(p, s, tx[0], tx.tail(2)); };
    VectorXd tx(3);
    tx << t, x;
    const VectorXd fd = finite_diff_probe(f, tx, h);
    CHECK(relative_difference(j.dt, fd[0], 1e-3) <= 1e-6);
    for (int i = 0; i < 2; ++i) CHECK(relative_difference(j.grad_x[i], fd[1 + i], 1e-3) <= 1e-6);
    for (int i = 0; i < 2; ++i) {
      const ScalarFunction gi = [&](const VectorXd& y) { return eval_jet(p, s, t, y, false).grad_x[i]; };
      const VectorXd second = finite_diff_probe(gi, x, h);
      CHECK(relative_difference(j.diag_hess[i], second[i], 1e-3) <= 1e-6);
      for (int m = 0; m < 2; ++m) CHECK(relative_difference((*j.mixed_hess)(i, m), second[m], 1e-3) <= 1e-6);
    }
  }
}

TEST_CASE("batched kernel agrees with the serial kernel") {
  for (int d : {1, 3}) {
    for (Activation a : {Activation::tanh, Activation::softplus, Activation::relu, Activation::softmax}) {
      for (JetOrder order : {JetOrder::value, JetOrder::diagonal, JetOrder::mixed}) {
        CAPTURE(d);
        CAPTURE(to_string(a));
        CAPTURE(static_cast<int>(order));
        const NetworkSpec s = deep_spec(d, a);
        const NetworkParams p = perturbed(s, 9);
        // 70 samples: two full blocks and a partial one
        const SampleBatch b = random_batch(d, 70, 1);
        const batched::JetEvaluation ev(s, p.flat, b, order);
        JetBatch seeds = JetBatch::zeros(order, d, b.size());
        Rng rng(4);
        auto fill = [&](auto& m) {
          for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
        };
        fill(seeds.value);
        fill(seeds.dt);
        fill(seeds.grad);
        fill(seeds.diag);
        fill(seeds.mixed);
        std::vector<double> gb(p.count(), 0.0), gs(p.count(), 0.0);
        ev.backward(seeds, gb);
        double worst = 0.0;
        for (Eigen::Index k = 0; k < b.size(); ++k) {
          const Jet js = serial::eval(s, p.flat, b.times[k], b.points.col(k), order);
          const Jet jb = ev.jets().at(k);
          worst = std::max(worst, std::abs(js.value - jb.value));
          if (order != JetOrder::value) {
            worst = std::max(worst, std::abs(js.dt - jb.dt));
            worst = std::max(worst, max_abs(js.grad_x - jb.grad_x));
            worst = std::max(worst, max_abs(js.diag_hess - jb.diag_hess));
          }
          if (order == JetOrder::mixed) worst = std::max(worst, max_abs(*js.mixed_hess - *jb.mixed_hess));
          serial::backward(s, p.flat, b.times[k], b.points.col(k), order, seeds.at(k), gs);
        }
        CHECK(worst <= 1e-12);
        double gworst = 0.0, gscale = 1.0;
        for (std::size_t i = 0; i < gs.size(); ++i) {
          gworst = std::max(gworst, std::abs(gs[i] - gb[i]));
          gscale = std::max(gscale, std::abs(gs[i]));
        }
        CHECK(gworst <= 1e-12 * gscale);
      }
    }
  }
}

TEST_CASE("loss gradient: value at one point") {
  SampleBatch b;
  b.times = VectorXd::Zero(1);
  b.points = Eigen::MatrixXd::Constant(1, 1, 0.3);
  double l = 0.0;
  const ParamGradient g = loss_param_gradient(
      unit_params(), unit_spec(Activation::tanh), b, JetOrder::value,
      [](const JetBatch& j, JetBatch& seeds) {
        seeds.value[0] = 1.0;
        return j.value[0];
      },
      &l);
  REQUIRE(g.values.size() == 5);
  // output weight sits after w_t, w_x, b
  CHECK(g.values[3] == doctest::Approx(0.2913126124515909).epsilon(1e-15));
  CHECK(g.values[4] == 1.0);
  CHECK(l == doctest::Approx(0.2913126124515909).epsilon(1e-15));
}

TEST_CASE("loss gradient: stationary square") {
  const NetworkSpec s = deep_spec(2, Activation::softplus);
  const NetworkParams p = perturbed(s, 1);
  const SampleBatch b = random_batch(2, 1, 3);
  const double target = batched::JetEvaluation(s, p.flat, b, JetOrder::value).jets().value[0];
  const ParamGradient g = loss_param_gradient(p, s, b, JetOrder::value, [&](const JetBatch& j, JetBatch& seeds) {
    seeds.value[0] = 2.0 * (j.value[0] - target);
    return (j.value[0] - target) * (j.value[0] - target);
  });
  for (double v : g.values) CHECK(v == 0.0);
}

TEST_CASE("loss gradient: mean squared Laplacian against directional differences") {
  const NetworkSpec s = deep_spec(2, Activation::tanh, 10, 2);
  const NetworkParams p = perturbed(s, 6);
  const SampleBatch b = random_batch(2, 8, 2);
  const JetLoss loss = [](const JetBatch& j, JetBatch& seeds) {
    const Eigen::Index n = j.size();
    double sum = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double lap = j.diag.col(k).sum();
      sum += lap * lap;
      seeds.diag.col(k).setConstant(2.0 * lap / n);
    }
    return sum / n;
  };
  const ParamGradient g = loss_param_gradient(p, s, b, JetOrder::diagonal, loss);
  const ScalarFunction f = [&](const VectorXd& theta) {
    NetworkParams q{std::vector<double>(theta.data(), theta.data() + theta.size())};
    JetBatch dummy = JetBatch::zeros(JetOrder::diagonal, 2, b.size());
    const batched::JetEvaluation ev(s, q.flat, b, JetOrder::diagonal);
    return loss(ev.jets(), dummy);
  };
  const Eigen::Map<const VectorXd> theta(p.flat.data(), static_cast<Eigen::Index>(p.count()));
  const Eigen::Map<const VectorXd> grad(g.values.data(), static_cast<Eigen::Index>(g.values.size()));
  Rng rng(12);
  for (int k = 0; k < 10; ++k) {
    VectorXd dir(theta.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = rng.uniform(-1.0, 1.0);
    dir.normalize();
    const double fd = finite_diff_directional(f, theta, dir, 1e-4);
    CHECK(relative_difference(grad.dot(dir), fd, 1e-3) <= 1e-5);
  }
}

TEST_CASE("loss gradient errors") {
  SampleBatch empty;
  empty.points.resize(1, 0);
  const JetLoss zero = [](const JetBatch&, JetBatch&) { return 0.0; };
  CHECK_THROWS_AS(loss_param_gradient(unit_params(), unit_spec(Activation::tanh), empty, JetOrder::value, zero),
                  UsageError);
  SampleBatch b = random_batch(1, 3, 1);
  const JetLoss nan_seed = [](const JetBatch&, JetBatch& seeds) {
    seeds.value[2] = NAN;
    return 0.0;
  };
  try {
    loss_param_gradient(unit_params(), unit_spec(Activation::tanh), b, JetOrder::value, nan_seed);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.sample() == 2);
  }
  // an overflowing weight makes the jet itself non-finite at one sample
  NetworkParams big{{0.0, 1e308, 0.0, 1e308, 0.0}};
  b.points(0, 1) = 10.0;
  CHECK_THROWS_AS(loss_param_gradient(big, unit_spec(Activation::relu), b, JetOrder::value, zero), NumericError);
}
