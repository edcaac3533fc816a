// Serial reference kernel.  One sample at a time; every sum runs over its
// index in ascending order, so the value channel is computed by exactly the
// same instructions whatever JetOrder is requested.

#include <cmath>
#include <string>

#include "jet_channels.hpp"
#include "mfdgm/error.hpp"
#include "mfdgm/jet.hpp"

namespace mfdgm::serial {

namespace {

using detail::ChannelLayout;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstMap = Eigen::Map<const MatrixXd>;

struct LayerTape {
  MatrixXd z;    // pre-activation, width x channels
  MatrixXd out;  // activation (+ skip), width x channels
};

void check_inputs(const NetworkSpec& spec, std::span<const double> params, double t,
                  const Eigen::Ref<const VectorXd>& x) {
  spec.validate();
  check_shape(spec, params);
  if (x.size() != spec.spatial_dim()) {
    throw ShapeError("point has dimension " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(spec.spatial_dim()));
  }
  if (!std::isfinite(t) || !x.allFinite()) throw DomainError("non-finite network input");
}

double first_along(const ChannelLayout& l, const MatrixXd& z, Eigen::Index u, int q) {
  const auto [a, b] = l.dirs[static_cast<std::size_t>(q)];
  double v = z(u, l.x_channel(a));
  if (a != b) v += z(u, l.x_channel(b));
  return v;
}

VectorXd first_along(const ChannelLayout& l, const MatrixXd& z, int q) {
  const auto [a, b] = l.dirs[static_cast<std::size_t>(q)];
  VectorXd v = z.col(l.x_channel(a));
  if (a != b) v += z.col(l.x_channel(b));
  return v;
}

void input_affine(const ChannelLayout& l, const ConstMap& a, const double* bias, double t,
                  const Eigen::Ref<const VectorXd>& x, MatrixXd& z) {
  const Eigen::Index w = a.rows();
  z.setZero(w, l.count);
  for (Eigen::Index u = 0; u < w; ++u) z(u, 0) = bias[u];
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double in = j == 0 ? t : x[j - 1];
    for (Eigen::Index u = 0; u < w; ++u) z(u, 0) += a(u, j) * in;
  }
  if (l.order == JetOrder::value) return;
  for (Eigen::Index u = 0; u < w; ++u) z(u, ChannelLayout::t_channel) = a(u, 0);
  for (int i = 0; i < l.dim; ++i)
    for (Eigen::Index u = 0; u < w; ++u) z(u, l.x_channel(i)) = a(u, 1 + i);
}

void hidden_affine(const ConstMap& a, const double* bias, const MatrixXd& h, MatrixXd& z) {
  const Eigen::Index w = a.rows();
  z.setZero(w, h.cols());
  for (Eigen::Index u = 0; u < w; ++u) z(u, 0) = bias[u];
  for (Eigen::Index c = 0; c < h.cols(); ++c)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double hj = h(j, c);
      for (Eigen::Index u = 0; u < w; ++u) z(u, c) += a(u, j) * hj;
    }
}

void activate(const ChannelLayout& l, Activation act, const MatrixXd& z, MatrixXd& out) {
  out.resize(z.rows(), z.cols());
  if (act == Activation::softmax) {
    const VectorXd s = softmax::probabilities(z.col(0));
    out.col(0) = s;
    if (l.order == JetOrder::value) return;
    out.col(ChannelLayout::t_channel) = softmax::jvp(s, z.col(ChannelLayout::t_channel));
    for (int i = 0; i < l.dim; ++i) out.col(l.x_channel(i)) = softmax::jvp(s, z.col(l.x_channel(i)));
    for (int q = 0; q < l.num_dirs(); ++q) {
      const VectorXd uq = first_along(l, z, q);
      out.col(l.second_channel(q)) = softmax::jvp(s, z.col(l.second_channel(q))) + softmax::second(s, uq, uq);
    }
    return;
  }
  for (Eigen::Index u = 0; u < z.rows(); ++u) {
    const auto d = scalar_derivatives(act, z(u, 0));
    out(u, 0) = d.value;
    if (l.order == JetOrder::value) continue;
    out(u, ChannelLayout::t_channel) = d.first * z(u, ChannelLayout::t_channel);
    for (int i = 0; i < l.dim; ++i) out(u, l.x_channel(i)) = d.first * z(u, l.x_channel(i));
    for (int q = 0; q < l.num_dirs(); ++q) {
      const double uq = first_along(l, z, u, q);
      out(u, l.second_channel(q)) = d.second * uq * uq + d.first * z(u, l.second_channel(q));
    }
  }
}

// Cotangent of the pre-activation given the cotangent of the activation output.
MatrixXd activate_backward(const ChannelLayout& l, Activation act, const MatrixXd& z, const MatrixXd& obar) {
  MatrixXd zbar = MatrixXd::Zero(z.rows(), z.cols());
  if (act == Activation::softmax) {
    const VectorXd s = softmax::probabilities(z.col(0));
    VectorXd z0bar = softmax::jvp(s, obar.col(0));
    if (l.order != JetOrder::value) {
      for (int c = 1; c < l.count; ++c) {
        zbar.col(c) = softmax::jvp(s, obar.col(c));
        if (c < l.second_channel(0)) z0bar += softmax::second(s, z.col(c), obar.col(c));
      }
      for (int q = 0; q < l.num_dirs(); ++q) {
        const int c = l.second_channel(q);
        const VectorXd uq = first_along(l, z, q);
        z0bar += softmax::second(s, z.col(c), obar.col(c)) + softmax::third(s, obar.col(c), uq, uq);
        const VectorXd ubar = 2.0 * softmax::second(s, uq, obar.col(c));
        const auto [a, b] = l.dirs[static_cast<std::size_t>(q)];
        zbar.col(l.x_channel(a)) += ubar;
        if (a != b) zbar.col(l.x_channel(b)) += ubar;
      }
    }
    zbar.col(0) = z0bar;
    return zbar;
  }
  for (Eigen::Index u = 0; u < z.rows(); ++u) {
    const auto d = scalar_derivatives(act, z(u, 0));
    double z0bar = d.first * obar(u, 0);
    if (l.order != JetOrder::value) {
      z0bar += d.second * z(u, ChannelLayout::t_channel) * obar(u, ChannelLayout::t_channel);
      zbar(u, ChannelLayout::t_channel) = d.first * obar(u, ChannelLayout::t_channel);
      for (int i = 0; i < l.dim; ++i) {
        const int c = l.x_channel(i);
        z0bar += d.second * z(u, c) * obar(u, c);
        zbar(u, c) = d.first * obar(u, c);
      }
      for (int q = 0; q < l.num_dirs(); ++q) {
        const int c = l.second_channel(q);
        const double uq = first_along(l, z, u, q);
        z0bar += (d.third * uq * uq + d.second * z(u, c)) * obar(u, c);
        zbar(u, c) = d.first * obar(u, c);
        const double ubar = 2.0 * d.second * uq * obar(u, c);
        const auto [a, b] = l.dirs[static_cast<std::size_t>(q)];
        zbar(u, l.x_channel(a)) += ubar;
        if (a != b) zbar(u, l.x_channel(b)) += ubar;
      }
    }
    zbar(u, 0) = z0bar;
  }
  return zbar;
}

struct Forward {
  ChannelLayout layout;
  std::vector<LayerTape> layers;
  VectorXd y;  // output channels
};

Forward run_forward(const NetworkSpec& spec, std::span<const double> params, double t,
                    const Eigen::Ref<const VectorXd>& x, JetOrder order) {
  Forward f;
  f.layout = detail::make_layout(spec.spatial_dim(), order);
  const auto layout = layer_layout(spec);
  const int hidden = spec.hidden_layers;
  f.layers.resize(static_cast<std::size_t>(hidden));
  for (int l = 0; l < hidden; ++l) {
    const auto& lay = layout[static_cast<std::size_t>(l)];
    const ConstMap a(params.data() + lay.weight_offset, lay.outputs, lay.inputs);
    const double* bias = params.data() + lay.bias_offset;
    auto& tape = f.layers[static_cast<std::size_t>(l)];
    if (l == 0) {
      input_affine(f.layout, a, bias, t, x, tape.z);
    } else {
      hidden_affine(a, bias, f.layers[static_cast<std::size_t>(l - 1)].out, tape.z);
    }
    activate(f.layout, spec.activation, tape.z, tape.out);
    if (l > 0) tape.out += spec.skip_weight * f.layers[static_cast<std::size_t>(l - 1)].out;
  }
  const auto& outl = layout.back();
  const double* c = params.data() + outl.weight_offset;
  const MatrixXd& h = f.layers.back().out;
  f.y = VectorXd::Zero(f.layout.count);
  f.y[0] = params[outl.bias_offset];
  for (Eigen::Index ch = 0; ch < h.cols(); ++ch)
    for (Eigen::Index u = 0; u < h.rows(); ++u) f.y[ch] += c[u] * h(u, ch);
  return f;
}

struct JetWriter {
  Jet& j;
  void value(double v) { j.value = v; }
  void dt(double v) { j.dt = v; }
  void grad(int i, double v) { j.grad_x[i] = v; }
  void diag(int i, double v) { j.diag_hess[i] = v; }
  void mixed(int a, int b, double v) { (*j.mixed_hess)(a, b) = v; }
};

struct JetReader {
  const Jet& j;
  double value() const { return j.value; }
  double dt() const { return j.dt; }
  double grad(int i) const { return j.grad_x[i]; }
  double diag(int i) const { return j.diag_hess[i]; }
  double mixed(int a, int b) const { return (*j.mixed_hess)(a, b); }
};

}  // namespace

Jet eval(const NetworkSpec& spec, std::span<const double> params, double t,
         const Eigen::Ref<const VectorXd>& x, JetOrder order) {
  check_inputs(spec, params, t, x);
  const Forward f = run_forward(spec, params, t, x, order);
  Jet jet;
  const int d = spec.spatial_dim();
  if (order != JetOrder::value) {
    jet.grad_x = VectorXd::Zero(d);
    jet.diag_hess = VectorXd::Zero(d);
  }
  if (order == JetOrder::mixed) jet.mixed_hess = MatrixXd::Zero(d, d);
  detail::channels_to_jet(f.layout, f.y.data(), 1, JetWriter{jet});
  return jet;
}

void backward(const NetworkSpec& spec, std::span<const double> params, double t,
              const Eigen::Ref<const VectorXd>& x, JetOrder order, const Jet& seed,
              std::span<double> grad) {
  check_inputs(spec, params, t, x);
  if (grad.size() != params.size()) throw ShapeError("gradient buffer does not match parameter count");
  const int d = spec.spatial_dim();
  if (order != JetOrder::value && (seed.grad_x.size() != d || seed.diag_hess.size() != d)) {
    throw ShapeError("seed jet has the wrong dimension");
  }
  if (order == JetOrder::mixed && !seed.mixed_hess) throw ShapeError("mixed-order seed needs mixed_hess");

  const Forward f = run_forward(spec, params, t, x, order);
  const ChannelLayout& lc = f.layout;
  VectorXd ybar = VectorXd::Zero(lc.count);
  detail::seeds_to_channels(lc, JetReader{seed}, ybar.data(), 1);

  const auto layout = layer_layout(spec);
  const auto& outl = layout.back();
  const double* c = params.data() + outl.weight_offset;
  const MatrixXd& hl = f.layers.back().out;
  for (Eigen::Index ch = 0; ch < hl.cols(); ++ch)
    for (Eigen::Index u = 0; u < hl.rows(); ++u) grad[outl.weight_offset + static_cast<std::size_t>(u)] += ybar[ch] * hl(u, ch);
  grad[outl.bias_offset] += ybar[0];

  MatrixXd hbar(hl.rows(), hl.cols());
  for (Eigen::Index ch = 0; ch < hl.cols(); ++ch)
    for (Eigen::Index u = 0; u < hl.rows(); ++u) hbar(u, ch) = c[u] * ybar[ch];

  for (int l = spec.hidden_layers - 1; l >= 0; --l) {
    const auto& lay = layout[static_cast<std::size_t>(l)];
    const auto& tape = f.layers[static_cast<std::size_t>(l)];
    const ConstMap a(params.data() + lay.weight_offset, lay.outputs, lay.inputs);
    double* ga = grad.data() + lay.weight_offset;
    double* gb = grad.data() + lay.bias_offset;

    const MatrixXd zbar = activate_backward(lc, spec.activation, tape.z, hbar);
    for (Eigen::Index u = 0; u < zbar.rows(); ++u) gb[u] += zbar(u, 0);

    if (l == 0) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const double in = j == 0 ? t : x[j - 1];
        for (Eigen::Index u = 0; u < a.rows(); ++u) ga[j * a.rows() + u] += zbar(u, 0) * in;
      }
      if (order != JetOrder::value) {
        for (Eigen::Index u = 0; u < a.rows(); ++u) ga[u] += zbar(u, ChannelLayout::t_channel);
        for (int i = 0; i < d; ++i)
          for (Eigen::Index u = 0; u < a.rows(); ++u) ga[(1 + i) * a.rows() + u] += zbar(u, lc.x_channel(i));
      }
      break;
    }

    const MatrixXd& hin = f.layers[static_cast<std::size_t>(l - 1)].out;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index u = 0; u < a.rows(); ++u) {
        double acc = 0.0;
        for (Eigen::Index ch = 0; ch < hin.cols(); ++ch) acc += zbar(u, ch) * hin(j, ch);
        ga[j * a.rows() + u] += acc;
      }
    MatrixXd next = spec.skip_weight * hbar;
    for (Eigen::Index ch = 0; ch < hin.cols(); ++ch)
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        double acc = 0.0;
        for (Eigen::Index u = 0; u < a.rows(); ++u) acc += a(u, j) * zbar(u, ch);
        next(j, ch) += acc;
      }
    hbar = std::move(next);
  }
}

}  // namespace mfdgm::serial
