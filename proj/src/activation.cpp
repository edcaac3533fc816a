#include "mfdgm/activation.hpp"

#include <atomic>
#include <cmath>

#include "mfdgm/error.hpp"

namespace mfdgm {

namespace {
std::atomic<double> g_first_offset{0.0};
}

namespace fault {
void set_first_derivative_offset(double offset) { g_first_offset.store(offset); }
double first_derivative_offset() { return g_first_offset.load(std::memory_order_relaxed); }
}  // namespace fault

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Activation activation_from_string(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  if (name == "relu") return Activation::relu;
  if (name == "softmax") return Activation::softmax;
  throw UsageError("unknown activation '" + std::string(name) + "'");
}

ScalarDerivatives scalar_derivatives(Activation a, double z) {
  ScalarDerivatives r{};
  switch (a) {
    case Activation::tanh: {
      const double t = std::tanh(z);
      r.value = t;
      r.first = 1.0 - t * t;
      r.second = -2.0 * t * r.first;
      r.third = -2.0 * (r.first * r.first + t * r.second);
      break;
    }
    case Activation::softplus: {
      // log(1 + e^z) without overflow
      r.value = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      const double g = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      r.first = g;
      r.second = g * (1.0 - g);
      r.third = r.second * (1.0 - 2.0 * g);
      break;
    }
    case Activation::relu:
      r.value = z > 0.0 ? z : 0.0;
      r.first = z > 0.0 ? 1.0 : 0.0;
      r.second = 0.0;
      r.third = 0.0;
      break;
    case Activation::softmax:
      throw UsageError("softmax is not an elementwise activation");
  }
  r.first += fault::first_derivative_offset();
  return r;
}

void derivative_arrays(Activation a, const Eigen::Ref<const Eigen::ArrayXXd>& z, Eigen::ArrayXXd& value,
                       Eigen::ArrayXXd& first, Eigen::ArrayXXd& second, Eigen::ArrayXXd* third) {
  switch (a) {
    case Activation::tanh: {
      const Eigen::ArrayXXd e = (-2.0 * z.abs()).exp();
      value = z.sign() * (1.0 - e) / (1.0 + e);
      first = 1.0 - value.square();
      second = -2.0 * value * first;
      if (third) *third = -2.0 * (first.square() + value * second);
      break;
    }
    case Activation::softplus: {
      const Eigen::ArrayXXd e = (-z.abs()).exp();
      value = z.max(0.0) + e.log1p();
      first = (z >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
      second = first * (1.0 - first);
      if (third) *third = second * (1.0 - 2.0 * first);
      break;
    }
    case Activation::relu:
      value = z.max(0.0);
      first = (z > 0.0).cast<double>();
      second = Eigen::ArrayXXd::Zero(z.rows(), z.cols());
      if (third) *third = Eigen::ArrayXXd::Zero(z.rows(), z.cols());
      break;
    case Activation::softmax:
      throw UsageError("softmax is not an elementwise activation");
  }
  const double offset = fault::first_derivative_offset();
  if (offset != 0.0) first += offset;
}

namespace softmax {

Eigen::VectorXd probabilities(const Eigen::Ref<const Eigen::VectorXd>& z) {
  const double zmax = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - zmax).exp().matrix();
  return e / e.sum();
}

Eigen::VectorXd jvp(const Eigen::Ref<const Eigen::VectorXd>& s,
                    const Eigen::Ref<const Eigen::VectorXd>& u) {
  const double mu = s.dot(u);
  return (s.array() * (u.array() - mu)).matrix();
}

Eigen::VectorXd second(const Eigen::Ref<const Eigen::VectorXd>& s,
                       const Eigen::Ref<const Eigen::VectorXd>& u,
                       const Eigen::Ref<const Eigen::VectorXd>& w) {
  const Eigen::ArrayXd uc = u.array() - s.dot(u);
  const Eigen::ArrayXd wc = w.array() - s.dot(w);
  const double cov = (s.array() * uc * wc).sum();
  return (s.array() * (uc * wc - cov)).matrix();
}

Eigen::VectorXd third(const Eigen::Ref<const Eigen::VectorXd>& s,
                      const Eigen::Ref<const Eigen::VectorXd>& y,
                      const Eigen::Ref<const Eigen::VectorXd>& u,
                      const Eigen::Ref<const Eigen::VectorXd>& w) {
  const Eigen::ArrayXd sa = s.array();
  const Eigen::ArrayXd yc = y.array() - s.dot(y);
  const Eigen::ArrayXd uc = u.array() - s.dot(u);
  const Eigen::ArrayXd wc = w.array() - s.dot(w);
  const double cuw = (sa * uc * wc).sum();
  const double cyw = (sa * yc * wc).sum();
  const double cyu = (sa * yc * uc).sum();
  const double m3 = (sa * yc * uc * wc).sum();
  return (sa * (yc * uc * wc - m3 - yc * cuw - uc * cyw - wc * cyu)).matrix();
}

}  // namespace softmax

ActivationValues activation_values(Activation a, const Eigen::Ref<const Eigen::VectorXd>& z) {
  ActivationValues out;
  const auto n = z.size();
  if (a == Activation::softmax) {
    out.value = softmax::probabilities(z);
    const Eigen::VectorXd& s = out.value;
    out.jacobian = Eigen::MatrixXd(s.asDiagonal()) - s * s.transpose();
    out.jacobian_derivative.assign(static_cast<std::size_t>(n), Eigen::MatrixXd(n, n));
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::VectorXd ek = Eigen::VectorXd::Unit(n, k);
      for (Eigen::Index b = 0; b < n; ++b) {
        out.jacobian_derivative[static_cast<std::size_t>(k)].col(b) =
            softmax::second(s, Eigen::VectorXd::Unit(n, b), ek);
      }
    }
    return out;
  }
  out.value.resize(n);
  out.first.resize(n);
  out.second.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto d = scalar_derivatives(a, z[i]);
    out.value[i] = d.value;
    out.first[i] = d.first;
    out.second[i] = d.second;
  }
  return out;
}

}  // namespace mfdgm
