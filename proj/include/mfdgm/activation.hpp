#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mfdgm {

enum class Activation { tanh, softplus, relu, softmax };

std::string_view to_string(Activation a);
/// Throws UsageError for unknown names.
Activation activation_from_string(std::string_view name);

/// Value and the first three derivatives of a scalar activation at one point.
/// The third derivative is only needed when differentiating second-order jets
/// with respect to parameters.
struct ScalarDerivatives {
  double value;
  double first;
  double second;
  double third;
};

/// Elementwise activations only (tanh, softplus, relu).  relu has zero second
/// and third derivative everywhere and first derivative 0 at the kink.
ScalarDerivatives scalar_derivatives(Activation a, double z);

/// Vectorised scalar_derivatives over an array of pre-activations.  Agrees with
/// the scalar version up to rounding.  `third` is skipped when null.
void derivative_arrays(Activation a, const Eigen::Ref<const Eigen::ArrayXXd>& z, Eigen::ArrayXXd& value,
                       Eigen::ArrayXXd& first, Eigen::ArrayXXd& second, Eigen::ArrayXXd* third);

struct ActivationValues {
  // Componentwise, for tanh/softplus/relu.  For softmax `value` holds s and
  // `first`/`second` are left empty.
  Eigen::VectorXd value;
  Eigen::VectorXd first;
  Eigen::VectorXd second;
  // softmax only: J = diag(s) - s s^T and dJ/dz_k for each k.
  Eigen::MatrixXd jacobian;
  std::vector<Eigen::MatrixXd> jacobian_derivative;
};

ActivationValues activation_values(Activation a, const Eigen::Ref<const Eigen::VectorXd>& z);

/// Softmax and its derivative contractions.  With s = softmax(z) these are the
/// cumulants of a categorical variable K ~ s: writing u~ = u - <s,u>,
///   jvp(u)            = s * u~
///   second(u, w)_a    = s_a (u~_a w~_a - Cov(u, w))
///   third(y, u, w)_a  = s_a (y~_a u~_a w~_a - E[y~ u~ w~]
///                            - y~_a Cov(u,w) - u~_a Cov(y,w) - w~_a Cov(y,u))
/// which are the first, second and third directional derivatives of s.  All
/// three are symmetric in their vector arguments.
namespace softmax {

Eigen::VectorXd probabilities(const Eigen::Ref<const Eigen::VectorXd>& z);

Eigen::VectorXd jvp(const Eigen::Ref<const Eigen::VectorXd>& s,
                    const Eigen::Ref<const Eigen::VectorXd>& u);

Eigen::VectorXd second(const Eigen::Ref<const Eigen::VectorXd>& s,
                       const Eigen::Ref<const Eigen::VectorXd>& u,
                       const Eigen::Ref<const Eigen::VectorXd>& w);

Eigen::VectorXd third(const Eigen::Ref<const Eigen::VectorXd>& s,
                      const Eigen::Ref<const Eigen::VectorXd>& y,
                      const Eigen::Ref<const Eigen::VectorXd>& u,
                      const Eigen::Ref<const Eigen::VectorXd>& w);

}  // namespace softmax

namespace fault {
// Adds `offset` to the first derivative reported for elementwise activations.
// Used by gradcheck to prove the derivative checks catch a broken activation.
void set_first_derivative_offset(double offset);
double first_derivative_offset();
}  // namespace fault

}  // namespace mfdgm
