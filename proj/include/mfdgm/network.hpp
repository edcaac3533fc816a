#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mfdgm/activation.hpp"

namespace mfdgm {

/// Fully connected network R^{1+d} -> R.
///
///   h_1     = act(A_0 (t, x) + b_0)
///   h_{l+1} = act(A_l h_l + b_l) + skip_weight * h_l      l = 1 .. hidden_layers-1
///   N(t, x) = c . h_L + c_0
///
/// With a single hidden layer there is no residual block and skip_weight has
/// no effect.  softmax acts across the units of a layer.
struct NetworkSpec {
  int input_dim = 2;  // 1 + spatial dimension
  int hidden_width = 1;
  int hidden_layers = 1;
  Activation activation = Activation::tanh;
  double skip_weight = 0.0;
  int output_dim = 1;

  int spatial_dim() const { return input_dim - 1; }
  /// Throws UsageError when the spec is not a valid architecture.
  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

/// (input_dim+1)W + (hidden_layers-1)(W+1)W + (W+1)output_dim
std::size_t parameter_count(const NetworkSpec& spec);

/// Location of one affine layer inside the flat parameter vector.  The weight
/// matrix is stored column-major (rows = outputs), followed by the bias.
struct LayerLayout {
  int inputs;
  int outputs;
  std::size_t weight_offset;
  std::size_t bias_offset;
};

/// hidden_layers entries for the hidden layers, then the output layer.
std::vector<LayerLayout> layer_layout(const NetworkSpec& spec);

struct NetworkParams {
  std::vector<double> flat;

  std::size_t count() const { return flat.size(); }
  std::span<const double> view() const { return flat; }
  bool operator==(const NetworkParams&) const = default;
};

/// Glorot-uniform weights, zero biases.  Deterministic in (spec, seed).
NetworkParams init_network(const NetworkSpec& spec, std::uint64_t seed);

/// Throws ShapeError unless params has parameter_count(spec) entries.
void check_shape(const NetworkSpec& spec, std::span<const double> params);

/// Network value at (t, x).  Identical to eval_jet(...).value bit for bit.
double forward(const NetworkParams& params, const NetworkSpec& spec, double t,
               const Eigen::Ref<const Eigen::VectorXd>& x);

/// Makes every output weight zero and the output bias `c`, so the network is the
/// constant function c.
void make_constant(const NetworkSpec& spec, NetworkParams& params, double c);

}  // namespace mfdgm
