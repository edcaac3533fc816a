#include "mfdgm/network.hpp"

#include <cmath>
#include <string>

#include "mfdgm/error.hpp"
#include "mfdgm/jet.hpp"
#include "mfdgm/sampling.hpp"

namespace mfdgm {

void NetworkSpec::validate() const {
  if (input_dim < 2) throw UsageError("input_dim must be >= 2 (time plus at least one space coordinate)");
  if (hidden_width < 1) throw UsageError("hidden_width must be >= 1");
  if (hidden_layers < 1) throw UsageError("hidden_layers must be >= 1");
  if (output_dim != 1) throw UsageError("output_dim must be 1");
  if (!(skip_weight >= 0.0 && skip_weight <= 1.0)) throw UsageError("skip_weight must lie in [0, 1]");
}

std::size_t parameter_count(const NetworkSpec& spec) {
  const std::size_t w = static_cast<std::size_t>(spec.hidden_width);
  const std::size_t in = static_cast<std::size_t>(spec.input_dim);
  const std::size_t l = static_cast<std::size_t>(spec.hidden_layers);
  const std::size_t out = static_cast<std::size_t>(spec.output_dim);
  return (in + 1) * w + (l - 1) * (w + 1) * w + (w + 1) * out;
}

std::vector<LayerLayout> layer_layout(const NetworkSpec& spec) {
  std::vector<LayerLayout> layers;
  layers.reserve(static_cast<std::size_t>(spec.hidden_layers) + 1);
  std::size_t offset = 0;
  auto push = [&](int in, int out) {
    LayerLayout l{in, out, offset, offset + static_cast<std::size_t>(in) * static_cast<std::size_t>(out)};
    offset = l.bias_offset + static_cast<std::size_t>(out);
    layers.push_back(l);
  };
  push(spec.input_dim, spec.hidden_width);
  for (int i = 1; i < spec.hidden_layers; ++i) push(spec.hidden_width, spec.hidden_width);
  push(spec.hidden_width, spec.output_dim);
  return layers;
}

void check_shape(const NetworkSpec& spec, std::span<const double> params) {
  const auto expected = parameter_count(spec);
  if (params.size() != expected) {
    throw ShapeError("parameter vector has " + std::to_string(params.size()) + " entries, network needs " +
                     std::to_string(expected));
  }
}

NetworkParams init_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetworkParams p;
  p.flat.assign(parameter_count(spec), 0.0);
  Rng rng(seed, 0x6e6574776f726bULL);  // "network"
  for (const auto& layer : layer_layout(spec)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
    const std::size_t n = static_cast<std::size_t>(layer.inputs) * static_cast<std::size_t>(layer.outputs);
    for (std::size_t i = 0; i < n; ++i) p.flat[layer.weight_offset + i] = rng.uniform(-bound, bound);
  }
  return p;
}

double forward(const NetworkParams& params, const NetworkSpec& spec, double t,
               const Eigen::Ref<const Eigen::VectorXd>& x) {
  return eval_jet(params, spec, t, x, JetOrder::value).value;
}

void make_constant(const NetworkSpec& spec, NetworkParams& params, double c) {
  check_shape(spec, params.flat);
  const auto out = layer_layout(spec).back();
  for (std::size_t i = out.weight_offset; i < out.bias_offset; ++i) params.flat[i] = 0.0;
  params.flat[out.bias_offset] = c;
}

}  // namespace mfdgm
