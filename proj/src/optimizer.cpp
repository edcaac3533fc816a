#include "mfdgm/optimizer.hpp"

#include <cmath>

#include "mfdgm/error.hpp"

namespace mfdgm {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw UsageError("unknown optimizer '" + name + "'");
}

void OptimizerSettings::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("learning rate must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw UsageError("weight decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw UsageError("epsilon must be > 0");
}

OptimizerState make_optimizer(const OptimizerSettings& settings, std::size_t n_params) {
  settings.validate();
  OptimizerState s;
  s.settings = settings;
  if (settings.kind == OptimizerKind::adam) {
    s.m.assign(n_params, 0.0);
    s.v.assign(n_params, 0.0);
  }
  return s;
}

namespace {
void check(const OptimizerState& s, const NetworkParams& p, const std::vector<double>& g, bool moments) {
  if (g.size() != p.count()) throw UsageError("gradient has " + std::to_string(g.size()) + " entries, parameters " +
                                              std::to_string(p.count()));
  if (moments && (s.m.size() != p.count() || s.v.size() != p.count()))
    throw UsageError("optimizer moments do not match the parameter vector");
}
}  // namespace

void adam_step(OptimizerState& state, NetworkParams& params, const std::vector<double>& grads) {
  check(state, params, grads, true);
  const OptimizerSettings& o = state.settings;
  ++state.step_count;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    double& th = params.flat[i];
    const double g = grads[i] + o.weight_decay * th;
    state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * g;
    state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * g * g;
    const double mh = state.m[i] / c1;
    const double vh = state.v[i] / c2;
    th -= o.lr * mh / (std::sqrt(vh) + o.epsilon);
  }
}

void sgd_step(OptimizerState& state, NetworkParams& params, const std::vector<double>& grads) {
  check(state, params, grads, false);
  const OptimizerSettings& o = state.settings;
  ++state.step_count;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    double& th = params.flat[i];
    th -= o.lr * (grads[i] + o.weight_decay * th);
  }
}

void optimizer_step(OptimizerState& state, NetworkParams& params, const std::vector<double>& grads) {
  if (state.settings.kind == OptimizerKind::adam)
    adam_step(state, params, grads);
  else
    sgd_step(state, params, grads);
}

}  // namespace mfdgm
