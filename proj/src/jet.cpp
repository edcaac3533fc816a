#include "mfdgm/jet.hpp"

#include <cmath>
#include <string>

#include "mfdgm/error.hpp"

namespace mfdgm {

bool Jet::all_finite() const {
  if (!std::isfinite(value) || !std::isfinite(dt)) return false;
  if (!grad_x.allFinite() || !diag_hess.allFinite()) return false;
  return !mixed_hess || mixed_hess->allFinite();
}

Jet eval_jet(const NetworkParams& params, const NetworkSpec& spec, double t,
             const Eigen::Ref<const Eigen::VectorXd>& x, bool want_mixed) {
  return serial::eval(spec, params.flat, t, x, want_mixed ? JetOrder::mixed : JetOrder::diagonal);
}

Jet eval_jet(const NetworkParams& params, const NetworkSpec& spec, double t,
             const Eigen::Ref<const Eigen::VectorXd>& x, JetOrder order) {
  return serial::eval(spec, params.flat, t, x, order);
}

JetBatch JetBatch::zeros(JetOrder order, int dim, Eigen::Index n) {
  JetBatch b;
  b.order = order;
  b.dim = dim;
  b.value = Eigen::VectorXd::Zero(n);
  if (order != JetOrder::value) {
    b.dt = Eigen::VectorXd::Zero(n);
    b.grad = Eigen::MatrixXd::Zero(dim, n);
    b.diag = Eigen::MatrixXd::Zero(dim, n);
  }
  if (order == JetOrder::mixed) b.mixed = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim) * dim, n);
  return b;
}

Jet JetBatch::at(Eigen::Index s) const {
  Jet j;
  j.value = value[s];
  if (order == JetOrder::value) return j;
  j.dt = dt[s];
  j.grad_x = grad.col(s);
  j.diag_hess = diag.col(s);
  if (order == JetOrder::mixed) j.mixed_hess = mixed.col(s).reshaped(dim, dim);
  return j;
}

Eigen::Index JetBatch::first_nonfinite() const {
  for (Eigen::Index s = 0; s < size(); ++s) {
    bool ok = std::isfinite(value[s]);
    if (ok && order != JetOrder::value) {
      ok = std::isfinite(dt[s]) && grad.col(s).allFinite() && diag.col(s).allFinite();
    }
    if (ok && order == JetOrder::mixed) ok = mixed.col(s).allFinite();
    if (!ok) return s;
  }
  return -1;
}

ParamGradient loss_param_gradient(const NetworkParams& params, const NetworkSpec& spec,
                                  const SampleBatch& batch, JetOrder order, const JetLoss& loss,
                                  double* loss_value) {
  if (batch.size() == 0) throw UsageError("loss_param_gradient: empty batch");
  const batched::JetEvaluation eval(spec, params.flat, batch, order);
  JetBatch seeds = JetBatch::zeros(order, spec.spatial_dim(), batch.size());
  const double l = loss(eval.jets(), seeds);
  if (!std::isfinite(l)) throw NumericError("loss is not finite");
  ParamGradient g;
  g.values.assign(params.count(), 0.0);
  eval.backward(seeds, g.values);
  if (loss_value) *loss_value = l;
  return g;
}

}  // namespace mfdgm
