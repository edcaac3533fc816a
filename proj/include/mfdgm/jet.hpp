#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mfdgm/network.hpp"
#include "mfdgm/sampling.hpp"

namespace mfdgm {

/// Which derivatives a jet evaluation propagates.
///   value     - network output only
///   diagonal  - value, d/dt, spatial gradient, d^2/dx_i^2
///   mixed     - diagonal plus the full symmetric spatial Hessian
enum class JetOrder { value, diagonal, mixed };

/// Network value and the derivatives the PDE residuals need at one point.
/// For JetOrder::value only `value` is filled and the vectors are empty.
struct Jet {
  double value = 0.0;
  double dt = 0.0;
  Eigen::VectorXd grad_x;
  Eigen::VectorXd diag_hess;
  std::optional<Eigen::MatrixXd> mixed_hess;

  double laplacian() const { return diag_hess.sum(); }
  bool all_finite() const;
};

struct ParamGradient {
  std::vector<double> values;
};

/// Exact derivatives of the network at (t, x), evaluated by the serial kernel.
/// Throws ShapeError on dimension mismatch and DomainError on non-finite input.
Jet eval_jet(const NetworkParams& params, const NetworkSpec& spec, double t,
             const Eigen::Ref<const Eigen::VectorXd>& x, bool want_mixed);
Jet eval_jet(const NetworkParams& params, const NetworkSpec& spec, double t,
             const Eigen::Ref<const Eigen::VectorXd>& x, JetOrder order);

/// Jets of a whole batch in structure-of-arrays form.  The same layout carries
/// cotangents ("seeds") on the way back: entry (i, j) of `mixed` is treated as
/// independent of entry (j, i), and a diagonal seed adds to the d^2/dx_i^2 seed.
struct JetBatch {
  JetOrder order = JetOrder::value;
  int dim = 0;
  Eigen::VectorXd value;  // n
  Eigen::VectorXd dt;     // n
  Eigen::MatrixXd grad;   // d x n
  Eigen::MatrixXd diag;   // d x n
  Eigen::MatrixXd mixed;  // (d*d) x n, column-major d x d block per sample

  static JetBatch zeros(JetOrder order, int dim, Eigen::Index n);
  Eigen::Index size() const { return value.size(); }
  Jet at(Eigen::Index s) const;
  /// Index of the first sample with a non-finite entry, or -1.
  Eigen::Index first_nonfinite() const;
};

/// Scalar loss over a batch of jets.  Returns the loss and writes d(loss)/d(jet
/// field) into `seeds`, which arrives zero-initialised with the jets' shape.
using JetLoss = std::function<double(const JetBatch& jets, JetBatch& seeds)>;

/// Gradient of `loss` with respect to every network parameter, by reverse
/// differentiation through the jet propagation (batched kernel).
/// Throws UsageError on an empty batch and NumericError (with the sample index)
/// when a jet or seed is non-finite.
ParamGradient loss_param_gradient(const NetworkParams& params, const NetworkSpec& spec,
                                  const SampleBatch& batch, JetOrder order, const JetLoss& loss,
                                  double* loss_value = nullptr);

namespace serial {

/// Reference kernel: one sample at a time, plain loops in a fixed order.
Jet eval(const NetworkSpec& spec, std::span<const double> params, double t,
         const Eigen::Ref<const Eigen::VectorXd>& x, JetOrder order);

/// Adds d(<seed, jet>)/d(params) to `grad`.  `seed` must have the shape of a
/// jet of the same order (mixed_hess present iff order is mixed).
void backward(const NetworkSpec& spec, std::span<const double> params, double t,
              const Eigen::Ref<const Eigen::VectorXd>& x, JetOrder order, const Jet& seed,
              std::span<double> grad);

}  // namespace serial

namespace batched {

/// Samples per work block.  Fixed so that block boundaries, and hence every
/// floating-point summation order, do not depend on the number of threads.
inline constexpr Eigen::Index block_size = 32;

/// Forward pass over a batch that keeps what the reverse pass needs.  Blocks are
/// evaluated in parallel with OpenMP; gradient contributions are reduced in
/// block order.  `params` must outlive the evaluation.
class JetEvaluation {
 public:
  JetEvaluation(const NetworkSpec& spec, std::span<const double> params, const SampleBatch& batch,
                JetOrder order);
  ~JetEvaluation();
  JetEvaluation(JetEvaluation&&) noexcept;
  JetEvaluation& operator=(JetEvaluation&&) noexcept;

  const JetBatch& jets() const { return jets_; }

  /// Adds sum_s d(<seeds_s, jet_s>)/d(params) to `grad`.
  void backward(const JetBatch& seeds, std::span<double> grad) const;

 private:
  struct Block;
  NetworkSpec spec_;
  std::span<const double> params_;
  JetOrder order_;
  JetBatch jets_;
  std::vector<Block> blocks_;
};

}  // namespace batched

}  // namespace mfdgm
