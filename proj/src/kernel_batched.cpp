// Batched kernel.  A block of n samples is propagated as one matrix per layer
// whose columns are grouped by channel: column c*n + s holds channel c of
// sample s.  Affine maps then become single GEMMs and elementwise activation
// rules become array expressions over n-column slices.

#include <cmath>
#include <string>

#include "jet_channels.hpp"
#include "mfdgm/error.hpp"
#include "mfdgm/jet.hpp"

namespace mfdgm::batched {

namespace {

using detail::ChannelLayout;
using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using Map = Eigen::Map<MatrixXd>;

struct BatchWriter {
  JetBatch& j;
  Index s;
  void value(double v) { j.value[s] = v; }
  void dt(double v) { j.dt[s] = v; }
  void grad(int i, double v) { j.grad(i, s) = v; }
  void diag(int i, double v) { j.diag(i, s) = v; }
  void mixed(int a, int b, double v) { j.mixed(a + b * j.dim, s) = v; }
};

struct BatchReader {
  const JetBatch& j;
  Index s;
  double value() const { return j.value[s]; }
  double dt() const { return j.dt[s]; }
  double grad(int i) const { return j.grad(i, s); }
  double diag(int i) const { return j.diag(i, s); }
  double mixed(int a, int b) const { return j.mixed(a + b * j.dim, s); }
};

}  // namespace

struct JetEvaluation::Block {
  Index begin = 0;
  Index n = 0;
  MatrixXd input;             // input_dim x n: rows are (t, x_1..x_d)
  std::vector<MatrixXd> z;    // per hidden layer, width x (channels * n)
  std::vector<MatrixXd> out;  // per hidden layer, width x (channels * n)
  // activation derivatives at the value channel, per hidden layer (width x n)
  std::vector<ArrayXXd> first, second, third;
};

JetEvaluation::~JetEvaluation() = default;
JetEvaluation::JetEvaluation(JetEvaluation&&) noexcept = default;
JetEvaluation& JetEvaluation::operator=(JetEvaluation&&) noexcept = default;

namespace {

void softmax_forward(const ChannelLayout& l, const MatrixXd& z, MatrixXd& out, Index n) {
  for (Index s = 0; s < n; ++s) {
    const VectorXd sp = softmax::probabilities(z.col(s));
    out.col(s) = sp;
    if (l.order == JetOrder::value) continue;
    for (int c = 1; c < l.second_channel(0); ++c) out.col(c * n + s) = softmax::jvp(sp, z.col(c * n + s));
    for (int q = 0; q < l.num_dirs(); ++q) {
      const auto [a, b] = l.dirs[static_cast<std::size_t>(q)];
      VectorXd uq = z.col(l.x_channel(a) * n + s);
      if (a != b) uq += z.col(l.x_channel(b) * n + s);
      const Index c = l.second_channel(q) * n + s;
      out.col(c) = softmax::jvp(sp, z.col(c)) + softmax::second(sp, uq, uq);
    }
  }
}

void softmax_backward(const ChannelLayout& l, const MatrixXd& z, const MatrixXd& obar, MatrixXd& zbar,
                      Index n) {
  for (Index s = 0; s < n; ++s) {
    const VectorXd sp = softmax::probabilities(z.col(s));
    VectorXd z0bar = softmax::jvp(sp, obar.col(s));
    if (l.order != JetOrder::value) {
      for (int c = 1; c < l.count; ++c) {
        const Index col = c * n + s;
        zbar.col(col) = softmax::jvp(sp, obar.col(col));
        if (c < l.second_channel(0)) z0bar += softmax::second(sp, z.col(col), obar.col(col));
      }
      for (int q = 0; q < l.num_dirs(); ++q) {
        const auto [a, b] = l.dirs[static_cast<std::size_t>(q)];
        VectorXd uq = z.col(l.x_channel(a) * n + s);
        if (a != b) uq += z.col(l.x_channel(b) * n + s);
        const Index col = l.second_channel(q) * n + s;
        z0bar += softmax::second(sp, z.col(col), obar.col(col)) + softmax::third(sp, obar.col(col), uq, uq);
        const VectorXd ubar = 2.0 * softmax::second(sp, uq, obar.col(col));
        zbar.col(l.x_channel(a) * n + s) += ubar;
        if (a != b) zbar.col(l.x_channel(b) * n + s) += ubar;
      }
    }
    zbar.col(s) = z0bar;
  }
}

}  // namespace

JetEvaluation::JetEvaluation(const NetworkSpec& spec, std::span<const double> params, const SampleBatch& batch,
                             JetOrder order)
    : spec_(spec), params_(params), order_(order) {
  spec_.validate();
  check_shape(spec_, params_);
  const int d = spec_.spatial_dim();
  if (batch.size() == 0) throw UsageError("empty batch");
  if (batch.dim() != d) {
    throw ShapeError("batch has dimension " + std::to_string(batch.dim()) + ", network expects " +
                     std::to_string(d));
  }
  if (batch.times.size() != batch.size()) throw ShapeError("jet evaluation needs a time for every sample");
  if (!batch.times.allFinite() || !batch.points.allFinite()) throw DomainError("non-finite network input");

  const Index total = batch.size();
  jets_ = JetBatch::zeros(order, d, total);
  const Index nblocks = (total + block_size - 1) / block_size;
  blocks_.resize(static_cast<std::size_t>(nblocks));

  const ChannelLayout lc = detail::make_layout(d, order);
  const auto layout = layer_layout(spec_);
  const int width = spec_.hidden_width;

#pragma omp parallel for schedule(static)
  for (Index bi = 0; bi < nblocks; ++bi) {
    Block& blk = blocks_[static_cast<std::size_t>(bi)];
    blk.begin = bi * block_size;
    blk.n = std::min(block_size, total - blk.begin);
    const Index n = blk.n;
    const Index cols = lc.count * n;
    blk.input.resize(spec_.input_dim, n);
    blk.input.row(0) = batch.times.segment(blk.begin, n).transpose();
    blk.input.bottomRows(d) = batch.points.middleCols(blk.begin, n);
    blk.z.resize(static_cast<std::size_t>(spec_.hidden_layers));
    blk.out.resize(static_cast<std::size_t>(spec_.hidden_layers));
    if (spec_.activation != Activation::softmax) {
      blk.first.resize(static_cast<std::size_t>(spec_.hidden_layers));
      blk.second.resize(static_cast<std::size_t>(spec_.hidden_layers));
      blk.third.resize(static_cast<std::size_t>(spec_.hidden_layers));
    }

    for (int l = 0; l < spec_.hidden_layers; ++l) {
      const auto& lay = layout[static_cast<std::size_t>(l)];
      const ConstMap a(params_.data() + lay.weight_offset, lay.outputs, lay.inputs);
      const Eigen::Map<const VectorXd> bias(params_.data() + lay.bias_offset, lay.outputs);
      MatrixXd& z = blk.z[static_cast<std::size_t>(l)];
      if (l == 0) {
        z = MatrixXd::Zero(width, cols);
        z.leftCols(n).noalias() = a * blk.input;
        if (order != JetOrder::value) {
          z.middleCols(ChannelLayout::t_channel * n, n) = a.col(0).replicate(1, n);
          for (int i = 0; i < d; ++i) z.middleCols(lc.x_channel(i) * n, n) = a.col(1 + i).replicate(1, n);
        }
      } else {
        z.resize(width, cols);
        z.noalias() = a * blk.out[static_cast<std::size_t>(l - 1)];
      }
      z.leftCols(n).colwise() += bias;

      MatrixXd& out = blk.out[static_cast<std::size_t>(l)];
      out.resize(width, cols);
      if (spec_.activation == Activation::softmax) {
        softmax_forward(lc, z, out, n);
      } else {
        const auto li = static_cast<std::size_t>(l);
        ArrayXXd value;
        derivative_arrays(spec_.activation, z.leftCols(n).array(), value, blk.first[li], blk.second[li],
                          order == JetOrder::value ? nullptr : &blk.third[li]);
        const ArrayXXd& d1 = blk.first[li];
        const ArrayXXd& d2 = blk.second[li];
        out.leftCols(n) = value.matrix();
        if (order != JetOrder::value) {
          for (int c = 1; c < lc.second_channel(0); ++c)
            out.middleCols(c * n, n) = (d1 * z.middleCols(c * n, n).array()).matrix();
          for (int q = 0; q < lc.num_dirs(); ++q) {
            const auto [pa, pb] = lc.dirs[static_cast<std::size_t>(q)];
            ArrayXXd uq = z.middleCols(lc.x_channel(pa) * n, n).array();
            if (pa != pb) uq += z.middleCols(lc.x_channel(pb) * n, n).array();
            const Index c0 = lc.second_channel(q) * n;
            out.middleCols(c0, n) = (d2 * uq.square() + d1 * z.middleCols(c0, n).array()).matrix();
          }
        }
      }
      if (l > 0) out += spec_.skip_weight * blk.out[static_cast<std::size_t>(l - 1)];
    }

    const auto& outl = layout.back();
    const Eigen::Map<const Eigen::RowVectorXd> cw(params_.data() + outl.weight_offset, outl.inputs);
    Eigen::RowVectorXd y = cw * blk.out.back();
    y.head(n).array() += params_[outl.bias_offset];
    for (Index s = 0; s < n; ++s) {
      detail::channels_to_jet(lc, y.data() + s, n, BatchWriter{jets_, blk.begin + s});
    }
  }

  const Index bad = jets_.first_nonfinite();
  if (bad >= 0) throw NumericError("non-finite network jet at sample " + std::to_string(bad), bad);
}

void JetEvaluation::backward(const JetBatch& seeds, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer does not match parameter count");
  if (seeds.order != order_ || seeds.size() != jets_.size() || seeds.dim != jets_.dim) {
    throw ShapeError("seed batch does not match the evaluated jets");
  }
  const Index bad = seeds.first_nonfinite();
  if (bad >= 0) throw NumericError("non-finite loss cotangent at sample " + std::to_string(bad), bad);

  const int d = spec_.spatial_dim();
  const ChannelLayout lc = detail::make_layout(d, order_);
  const auto layout = layer_layout(spec_);
  const Index nblocks = static_cast<Index>(blocks_.size());
  std::vector<VectorXd> partial(blocks_.size());

#pragma omp parallel for schedule(static)
  for (Index bi = 0; bi < nblocks; ++bi) {
    const Block& blk = blocks_[static_cast<std::size_t>(bi)];
    const Index n = blk.n;
    const Index cols = lc.count * n;
    VectorXd& g = partial[static_cast<std::size_t>(bi)];
    g = VectorXd::Zero(static_cast<Index>(params_.size()));

    Eigen::RowVectorXd ybar = Eigen::RowVectorXd::Zero(cols);
    for (Index s = 0; s < n; ++s) {
      detail::seeds_to_channels(lc, BatchReader{seeds, blk.begin + s}, ybar.data() + s, n);
    }
    const auto& outl = layout.back();
    const Eigen::Map<const VectorXd> cw(params_.data() + outl.weight_offset, outl.inputs);
    g.segment(static_cast<Index>(outl.weight_offset), outl.inputs).noalias() += blk.out.back() * ybar.transpose();
    g[static_cast<Index>(outl.bias_offset)] += ybar.head(n).sum();
    MatrixXd hbar = cw * ybar;

    for (int l = spec_.hidden_layers - 1; l >= 0; --l) {
      const auto& lay = layout[static_cast<std::size_t>(l)];
      const ConstMap a(params_.data() + lay.weight_offset, lay.outputs, lay.inputs);
      Map ga(g.data() + lay.weight_offset, lay.outputs, lay.inputs);
      const MatrixXd& z = blk.z[static_cast<std::size_t>(l)];

      MatrixXd zbar(z.rows(), z.cols());
      if (spec_.activation == Activation::softmax) {
        zbar.setZero();
        softmax_backward(lc, z, hbar, zbar, n);
      } else {
        const auto li = static_cast<std::size_t>(l);
        const ArrayXXd& d1 = blk.first[li];
        const ArrayXXd& d2 = blk.second[li];
        const ArrayXXd& d3 = blk.third[li];
        ArrayXXd z0bar = d1 * hbar.leftCols(n).array();
        if (order_ != JetOrder::value) {
          for (int c = 1; c < lc.second_channel(0); ++c) {
            z0bar += d2 * z.middleCols(c * n, n).array() * hbar.middleCols(c * n, n).array();
            zbar.middleCols(c * n, n) = (d1 * hbar.middleCols(c * n, n).array()).matrix();
          }
          for (int q = 0; q < lc.num_dirs(); ++q) {
            const auto [pa, pb] = lc.dirs[static_cast<std::size_t>(q)];
            ArrayXXd uq = z.middleCols(lc.x_channel(pa) * n, n).array();
            if (pa != pb) uq += z.middleCols(lc.x_channel(pb) * n, n).array();
            const Index c0 = lc.second_channel(q) * n;
            const auto ob = hbar.middleCols(c0, n).array();
            z0bar += (d3 * uq.square() + d2 * z.middleCols(c0, n).array()) * ob;
            zbar.middleCols(c0, n) = (d1 * ob).matrix();
            const ArrayXXd ubar = 2.0 * d2 * uq * ob;
            zbar.middleCols(lc.x_channel(pa) * n, n).array() += ubar;
            if (pa != pb) zbar.middleCols(lc.x_channel(pb) * n, n).array() += ubar;
          }
        }
        zbar.leftCols(n) = z0bar.matrix();
      }

      g.segment(static_cast<Index>(lay.bias_offset), lay.outputs) += zbar.leftCols(n).rowwise().sum();
      if (l == 0) {
        ga.noalias() += zbar.leftCols(n) * blk.input.transpose();
        if (order_ != JetOrder::value) {
          ga.col(0) += zbar.middleCols(ChannelLayout::t_channel * n, n).rowwise().sum();
          for (int i = 0; i < d; ++i) ga.col(1 + i) += zbar.middleCols(lc.x_channel(i) * n, n).rowwise().sum();
        }
        break;
      }
      const MatrixXd& hin = blk.out[static_cast<std::size_t>(l - 1)];
      ga.noalias() += zbar * hin.transpose();
      MatrixXd next = spec_.skip_weight * hbar;
      next.noalias() += a.transpose() * zbar;
      hbar = std::move(next);
    }
  }

  for (const auto& g : partial)
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[static_cast<Index>(i)];
}

}  // namespace mfdgm::batched
