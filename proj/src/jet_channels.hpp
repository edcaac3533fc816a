#pragma once

// Channel layout shared by the serial and batched kernels.
//
// Every hidden state carries m channels per sample:
//   0            value
//   1            d/dt
//   2 .. 1+d     d/dx_i
//   2+d ..       second directional derivatives along each direction in `dirs`
// A direction (a, a) is e_a; a direction (a, b) with a < b is e_a + e_b.  The
// diagonal directions come first, so channel 2+d+i is d^2/dx_i^2.  Mixed
// entries follow from polarization: H_ab = (D^2_{e_a+e_b} - H_aa - H_bb) / 2.

#include <utility>
#include <vector>

#include "mfdgm/jet.hpp"

namespace mfdgm::detail {

struct ChannelLayout {
  int dim = 0;
  JetOrder order = JetOrder::value;
  int count = 1;
  std::vector<std::pair<int, int>> dirs;

  static constexpr int t_channel = 1;
  int x_channel(int i) const { return 2 + i; }
  int second_channel(int q) const { return 2 + dim + q; }
  int num_dirs() const { return static_cast<int>(dirs.size()); }
};

inline ChannelLayout make_layout(int dim, JetOrder order) {
  ChannelLayout l;
  l.dim = dim;
  l.order = order;
  if (order == JetOrder::value) return l;
  for (int i = 0; i < dim; ++i) l.dirs.emplace_back(i, i);
  if (order == JetOrder::mixed) {
    for (int i = 0; i < dim; ++i)
      for (int j = i + 1; j < dim; ++j) l.dirs.emplace_back(i, j);
  }
  l.count = 2 + dim + l.num_dirs();
  return l;
}

/// Index of direction (a, b), a < b, inside layout.dirs.
inline int pair_index(int dim, int a, int b) {
  // pairs are ordered (0,1), (0,2), ..., (0,d-1), (1,2), ...
  return dim + a * dim - a * (a + 1) / 2 + (b - a - 1);
}

/// Reads output channels (stride `stride` between consecutive channels) into the
/// user-facing jet fields.
template <class Out>
void channels_to_jet(const ChannelLayout& l, const double* y, Eigen::Index stride, Out&& set) {
  set.value(y[0]);
  if (l.order == JetOrder::value) return;
  set.dt(y[ChannelLayout::t_channel * stride]);
  for (int i = 0; i < l.dim; ++i) set.grad(i, y[l.x_channel(i) * stride]);
  for (int i = 0; i < l.dim; ++i) set.diag(i, y[l.second_channel(i) * stride]);
  if (l.order == JetOrder::mixed) {
    for (int a = 0; a < l.dim; ++a) {
      set.mixed(a, a, y[l.second_channel(a) * stride]);
      for (int b = a + 1; b < l.dim; ++b) {
        const double pab = y[l.second_channel(pair_index(l.dim, a, b)) * stride];
        const double h = 0.5 * (pab - y[l.second_channel(a) * stride] - y[l.second_channel(b) * stride]);
        set.mixed(a, b, h);
        set.mixed(b, a, h);
      }
    }
  }
}

/// Adjoint of channels_to_jet: writes the channel cotangents for one sample.
template <class In>
void seeds_to_channels(const ChannelLayout& l, const In& seed, double* ybar, Eigen::Index stride) {
  ybar[0] = seed.value();
  if (l.order == JetOrder::value) return;
  ybar[ChannelLayout::t_channel * stride] = seed.dt();
  for (int i = 0; i < l.dim; ++i) ybar[l.x_channel(i) * stride] = seed.grad(i);
  for (int i = 0; i < l.dim; ++i) ybar[l.second_channel(i) * stride] = seed.diag(i);
  if (l.order == JetOrder::mixed) {
    for (int a = 0; a < l.dim; ++a) {
      ybar[l.second_channel(a) * stride] += seed.mixed(a, a);
      for (int b = a + 1; b < l.dim; ++b) {
        const double sym = 0.5 * (seed.mixed(a, b) + seed.mixed(b, a));
        ybar[l.second_channel(pair_index(l.dim, a, b)) * stride] += sym;
        ybar[l.second_channel(a) * stride] -= sym;
        ybar[l.second_channel(b) * stride] -= sym;
      }
    }
  }
}

}  // namespace mfdgm::detail
