#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mfdgm/network.hpp"
#include "mfdgm/problem.hpp"

namespace mfdgm {

/// Values of a scalar field on a tensor grid, values(i, j) at (t_axis[i], x_axis[j]).
struct GridEval {
  Eigen::VectorXd t_axis;
  Eigen::VectorXd x_axis;
  Eigen::MatrixXd values;
};

/// n points from lo to hi inclusive.  n = 1 gives {lo}.
Eigen::VectorXd uniform_axis(double lo, double hi, int n);

/// ||pred - exact||_F / ||exact||_F.  Throws UsageError on axis mismatch or a
/// zero reference.
double relative_error(const GridEval& pred, const GridEval& exact);

/// Trailing mean: out[i] = mean(series[i .. i+window-1]), length len-window+1.
std::vector<double> rolling_average(const std::vector<double>& series, int window = 5);

/// u = u_max (1 - rho / rho_jam) - V_x, pointwise.
GridEval speed_field(const GridEval& rho, const GridEval& v_x, double u_max = 1.0, double rho_jam = 1.0);

/// q = rho u, pointwise.
GridEval fundamental_diagram(const GridEval& rho, const GridEval& u);

enum class GridQuantity { value, x_derivative };

/// Tabulates a network with one spatial dimension.  Each node goes through the
/// same serial code path as forward()/eval_jet, so entries match them bitwise.
GridEval evaluate_network_grid(const NetworkParams& params, const NetworkSpec& spec, const Eigen::VectorXd& t_axis,
                               const Eigen::VectorXd& x_axis, GridQuantity which);

/// Fixed evaluation points with the exact solution precomputed.  In one
/// dimension these are the nodes of the N_t x N_x grid (row-major in t), so the
/// error equals relative_error on the grid; otherwise `mc_points` uniform draws
/// on [0,T] x Omega.
struct ErrorProbe {
  Eigen::VectorXd times;
  Eigen::MatrixXd points;
  Eigen::VectorXd exact_phi;
  Eigen::VectorXd exact_rho;
};

struct ProbeSettings {
  int grid_t = 100;
  int grid_x = 100;
  int mc_points = 10000;
  std::uint64_t mc_seed = 0;
  bool operator==(const ProbeSettings&) const = default;
};

/// Throws UsageError when the problem has no exact solution.
ErrorProbe make_error_probe(const MFGProblem& problem, const ProbeSettings& settings);

struct RelativeErrors {
  double rho = 0.0;
  double phi = 0.0;
};

RelativeErrors probe_errors(const ErrorProbe& probe, const NetworkSpec& phi_spec, const NetworkParams& phi,
                            const NetworkSpec& rho_spec, const NetworkParams& rho);

}  // namespace mfdgm
