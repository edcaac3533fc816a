#pragma once

#include <functional>

#include <Eigen/Dense>

namespace mfdgm {

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate.
/// Throws UsageError when h <= 0.
Eigen::VectorXd finite_diff_probe(const ScalarFunction& f, const Eigen::VectorXd& point, double h);

/// Central second difference (f(p + h e_i) - 2 f(p) + f(p - h e_i)) / h^2.
Eigen::VectorXd finite_diff_second(const ScalarFunction& f, const Eigen::VectorXd& point, double h);

/// Directional central difference (f(p + h v) - f(p - h v)) / 2h.
double finite_diff_directional(const ScalarFunction& f, const Eigen::VectorXd& point,
                               const Eigen::VectorXd& direction, double h);

/// |a - b| / max(|a|, |b|, floor).  The floor keeps comparisons of values that
/// should both be zero from dividing by roundoff.
double relative_difference(double a, double b, double floor = 1e-8);

}  // namespace mfdgm
