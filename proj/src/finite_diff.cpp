#include "mfdgm/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include "mfdgm/error.hpp"

namespace mfdgm {

Eigen::VectorXd finite_diff_probe(const ScalarFunction& f, const Eigen::VectorXd& point, double h) {
  if (!(h > 0.0)) throw UsageError("finite_diff_probe: step must be positive");
  Eigen::VectorXd out(point.size());
  Eigen::VectorXd p = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    p[i] = point[i] + h;
    const double fp = f(p);
    p[i] = point[i] - h;
    const double fm = f(p);
    p[i] = point[i];
    out[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

Eigen::VectorXd finite_diff_second(const ScalarFunction& f, const Eigen::VectorXd& point, double h) {
  if (!(h > 0.0)) throw UsageError("finite_diff_second: step must be positive");
  Eigen::VectorXd out(point.size());
  Eigen::VectorXd p = point;
  const double f0 = f(point);
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    p[i] = point[i] + h;
    const double fp = f(p);
    p[i] = point[i] - h;
    const double fm = f(p);
    p[i] = point[i];
    out[i] = (fp - 2.0 * f0 + fm) / (h * h);
  }
  return out;
}

double finite_diff_directional(const ScalarFunction& f, const Eigen::VectorXd& point,
                               const Eigen::VectorXd& direction, double h) {
  if (!(h > 0.0)) throw UsageError("finite_diff_directional: step must be positive");
  return (f(point + h * direction) - f(point - h * direction)) / (2.0 * h);
}

double relative_difference(double a, double b, double floor) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

}  // namespace mfdgm
