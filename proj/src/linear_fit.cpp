#include <algorithm>
#include <cmath>

#include "nvsense/error.hpp"
#include "nvsense/fitting.hpp"

namespace nvsense {

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "x and y lengths differ");
  if (x.size() < 3) throw Error(ErrorCode::InvalidArgument, "linear fit needs at least 3 points");

  const double n = static_cast<double>(x.size());
  double x_mean = 0.0, y_mean = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x_mean += x[i];
    y_mean += y[i];
  }
  x_mean /= n;
  y_mean /= n;

  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - x_mean;
    const double dy = y[i] - y_mean;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw Error(ErrorCode::DegenerateAbscissa, "all x values are equal");

  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = y_mean - fit.slope * x_mean;

  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit(x[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 0.0;

  const double s2 = ss_res / (n - 2.0);
  fit.stderr_slope = std::sqrt(s2 / sxx);
  fit.stderr_intercept = std::sqrt(s2 * (1.0 / n + x_mean * x_mean / sxx));
  return fit;
}

}  // namespace nvsense
