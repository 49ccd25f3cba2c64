#pragma once

#include <functional>

#include <Eigen/Dense>

namespace nvsense::detail {

// Model evaluation: fills the model values and d(model)/d(theta).
using ModelFn = std::function<void(const Eigen::VectorXd& theta, Eigen::VectorXd& model,
                                   Eigen::MatrixXd& jacobian)>;

struct LmSettings {
  double tolerance = 1e-8;
  int max_iterations = 500;
};

struct LmResult {
  Eigen::VectorXd theta;
  Eigen::VectorXd residual;  // data - model
  Eigen::MatrixXd jacobian;  // of the model at theta
  double initial_cost = 0.0;
  double cost = 0.0;  // 0.5 * |residual|^2
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  // Parameters pinned to a bound with the gradient pushing outward.
  Eigen::Array<bool, Eigen::Dynamic, 1> at_bound;
};

// Box-constrained Levenberg-Marquardt with Marquardt diagonal scaling. Steps
// are projected onto [lower, upper]. The gradient norm is the largest
// |(J^T r)_i| / (|J_i| |data|) over parameters not held at a bound. Converged
// means an accepted step changed theta by < tolerance (relative) while that
// norm was below tolerance, or no further decrease was possible at such a
// gradient. After that, iteration continues for a fixed polishing budget,
// also accepting steps that leave the cost unchanged to rounding but shrink
// the gradient norm.
LmResult levenberg_marquardt(const ModelFn& model, const Eigen::VectorXd& data,
                             Eigen::VectorXd theta, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, const LmSettings& settings);

}  // namespace nvsense::detail
