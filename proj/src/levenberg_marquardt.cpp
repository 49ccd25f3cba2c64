#include "levenberg_marquardt.hpp"

#include <cmath>
#include <limits>

namespace nvsense::detail {

namespace {

constexpr double kBoundSlack = 1e-12;
// Extra iterations after the tolerance test passes, so that restarting from a
// converged point lands on the same floating-point minimum.
constexpr int kPolishIterations = 30;

Eigen::Array<bool, Eigen::Dynamic, 1> active_bounds(const Eigen::VectorXd& theta,
                                                   const Eigen::VectorXd& gradient,
                                                   const Eigen::VectorXd& lower,
                                                   const Eigen::VectorXd& upper) {
  // gradient here is J^T r, the descent direction of the cost.
  Eigen::Array<bool, Eigen::Dynamic, 1> active(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double span = kBoundSlack * std::max(1.0, std::abs(theta(i)));
    const bool at_lower = theta(i) <= lower(i) + span && gradient(i) < 0.0;
    const bool at_upper = theta(i) >= upper(i) - span && gradient(i) > 0.0;
    active(i) = at_lower || at_upper;
  }
  return active;
}

// max_i |(J^T r)_i| / (|J_i| |data|) over free parameters; invariant to
// rescaling either the data or any single parameter.
double projected_gradient_norm(const Eigen::VectorXd& gradient, const Eigen::MatrixXd& jac,
                               double data_norm,
                               const Eigen::Array<bool, Eigen::Dynamic, 1>& active) {
  double g = 0.0;
  for (Eigen::Index i = 0; i < gradient.size(); ++i) {
    if (active(i)) continue;
    const double denom = jac.col(i).norm() * data_norm;
    if (denom > 0.0) g = std::max(g, std::abs(gradient(i)) / denom);
  }
  return g;
}

}  // namespace

LmResult levenberg_marquardt(const ModelFn& model, const Eigen::VectorXd& data,
                             Eigen::VectorXd theta, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, const LmSettings& settings) {
  const Eigen::Index p = theta.size();
  theta = theta.cwiseMax(lower).cwiseMin(upper);

  Eigen::VectorXd values;
  Eigen::MatrixXd jac;
  model(theta, values, jac);
  Eigen::VectorXd residual = data - values;
  double cost = 0.5 * residual.squaredNorm();

  LmResult result;
  result.initial_cost = cost;
  const double data_norm = std::max(data.norm(), std::numeric_limits<double>::min());

  double lambda = 1e-3;
  Eigen::VectorXd trial_values;
  Eigen::MatrixXd trial_jac;

  int iter = 0;
  int polish_left = -1;
  for (; iter < settings.max_iterations; ++iter) {
    const Eigen::VectorXd gradient = jac.transpose() * residual;
    const auto active = active_bounds(theta, gradient, lower, upper);
    const double grad_norm = projected_gradient_norm(gradient, jac, data_norm, active);

    Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::VectorXd scale = jtj.diagonal().cwiseMax(1e-12 * std::max(1.0, jtj.diagonal().maxCoeff()));
    // Pin active parameters so the solve leaves them at their bound.
    Eigen::VectorXd rhs = gradient;
    for (Eigen::Index i = 0; i < p; ++i) {
      if (!active(i)) continue;
      jtj.row(i).setZero();
      jtj.col(i).setZero();
      jtj(i, i) = 1.0;
      scale(i) = 0.0;
      rhs(i) = 0.0;
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * scale;
      const Eigen::VectorXd step = a.ldlt().solve(rhs);
      Eigen::VectorXd trial = (theta + step).cwiseMax(lower).cwiseMin(upper);
      const Eigen::VectorXd actual = trial - theta;

      if (!trial.allFinite()) {
        lambda *= 10.0;
      } else {
        model(trial, trial_values, trial_jac);
        const Eigen::VectorXd trial_residual = data - trial_values;
        const double trial_cost = 0.5 * trial_residual.squaredNorm();
        bool accept = std::isfinite(trial_cost) && trial_cost < cost;
        if (!accept && polish_left >= 0 && trial_cost <= cost * (1.0 + 1e-13)) {
          // Near the optimum the cost stops resolving parameter changes; a
          // smaller gradient still marks progress.
          const Eigen::VectorXd g_trial = trial_jac.transpose() * trial_residual;
          accept = projected_gradient_norm(g_trial, trial_jac, data_norm,
                                           active_bounds(trial, g_trial, lower, upper)) < grad_norm;
        }
        if (accept) {
          const double rel_change = actual.norm() / (theta.norm() + settings.tolerance);
          theta = trial;
          residual = trial_residual;
          values.swap(trial_values);
          jac.swap(trial_jac);
          cost = trial_cost;
          lambda = std::max(lambda / 3.0, 1e-15);
          accepted = true;

          const Eigen::VectorXd g_new = jac.transpose() * residual;
          const auto act_new = active_bounds(theta, g_new, lower, upper);
          const double g_norm_new = projected_gradient_norm(g_new, jac, data_norm, act_new);
          if (polish_left < 0 && rel_change < settings.tolerance && g_norm_new < settings.tolerance) {
            result.converged = true;
            polish_left = kPolishIterations;
          } else if (polish_left >= 0 && (polish_left-- == 0 || rel_change < 1e-15)) {
            ++iter;
            goto done;
          }
        } else {
          lambda *= 4.0;
        }
      }
      if (lambda > 1e16) {
        // No decrease is possible: theta is a minimum to working precision.
        result.converged = result.converged || grad_norm < settings.tolerance;
        ++iter;
        goto done;
      }
    }
  }

done:
  result.theta = theta;
  result.residual = residual;
  result.jacobian = jac;
  result.cost = cost;
  result.iterations = iter;
  const Eigen::VectorXd gradient = jac.transpose() * residual;
  result.at_bound = active_bounds(theta, gradient, lower, upper);
  // Parameters exactly on a bound count as fixed for covariance purposes even
  // when the gradient vanishes there.
  for (Eigen::Index i = 0; i < p; ++i) {
    const double span = kBoundSlack * std::max(1.0, std::abs(theta(i)));
    if (theta(i) <= lower(i) + span || theta(i) >= upper(i) - span) result.at_bound(i) = true;
  }
  result.gradient_norm = projected_gradient_norm(gradient, jac, data_norm, result.at_bound);
  return result;
}

}  // namespace nvsense::detail
