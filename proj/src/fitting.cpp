#include "nvsense/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "levenberg_marquardt.hpp"
#include "nvsense/error.hpp"

namespace nvsense {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMinPoints = 15;
constexpr double kMinSeparation = 2.0;  // MHz, between auto-initialized minima
constexpr double kIllConditionedRcond = 1e-14;

// Internal parameter order: (midpoint, separation, dnu_-, C_-, dnu_+, C_+, baseline).
using Internal = Eigen::Matrix<double, kDoubleLorentzianParams, 1>;

Internal to_internal(const LorentzianParams& p) {
  Internal t;
  t << 0.5 * (p(0) + p(3)), p(3) - p(0), p(1), p(2), p(4), p(5), p(6);
  return t;
}

LorentzianParams to_external(const Eigen::VectorXd& t) {
  LorentzianParams p;
  p << t(0) - 0.5 * t(1), t(2), t(3), t(0) + 0.5 * t(1), t(4), t(5), t(6);
  return p;
}

// d(external)/d(internal).
Eigen::Matrix<double, 7, 7> external_from_internal() {
  Eigen::Matrix<double, 7, 7> m = Eigen::Matrix<double, 7, 7>::Zero();
  m(0, 0) = 1.0;
  m(0, 1) = -0.5;
  m(1, 2) = 1.0;
  m(2, 3) = 1.0;
  m(3, 0) = 1.0;
  m(3, 1) = 0.5;
  m(4, 4) = 1.0;
  m(5, 5) = 1.0;
  m(6, 6) = 1.0;
  return m;
}

std::vector<double> moving_average5(std::span<const double> y) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(y.size());
  std::vector<double> s(y.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - 2);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + 2);
    double sum = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) sum += y[static_cast<std::size_t>(j)];
    s[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
  }
  return s;
}

double half_width_guess(std::span<const double> f, const std::vector<double>& s, std::size_t i0,
                        double baseline) {
  const double half = baseline - 0.5 * (baseline - s[i0]);
  double left = f[i0];
  double right = f[i0];
  for (std::size_t i = i0; i-- > 0;) {
    left = f[i];
    if (s[i] >= half) break;
  }
  for (std::size_t i = i0 + 1; i < s.size(); ++i) {
    right = f[i];
    if (s[i] >= half) break;
  }
  return 0.25 * (right - left);
}

DoubleLorentzianFit fit_from_start(const std::vector<double>& f, Eigen::VectorXd y,
                                   DoubleLorentzianFit start, const FitOptions& opts);

}  // namespace

// ---------------------------------------------------------------------------

LorentzianParams DoubleLorentzianFit::parameters() const {
  LorentzianParams p;
  p << peaks[0].center, peaks[0].linewidth, peaks[0].contrast, peaks[1].center,
      peaks[1].linewidth, peaks[1].contrast, baseline;
  return p;
}

DoubleLorentzianFit DoubleLorentzianFit::from_parameters(const LorentzianParams& p) {
  DoubleLorentzianFit fit;
  fit.peaks[0] = {p(0), p(1), p(2)};
  fit.peaks[1] = {p(3), p(4), p(5)};
  fit.baseline = p(6);
  if (fit.peaks[1].center < fit.peaks[0].center) std::swap(fit.peaks[0], fit.peaks[1]);
  return fit;
}

double DoubleLorentzianFit::model(double f) const { return model_signal(peaks, baseline, f); }

Eigen::VectorXd double_lorentzian_model(const LorentzianParams& p, std::span<const double> f) {
  const LorentzianPeak a{p(0), p(1), p(2)};
  const LorentzianPeak b{p(3), p(4), p(5)};
  Eigen::VectorXd m(static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i)
    m(static_cast<Eigen::Index>(i)) = p(6) - lorentzian_value(f[i], a) - lorentzian_value(f[i], b);
  return m;
}

Eigen::MatrixXd double_lorentzian_jacobian(const LorentzianParams& p, std::span<const double> f) {
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(f.size()), kDoubleLorentzianParams);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (int k = 0; k < 2; ++k) {
      const double center = p(3 * k);
      const double width = p(3 * k + 1);
      const double contrast = p(3 * k + 2);
      const double x = (center - f[i]) / width;
      const double q = 1.0 / (1.0 + x * x);
      // signal = baseline - C q, q = 1 / (1 + x^2)
      jac(row, 3 * k) = 2.0 * contrast * x * q * q / width;
      jac(row, 3 * k + 1) = -2.0 * contrast * x * x * q * q / width;
      jac(row, 3 * k + 2) = -q;
    }
    jac(row, 6) = 1.0;
  }
  return jac;
}

namespace {

enum class InitRule { TwoMinima, SingleMinimum };

DoubleLorentzianFit initialize(std::span<const double> f, std::span<const double> y,
                               const FitOptions& opts, InitRule rule, double min_separation) {
  const std::vector<double> s = moving_average5(y);
  const double baseline = *std::max_element(s.begin(), s.end());

  std::vector<std::size_t> minima;
  for (std::size_t i = 1; i + 1 < s.size(); ++i)
    if (s[i] <= s[i - 1] && s[i] < s[i + 1]) minima.push_back(i);
  if (minima.empty()) {
    minima.push_back(static_cast<std::size_t>(
        std::distance(s.begin(), std::min_element(s.begin(), s.end()))));
  }
  // Deepest first; equal depths resolved toward lower frequency.
  std::stable_sort(minima.begin(), minima.end(),
                   [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });

  const std::size_t first = minima.front();
  std::optional<std::size_t> second;
  for (std::size_t i = 1; i < minima.size() && rule == InitRule::TwoMinima; ++i) {
    if (std::abs(f[minima[i]] - f[first]) >= min_separation) {
      second = minima[i];
      break;
    }
  }

  auto width_of = [&](std::size_t i) {
    return std::clamp(half_width_guess(f, s, i, baseline), opts.min_linewidth, opts.max_linewidth);
  };
  auto contrast_of = [&](std::size_t i) { return std::clamp(baseline - s[i], 1e-4, 1.0); };

  DoubleLorentzianFit init;
  init.baseline = baseline;
  if (second) {
    init.peaks[0] = {f[first], width_of(first), contrast_of(first)};
    init.peaks[1] = {f[*second], width_of(*second), contrast_of(*second)};
    if (init.peaks[1].center < init.peaks[0].center) std::swap(init.peaks[0], init.peaks[1]);
  } else {
    const double w = width_of(first);
    const double c = 0.5 * contrast_of(first);
    init.peaks[0] = {f[first] - kMinSeparation, w, c};
    init.peaks[1] = {f[first] + kMinSeparation, w, c};
  }
  return init;
}

}  // namespace

DoubleLorentzianFit auto_initialize(std::span<const double> f, std::span<const double> y,
                                    const FitOptions& opts) {
  return initialize(f, y, opts, InitRule::TwoMinima, kMinSeparation);
}

DoubleLorentzianFit fit_double_lorentzian(std::span<const double> f_in,
                                          std::span<const double> y_in,
                                          const std::optional<DoubleLorentzianFit>& init,
                                          const FitOptions& opts) {
  if (f_in.size() != y_in.size())
    throw Error(ErrorCode::InvalidArgument, "frequency and signal lengths differ");
  if (f_in.size() < static_cast<std::size_t>(kMinPoints))
    throw Error(ErrorCode::InvalidArgument, "double-Lorentzian fit needs at least 15 points");

  std::vector<std::size_t> order(f_in.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return f_in[a] < f_in[b] || (f_in[a] == f_in[b] && y_in[a] < y_in[b]);
  });
  std::vector<double> f(order.size());
  Eigen::VectorXd y(static_cast<Eigen::Index>(order.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    f[i] = f_in[order[i]];
    y(static_cast<Eigen::Index>(i)) = y_in[order[i]];
  }

  if (init)
    return fit_from_start(f, y, DoubleLorentzianFit::from_parameters(init->parameters()), opts);

  // Noise can leave two minima inside one dip; when the default start fails,
  // retry with the second minimum required to sit a full linewidth away, then
  // with a single-dip start.
  const std::span<const double> ys(y.data(), f.size());
  const DoubleLorentzianFit first = auto_initialize(f, ys, opts);
  try {
    return fit_from_start(f, y, first, opts);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::IllConditioned && e.code() != ErrorCode::FitDiverged) throw;
    const double wide = std::max(kMinSeparation, 2.0 * std::max(first.peaks[0].linewidth,
                                                                 first.peaks[1].linewidth));
    for (const auto& retry : {initialize(f, ys, opts, InitRule::TwoMinima, wide),
                              initialize(f, ys, opts, InitRule::SingleMinimum, kMinSeparation)}) {
      try {
        return fit_from_start(f, y, retry, opts);
      } catch (const Error&) {
      }
    }
    throw;
  }
}

namespace {

DoubleLorentzianFit fit_from_start(const std::vector<double>& f, Eigen::VectorXd y,
                                   DoubleLorentzianFit start, const FitOptions& opts) {
  // Fit in units of the starting baseline so that contrasts are fractions.
  const double scale = std::abs(start.baseline) > 0.0 ? std::abs(start.baseline) : 1.0;
  y /= scale;
  start.baseline /= scale;
  for (auto& p : start.peaks) p.contrast /= scale;

  Eigen::VectorXd lower(kDoubleLorentzianParams), upper(kDoubleLorentzianParams);
  lower << -kInf, 0.0, opts.min_linewidth, 0.0, opts.min_linewidth, 0.0, -kInf;
  upper << kInf, kInf, opts.max_linewidth, 1.0, opts.max_linewidth, 1.0, kInf;

  const Eigen::Matrix<double, 7, 7> d_ext = external_from_internal();
  auto model = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& values, Eigen::MatrixXd& jac) {
    const LorentzianParams p = to_external(theta);
    values = double_lorentzian_model(p, f);
    jac = double_lorentzian_jacobian(p, f) * d_ext;
  };

  const Eigen::VectorXd theta0 = to_internal(start.parameters());
  const detail::LmResult lm = detail::levenberg_marquardt(
      model, y, theta0, lower, upper, {opts.tolerance, opts.max_iterations});

  if (!lm.converged && !(lm.cost < lm.initial_cost))
    throw Error(ErrorCode::FitDiverged,
                "double-Lorentzian fit made no progress in " + std::to_string(lm.iterations) +
                    " iterations");

  // Conditioning and covariance over the parameters not pinned to a bound.
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < kDoubleLorentzianParams; ++i)
    if (!lm.at_bound(i)) free.push_back(i);
  const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd jf(lm.jacobian.rows(), nf);
  for (Eigen::Index c = 0; c < nf; ++c) jf.col(c) = lm.jacobian.col(free[static_cast<std::size_t>(c)]);

  Eigen::VectorXd col_norm = jf.colwise().norm().transpose();
  if ((col_norm.array() == 0.0).any())
    throw Error(ErrorCode::IllConditioned, "a fit parameter has no influence on the model");
  const Eigen::MatrixXd js = jf * col_norm.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd jtj_scaled = js.transpose() * js;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jtj_scaled, Eigen::EigenvaluesOnly);
  const double rcond = eig.eigenvalues().minCoeff() / eig.eigenvalues().maxCoeff();
  if (!(rcond > kIllConditionedRcond))
    throw Error(ErrorCode::IllConditioned,
                "normal equations are near-singular (rcond " + std::to_string(rcond) +
                    "); re-initialize or widen the sweep");

  const Eigen::Index n = y.size();
  const double dof = static_cast<double>(std::max<Eigen::Index>(1, n - nf));
  const double s2 = 2.0 * lm.cost / dof;
  const Eigen::MatrixXd inv_scaled = jtj_scaled.ldlt().solve(Eigen::MatrixXd::Identity(nf, nf));
  const Eigen::MatrixXd cov_free =
      s2 * col_norm.cwiseInverse().asDiagonal() * inv_scaled * col_norm.cwiseInverse().asDiagonal();
  Eigen::Matrix<double, 7, 7> cov_int = Eigen::Matrix<double, 7, 7>::Zero();
  for (Eigen::Index a = 0; a < nf; ++a)
    for (Eigen::Index b = 0; b < nf; ++b)
      cov_int(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]) = cov_free(a, b);

  LorentzianParams unscale = LorentzianParams::Ones();
  unscale(2) = unscale(5) = unscale(6) = scale;
  const LorentzianParams fitted = to_external(lm.theta).cwiseProduct(unscale);

  DoubleLorentzianFit out = DoubleLorentzianFit::from_parameters(fitted);
  out.covariance =
      unscale.asDiagonal() * (d_ext * cov_int * d_ext.transpose()) * unscale.asDiagonal();
  out.residual_rms = scale * std::sqrt(2.0 * lm.cost / static_cast<double>(n));
  out.converged = lm.converged;
  out.iterations = lm.iterations;
  out.gradient_norm = lm.gradient_norm;
  out.separation_at_bound = lm.at_bound(1);
  return out;
}

}  // namespace

DoubleLorentzianFit fit_double_lorentzian(const OdmrSpectrum& spectrum,
                                          const std::optional<DoubleLorentzianFit>& init,
                                          const FitOptions& opts) {
  return fit_double_lorentzian(spectrum.frequencies(), spectrum.signal(), init, opts);
}

SlopeExtremum max_abs_slope(std::span<const LorentzianPeak> peaks) {
  if (peaks.empty()) throw Error(ErrorCode::InvalidArgument, "no peaks");
  double lo = kInf, hi = -kInf, w_min = kInf;
  for (const auto& p : peaks) {
    lo = std::min(lo, p.center - 3.0 * p.linewidth);
    hi = std::max(hi, p.center + 3.0 * p.linewidth);
    w_min = std::min(w_min, p.linewidth);
  }
  auto abs_slope = [&](double f) {
    double d = 0.0;
    for (const auto& p : peaks) d -= lorentzian_slope(f, p);
    return std::abs(d);
  };

  const double h = w_min / 64.0;
  const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / h)) + 1;
  double best_f = lo, best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = lo + h * static_cast<double>(i);
    const double v = abs_slope(f);
    if (v > best) {
      best = v;
      best_f = f;
    }
  }
  // Golden-section refinement inside the bracketing grid cells.
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = best_f - h, b = best_f + h;
  double c = b - g * (b - a), d = a + g * (b - a);
  for (int it = 0; it < 100 && b - a > 1e-13 * std::abs(best_f); ++it) {
    if (abs_slope(c) > abs_slope(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - g * (b - a);
    d = a + g * (b - a);
  }
  const double f_star = 0.5 * (a + b);
  return {abs_slope(f_star), f_star};
}

}  // namespace nvsense
