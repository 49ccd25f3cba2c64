#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include <fftw3.h>

#include "levenberg_marquardt.hpp"
#include "nvsense/error.hpp"
#include "nvsense/fitting.hpp"

namespace nvsense {

namespace {

constexpr std::size_t kMinExpPoints = 5;
constexpr std::size_t kMinDftPoints = 64;
constexpr double kSamplingTol = 1e-6;

// FFTW planning is not thread-safe.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Model shape s(t) such that y = offset + amplitude * s(t).
double shape(double t, double tau, Direction dir) {
  const double e = std::exp(-t / tau);
  return dir == Direction::Rise ? 1.0 - e : e;
}

}  // namespace

double ExponentialFit::operator()(double t) const {
  return offset + amplitude * shape(t, tau, direction);
}

ExponentialFit fit_exponential(std::span<const double> t, std::span<const double> y,
                               Direction direction) {
  if (t.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "t and y lengths differ");
  if (t.size() < kMinExpPoints)
    throw Error(ErrorCode::InvalidArgument, "exponential fit needs at least 5 points");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw Error(ErrorCode::InvalidArgument, "times must increase");

  const auto [y_lo, y_hi] = std::minmax_element(y.begin(), y.end());
  const double range = *y_hi - *y_lo;
  if (!(range > 1e-12 * std::max(1.0, std::abs(*y_hi))))
    throw Error(ErrorCode::FitDiverged, "signal is constant; time constant is unidentifiable");

  const std::size_t n = t.size();
  const double span = t.back() - t.front();

  // Log-linear start: guess the asymptote just beyond the last sample, then
  // regress log|y - asymptote| on t.
  const double y_end = y.back();
  const double asymptote = y_end + 0.05 * (y_end - y.front());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = std::abs(asymptote - y[i]);
    if (!(gap > 1e-3 * range)) continue;
    const double ly = std::log(gap);
    sx += t[i];
    sy += ly;
    sxx += t[i] * t[i];
    sxy += t[i] * ly;
    m += 1.0;
  }
  double tau0 = span / 3.0;
  if (m >= 2.0) {
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    if (std::isfinite(slope) && slope < 0.0) tau0 = std::clamp(-1.0 / slope, span / 100.0, span * 10.0);
  }
  const double amp0 = direction == Direction::Rise ? asymptote - y.front() : y.front() - asymptote;
  const double off0 = direction == Direction::Rise ? y.front() : asymptote;

  Eigen::VectorXd data(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) data(static_cast<Eigen::Index>(i)) = y[i];

  // theta = (offset, amplitude, log tau).
  auto model = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& values, Eigen::MatrixXd& jac) {
    const double tau = std::exp(theta(2));
    values.resize(static_cast<Eigen::Index>(n));
    jac.resize(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double dt = t[i];
      const double e = std::exp(-dt / tau);
      const double s = direction == Direction::Rise ? 1.0 - e : e;
      // d s / d log tau
      const double ds = (direction == Direction::Rise ? -1.0 : 1.0) * e * dt / tau;
      values(r) = theta(0) + theta(1) * s;
      jac(r, 0) = 1.0;
      jac(r, 1) = s;
      jac(r, 2) = theta(1) * ds;
    }
  };

  Eigen::VectorXd theta0(3);
  theta0 << off0, amp0, std::log(tau0);
  const Eigen::VectorXd inf = Eigen::VectorXd::Constant(3, std::numeric_limits<double>::infinity());
  const detail::LmResult lm = detail::levenberg_marquardt(model, data, theta0, -inf, inf, {1e-8, 500});
  if (!lm.converged || !lm.theta.allFinite())
    throw Error(ErrorCode::FitDiverged,
                "exponential fit did not converge in " + std::to_string(lm.iterations) +
                    " iterations");

  ExponentialFit fit;
  fit.direction = direction;
  fit.tau = std::exp(lm.theta(2));
  fit.amplitude = lm.theta(1);
  fit.offset = lm.theta(0);
  fit.residual_rms = std::sqrt(2.0 * lm.cost / static_cast<double>(n));
  fit.iterations = lm.iterations;

  const Eigen::MatrixXd jtj = lm.jacobian.transpose() * lm.jacobian;
  const double s2 = 2.0 * lm.cost / static_cast<double>(std::max<std::size_t>(1, n - 3));
  const Eigen::MatrixXd cov = s2 * jtj.completeOrthogonalDecomposition().pseudoInverse();
  fit.stderr_offset = std::sqrt(std::max(0.0, cov(0, 0)));
  fit.stderr_amplitude = std::sqrt(std::max(0.0, cov(1, 1)));
  fit.stderr_tau = fit.tau * std::sqrt(std::max(0.0, cov(2, 2)));
  return fit;
}

// ---------------------------------------------------------------------------

double DftSpectrum::energy() const {
  if (bins.empty()) return 0.0;
  double e = std::norm(bins[0]);
  const std::size_t last = bins.size() - 1;
  for (std::size_t k = 1; k < bins.size(); ++k) {
    // Interior bins stand for a conjugate pair; the Nyquist bin of an even
    // length transform does not.
    const bool nyquist = (n % 2 == 0) && k == last;
    e += (nyquist ? 1.0 : 2.0) * std::norm(bins[k]);
  }
  return e / static_cast<double>(n);
}

DftSpectrum dft(std::span<const double> t, std::span<const double> y) {
  if (t.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "t and y lengths differ");
  if (t.size() < kMinDftPoints)
    throw Error(ErrorCode::InvalidArgument, "harmonic analysis needs at least 64 samples");
  const std::size_t n = t.size();
  const double mean_dt = (t.back() - t.front()) / static_cast<double>(n - 1);
  if (!(mean_dt > 0.0)) throw Error(ErrorCode::NonuniformSampling, "times must increase");
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs((t[i] - t[i - 1]) - mean_dt) > kSamplingTol * mean_dt)
      throw Error(ErrorCode::NonuniformSampling,
                  "sample spacing varies at index " + std::to_string(i));
  }

  DftSpectrum out;
  out.n = n;
  out.sample_interval = mean_dt;
  out.bins.resize(n / 2 + 1);

  std::vector<double> in(y.begin(), y.end());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                reinterpret_cast<fftw_complex*>(out.bins.data()), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

HarmonicReport harmonic_analysis(std::span<const double> t, std::span<const double> y) {
  const DftSpectrum spec = dft(t, y);
  const double n = static_cast<double>(spec.n);
  auto amplitude = [&](std::size_t k) {
    const bool single = k == 0 || (spec.n % 2 == 0 && k == spec.bins.size() - 1);
    return (single ? 1.0 : 2.0) * std::abs(spec.bins[k]) / n;
  };

  HarmonicReport report;
  report.bin_width = 1.0 / (n * spec.sample_interval);
  for (std::size_t k = 1; k < spec.bins.size(); ++k) {
    const double a = amplitude(k);
    if (a > report.peak_amplitude) {
      report.peak_amplitude = a;
      report.peak_bin = k;
    }
  }
  report.peak_frequency = static_cast<double>(report.peak_bin) * report.bin_width;
  if (report.peak_amplitude > 0.0) {
    for (std::size_t h = 2; h <= 5; ++h) {
      const std::size_t k = h * report.peak_bin;
      if (k >= spec.bins.size()) break;
      report.secondary_harmonic_ratio =
          std::max(report.secondary_harmonic_ratio, amplitude(k) / report.peak_amplitude);
    }
  }
  return report;
}

}  // namespace nvsense
