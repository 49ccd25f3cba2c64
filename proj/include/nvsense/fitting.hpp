#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nvsense/spectrum.hpp"

namespace nvsense {

// Parameter order shared by the public Jacobian, the covariance and
// DoubleLorentzianFit::parameters():
//   (f_-, dnu_-, C_-, f_+, dnu_+, C_+, baseline)
inline constexpr int kDoubleLorentzianParams = 7;
using LorentzianParams = Eigen::Matrix<double, kDoubleLorentzianParams, 1>;

struct DoubleLorentzianFit {
  std::array<LorentzianPeak, 2> peaks{};  // sorted by center
  double baseline = 1.0;
  double residual_rms = 0.0;
  Eigen::Matrix<double, kDoubleLorentzianParams, kDoubleLorentzianParams> covariance =
      Eigen::Matrix<double, kDoubleLorentzianParams, kDoubleLorentzianParams>::Zero();
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  // True when the peak separation sits on its lower bound of zero.
  bool separation_at_bound = false;

  LorentzianParams parameters() const;
  static DoubleLorentzianFit from_parameters(const LorentzianParams& p);
  double model(double f) const;
};

struct FitOptions {
  double tolerance = 1e-8;
  int max_iterations = 500;
  double min_linewidth = 0.1;
  double max_linewidth = 100.0;
};

Eigen::VectorXd double_lorentzian_model(const LorentzianParams& p, std::span<const double> f);

// d(model)/d(parameter), one row per frequency.
Eigen::MatrixXd double_lorentzian_jacobian(const LorentzianParams& p, std::span<const double> f);

// Starting point from a 5-point moving average: the two deepest local minima
// at least 2 MHz apart (equal depths: lower frequency first), or the single
// minimum +- 2 MHz. Input must be sorted by frequency.
DoubleLorentzianFit auto_initialize(std::span<const double> f, std::span<const double> y,
                                    const FitOptions& opts = {});

// Damped least squares over (midpoint, separation >= 0, widths, contrasts,
// baseline). Points may be given in any order.
DoubleLorentzianFit fit_double_lorentzian(std::span<const double> f, std::span<const double> y,
                                          const std::optional<DoubleLorentzianFit>& init = {},
                                          const FitOptions& opts = {});

DoubleLorentzianFit fit_double_lorentzian(const OdmrSpectrum& spectrum,
                                          const std::optional<DoubleLorentzianFit>& init = {},
                                          const FitOptions& opts = {});

// Largest |d model / df| of the fitted lineshape, from the analytic derivative.
struct SlopeExtremum {
  double slope = 0.0;      // absolute value, per MHz
  double frequency = 0.0;  // MHz
};
SlopeExtremum max_abs_slope(std::span<const LorentzianPeak> peaks);

// ---------------------------------------------------------------------------
// Straight-line fits

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
  double stderr_slope = 0.0;
  double stderr_intercept = 0.0;

  double operator()(double x) const { return intercept + slope * x; }
};

// Ordinary least squares. r_squared is 0 when y has no variance.
LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Temporal analysis

enum class Direction { Rise, Fall };

struct ExponentialFit {
  double amplitude = 0.0;
  double tau = 1.0;  // s
  double offset = 0.0;
  Direction direction = Direction::Rise;
  double residual_rms = 0.0;
  double stderr_amplitude = 0.0;
  double stderr_tau = 0.0;
  double stderr_offset = 0.0;
  int iterations = 0;

  double operator()(double t) const;
};

// rise: offset + amplitude (1 - exp(-t / tau)); fall: offset + amplitude exp(-t / tau).
ExponentialFit fit_exponential(std::span<const double> t, std::span<const double> y,
                               Direction direction);

struct HarmonicReport {
  double peak_frequency = 0.0;  // Hz
  double peak_amplitude = 0.0;
  double secondary_harmonic_ratio = 0.0;
  std::size_t peak_bin = 0;
  double bin_width = 0.0;  // Hz
};

struct DftSpectrum {
  std::vector<std::complex<double>> bins;  // non-negative frequencies, N/2 + 1 of them
  std::size_t n = 0;                       // time-domain length
  double sample_interval = 0.0;            // s

  // Sum of |X_k|^2 over all N bins, divided by N (equals sum of x^2).
  double energy() const;
};

// Throws NonuniformSampling if sample spacing varies by > 1e-6 relative.
DftSpectrum dft(std::span<const double> t, std::span<const double> y);

HarmonicReport harmonic_analysis(std::span<const double> t, std::span<const double> y);

}  // namespace nvsense
