#include "nvsense/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "nvsense/error.hpp"

namespace nvsense {

void CalibrationPair::validate() const {
  if (!(d_vs_t.slope < 0.0))
    throw Error(ErrorCode::InvalidArgument, "D-vs-temperature slope must be negative");
  if (!(df_vs_b.slope > 0.0))
    throw Error(ErrorCode::InvalidArgument, "splitting-vs-field slope must be positive");
}

CalibrationPair CalibrationPair::nanodiamond_reference() {
  CalibrationPair cal;
  cal.d_vs_t.intercept = 2871.53;
  cal.d_vs_t.slope = -0.087;
  cal.d_vs_t.r_squared = 1.0;
  cal.df_vs_b.intercept = 9.37;
  cal.df_vs_b.slope = 0.014;
  cal.df_vs_b.r_squared = 1.0;
  return cal;
}

double invert_temperature(const CalibrationPair& cal, double d_measured) {
  cal.validate();
  return (d_measured - cal.d_vs_t.intercept) / cal.d_vs_t.slope;
}

FieldInversion invert_field(const CalibrationPair& cal, double df_measured) {
  cal.validate();
  FieldInversion out;
  out.field = (df_measured - cal.df_vs_b.intercept) / cal.df_vs_b.slope;
  out.below_calibration_range = df_measured < cal.df_vs_b.intercept;
  return out;
}

DualReading dual_sense(const CalibrationPair& cal, const DoubleLorentzianFit& fit) {
  if (!fit.converged) throw Error(ErrorCode::UnconvergedFit, "fit did not converge");
  cal.validate();

  double f_lo = fit.peaks[0].center;
  double f_hi = fit.peaks[1].center;
  double var_lo = fit.covariance(0, 0);
  double var_hi = fit.covariance(3, 3);
  const double cov = fit.covariance(0, 3);
  if (f_lo > f_hi) {
    std::swap(f_lo, f_hi);
    std::swap(var_lo, var_hi);
  }

  DualReading r;
  r.d_measured = 0.5 * (f_lo + f_hi);
  r.df_measured = f_hi - f_lo;
  r.temperature = invert_temperature(cal, r.d_measured);
  const FieldInversion b = invert_field(cal, r.df_measured);
  r.field = b.field;
  r.below_field_range = b.below_calibration_range;

  const double var_d = std::max(0.0, 0.25 * (var_lo + var_hi + 2.0 * cov));
  const double var_df = std::max(0.0, var_lo + var_hi - 2.0 * cov);
  r.temperature_uncertainty = std::sqrt(var_d) / std::abs(cal.d_vs_t.slope);
  r.field_uncertainty = std::sqrt(var_df) / std::abs(cal.df_vs_b.slope);
  return r;
}

double thermal_sensitivity(const SensitivityInputs& inp) {
  const double denom = inp.contrast_a * inp.gamma * std::abs(inp.d_slope_dT);
  if (!(denom > 0.0) || !(inp.contrast_a > 0.0))
    throw Error(ErrorCode::ZeroDenominator, "thermal sensitivity denominator is zero");
  if (!(inp.t_acq > 0.0) || !(inp.sigma >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "sigma must be >= 0 and t_acq > 0");
  return inp.sigma * std::sqrt(inp.t_acq) / denom;
}

double magnetic_sensitivity(const SensitivityInputs& inp) {
  const double denom = inp.gamma * inp.slope_dC_df;
  if (!(inp.slope_dC_df > 0.0) || !(denom > 0.0))
    throw Error(ErrorCode::ZeroDenominator, "magnetic sensitivity denominator is zero");
  if (!(inp.t_acq > 0.0) || !(inp.sigma >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "sigma must be >= 0 and t_acq > 0");
  return inp.sigma * std::sqrt(inp.t_acq) / denom;
}

double slope_thermal_sensitivity(const SensitivityInputs& inp) {
  const double denom = inp.slope_dC_df * std::abs(inp.d_slope_dT);
  if (!(denom > 0.0))
    throw Error(ErrorCode::ZeroDenominator, "slope-based sensitivity denominator is zero");
  return inp.sigma * std::sqrt(inp.t_acq) / denom;
}

SensitivityInputs sensitivity_inputs_from_fit(const DoubleLorentzianFit& fit, double sigma,
                                              double t_acq, double gamma, double d_slope_dT) {
  if (!(fit.baseline > 0.0))
    throw Error(ErrorCode::InvalidArgument, "fitted baseline must be positive");
  SensitivityInputs inp;
  inp.sigma = sigma;
  inp.t_acq = t_acq;
  inp.gamma = gamma;
  inp.d_slope_dT = d_slope_dT;

  // Overlapping tails push the minima slightly outside the centers.
  const double reach = 2.0 * std::max(fit.peaks[0].linewidth, fit.peaks[1].linewidth);
  const double lo = std::min(fit.peaks[0].center, fit.peaks[1].center) - reach;
  const double hi = std::max(fit.peaks[0].center, fit.peaks[1].center) + reach;
  double deepest = fit.baseline;
  for (int i = 0; i <= 4000; ++i) deepest = std::min(deepest, fit.model(lo + (hi - lo) * i / 4000.0));
  inp.contrast_a = (fit.baseline - deepest) / fit.baseline;
  inp.slope_dC_df = max_abs_slope(fit.peaks).slope;
  return inp;
}

double strain_intercept_gap(const CalibrationPair& cal, double e_strain) {
  return cal.df_vs_b.intercept - 2.0 * e_strain;
}

}  // namespace nvsense
