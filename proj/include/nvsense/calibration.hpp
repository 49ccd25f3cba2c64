#pragma once

#include "nvsense/fitting.hpp"
#include "nvsense/spin_model.hpp"

namespace nvsense {

/// Linear calibration lines: zero-field splitting D (MHz) against temperature
/// (deg C), and resonance splitting (MHz) against field (uT).
struct CalibrationPair {
  LinearFit d_vs_t;
  LinearFit df_vs_b;

  // Throws InvalidArgument unless d_vs_t.slope < 0 and df_vs_b.slope > 0.
  void validate() const;

  // D = 2871.53 - 0.087 T and df = 9.37 + 0.014 B.
  static CalibrationPair nanodiamond_reference();
};

double invert_temperature(const CalibrationPair& cal, double d_measured);

struct FieldInversion {
  double field = 0.0;  // uT, negative values are kept
  // Splitting is below the calibration intercept (strain-dominated regime).
  bool below_calibration_range = false;
};

FieldInversion invert_field(const CalibrationPair& cal, double df_measured);

struct DualReading {
  double temperature = 0.0;  // deg C
  double field = 0.0;        // uT
  double d_measured = 0.0;   // MHz
  double df_measured = 0.0;  // MHz
  double temperature_uncertainty = 0.0;
  double field_uncertainty = 0.0;
  bool below_field_range = false;
};

// Midpoint and difference of the fitted centers pushed through both
// inversions; uncertainties are first-order propagation of the fit
// covariance (calibration-line uncertainty is not included).
DualReading dual_sense(const CalibrationPair& cal, const DoubleLorentzianFit& fit);

// Inputs to the sensitivity estimators. The formulas are unit-agnostic:
// eta_T comes out in (sigma unit * s^0.5) / (A * gamma unit * d_slope_dT unit)
// and eta_B in (sigma unit * s^0.5) / (gamma unit * slope_dC_df unit). With
// gamma in MHz/uT and slope_dC_df per MHz, eta_B is in uT/sqrt(Hz).
struct SensitivityInputs {
  double sigma = 0.0;        // signal std with the microwave off
  double t_acq = 1.0;        // s per point
  double contrast_a = 0.0;   // ODMR contrast A
  double gamma = kGammaElectron;  // MHz/mT
  double d_slope_dT = -0.087;  // MHz / deg C
  double slope_dC_df = 0.0;    // max |dC/df|, per MHz
};

// sigma sqrt(t_acq) / (A gamma |dD/dT|)
double thermal_sensitivity(const SensitivityInputs& inp);

// sigma sqrt(t_acq) / (gamma dC/df)
double magnetic_sensitivity(const SensitivityInputs& inp);

// Diagnostic only: sigma sqrt(t_acq) / (max|dC/df| |dD/dT|), the temperature
// step that moves the signal on the steepest flank by one sigma (deg C/sqrt(Hz)).
double slope_thermal_sensitivity(const SensitivityInputs& inp);

// Contrast A as the deepest fractional dip of the fitted model, and dC/df as
// the steepest analytic slope of the fitted lineshape.
SensitivityInputs sensitivity_inputs_from_fit(const DoubleLorentzianFit& fit, double sigma,
                                              double t_acq, double gamma, double d_slope_dT);

// Calibration intercept minus 2E. Non-zero values flag disagreement between
// the empirical field calibration and the strain splitting.
double strain_intercept_gap(const CalibrationPair& cal, double e_strain);

}  // namespace nvsense
