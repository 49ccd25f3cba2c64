#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nvsense {

/// One Lorentzian PL dip. `linewidth` is the half width at half maximum
/// (the full width is 2 * linewidth).
struct LorentzianPeak {
  double center = 0.0;     // MHz
  double linewidth = 1.0;  // MHz, HWHM
  double contrast = 0.0;   // fraction of baseline

  void validate() const;
};

struct AcquisitionMeta {
  std::string label;
  // Per-point acquisition time in seconds; either empty or one entry per point.
  std::vector<double> t_acq_s;

  friend bool operator==(const AcquisitionMeta&, const AcquisitionMeta&) = default;
};

/// Sampled ODMR spectrum: strictly increasing frequencies (MHz) paired with
/// finite signal values.
class OdmrSpectrum {
 public:
  OdmrSpectrum() = default;
  // Throws NonMonotonicFrequency or InvalidArgument when the invariants fail.
  OdmrSpectrum(std::vector<double> frequencies, std::vector<double> signal,
               AcquisitionMeta meta = {});

  const std::vector<double>& frequencies() const { return frequencies_; }
  const std::vector<double>& signal() const { return signal_; }
  const AcquisitionMeta& meta() const { return meta_; }
  std::size_t size() const { return frequencies_.size(); }
  bool empty() const { return frequencies_.empty(); }

  friend bool operator==(const OdmrSpectrum&, const OdmrSpectrum&) = default;

 private:
  std::vector<double> frequencies_;
  std::vector<double> signal_;
  AcquisitionMeta meta_;
};

double lorentzian_value(double f_mw, const LorentzianPeak& peak);

// d/df of the Lorentzian kernel.
double lorentzian_slope(double f_mw, const LorentzianPeak& peak);

// baseline - sum of all Lorentzian kernels at f.
double model_signal(std::span<const LorentzianPeak> peaks, double baseline, double f);

OdmrSpectrum model_spectrum(std::span<const LorentzianPeak> peaks, double baseline,
                            std::span<const double> frequencies);

OdmrSpectrum synthesize_noisy(const OdmrSpectrum& spectrum, double sigma, std::uint64_t seed);

// start, start + step, ..., n points.
std::vector<double> frequency_grid(double start, double step, std::size_t n);

}  // namespace nvsense
