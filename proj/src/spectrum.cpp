#include "nvsense/spectrum.hpp"

#include <cmath>
#include <random>

#include "nvsense/error.hpp"

namespace nvsense {

void LorentzianPeak::validate() const {
  if (!(linewidth > 0.0)) throw Error(ErrorCode::InvalidArgument, "linewidth must be positive");
  if (!(contrast >= 0.0 && contrast <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "contrast must lie in [0, 1]");
  if (!(center > 0.0)) throw Error(ErrorCode::InvalidArgument, "peak center must be positive");
}

OdmrSpectrum::OdmrSpectrum(std::vector<double> frequencies, std::vector<double> signal,
                           AcquisitionMeta meta)
    : frequencies_(std::move(frequencies)), signal_(std::move(signal)), meta_(std::move(meta)) {
  if (frequencies_.size() != signal_.size())
    throw Error(ErrorCode::InvalidArgument, "frequency and signal lengths differ");
  if (!meta_.t_acq_s.empty() && meta_.t_acq_s.size() != frequencies_.size())
    throw Error(ErrorCode::InvalidArgument, "acquisition-time column length differs");
  for (std::size_t i = 0; i < frequencies_.size(); ++i) {
    if (!std::isfinite(frequencies_[i]) || !std::isfinite(signal_[i]))
      throw Error(ErrorCode::InvalidArgument, "spectrum values must be finite");
    if (i > 0 && !(frequencies_[i] > frequencies_[i - 1]))
      throw Error(ErrorCode::NonMonotonicFrequency,
                  "frequencies must be strictly increasing (index " + std::to_string(i) + ")");
  }
}

double lorentzian_value(double f_mw, const LorentzianPeak& peak) {
  const double x = (peak.center - f_mw) / peak.linewidth;
  return peak.contrast / (1.0 + x * x);
}

double lorentzian_slope(double f_mw, const LorentzianPeak& peak) {
  const double x = (peak.center - f_mw) / peak.linewidth;
  const double denom = 1.0 + x * x;
  return 2.0 * peak.contrast * x / (peak.linewidth * denom * denom);
}

double model_signal(std::span<const LorentzianPeak> peaks, double baseline, double f) {
  double s = baseline;
  for (const auto& p : peaks) s -= lorentzian_value(f, p);
  return s;
}

OdmrSpectrum model_spectrum(std::span<const LorentzianPeak> peaks, double baseline,
                            std::span<const double> frequencies) {
  if (peaks.empty()) throw Error(ErrorCode::InvalidArgument, "at least one peak is required");
  for (const auto& p : peaks) p.validate();
  std::vector<double> signal;
  signal.reserve(frequencies.size());
  for (double f : frequencies) signal.push_back(model_signal(peaks, baseline, f));
  return OdmrSpectrum({frequencies.begin(), frequencies.end()}, std::move(signal));
}

OdmrSpectrum synthesize_noisy(const OdmrSpectrum& spectrum, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be >= 0");
  if (sigma == 0.0) return spectrum;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> signal = spectrum.signal();
  for (double& s : signal) s += noise(rng);
  return OdmrSpectrum(spectrum.frequencies(), std::move(signal), spectrum.meta());
}

std::vector<double> frequency_grid(double start, double step, std::size_t n) {
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = start + step * static_cast<double>(i);
  return f;
}

}  // namespace nvsense
