#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nvsense/calibration.hpp"
#include "nvsense/fitting.hpp"
#include "nvsense/spectrum.hpp"

namespace nvsense::io {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kSweepHeader = "frequency_mhz,signal,t_acq_s";
inline constexpr std::string_view kSweepHeaderShort = "frequency_mhz,signal";
inline constexpr std::string_view kTimeSeriesHeader = "time_s,value";

// Decimal with 17 significant digits, enough to round-trip any double.
std::string format_double(double x);

// Sweep CSV: header "frequency_mhz,signal[,t_acq_s]", LF or CRLF line
// endings, optional UTF-8 BOM, blank lines ignored. Rows are sorted by
// frequency; duplicates raise NonMonotonicFrequency.
OdmrSpectrum parse_sweep(std::string_view text);
OdmrSpectrum ingest_sweep(const std::filesystem::path& path);
// The t_acq_s column is written only when the spectrum carries it.
std::string format_sweep(const OdmrSpectrum& spectrum);

struct TimeSeries {
  std::vector<double> t;
  std::vector<double> y;
};
TimeSeries parse_time_series(std::string_view text);
TimeSeries ingest_time_series(const std::filesystem::path& path);
std::string format_time_series(const TimeSeries& series);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

nlohmann::json to_json(const LinearFit& fit);
nlohmann::json to_json(const CalibrationPair& cal);
nlohmann::json to_json(const DoubleLorentzianFit& fit);
nlohmann::json to_json(const DualReading& reading);
nlohmann::json to_json(const ExponentialFit& fit);
nlohmann::json to_json(const HarmonicReport& report);

LinearFit linear_fit_from_json(const nlohmann::json& j);
CalibrationPair calibration_from_json(const nlohmann::json& j);
DoubleLorentzianFit double_lorentzian_from_json(const nlohmann::json& j);

// Pretty-printed JSON followed by a newline.
std::string dump(const nlohmann::json& j);

std::string dual_reading_csv_header();
std::string dual_reading_csv_row(std::size_t index, const DualReading& reading);

}  // namespace nvsense::io
