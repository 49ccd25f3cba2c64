#include "nvsense/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nvsense/error.hpp"

namespace nvsense::io {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(line.substr(start));
      return parts;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_decimal(std::string_view field, std::size_t line_no, std::string_view column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value, std::chars_format::general);
  if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ParseError(line_no, "invalid " + std::string(column) + " value '" +
                                  std::string(field) + "'");
  return value;
}

// Splits text into (line number, content) pairs, dropping CR and blank lines.
std::vector<std::pair<std::size_t, std::string_view>> data_lines(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    ++line_no;
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (line.ends_with('\r')) line.remove_suffix(1);
    if (!line.empty()) lines.emplace_back(line_no, line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

OdmrSpectrum parse_sweep(std::string_view text) {
  const auto lines = data_lines(text);
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "sweep file is empty");

  const auto& [header_no, header] = lines.front();
  bool has_tacq = false;
  if (header == kSweepHeader) {
    has_tacq = true;
  } else if (header != kSweepHeaderShort) {
    throw ParseError(header_no, "expected header '" + std::string(kSweepHeader) +
                                    "' or '" + std::string(kSweepHeaderShort) + "'");
  }
  if (lines.size() == 1) throw Error(ErrorCode::EmptyFile, "sweep file has no data rows");

  struct Row {
    double f, s, t;
    std::size_t line;
  };
  std::vector<Row> rows;
  rows.reserve(lines.size() - 1);
  const std::size_t columns = has_tacq ? 3 : 2;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [no, line] = lines[i];
    const auto fields = split(line, ',');
    if (fields.size() != columns)
      throw ParseError(no, "expected " + std::to_string(columns) + " fields, got " +
                               std::to_string(fields.size()));
    Row r{parse_decimal(fields[0], no, "frequency_mhz"), parse_decimal(fields[1], no, "signal"),
          0.0, no};
    if (has_tacq) r.t = parse_decimal(fields[2], no, "t_acq_s");
    rows.push_back(r);
  }

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.f < b.f; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].f == rows[i - 1].f)
      throw Error(ErrorCode::NonMonotonicFrequency,
                  "duplicate frequency " + format_double(rows[i].f) + " at line " +
                      std::to_string(rows[i].line));
  }

  std::vector<double> f, s;
  AcquisitionMeta meta;
  for (const Row& r : rows) {
    f.push_back(r.f);
    s.push_back(r.s);
    if (has_tacq) meta.t_acq_s.push_back(r.t);
  }
  return OdmrSpectrum(std::move(f), std::move(s), std::move(meta));
}

OdmrSpectrum ingest_sweep(const std::filesystem::path& path) {
  return parse_sweep(read_file(path));
}

std::string format_sweep(const OdmrSpectrum& spectrum) {
  const bool has_tacq = !spectrum.meta().t_acq_s.empty();
  std::string out(has_tacq ? kSweepHeader : kSweepHeaderShort);
  out += '\n';
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    out += format_double(spectrum.frequencies()[i]);
    out += ',';
    out += format_double(spectrum.signal()[i]);
    if (has_tacq) {
      out += ',';
      out += format_double(spectrum.meta().t_acq_s[i]);
    }
    out += '\n';
  }
  return out;
}

TimeSeries parse_time_series(std::string_view text) {
  const auto lines = data_lines(text);
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "time-series file is empty");
  if (lines.front().second != kTimeSeriesHeader)
    throw ParseError(lines.front().first,
                     "expected header '" + std::string(kTimeSeriesHeader) + "'");
  if (lines.size() == 1) throw Error(ErrorCode::EmptyFile, "time-series file has no data rows");
  TimeSeries ts;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [no, line] = lines[i];
    const auto fields = split(line, ',');
    if (fields.size() != 2)
      throw ParseError(no, "expected 2 fields, got " + std::to_string(fields.size()));
    ts.t.push_back(parse_decimal(fields[0], no, "time_s"));
    ts.y.push_back(parse_decimal(fields[1], no, "value"));
    if (ts.t.size() > 1 && !(ts.t.back() > ts.t[ts.t.size() - 2]))
      throw ParseError(no, "time_s must be strictly increasing");
  }
  return ts;
}

TimeSeries ingest_time_series(const std::filesystem::path& path) {
  return parse_time_series(read_file(path));
}

std::string format_time_series(const TimeSeries& series) {
  std::string out(kTimeSeriesHeader);
  out += '\n';
  for (std::size_t i = 0; i < series.t.size(); ++i)
    out += format_double(series.t[i]) + ',' + format_double(series.y[i]) + '\n';
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "error reading " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::IoError, "error writing " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot rename into " + path.string());
  }
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const LinearFit& fit) {
  return {{"intercept", fit.intercept},       {"slope", fit.slope},
          {"r_squared", fit.r_squared},       {"stderr_slope", fit.stderr_slope},
          {"stderr_intercept", fit.stderr_intercept}};
}

nlohmann::json to_json(const CalibrationPair& cal) {
  return {{"schema_version", kSchemaVersion},
          {"d_vs_t", to_json(cal.d_vs_t)},
          {"df_vs_b", to_json(cal.df_vs_b)}};
}

nlohmann::json to_json(const DoubleLorentzianFit& fit) {
  nlohmann::json peaks = nlohmann::json::array();
  for (const auto& p : fit.peaks)
    peaks.push_back({{"center_mhz", p.center}, {"linewidth_mhz", p.linewidth}, {"contrast", p.contrast}});
  return {{"schema_version", kSchemaVersion},
          {"peaks", peaks},
          {"baseline", fit.baseline},
          {"residual_rms", fit.residual_rms},
          {"covariance", matrix_to_json(fit.covariance)},
          {"converged", fit.converged},
          {"iterations", fit.iterations},
          {"gradient_norm", fit.gradient_norm},
          {"separation_at_bound", fit.separation_at_bound}};
}

nlohmann::json to_json(const DualReading& r) {
  return {{"temperature_c", r.temperature}, {"field_ut", r.field},
          {"d_mhz", r.d_measured},          {"df_mhz", r.df_measured},
          {"sigma_t", r.temperature_uncertainty}, {"sigma_b", r.field_uncertainty},
          {"schema_version", kSchemaVersion}};
}

nlohmann::json to_json(const ExponentialFit& fit) {
  return {{"schema_version", kSchemaVersion},
          {"direction", fit.direction == Direction::Rise ? "rise" : "fall"},
          {"amplitude", fit.amplitude},
          {"tau_s", fit.tau},
          {"offset", fit.offset},
          {"residual_rms", fit.residual_rms},
          {"stderr_amplitude", fit.stderr_amplitude},
          {"stderr_tau_s", fit.stderr_tau},
          {"stderr_offset", fit.stderr_offset},
          {"iterations", fit.iterations}};
}

nlohmann::json to_json(const HarmonicReport& report) {
  return {{"schema_version", kSchemaVersion},
          {"peak_frequency_hz", report.peak_frequency},
          {"peak_amplitude", report.peak_amplitude},
          {"secondary_harmonic_ratio", report.secondary_harmonic_ratio},
          {"peak_bin", report.peak_bin},
          {"bin_width_hz", report.bin_width}};
}

LinearFit linear_fit_from_json(const nlohmann::json& j) {
  LinearFit fit;
  fit.intercept = j.at("intercept").get<double>();
  fit.slope = j.at("slope").get<double>();
  fit.r_squared = j.value("r_squared", 0.0);
  fit.stderr_slope = j.value("stderr_slope", 0.0);
  fit.stderr_intercept = j.value("stderr_intercept", 0.0);
  return fit;
}

CalibrationPair calibration_from_json(const nlohmann::json& j) {
  try {
    CalibrationPair cal;
    cal.d_vs_t = linear_fit_from_json(j.at("d_vs_t"));
    cal.df_vs_b = linear_fit_from_json(j.at("df_vs_b"));
    cal.validate();
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("calibration JSON: ") + e.what());
  }
}

DoubleLorentzianFit double_lorentzian_from_json(const nlohmann::json& j) {
  try {
    DoubleLorentzianFit fit;
    const auto& peaks = j.at("peaks");
    if (peaks.size() != 2) throw Error(ErrorCode::ParseError, "fit JSON needs exactly two peaks");
    for (std::size_t k = 0; k < 2; ++k) {
      fit.peaks[k].center = peaks[k].at("center_mhz").get<double>();
      fit.peaks[k].linewidth = peaks[k].at("linewidth_mhz").get<double>();
      fit.peaks[k].contrast = peaks[k].at("contrast").get<double>();
    }
    fit.baseline = j.at("baseline").get<double>();
    fit.residual_rms = j.value("residual_rms", 0.0);
    fit.converged = j.value("converged", false);
    fit.iterations = j.value("iterations", 0);
    fit.gradient_norm = j.value("gradient_norm", 0.0);
    fit.separation_at_bound = j.value("separation_at_bound", false);
    if (j.contains("covariance")) {
      const auto& cov = j.at("covariance");
      for (int r = 0; r < kDoubleLorentzianParams; ++r)
        for (int c = 0; c < kDoubleLorentzianParams; ++c)
          fit.covariance(r, c) = cov.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    }
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("fit JSON: ") + e.what());
  }
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + '\n'; }

std::string dual_reading_csv_header() {
  return "schema_version,index,temperature_c,field_ut,d_mhz,df_mhz,sigma_t,sigma_b";
}

std::string dual_reading_csv_row(std::size_t index, const DualReading& r) {
  return std::to_string(kSchemaVersion) + ',' + std::to_string(index) + ',' +
         format_double(r.temperature) + ',' + format_double(r.field) + ',' +
         format_double(r.d_measured) + ',' + format_double(r.df_measured) + ',' +
         format_double(r.temperature_uncertainty) + ',' + format_double(r.field_uncertainty);
}

}  // namespace nvsense::io
