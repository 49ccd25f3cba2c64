#include "nvsense/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "nvsense/calibration.hpp"
#include "nvsense/error.hpp"
#include "nvsense/io.hpp"
#include "nvsense/lindblad.hpp"
#include "nvsense/spin_model.hpp"

namespace nvsense {

namespace {

using nlohmann::json;

struct Output {
  std::string path;  // empty: default location
  std::string default_name;

  // Writes atomically to the resolved path, or to `out` when none applies.
  void emit(std::string_view content, std::ostream& out) const {
    std::filesystem::path target;
    if (!path.empty() && path != "-") {
      target = path;
    } else if (path.empty()) {
      if (const char* dir = std::getenv(kOutputDirEnv); dir && *dir) target = std::filesystem::path(dir) / default_name;
    }
    if (target.empty()) {
      out << content;
      out.flush();
    } else {
      io::write_file_atomic(target, content);
    }
  }
};

void add_output(CLI::App* sub, Output& o, std::string default_name) {
  o.default_name = std::move(default_name);
  sub->add_option("-o,--out", o.path, "Output file ('-' for stdout)");
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, message);
}

void require_readable(const std::string& path) {
  if (!std::filesystem::is_regular_file(path))
    throw Error(ErrorCode::IoError, "input file not found: " + path);
}

// "value:path" pairs for calibrate.
std::pair<double, std::string> split_point(const std::string& spec) {
  const auto pos = spec.find(':');
  if (pos == std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "expected VALUE:PATH, got '" + spec + "'");
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(spec.substr(0, pos), &used);
    if (used != pos) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "bad calibration value in '" + spec + "'");
  }
  return {value, spec.substr(pos + 1)};
}

CalibrationPair load_calibration(const std::string& path) {
  if (path.empty()) return CalibrationPair::nanodiamond_reference();
  require_readable(path);
  try {
    return io::calibration_from_json(json::parse(io::read_file(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "calibration file: " + std::string(e.what()));
  }
}

// Fills options that were not given on the command line from a flat
// key = value file, so explicit flags take precedence over the file.
void apply_config(CLI::App* sub, const std::string& path) {
  require_readable(path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path);
  } catch (const CLI::Error& e) {
    throw Error(ErrorCode::ParseError, "config file " + path + ": " + e.what());
  }
  for (const auto& item : items) {
    if (!item.parents.empty())
      throw Error(ErrorCode::InvalidArgument, "config file " + path + ": sections are not supported");
    CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
    if (opt == nullptr || item.name == "config")
      throw Error(ErrorCode::InvalidArgument,
                  "config file " + path + ": unknown key '" + item.name + "' for " + sub->get_name());
    if (opt->count() > 0) continue;
    try {
      opt->add_result(item.inputs);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw Error(ErrorCode::InvalidArgument, "config file " + path + ": " + item.name + ": " + e.what());
    }
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"NV-nanodiamond ODMR simulation, fitting and dual temperature/field sensing"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // Config file per subcommand, applied after the command line is parsed.
  std::map<CLI::App*, std::string> config_paths;

  // ---- simulate-odmr
  struct {
    double start = 2845.0, step = 1.0;
    std::size_t points = 51;
    double rabi = 1.0, epsilon = 0.01, ground_zfs = 2871.5, excited_zfs = 1430.0;
    double strain = 0.0, zeeman = 0.0, k_detector = 1.0;
    std::string observable = "photon";
    unsigned threads = 0;
    Output output;
  } sim;
  auto* sim_cmd = app.add_subcommand("simulate-odmr", "Seven-level Lindblad steady-state ODMR sweep -> CSV");
  sim_cmd->add_option("--config", config_paths[sim_cmd], "Flat key = value config file");
  sim_cmd->add_option("--start", sim.start, "First MW frequency (MHz)")->capture_default_str();
  sim_cmd->add_option("--step", sim.step, "Frequency step (MHz)")->capture_default_str();
  sim_cmd->add_option("--points", sim.points, "Number of sweep points")->capture_default_str();
  sim_cmd->add_option("--rabi", sim.rabi, "Rabi frequency (MHz)")->capture_default_str();
  sim_cmd->add_option("--epsilon", sim.epsilon, "Spin non-conserving ratio")->capture_default_str();
  sim_cmd->add_option("--ground-zfs", sim.ground_zfs, "Ground-state ZFS (MHz)")->capture_default_str();
  sim_cmd->add_option("--excited-zfs", sim.excited_zfs, "Excited-state ZFS (MHz)")->capture_default_str();
  sim_cmd->add_option("--strain", sim.strain, "Ground strain E (MHz)")->capture_default_str();
  sim_cmd->add_option("--zeeman", sim.zeeman, "gamma_e * B_z (MHz)")->capture_default_str();
  sim_cmd->add_option("--k-detector", sim.k_detector, "Photon detection constant")->capture_default_str();
  sim_cmd->add_option("--observable", sim.observable, "photon | population")
      ->check(CLI::IsMember({"photon", "population"}))
      ->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "Worker threads (0 = hardware)");
  add_output(sim_cmd, sim.output, "simulated_odmr.csv");

  // ---- synth
  struct {
    double start = 2845.0, step = 1.0;
    std::size_t points = 51;
    double d = 2870.0, df = 12.84;
    std::optional<double> temperature, field;
    std::string calibration;
    double linewidth = 5.0, contrast = 0.02, baseline = 1.0, sigma = 0.0;
    std::uint64_t seed = 1;
    std::optional<double> t_acq;
    Output output;
  } syn;
  auto* syn_cmd = app.add_subcommand("synth", "Double-Lorentzian spectrum with Gaussian noise -> CSV");
  syn_cmd->add_option("--config", config_paths[syn_cmd], "Flat key = value config file");
  syn_cmd->add_option("--start", syn.start, "First frequency (MHz)")->capture_default_str();
  syn_cmd->add_option("--step", syn.step, "Frequency step (MHz)")->capture_default_str();
  syn_cmd->add_option("--points", syn.points, "Number of points")->capture_default_str();
  syn_cmd->add_option("--d", syn.d, "Zero-field splitting D (MHz)")->capture_default_str();
  syn_cmd->add_option("--df", syn.df, "Resonance splitting (MHz)")->capture_default_str();
  syn_cmd->add_option("--temperature", syn.temperature, "Temperature (deg C); overrides --d via calibration");
  syn_cmd->add_option("--field", syn.field, "Field (uT); overrides --df via calibration");
  syn_cmd->add_option("--calibration", syn.calibration, "Calibration JSON (default: reference lines)");
  syn_cmd->add_option("--linewidth", syn.linewidth, "HWHM linewidth (MHz)")->capture_default_str();
  syn_cmd->add_option("--contrast", syn.contrast, "Contrast per dip")->capture_default_str();
  syn_cmd->add_option("--baseline", syn.baseline, "Baseline")->capture_default_str();
  syn_cmd->add_option("--sigma", syn.sigma, "Gaussian noise std")->capture_default_str();
  syn_cmd->add_option("--seed", syn.seed, "RNG seed")->capture_default_str();
  syn_cmd->add_option("--t-acq", syn.t_acq, "Per-point acquisition time (s); adds the t_acq_s column");
  add_output(syn_cmd, syn.output, "synth.csv");

  // ---- fit
  struct {
    std::string in;
    Output output;
  } fit;
  auto* fit_cmd = app.add_subcommand("fit", "Double-Lorentzian fit of a sweep CSV -> JSON");
  fit_cmd->add_option("--config", config_paths[fit_cmd], "Flat key = value config file");
  fit_cmd->add_option("-i,--in", fit.in, "Sweep CSV");
  add_output(fit_cmd, fit.output, "fit.json");

  // ---- calibrate
  struct {
    std::vector<std::string> temperature_points, field_points;
    std::string base;
    Output output;
  } cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Fit calibration lines from labelled sweeps -> JSON");
  cal_cmd->add_option("--config", config_paths[cal_cmd], "Flat key = value config file");
  cal_cmd->add_option("--temperature-point", cal.temperature_points, "T_C:sweep.csv (repeatable)");
  cal_cmd->add_option("--field-point", cal.field_points, "B_uT:sweep.csv (repeatable)");
  cal_cmd->add_option("--base", cal.base, "Calibration JSON supplying any line not refitted");
  add_output(cal_cmd, cal.output, "calibration.json");

  // ---- sense
  struct {
    std::vector<std::string> in;
    std::string calibration;
    std::string format = "json";
    bool stream = false;
    double cadence_ms = 0.0;
    Output output;
  } sense;
  auto* sense_cmd = app.add_subcommand("sense", "Simultaneous temperature and field from sweep(s)");
  sense_cmd->add_option("--config", config_paths[sense_cmd], "Flat key = value config file");
  sense_cmd->add_option("-i,--in", sense.in, "Sweep CSV(s)");
  sense_cmd->add_option("--calibration", sense.calibration, "Calibration JSON (default: reference lines)");
  sense_cmd->add_option("--format", sense.format, "json | csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  sense_cmd->add_flag("--stream", sense.stream, "Read sweep paths from stdin, emit CSV rows as they arrive");
  sense_cmd->add_option("--cadence-ms", sense.cadence_ms, "Delay between streamed rows (ms)");
  add_output(sense_cmd, sense.output, "reading.json");

  // ---- sensitivity
  struct {
    std::string in;
    std::optional<double> sigma;
    std::optional<double> t_acq;
    double gamma = kGammaElectron;
    double d_slope = -0.087;
    bool slope_diagnostic = false;
    Output output;
  } sens;
  auto* sens_cmd = app.add_subcommand("sensitivity", "Thermal and magnetic sensitivity from a sweep -> JSON");
  sens_cmd->add_option("--config", config_paths[sens_cmd], "Flat key = value config file");
  sens_cmd->add_option("-i,--in", sens.in, "Sweep CSV");
  sens_cmd->add_option("--sigma", sens.sigma, "Signal std with MW off (default: fit residual RMS)");
  sens_cmd->add_option("--t-acq", sens.t_acq, "Acquisition time per point (s; default: CSV column or 1)");
  sens_cmd->add_option("--gamma", sens.gamma, "Gyromagnetic ratio (MHz/mT)")->capture_default_str();
  sens_cmd->add_option("--d-slope", sens.d_slope, "dD/dT (MHz/deg C)")->capture_default_str();
  sens_cmd->add_flag("--slope-diagnostic", sens.slope_diagnostic, "Also report the slope-based thermal estimator");
  add_output(sens_cmd, sens.output, "sensitivity.json");

  // ---- temporal
  struct {
    std::string in;
    std::string mode = "rise";
    Output output;
  } tmp;
  auto* tmp_cmd = app.add_subcommand("temporal", "Rise/fall exponential fit or harmonic analysis -> JSON");
  tmp_cmd->add_option("--config", config_paths[tmp_cmd], "Flat key = value config file");
  tmp_cmd->add_option("-i,--in", tmp.in, "Time-series CSV (time_s,value)");
  tmp_cmd->add_option("--mode", tmp.mode, "rise | fall | harmonic")
      ->check(CLI::IsMember({"rise", "fall", "harmonic"}))
      ->capture_default_str();
  add_output(tmp_cmd, tmp.output, "temporal.json");

  auto report_error = [&](std::string_view code, int status, const std::string& message) {
    err << json{{"error", code}, {"code", status}, {"message", message}}.dump() << '\n';
    return status;
  };

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return report_error("InvalidArgument", static_cast<int>(ErrorCode::InvalidArgument), e.what());
  }

  try {
    for (auto& [sub, path] : config_paths)
      if (*sub && !path.empty()) apply_config(sub, path);
    for (auto* sub : {fit_cmd, sens_cmd, tmp_cmd})
      if (*sub) require(!sub->get_option("--in")->as<std::string>().empty(), "--in is required");

    if (*sim_cmd) {
      require(sim.points >= 2, "--points must be >= 2");
      require(sim.start > 0.0 && sim.step > 0.0, "sweep start and step must be positive");
      NvSevenLevelModel model = NvSevenLevelModel::with_epsilon(sim.epsilon);
      model.rabi_frequency = sim.rabi;
      model.ground_zfs = sim.ground_zfs;
      model.excited_zfs = sim.excited_zfs;
      model.ground_strain = sim.strain;
      model.ground_zeeman = sim.zeeman;
      model.k_detector = sim.k_detector;
      model.mw_frequency = sim.start;
      const double stop = sim.start + sim.step * static_cast<double>(sim.points - 1);
      const SimulatedOdmr result =
          simulate_odmr(model, sim.start, stop, sim.points,
                        sim.observable == "photon" ? OdmrObservable::PhotonRate
                                                   : OdmrObservable::GroundPopulation,
                        sim.threads);
      for (const auto& f : result.failures)
        err << json{{"warning", error_code_name(f.code)}, {"frequency_mhz", f.frequency}, {"message", f.message}}.dump()
            << '\n';
      sim.output.emit(io::format_sweep(result.spectrum), out);
    } else if (*syn_cmd) {
      require(syn.points >= 2, "--points must be >= 2");
      require(syn.start > 0.0 && syn.step > 0.0, "sweep start and step must be positive");
      double d = syn.d;
      double df = syn.df;
      if (syn.temperature || syn.field) {
        const CalibrationPair c = load_calibration(syn.calibration);
        if (syn.temperature) d = c.d_vs_t(*syn.temperature);
        if (syn.field) df = c.df_vs_b(*syn.field);
      }
      require(df >= 0.0, "resonance splitting must be >= 0");
      // Effective axial field reproducing the requested splitting.
      SpinModel spin;
      spin.d_zfs = d;
      spin.b_field = Eigen::Vector3d(0.0, 0.0, 0.5 * df / spin.gamma_e);
      const ResonancePair nu = resonance_frequencies(spin);
      const std::vector<LorentzianPeak> peaks{{nu.nu_minus, syn.linewidth, syn.contrast},
                                              {nu.nu_plus, syn.linewidth, syn.contrast}};
      const std::vector<double> grid = frequency_grid(syn.start, syn.step, syn.points);
      OdmrSpectrum clean = model_spectrum(peaks, syn.baseline, grid);
      AcquisitionMeta meta{"synth", {}};
      if (syn.t_acq) meta.t_acq_s.assign(grid.size(), *syn.t_acq);
      clean = OdmrSpectrum(clean.frequencies(), clean.signal(), meta);
      syn.output.emit(io::format_sweep(synthesize_noisy(clean, syn.sigma, syn.seed)), out);
    } else if (*fit_cmd) {
      require_readable(fit.in);
      const DoubleLorentzianFit result = fit_double_lorentzian(io::ingest_sweep(fit.in));
      fit.output.emit(io::dump(io::to_json(result)), out);
    } else if (*cal_cmd) {
      require(!cal.temperature_points.empty() || !cal.field_points.empty(),
              "give --temperature-point and/or --field-point");
      CalibrationPair result = load_calibration(cal.base);
      json points = json::object();
      auto refit = [&](const std::vector<std::string>& specs, bool temperature) {
        std::vector<std::pair<double, std::string>> parsed;
        for (const auto& s : specs) parsed.push_back(split_point(s));
        for (const auto& [value, path] : parsed) require_readable(path);
        std::vector<double> x, y;
        json rows = json::array();
        for (const auto& [value, path] : parsed) {
          const DoubleLorentzianFit f = fit_double_lorentzian(io::ingest_sweep(path));
          if (!f.converged) throw Error(ErrorCode::UnconvergedFit, "fit did not converge for " + path);
          const double mid = 0.5 * (f.peaks[0].center + f.peaks[1].center);
          const double split = f.peaks[1].center - f.peaks[0].center;
          x.push_back(value);
          y.push_back(temperature ? mid : split);
          rows.push_back({{temperature ? "temperature_c" : "field_ut", value},
                          {temperature ? "d_mhz" : "df_mhz", y.back()},
                          {"source", path}});
        }
        (temperature ? result.d_vs_t : result.df_vs_b) = fit_linear(x, y);
        points[temperature ? "temperature" : "field"] = rows;
      };
      if (!cal.temperature_points.empty()) refit(cal.temperature_points, true);
      if (!cal.field_points.empty()) refit(cal.field_points, false);
      result.validate();
      json j = io::to_json(result);
      j["points"] = points;
      cal.output.emit(io::dump(j), out);
    } else if (*sense_cmd) {
      const CalibrationPair c = load_calibration(sense.calibration);
      if (sense.stream) {
        std::vector<std::string> paths = sense.in;
        if (paths.empty()) {
          // Rows are emitted as each path arrives.
          out << io::dual_reading_csv_header() << '\n';
          std::string line;
          std::size_t index = 0;
          while (std::getline(std::cin, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            require_readable(line);
            const DualReading r = dual_sense(c, fit_double_lorentzian(io::ingest_sweep(line)));
            out << io::dual_reading_csv_row(index++, r) << '\n' << std::flush;
            if (sense.cadence_ms > 0.0)
              std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(sense.cadence_ms));
          }
          return 0;
        }
        sense.format = "csv";
      }
      require(!sense.in.empty(), "give --in or --stream");
      for (const auto& p : sense.in) require_readable(p);
      std::vector<DualReading> readings;
      for (const auto& p : sense.in)
        readings.push_back(dual_sense(c, fit_double_lorentzian(io::ingest_sweep(p))));
      if (sense.format == "csv") {
        std::string text = io::dual_reading_csv_header() + '\n';
        for (std::size_t i = 0; i < readings.size(); ++i) {
          text += io::dual_reading_csv_row(i, readings[i]) + '\n';
          if (sense.stream && sense.cadence_ms > 0.0 && i + 1 < readings.size())
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(sense.cadence_ms));
        }
        sense.output.emit(text, out);
      } else if (readings.size() == 1) {
        sense.output.emit(io::dump(io::to_json(readings.front())), out);
      } else {
        json arr = json::array();
        for (const auto& r : readings) arr.push_back(io::to_json(r));
        sense.output.emit(io::dump(arr), out);
      }
    } else if (*sens_cmd) {
      require_readable(sens.in);
      const OdmrSpectrum spectrum = io::ingest_sweep(sens.in);
      const DoubleLorentzianFit f = fit_double_lorentzian(spectrum);
      double t_acq = 1.0;
      if (sens.t_acq) {
        t_acq = *sens.t_acq;
      } else if (!spectrum.meta().t_acq_s.empty()) {
        double sum = 0.0;
        for (double t : spectrum.meta().t_acq_s) sum += t;
        t_acq = sum / static_cast<double>(spectrum.size());
      }
      const double sigma = sens.sigma ? *sens.sigma : f.residual_rms;
      // sigma is in signal units; contrast and slope are made relative to the
      // baseline so the estimators see a normalized signal.
      const double rel_sigma = sigma / f.baseline;
      SensitivityInputs thermal = sensitivity_inputs_from_fit(f, rel_sigma, t_acq, sens.gamma, sens.d_slope);
      thermal.slope_dC_df /= f.baseline;
      SensitivityInputs magnetic = thermal;
      magnetic.gamma = sens.gamma / 1000.0;  // MHz/uT, so eta_B comes out in uT/sqrt(Hz)
      json j{{"schema_version", io::kSchemaVersion},
             {"sigma", sigma},
             {"sigma_source", sens.sigma ? "argument" : "fit_residual_rms"},
             {"t_acq_s", t_acq},
             {"contrast_a", thermal.contrast_a},
             {"slope_dc_df_per_mhz", thermal.slope_dC_df},
             {"gamma_mhz_per_mt", sens.gamma},
             {"d_slope_mhz_per_c", sens.d_slope},
             {"eta_t", thermal_sensitivity(thermal)},
             {"eta_b_ut_per_rthz", magnetic_sensitivity(magnetic)}};
      if (sens.slope_diagnostic) j["eta_t_slope_k_per_rthz"] = slope_thermal_sensitivity(thermal);
      sens.output.emit(io::dump(j), out);
    } else if (*tmp_cmd) {
      require_readable(tmp.in);
      const io::TimeSeries ts = io::ingest_time_series(tmp.in);
      json j;
      if (tmp.mode == "harmonic") {
        j = io::to_json(harmonic_analysis(ts.t, ts.y));
      } else {
        j = io::to_json(fit_exponential(ts.t, ts.y, tmp.mode == "rise" ? Direction::Rise : Direction::Fall));
      }
      tmp.output.emit(io::dump(j), out);
    }
  } catch (const Error& e) {
    return report_error(error_code_name(e.code()), static_cast<int>(e.code()), e.what());
  } catch (const std::exception& e) {
    return report_error("InternalError", 1, e.what());
  }
  return 0;
}

}  // namespace nvsense
