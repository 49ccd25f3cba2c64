#include "nvsense/lindblad.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

namespace nvsense {

namespace {

using cd = std::complex<double>;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Column-major vec(rho) index of element (row, col).
constexpr int vec_index(int row, int col) { return col * kNumLevels + row; }

Eigen::VectorXcd vectorize(const Matrix7cd& rho) {
  Eigen::VectorXcd v(kLiouvilleDim);
  for (int c = 0; c < kNumLevels; ++c)
    for (int r = 0; r < kNumLevels; ++r) v(vec_index(r, c)) = rho(r, c);
  return v;
}

Matrix7cd unvectorize(const Eigen::VectorXcd& v) {
  Matrix7cd rho;
  for (int c = 0; c < kNumLevels; ++c)
    for (int r = 0; r < kNumLevels; ++r) rho(r, c) = v(vec_index(r, c));
  return rho;
}

cd vec_trace(const Eigen::VectorXcd& v) {
  cd t = 0.0;
  for (int n = 0; n < kNumLevels; ++n) t += v(vec_index(n, n));
  return t;
}

double min_hermitian_eigenvalue(const Matrix7cd& rho) {
  const Matrix7cd herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix7cd> solver(herm, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

bool state_within_tolerance(const Eigen::VectorXcd& y) {
  if (std::abs(vec_trace(y) - 1.0) > DensityMatrix::kTraceTol) return false;
  return min_hermitian_eigenvalue(unvectorize(y)) >= -DensityMatrix::kPositivityTol;
}

}  // namespace

// ---------------------------------------------------------------------------
// RateTable

std::size_t RateTable::idx(int level) {
  if (level < 1 || level > kNumLevels)
    throw Error(ErrorCode::InvalidArgument, "level index out of range: " + std::to_string(level));
  return static_cast<std::size_t>(level - 1);
}

void RateTable::set(int from, int to, double rate) {
  if (!(rate >= 0.0) || !std::isfinite(rate))
    throw Error(ErrorCode::InvalidArgument, "rates must be finite and non-negative");
  if (from == to && rate != 0.0)
    throw Error(ErrorCode::InvalidArgument, "diagonal rates must be zero");
  k_[idx(from)][idx(to)] = rate;
}

double RateTable::total_out(int level) const {
  double s = 0.0;
  for (double r : k_[idx(level)]) s += r;
  return s;
}

double RateTable::min_positive() const {
  double m = 0.0;
  for (const auto& row : k_)
    for (double r : row)
      if (r > 0.0 && (m == 0.0 || r < m)) m = r;
  return m;
}

RateTable RateTable::nv_defaults(double epsilon) {
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  constexpr double kPump = 64.0;
  constexpr double kEmission = 64.0;
  RateTable t;
  // Spin-conserving optical pumping and spontaneous emission.
  t.set(1, 4, kPump);
  t.set(2, 5, kPump);
  t.set(3, 6, kPump);
  t.set(4, 1, kEmission);
  t.set(5, 2, kEmission);
  t.set(6, 3, kEmission);
  // Intersystem crossing, excited triplet -> singlet -> ground.
  t.set(5, 7, 79.8);
  t.set(6, 7, 79.8);
  t.set(4, 7, 11.8);
  t.set(7, 1, 5.6);
  t.set(7, 2, 0.0);
  t.set(7, 3, 0.0);
  // Spin non-conserving optical channels.
  t.set(2, 4, epsilon * kPump);
  t.set(3, 4, epsilon * kPump);
  t.set(1, 5, epsilon * kPump);
  t.set(1, 6, epsilon * kPump);
  t.set(4, 2, epsilon * kEmission);
  t.set(4, 3, epsilon * kEmission);
  t.set(5, 1, epsilon * kEmission);
  t.set(6, 1, epsilon * kEmission);
  return t;
}

// ---------------------------------------------------------------------------
// NvSevenLevelModel

NvSevenLevelModel NvSevenLevelModel::with_epsilon(double epsilon) {
  NvSevenLevelModel m;
  m.rates = RateTable::nv_defaults(epsilon);
  m.epsilon = epsilon;
  return m;
}

void NvSevenLevelModel::validate() const {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!(ground_zfs > 0.0) || !(excited_zfs > 0.0) || !(mw_frequency > 0.0))
    throw Error(ErrorCode::InvalidArgument, "frequencies must be positive");
  if (!finite(ground_strain) || !finite(ground_zeeman) || !finite(rabi_frequency) ||
      rabi_frequency < 0.0)
    throw Error(ErrorCode::InvalidArgument, "drive parameters must be finite, Rabi >= 0");
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  if (!(k_detector > 0.0)) throw Error(ErrorCode::InvalidArgument, "k_detector must be > 0");
}

// ---------------------------------------------------------------------------
// DensityMatrix

DensityMatrix::DensityMatrix() : rho_(Matrix7cd::Zero()) { rho_(0, 0) = 1.0; }

DensityMatrix::DensityMatrix(const Matrix7cd& rho) : rho_(rho) {
  if (!rho_.allFinite()) throw Error(ErrorCode::InvalidArgument, "density matrix is not finite");
  if (hermiticity_error() >= kHermitianTol)
    throw Error(ErrorCode::InvalidArgument, "density matrix is not Hermitian");
  if (trace_error() >= kTraceTol)
    throw Error(ErrorCode::InvalidArgument, "density matrix trace differs from 1");
  if (min_eigenvalue() < -kPositivityTol)
    throw Error(ErrorCode::InvalidArgument, "density matrix has a negative eigenvalue");
}

DensityMatrix DensityMatrix::pure(int level) {
  if (level < 1 || level > kNumLevels) throw Error(ErrorCode::InvalidArgument, "bad level");
  Matrix7cd rho = Matrix7cd::Zero();
  rho(level - 1, level - 1) = 1.0;
  return DensityMatrix(rho);
}

DensityMatrix DensityMatrix::mixed_ground() {
  Matrix7cd rho = Matrix7cd::Zero();
  for (int n = 0; n < 3; ++n) rho(n, n) = 1.0 / 3.0;
  return DensityMatrix(rho);
}

Vector7d DensityMatrix::populations() const { return rho_.diagonal().real(); }

double DensityMatrix::trace_error() const { return std::abs(rho_.trace() - 1.0); }

double DensityMatrix::hermiticity_error() const {
  return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
}

double DensityMatrix::min_eigenvalue() const { return min_hermitian_eigenvalue(rho_); }

// ---------------------------------------------------------------------------
// Liouvillian

Matrix7cd rotating_frame_hamiltonian(const NvSevenLevelModel& model) {
  model.validate();
  // Frame rotating at the MW frequency on the ground m_s = +-1 levels. The
  // excited levels are never coherently coupled, so their energies are
  // irrelevant and set to zero.
  Matrix7cd h = Matrix7cd::Zero();
  h(1, 1) = model.ground_zfs + model.ground_zeeman - model.mw_frequency;
  h(2, 2) = model.ground_zfs - model.ground_zeeman - model.mw_frequency;
  h(1, 2) = h(2, 1) = model.ground_strain;
  const double half_rabi = 0.5 * model.rabi_frequency;
  h(0, 1) = h(1, 0) = half_rabi;
  h(0, 2) = h(2, 0) = half_rabi;
  return kTwoPi * h;
}

Eigen::MatrixXcd build_liouvillian(const NvSevenLevelModel& model) {
  const Matrix7cd h = rotating_frame_hamiltonian(model);
  const cd i_unit(0.0, 1.0);
  Eigen::MatrixXcd l = Eigen::MatrixXcd::Zero(kLiouvilleDim, kLiouvilleDim);

  // -i [H, rho]
  for (int r = 0; r < kNumLevels; ++r) {
    for (int c = 0; c < kNumLevels; ++c) {
      const int row = vec_index(r, c);
      for (int m = 0; m < kNumLevels; ++m) {
        if (h(r, m) != 0.0) l(row, vec_index(m, c)) += -i_unit * h(r, m);
        if (h(m, c) != 0.0) l(row, vec_index(r, m)) += i_unit * h(m, c);
      }
    }
  }

  // Jump operators |to><from| with rate k(from -> to).
  for (int from = 1; from <= kNumLevels; ++from) {
    for (int to = 1; to <= kNumLevels; ++to) {
      const double k = model.rates(from, to);
      if (k == 0.0) continue;
      const int i = from - 1;
      const int j = to - 1;
      l(vec_index(j, j), vec_index(i, i)) += k;
      for (int r = 0; r < kNumLevels; ++r) {
        for (int c = 0; c < kNumLevels; ++c) {
          const double weight = (r == i ? 0.5 : 0.0) + (c == i ? 0.5 : 0.0);
          if (weight != 0.0) l(vec_index(r, c), vec_index(r, c)) -= k * weight;
        }
      }
    }
  }
  return l;
}

Matrix7cd apply_liouvillian(const Eigen::MatrixXcd& liouvillian, const Matrix7cd& rho) {
  return unvectorize(liouvillian * vectorize(rho));
}

// ---------------------------------------------------------------------------
// Measurement operator

MeasurementOperator build_measurement_operator(const NvSevenLevelModel& model) {
  model.validate();
  MeasurementOperator m;
  for (int n = 4; n <= 6; ++n) {
    const double total = model.rates.total_out(n);
    if (!(total > 0.0))
      throw Error(ErrorCode::ZeroDecayRate,
                  "excited level " + std::to_string(n) + " has no outgoing rate");
    // Spin-conserving radiative rate to the matching ground level, scaled by
    // (1 + 2 eps) for the two spin non-conserving radiative channels.
    const double radiative = model.rates(n, n - 3) * (1.0 + 2.0 * model.epsilon);
    m.diagonal(n - 1) = model.k_detector * radiative / total;
  }
  return m;
}

double photon_rate(const MeasurementOperator& m, const DensityMatrix& rho) {
  return (m.diagonal.array() * rho.populations().array()).sum();
}

// ---------------------------------------------------------------------------
// Time evolution

std::vector<TrajectoryPoint> evolve(const NvSevenLevelModel& model, const DensityMatrix& rho0,
                                    double t_final, double dt, const IntegratorOptions& opts) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  if (!(t_final >= dt)) throw Error(ErrorCode::InvalidArgument, "t_final must be >= dt");

  const Eigen::MatrixXcd l = build_liouvillian(model);

  // Dormand-Prince 5(4) tableau.
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                   a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                   b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2, (void)c3, (void)c4, (void)c5;

  const std::size_t n_out = static_cast<std::size_t>(std::floor(t_final / dt + 1e-9));
  std::vector<TrajectoryPoint> out;
  out.reserve(n_out + 1);
  out.push_back({0.0, rho0});

  Eigen::VectorXcd y = vectorize(rho0.matrix());
  Eigen::VectorXcd k1 = l * y, k2, k3, k4, k5, k6, k7, y_new, err;

  const double l_norm = l.cwiseAbs().rowwise().sum().maxCoeff();
  double h = l_norm > 0.0 ? std::min(dt, 1.0 / l_norm) : dt;
  const double h_min = 1e-14 * std::max(1.0, t_final);
  double t = 0.0;

  for (std::size_t n = 1; n <= n_out; ++n) {
    const double t_target = static_cast<double>(n) * dt;
    while (t < t_target - 1e-15 * t_target) {
      const bool clipped = t + h > t_target;
      const double step = clipped ? t_target - t : h;

      k2 = l * (y + step * (a21 * k1));
      k3 = l * (y + step * (a31 * k1 + a32 * k2));
      k4 = l * (y + step * (a41 * k1 + a42 * k2 + a43 * k3));
      k5 = l * (y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      k6 = l * (y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      y_new = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      k7 = l * y_new;
      err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      double err_norm = 0.0;
      for (int i = 0; i < kLiouvilleDim; ++i) {
        const double scale =
            opts.atol + opts.rtol * std::max(std::abs(y(i)), std::abs(y_new(i)));
        err_norm = std::max(err_norm, std::abs(err(i)) / scale);
      }

      if (err_norm <= 1.0 && state_within_tolerance(y_new)) {
        t = clipped ? t_target : t + step;
        // The exact flow is Hermitian; drop the anti-Hermitian rounding residue
        // that large stage coefficients can inject into slowly decaying modes.
        const Matrix7cd r = unvectorize(y_new);
        const Eigen::VectorXcd projected = vectorize(0.5 * (r + r.adjoint()));
        if ((projected - y_new).cwiseAbs().maxCoeff() > 0.0) {
          y = projected;
          k1 = l * y;
        } else {
          y.swap(y_new);
          k1 = k7;
        }
        const double grow = err_norm > 0.0 ? 0.9 * std::pow(err_norm, -0.2) : 5.0;
        if (!clipped) h = std::min(dt, step * std::clamp(grow, 0.2, 5.0));
      } else {
        const double shrink = err_norm > 1.0 ? 0.9 * std::pow(err_norm, -0.2) : 0.5;
        h = step * std::clamp(shrink, 0.1, 0.5);
        if (h < h_min)
          throw Error(ErrorCode::IntegrationUnstable,
                      "step size underflow at t = " + std::to_string(t) + " us");
      }
    }
    try {
      out.push_back({t_target, DensityMatrix(unvectorize(y))});
    } catch (const Error& e) {
      throw Error(ErrorCode::IntegrationUnstable,
                  "state left the physical set at t = " + std::to_string(t_target) +
                      " us: " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Steady state

DensityMatrix steady_state(const NvSevenLevelModel& model) {
  if (model.rates.empty())
    throw Error(ErrorCode::InvalidArgument, "steady state needs at least one dissipative rate");
  const Eigen::MatrixXcd l = build_liouvillian(model);

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(l, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double threshold = 1e-9 * std::max(1.0, sv(0));
  int null_dim = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) < threshold) ++null_dim;
  if (null_dim > 1)
    throw Error(ErrorCode::DegenerateSteadyState,
                "Liouvillian null space has dimension " + std::to_string(null_dim));

  if (null_dim == 1) {
    const Eigen::VectorXcd v = svd.matrixV().col(kLiouvilleDim - 1);
    const cd tr = vec_trace(v);
    if (std::abs(tr) > 1e-12) {
      Matrix7cd rho = unvectorize(v / tr);
      rho = 0.5 * (rho + rho.adjoint()).eval();
      try {
        return DensityMatrix(rho);
      } catch (const Error&) {
        // fall through to integration
      }
    }
  }

  // Integration fallback: relax the mixed ground state for many lifetimes.
  const double t_relax = 50.0 / model.rates.min_positive();
  const auto traj = evolve(model, DensityMatrix::mixed_ground(), t_relax, t_relax / 100.0);
  return traj.back().rho;
}

// ---------------------------------------------------------------------------
// ODMR sweep

SimulatedOdmr simulate_odmr(const NvSevenLevelModel& model, double f_start, double f_stop,
                            std::size_t n_points, OdmrObservable observable, unsigned threads) {
  if (!(f_start < f_stop)) throw Error(ErrorCode::InvalidArgument, "sweep start must be < stop");
  if (n_points < 2) throw Error(ErrorCode::InvalidArgument, "sweep needs >= 2 points");
  model.validate();
  const MeasurementOperator m = build_measurement_operator(model);
  const double step = (f_stop - f_start) / static_cast<double>(n_points - 1);

  std::vector<double> raw(n_points, 0.0);
  std::vector<std::optional<SweepFailure>> failed(n_points);

  auto compute = [&](std::size_t i) {
    NvSevenLevelModel point = model;
    point.mw_frequency = f_start + step * static_cast<double>(i);
    try {
      const DensityMatrix rho = steady_state(point);
      raw[i] = observable == OdmrObservable::PhotonRate ? photon_rate(m, rho)
                                                        : rho.population(1);
    } catch (const Error& e) {
      failed[i] = SweepFailure{point.mw_frequency, e.code(), e.what()};
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_points));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n_points; ++i) compute(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n_points; i = next++) compute(i);
      });
    }
  }

  SimulatedOdmr result;
  std::vector<double> freqs;
  std::vector<double> values;
  double peak = 0.0;
  for (std::size_t i = 0; i < n_points; ++i)
    if (!failed[i]) peak = std::max(peak, raw[i]);
  for (std::size_t i = 0; i < n_points; ++i) {
    if (failed[i]) {
      result.failures.push_back(*failed[i]);
      continue;
    }
    freqs.push_back(f_start + step * static_cast<double>(i));
    values.push_back(peak > 0.0 ? raw[i] / peak : raw[i]);
    result.raw.push_back(raw[i]);
  }
  result.spectrum = OdmrSpectrum(std::move(freqs), std::move(values),
                                 AcquisitionMeta{"simulated", {}});
  return result;
}

}  // namespace nvsense
