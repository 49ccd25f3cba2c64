#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvsense/error.hpp"
#include "nvsense/spectrum.hpp"

namespace nvsense {

// Level numbering used throughout (1-based, as in the rate table):
//   1, 2, 3: ground triplet m_s = 0, +1, -1
//   4, 5, 6: excited triplet m_s = 0, +1, -1
//   7:       singlet
inline constexpr int kNumLevels = 7;
inline constexpr int kLiouvilleDim = kNumLevels * kNumLevels;

using Matrix7cd = Eigen::Matrix<std::complex<double>, kNumLevels, kNumLevels>;
using Vector7d = Eigen::Matrix<double, kNumLevels, 1>;

/// Incoherent transition rates k(i -> j) in MHz (= 1/us).
class RateTable {
 public:
  double operator()(int from, int to) const { return k_[idx(from)][idx(to)]; }
  void set(int from, int to, double rate);

  // Sum of all rates leaving `level`.
  double total_out(int level) const;
  // Smallest strictly positive rate, or 0 when the table is empty.
  double min_positive() const;
  bool empty() const { return min_positive() == 0.0; }

  // Optical pumping, spontaneous emission and intersystem crossing rates of
  // the seven-level NV model, plus the spin non-conserving optical channels
  // k24 = k34 = eps k14, k15 = k16 = eps k36 and their emission partners
  // k42 = k43 = eps k41, k51 = k61 = eps k63.
  static RateTable nv_defaults(double epsilon = 0.01);

 private:
  static std::size_t idx(int level);
  std::array<std::array<double, kNumLevels>, kNumLevels> k_{};
};

struct NvSevenLevelModel {
  RateTable rates = RateTable::nv_defaults();
  double ground_zfs = 2871.5;     // MHz
  double excited_zfs = 1430.0;    // MHz, reported only; excited levels are not driven
  double ground_strain = 0.0;     // MHz, couples ground m_s = +1 and -1
  double ground_zeeman = 0.0;     // MHz, gamma_e * B_z shift of ground m_s = +-1
  double mw_frequency = 2871.5;   // MHz
  double rabi_frequency = 1.0;    // MHz
  double epsilon = 0.01;
  double k_detector = 1.0;

  static NvSevenLevelModel with_epsilon(double epsilon);
  void validate() const;
};

/// 7x7 Hermitian, unit-trace, positive semidefinite state.
class DensityMatrix {
 public:
  static constexpr double kHermitianTol = 1e-10;
  static constexpr double kTraceTol = 1e-9;
  static constexpr double kPositivityTol = 1e-9;

  DensityMatrix();  // |1><1|
  // Throws InvalidArgument unless the invariants hold.
  explicit DensityMatrix(const Matrix7cd& rho);

  static DensityMatrix pure(int level);
  static DensityMatrix mixed_ground();

  const Matrix7cd& matrix() const { return rho_; }
  double population(int level) const { return rho_(level - 1, level - 1).real(); }
  Vector7d populations() const;

  double trace_error() const;
  double hermiticity_error() const;
  double min_eigenvalue() const;

 private:
  Matrix7cd rho_;
};

struct MeasurementOperator {
  Vector7d diagonal = Vector7d::Zero();
  Eigen::Matrix<double, kNumLevels, kNumLevels> matrix() const { return diagonal.asDiagonal(); }
  double entry(int level) const { return diagonal(level - 1); }
};

struct TrajectoryPoint {
  double t = 0.0;  // us
  DensityMatrix rho;
};

struct IntegratorOptions {
  double rtol = 1e-8;
  double atol = 1e-12;
};

// Rotating-frame Hamiltonian in angular units (rad/us).
Matrix7cd rotating_frame_hamiltonian(const NvSevenLevelModel& model);

// 49x49 superoperator acting on column-major vec(rho).
Eigen::MatrixXcd build_liouvillian(const NvSevenLevelModel& model);

Matrix7cd apply_liouvillian(const Eigen::MatrixXcd& liouvillian, const Matrix7cd& rho);

MeasurementOperator build_measurement_operator(const NvSevenLevelModel& model);

// Adaptive Dormand-Prince integration. Returns rho0 followed by states at
// dt, 2 dt, ... up to t_final (dt is also the largest internal step).
std::vector<TrajectoryPoint> evolve(const NvSevenLevelModel& model, const DensityMatrix& rho0,
                                    double t_final, double dt, const IntegratorOptions& opts = {});

DensityMatrix steady_state(const NvSevenLevelModel& model);

double photon_rate(const MeasurementOperator& m, const DensityMatrix& rho);

enum class OdmrObservable { PhotonRate, GroundPopulation };

struct SweepFailure {
  double frequency = 0.0;
  ErrorCode code = ErrorCode::InvalidArgument;
  std::string message;
};

struct SimulatedOdmr {
  // Successful points, each normalized by the largest raw value of the sweep.
  OdmrSpectrum spectrum;
  std::vector<double> raw;
  std::vector<SweepFailure> failures;
};

SimulatedOdmr simulate_odmr(const NvSevenLevelModel& model, double f_start, double f_stop,
                            std::size_t n_points,
                            OdmrObservable observable = OdmrObservable::PhotonRate,
                            unsigned threads = 0);

}  // namespace nvsense
