#pragma once

#include <Eigen/Dense>

namespace nvsense {

// Frequencies in MHz, fields in mT, gyromagnetic ratio in MHz/mT.
inline constexpr double kGammaElectron = 28.0;

/// Ground-state spin-1 Hamiltonian parameters of a single NV center.
///
/// Matrices built from this model use the basis ordering {m_s = +1, 0, -1}.
struct SpinModel {
  double d_zfs = 2870.0;
  double e_strain = 0.0;
  double gamma_e = kGammaElectron;
  Eigen::Vector3d b_field = Eigen::Vector3d::Zero();

  // Throws InvalidArgument when d_zfs <= 0, e_strain < 0, gamma_e <= 0 or
  // a field component is not finite.
  void validate() const;
};

/// Resonance frequencies of the m_s = 0 -> upper-level transitions, ascending.
struct ResonancePair {
  double nu_minus = 0.0;
  double nu_plus = 0.0;

  double splitting() const { return nu_plus - nu_minus; }
};

namespace spin1 {
// Standard spin-1 angular momentum matrices (hbar = 1) in the {+1, 0, -1} basis.
Eigen::Matrix3cd sx();
Eigen::Matrix3cd sy();
Eigen::Matrix3cd sz();
}  // namespace spin1

Eigen::Matrix3cd build_hamiltonian(const SpinModel& model);

// Diagonalizes the Hamiltonian. The m_s = 0-like eigenstate is the one with
// the largest overlap with the bare |0> (ties go to the lowest eigenvalue);
// the two transition frequencies out of it are returned sorted.
ResonancePair resonance_frequencies(const SpinModel& model);

// Closed form D +- sqrt(E^2 + (gamma_e B_z)^2), valid only for axial fields.
ResonancePair axial_resonances(double d_zfs, double e_strain, double gamma_e, double b_z);

double d_from_resonances(const ResonancePair& pair);

}  // namespace nvsense
