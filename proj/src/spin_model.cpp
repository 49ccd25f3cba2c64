#include "nvsense/spin_model.hpp"

#include <cmath>
#include <complex>

#include "nvsense/error.hpp"

namespace nvsense {

using cd = std::complex<double>;

void SpinModel::validate() const {
  if (!(d_zfs > 0.0) || !std::isfinite(d_zfs))
    throw Error(ErrorCode::InvalidArgument, "zero-field splitting must be positive");
  if (!(e_strain >= 0.0) || !std::isfinite(e_strain))
    throw Error(ErrorCode::InvalidArgument, "strain parameter must be non-negative");
  if (!(gamma_e > 0.0) || !std::isfinite(gamma_e))
    throw Error(ErrorCode::InvalidArgument, "gyromagnetic ratio must be positive");
  if (!b_field.allFinite())
    throw Error(ErrorCode::InvalidArgument, "magnetic field components must be finite");
}

namespace spin1 {

Eigen::Matrix3cd sx() {
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
  m(0, 1) = m(1, 0) = m(1, 2) = m(2, 1) = s;
  return m;
}

Eigen::Matrix3cd sy() {
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
  m(0, 1) = cd(0.0, -s);
  m(1, 0) = cd(0.0, s);
  m(1, 2) = cd(0.0, -s);
  m(2, 1) = cd(0.0, s);
  return m;
}

Eigen::Matrix3cd sz() {
  Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
  m(0, 0) = 1.0;
  m(2, 2) = -1.0;
  return m;
}

}  // namespace spin1

Eigen::Matrix3cd build_hamiltonian(const SpinModel& model) {
  model.validate();
  const Eigen::Matrix3cd sx = spin1::sx();
  const Eigen::Matrix3cd sy = spin1::sy();
  const Eigen::Matrix3cd sz = spin1::sz();
  const Eigen::Vector3d& b = model.b_field;

  Eigen::Matrix3cd h = model.d_zfs * sz * sz;
  h += model.gamma_e * (b.x() * sx + b.y() * sy + b.z() * sz);
  h += model.e_strain * (sx * sx - sy * sy);
  // Products of the spin matrices leave rounding noise on entries that are
  // exactly zero or exactly conjugate; restore exact Hermiticity.
  const Eigen::Matrix3cd herm = 0.5 * (h + h.adjoint());
  return herm;
}

ResonancePair resonance_frequencies(const SpinModel& model) {
  const Eigen::Matrix3cd h = build_hamiltonian(model);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> solver(h);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorCode::EigenFailure, "spin Hamiltonian diagonalization did not converge");

  const Eigen::Vector3d& values = solver.eigenvalues();
  const Eigen::Matrix3cd& vectors = solver.eigenvectors();

  // Eigenvalues come back ascending, so the first maximal overlap wins ties.
  int zero_like = 0;
  double best_overlap = -1.0;
  for (int k = 0; k < 3; ++k) {
    const double overlap = std::norm(vectors(1, k));
    if (overlap > best_overlap + 1e-12) {
      best_overlap = overlap;
      zero_like = k;
    }
  }

  double nu[2];
  int n = 0;
  for (int k = 0; k < 3; ++k) {
    if (k != zero_like) nu[n++] = values(k) - values(zero_like);
  }
  return ResonancePair{std::min(nu[0], nu[1]), std::max(nu[0], nu[1])};
}

ResonancePair axial_resonances(double d_zfs, double e_strain, double gamma_e, double b_z) {
  const double zeeman = gamma_e * b_z;
  const double half_split = std::sqrt(e_strain * e_strain + zeeman * zeeman);
  return ResonancePair{d_zfs - half_split, d_zfs + half_split};
}

double d_from_resonances(const ResonancePair& pair) {
  return 0.5 * (pair.nu_plus + pair.nu_minus);
}

}  // namespace nvsense
