#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "nvsense/error.hpp"
#include "nvsense/lindblad.hpp"
#include "oracles.hpp"

using namespace nvsense;

namespace {

using cd = std::complex<double>;

NvSevenLevelModel bare_model() {
  NvSevenLevelModel m;
  m.rates = RateTable{};
  m.rabi_frequency = 0.0;
  m.epsilon = 0.0;
  return m;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;  // sentinel: nothing thrown
}

Matrix7cd random_hermitian(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix7cd a;
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 7; ++c) a(r, c) = cd(nd(rng), nd(rng));
  return 0.5 * (a + a.adjoint());
}

Matrix7cd random_density(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix7cd a;
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 7; ++c) a(r, c) = cd(nd(rng), nd(rng));
  Matrix7cd rho = a * a.adjoint();
  rho /= rho.trace();
  return 0.5 * (rho + rho.adjoint());
}

// Rotating-frame Hamiltonian written down independently (rad/us).
oracle::Mat7 oracle_hamiltonian(const NvSevenLevelModel& m) {
  const double w = 2.0 * std::numbers::pi;
  oracle::Mat7 h{};
  h[1][1] = w * (m.ground_zfs + m.ground_zeeman - m.mw_frequency);
  h[2][2] = w * (m.ground_zfs - m.ground_zeeman - m.mw_frequency);
  h[1][2] = h[2][1] = w * m.ground_strain;
  h[0][1] = h[1][0] = h[0][2] = h[2][0] = w * 0.5 * m.rabi_frequency;
  return h;
}

std::array<std::array<double, 7>, 7> rate_array(const RateTable& t) {
  std::array<std::array<double, 7>, 7> k{};
  for (int i = 1; i <= 7; ++i)
    for (int j = 1; j <= 7; ++j) k[i - 1][j - 1] = t(i, j);
  return k;
}

double max_abs_diff(const Matrix7cd& a, const Matrix7cd& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("default rate table") {
  const RateTable t = RateTable::nv_defaults(0.01);
  CHECK(t(1, 4) == 64.0);
  CHECK(t(2, 5) == 64.0);
  CHECK(t(3, 6) == 64.0);
  CHECK(t(4, 1) == 64.0);
  CHECK(t(5, 2) == 64.0);
  CHECK(t(6, 3) == 64.0);
  CHECK(t(5, 7) == 79.8);
  CHECK(t(6, 7) == 79.8);
  CHECK(t(4, 7) == 11.8);
  CHECK(t(7, 1) == 5.6);
  CHECK(t(7, 2) == 0.0);
  CHECK(t(7, 3) == 0.0);
  CHECK(t(2, 4) == doctest::Approx(0.64));
  CHECK(t(3, 4) == doctest::Approx(0.64));
  CHECK(t(1, 5) == doctest::Approx(0.64));
  CHECK(t(1, 6) == doctest::Approx(0.64));
  CHECK(t(4, 2) == doctest::Approx(0.64));
  CHECK(t(4, 3) == doctest::Approx(0.64));
  CHECK(t(5, 1) == doctest::Approx(0.64));
  CHECK(t(6, 1) == doctest::Approx(0.64));
  for (int i = 1; i <= 7; ++i) CHECK(t(i, i) == 0.0);
  CHECK(t.total_out(4) == doctest::Approx(64.0 + 11.8 + 2 * 0.64));
  CHECK(t.min_positive() == doctest::Approx(0.64));

  RateTable bad;
  CHECK(code_of([&] { bad.set(1, 2, -1.0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { bad.set(3, 3, 1.0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { bad.set(0, 3, 1.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("no rates and no drive give the zero superoperator") {
  const Eigen::MatrixXcd l = build_liouvillian(bare_model());
  CHECK(l.rows() == kLiouvilleDim);
  CHECK(l.cols() == kLiouvilleDim);
  CHECK(l.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("superoperator matches the matrix-form master equation") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 50; ++n) {
    NvSevenLevelModel m;
    m.rates = RateTable{};
    for (int i = 1; i <= 7; ++i)
      for (int j = 1; j <= 7; ++j)
        if (i != j && u(rng) < 0.4) m.rates.set(i, j, 100.0 * u(rng));
    m.rabi_frequency = 5.0 * u(rng);
    m.mw_frequency = 2850.0 + 40.0 * u(rng);
    m.ground_strain = 10.0 * u(rng);
    m.ground_zeeman = 20.0 * u(rng) - 10.0;
    const Eigen::MatrixXcd l = build_liouvillian(m);
    const oracle::Mat7 h = oracle_hamiltonian(m);
    const auto k = rate_array(m.rates);

    const Matrix7cd rho = random_hermitian(rng);
    oracle::Mat7 r{};
    for (int a = 0; a < 7; ++a)
      for (int b = 0; b < 7; ++b) r[a][b] = rho(a, b);
    const oracle::Mat7 ref = oracle::lindblad_rhs(h, k, r);
    const Matrix7cd got = apply_liouvillian(l, rho);
    double worst = 0.0, scale = 0.0;
    for (int a = 0; a < 7; ++a)
      for (int b = 0; b < 7; ++b) {
        worst = std::max(worst, std::abs(got(a, b) - ref[a][b]));
        scale = std::max(scale, std::abs(ref[a][b]));
      }
    CHECK(worst <= 1e-12 * std::max(1.0, scale));
  }
}

TEST_CASE("Liouvillian preserves trace and Hermiticity on random Hermitian inputs") {
  const Eigen::MatrixXcd l = build_liouvillian(NvSevenLevelModel{});
  std::mt19937_64 rng(100);
  for (int n = 0; n < 100; ++n) {
    const Matrix7cd rho = random_hermitian(rng);
    const Matrix7cd d = apply_liouvillian(l, rho);
    CHECK(std::abs(d.trace()) < 1e-10);
    CHECK((d - d.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("measurement operator") {
  SUBCASE("defaults: branching ratio of the spin-conserving emission") {
    const MeasurementOperator m = build_measurement_operator(NvSevenLevelModel{});
    // Level 4 leaves by k41 = 64, k47 = 11.8 and k42 = k43 = 0.01 * 64.
    const double entry4 = 64.0 * (1.0 + 2.0 * 0.01) / (64.0 + 11.8 + 0.64 + 0.64);
    // Levels 5 and 6 leave by 64, 79.8 and one 0.64 channel to level 1.
    const double entry5 = 64.0 * (1.0 + 2.0 * 0.01) / (64.0 + 79.8 + 0.64);
    CHECK(m.entry(4) == doctest::Approx(entry4).epsilon(1e-14));
    CHECK(m.entry(4) == doctest::Approx(0.846912).epsilon(1e-6));
    CHECK(m.entry(5) == doctest::Approx(entry5).epsilon(1e-14));
    CHECK(m.entry(6) == doctest::Approx(entry5).epsilon(1e-14));
    for (int n : {1, 2, 3, 7}) CHECK(m.entry(n) == 0.0);
  }
  SUBCASE("sole decay channel gives unit weight") {
    NvSevenLevelModel m = bare_model();
    m.rates.set(4, 1, 64.0);
    m.rates.set(5, 2, 64.0);
    m.rates.set(6, 3, 64.0);
    const MeasurementOperator op = build_measurement_operator(m);
    CHECK(op.entry(4) == 1.0);
    CHECK(op.entry(5) == 1.0);
    CHECK(op.entry(6) == 1.0);
  }
  SUBCASE("k41 alone leaves levels 5 and 6 without an exit") {
    NvSevenLevelModel m = bare_model();
    m.rates.set(4, 1, 64.0);
    CHECK(code_of([&] { build_measurement_operator(m); }) == ErrorCode::ZeroDecayRate);
  }
  SUBCASE("linear in the detector constant") {
    NvSevenLevelModel m;
    const MeasurementOperator one = build_measurement_operator(m);
    m.k_detector = 2.0;
    const MeasurementOperator two = build_measurement_operator(m);
    for (int n = 1; n <= 7; ++n) CHECK(two.entry(n) == doctest::Approx(2.0 * one.entry(n)));
  }
}

TEST_CASE("photon rate") {
  const MeasurementOperator m = build_measurement_operator(NvSevenLevelModel{});
  CHECK(photon_rate(m, DensityMatrix::pure(1)) == 0.0);
  CHECK(photon_rate(m, DensityMatrix::pure(4)) == m.entry(4));
  CHECK(photon_rate(m, DensityMatrix::pure(5)) == m.entry(5));
}

TEST_CASE("density matrix validation") {
  Matrix7cd rho = Matrix7cd::Zero();
  rho(0, 0) = 0.5;
  CHECK(code_of([&] { DensityMatrix d(rho); }) == ErrorCode::InvalidArgument);
  rho(1, 1) = 0.5;
  rho(0, 1) = cd(0.0, 0.1);  // not Hermitian
  CHECK(code_of([&] { DensityMatrix d(rho); }) == ErrorCode::InvalidArgument);
  rho(1, 0) = cd(0.0, -0.1);
  CHECK(code_of([&] { DensityMatrix d(rho); }) == ErrorCode::IoError);
  rho(0, 1) = 0.8;  // eigenvalues 1.3 and -0.3
  rho(1, 0) = 0.8;
  CHECK(code_of([&] { DensityMatrix d(rho); }) == ErrorCode::InvalidArgument);
  const DensityMatrix g = DensityMatrix::mixed_ground();
  CHECK(g.population(1) == doctest::Approx(1.0 / 3.0));
  CHECK(g.trace_error() < 1e-15);
}

TEST_CASE("undriven closed system is constant") {
  std::mt19937_64 rng(8);
  const DensityMatrix rho0(random_density(rng));
  const auto traj = evolve(bare_model(), rho0, 1.0, 0.1);
  CHECK(traj.size() == 11);
  for (const auto& p : traj) CHECK(max_abs_diff(p.rho.matrix(), rho0.matrix()) == 0.0);
}

TEST_CASE("two-level decay follows exp(-64 t)") {
  NvSevenLevelModel m = bare_model();
  m.rates.set(4, 1, 64.0);
  const auto traj = evolve(m, DensityMatrix::pure(4), 0.2, 0.005);
  for (const auto& p : traj) {
    CHECK(std::abs(p.rho.population(4) - std::exp(-64.0 * p.t)) < 1e-6);
    CHECK(std::abs(p.rho.population(1) - (1.0 - std::exp(-64.0 * p.t))) < 1e-6);
  }
}

TEST_CASE("steady state") {
  SUBCASE("k41 alone has a disconnected level structure") {
    NvSevenLevelModel m = bare_model();
    m.rates.set(4, 1, 64.0);
    CHECK(code_of([&] { steady_state(m); }) == ErrorCode::DegenerateSteadyState);
  }
  SUBCASE("every level draining into level 1 settles in |1><1|") {
    NvSevenLevelModel m = bare_model();
    for (int n = 2; n <= 7; ++n) m.rates.set(n, 1, 10.0 * n);
    const DensityMatrix ss = steady_state(m);
    CHECK(max_abs_diff(ss.matrix(), DensityMatrix::pure(1).matrix()) < 1e-10);
  }
  SUBCASE("no rates at all") {
    CHECK(code_of([&] { steady_state(bare_model()); }) == ErrorCode::InvalidArgument);
  }
  SUBCASE("annihilated by the Liouvillian") {
    const NvSevenLevelModel m;
    const DensityMatrix ss = steady_state(m);
    CHECK(apply_liouvillian(build_liouvillian(m), ss.matrix()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(ss.trace_error() < 1e-12);
  }
}

TEST_CASE("optical pumping polarizes the ground triplet into m_s = 0") {
  NvSevenLevelModel off;
  off.rabi_frequency = 0.0;
  const DensityMatrix ss = steady_state(off);
  CHECK(ss.population(1) > ss.population(2));
  CHECK(ss.population(1) > ss.population(3));

  // Long-time integration oracle for the same state.
  const double t = 50.0 / off.rates.min_positive();
  const DensityMatrix relaxed = evolve(off, DensityMatrix::mixed_ground(), t, t / 50.0).back().rho;
  CHECK(max_abs_diff(relaxed.matrix(), ss.matrix()) < 1e-6);

  // Fraction of the ground triplet sitting in m_s = 0.
  const double ground = ss.population(1) + ss.population(2) + ss.population(3);
  CHECK(ss.population(1) / ground > 0.9);

  NvSevenLevelModel far = off;
  far.rabi_frequency = 1.0;
  far.mw_frequency = 3500.0;
  const DensityMatrix ss_far = steady_state(far);
  CHECK(std::abs(ss_far.population(1) - ss.population(1)) < 1e-5);
}

TEST_CASE("resonant drive depopulates ground m_s = 0") {
  NvSevenLevelModel on;
  on.rabi_frequency = 5.0;
  NvSevenLevelModel off = on;
  off.mw_frequency = on.ground_zfs + 500.0;
  const DensityMatrix ss_on = steady_state(on);
  const DensityMatrix ss_off = steady_state(off);
  CHECK(ss_on.population(1) < ss_off.population(1));
  const MeasurementOperator m = build_measurement_operator(on);
  CHECK(photon_rate(m, ss_on) < photon_rate(m, ss_off));
}

TEST_CASE("steady state agrees with long evolution from both canonical starts") {
  const NvSevenLevelModel m;
  const DensityMatrix ss = steady_state(m);
  const double t = 50.0 / m.rates.min_positive();
  for (const DensityMatrix& start : {DensityMatrix::mixed_ground(), DensityMatrix::pure(1)}) {
    const auto traj = evolve(m, start, t, t / 100.0);
    CHECK(max_abs_diff(traj.back().rho.matrix(), ss.matrix()) < 1e-6);
  }
}

TEST_CASE("driven trajectories keep the density matrix physical and populations capped") {
  const NvSevenLevelModel m;
  for (const DensityMatrix& start : {DensityMatrix::mixed_ground(), DensityMatrix::pure(1)}) {
    const auto traj = evolve(m, start, 20.0, 0.01);
    double max_p1 = 0.0, max_other = 0.0;
    for (const auto& p : traj) {
      CHECK(p.rho.trace_error() < 1e-9);
      CHECK(p.rho.hermiticity_error() < 1e-10);
      CHECK(p.rho.min_eigenvalue() >= -1e-9);
      max_p1 = std::max(max_p1, p.rho.population(1));
      max_other = std::max({max_other, p.rho.population(2), p.rho.population(3)});
    }
    CHECK(max_p1 <= 1.0);
    CHECK(max_other <= 0.5 + 1e-3);
  }
}

TEST_CASE("random models: trajectories stay physical and relax to the null-space state") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 10; ++n) {
    NvSevenLevelModel m = NvSevenLevelModel::with_epsilon(0.005 + 0.025 * u(rng));
    m.rabi_frequency = 0.1 + 4.9 * u(rng);
    m.mw_frequency = m.ground_zfs - 20.0 + 40.0 * u(rng);
    m.ground_strain = 8.0 * u(rng);
    m.ground_zeeman = 10.0 * u(rng);
    const double t = 50.0 / m.rates.min_positive();
    const auto traj = evolve(m, DensityMatrix(random_density(rng)), t, t / 50.0);
    for (const auto& p : traj) {
      CHECK(p.rho.trace_error() < 1e-9);
      CHECK(p.rho.hermiticity_error() < 1e-10);
      CHECK(p.rho.min_eigenvalue() >= -1e-9);
    }
    CHECK(max_abs_diff(traj.back().rho.matrix(), steady_state(m).matrix()) < 1e-6);
  }
}

TEST_CASE("evolve argument checks") {
  const NvSevenLevelModel m;
  CHECK(code_of([&] { evolve(m, DensityMatrix{}, 1.0, 0.0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { evolve(m, DensityMatrix{}, 0.5, 1.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("simulated ODMR") {
  SUBCASE("dip at the ground zero-field splitting") {
    const SimulatedOdmr r = simulate_odmr(NvSevenLevelModel{}, 2771.5, 2971.5, 201);
    CHECK(r.failures.empty());
    REQUIRE(r.spectrum.size() == 201);
    const auto& s = r.spectrum.signal();
    const auto it = std::min_element(s.begin(), s.end());
    const double f_min = r.spectrum.frequencies()[static_cast<std::size_t>(it - s.begin())];
    CHECK(std::abs(f_min - 2871.5) <= 1.0);
    CHECK(*std::max_element(s.begin(), s.end()) == 1.0);
    CHECK(*it < 1.0);
  }
  SUBCASE("no drive, no dip") {
    NvSevenLevelModel m;
    m.rabi_frequency = 0.0;
    const SimulatedOdmr r = simulate_odmr(m, 2851.5, 2891.5, 41);
    for (double v : r.spectrum.signal()) CHECK(std::abs(v - 1.0) < 1e-9);
  }
  SUBCASE("dip deepens with Rabi frequency at weak drive") {
    double previous = 0.0;
    for (double rabi : {0.1, 0.5, 1.0}) {
      NvSevenLevelModel m;
      m.rabi_frequency = rabi;
      const SimulatedOdmr r = simulate_odmr(m, 2821.5, 2921.5, 101);
      const auto& s = r.spectrum.signal();
      const double depth = 1.0 - *std::min_element(s.begin(), s.end());
      CHECK(depth > previous);
      previous = depth;
    }
  }
  SUBCASE("thread count does not change the result") {
    const NvSevenLevelModel m;
    const SimulatedOdmr a = simulate_odmr(m, 2861.5, 2881.5, 21, OdmrObservable::PhotonRate, 1);
    const SimulatedOdmr b = simulate_odmr(m, 2861.5, 2881.5, 21, OdmrObservable::PhotonRate, 4);
    CHECK(a.spectrum == b.spectrum);
    CHECK(a.raw == b.raw);
  }
  SUBCASE("failures are recorded per point") {
    NvSevenLevelModel m = bare_model();
    m.rates.set(4, 1, 64.0);
    m.rates.set(5, 2, 64.0);
    m.rates.set(6, 3, 64.0);
    const SimulatedOdmr r = simulate_odmr(m, 2860.0, 2880.0, 5);
    CHECK(r.failures.size() == 5);
    CHECK(r.spectrum.empty());
    CHECK(r.failures.front().code == ErrorCode::DegenerateSteadyState);
  }
  SUBCASE("bad sweeps") {
    CHECK(code_of([] { simulate_odmr(NvSevenLevelModel{}, 2900, 2800, 11); }) ==
          ErrorCode::InvalidArgument);
    CHECK(code_of([] { simulate_odmr(NvSevenLevelModel{}, 2800, 2900, 1); }) ==
          ErrorCode::InvalidArgument);
  }
}
