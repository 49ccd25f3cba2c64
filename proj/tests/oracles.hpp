// Independent reference computations for the unit and acceptance tests.
// None of these call into the library under test.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace oracle {

using cd = std::complex<double>;
using Mat3 = std::array<std::array<cd, 3>, 3>;

// Eigenvalues of a 3x3 Hermitian matrix from the trigonometric solution of
// the characteristic cubic. Ascending.
inline std::array<double, 3> hermitian3_eigenvalues(const Mat3& a) {
  const double a00 = a[0][0].real(), a11 = a[1][1].real(), a22 = a[2][2].real();
  const double p1 = std::norm(a[0][1]) + std::norm(a[0][2]) + std::norm(a[1][2]);
  const double q = (a00 + a11 + a22) / 3.0;
  if (p1 == 0.0) {
    std::array<double, 3> d{a00, a11, a22};
    std::sort(d.begin(), d.end());
    return d;
  }
  const double p2 = (a00 - q) * (a00 - q) + (a11 - q) * (a11 - q) + (a22 - q) * (a22 - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  Mat3 b = a;
  for (int i = 0; i < 3; ++i) b[i][i] -= q;
  for (auto& row : b)
    for (auto& x : row) x /= p;
  const cd det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
                 b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                 b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
  const double r = std::clamp(det.real() / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double e_hi = q + 2.0 * p * std::cos(phi);
  const double e_lo = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double e_mid = 3.0 * q - e_hi - e_lo;
  return {e_lo, e_mid, e_hi};
}

// Null vector of (a - lambda I) from the best-conditioned pair of rows.
inline std::array<cd, 3> hermitian3_eigenvector(const Mat3& a, double lambda) {
  Mat3 m = a;
  for (int i = 0; i < 3; ++i) m[i][i] -= lambda;
  auto cross = [](const std::array<cd, 3>& u, const std::array<cd, 3>& v) {
    return std::array<cd, 3>{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                             u[0] * v[1] - u[1] * v[0]};
  };
  std::array<cd, 3> best{};
  double best_norm = -1.0;
  for (auto [i, j] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 2}}) {
    const auto c = cross(m[i], m[j]);
    const double n = std::norm(c[0]) + std::norm(c[1]) + std::norm(c[2]);
    if (n > best_norm) {
      best_norm = n;
      best = c;
    }
  }
  const double n = std::sqrt(best_norm);
  for (auto& x : best) x /= n;
  return best;
}

// Spin-1 Hamiltonian written out element by element in the {+1, 0, -1} basis.
inline Mat3 nv_hamiltonian(double d, double e, double gamma, double bx, double by, double bz) {
  const double s = 1.0 / std::sqrt(2.0);
  const cd bminus(gamma * bx * s, -gamma * by * s);  // gamma (Bx - i By) / sqrt(2)
  Mat3 h{};
  h[0][0] = d + gamma * bz;
  h[2][2] = d - gamma * bz;
  h[0][1] = bminus;
  h[1][0] = std::conj(bminus);
  h[1][2] = bminus;
  h[2][1] = std::conj(bminus);
  h[0][2] = e;
  h[2][0] = e;
  return h;
}

// Brute-force resonance pair: every eigenvalue, the m_s = 0-like one chosen
// by overlap with the bare |0>.
inline std::pair<double, double> resonances(const Mat3& h) {
  const auto ev = hermitian3_eigenvalues(h);
  std::size_t zero = 0;
  double best = -1.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double overlap = std::norm(hermitian3_eigenvector(h, ev[k])[1]);
    if (overlap > best + 1e-12) {
      best = overlap;
      zero = k;
    }
  }
  std::vector<double> t;
  for (std::size_t k = 0; k < 3; ++k)
    if (k != zero) t.push_back(ev[k] - ev[zero]);
  std::sort(t.begin(), t.end());
  return {t[0], t[1]};
}

// ---------------------------------------------------------------------------
// Lindblad right-hand side in plain matrix form.

using Mat7 = std::array<std::array<cd, 7>, 7>;

inline Mat7 matmul(const Mat7& a, const Mat7& b) {
  Mat7 c{};
  for (int i = 0; i < 7; ++i)
    for (int k = 0; k < 7; ++k)
      for (int j = 0; j < 7; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// drho/dt = -i [H, rho] + sum_ij k_ij (|j><i| rho |i><j| - 1/2 {|i><i|, rho}),
// rates indexed 0-based as rates[from][to].
inline Mat7 lindblad_rhs(const Mat7& h, const std::array<std::array<double, 7>, 7>& rates,
                         const Mat7& rho) {
  const Mat7 hr = matmul(h, rho);
  const Mat7 rh = matmul(rho, h);
  Mat7 out{};
  const cd i(0.0, 1.0);
  for (int a = 0; a < 7; ++a)
    for (int b = 0; b < 7; ++b) out[a][b] = -i * (hr[a][b] - rh[a][b]);
  for (int from = 0; from < 7; ++from) {
    for (int to = 0; to < 7; ++to) {
      const double k = rates[from][to];
      if (k == 0.0) continue;
      out[to][to] += k * rho[from][from];
      for (int b = 0; b < 7; ++b) {
        out[from][b] -= 0.5 * k * rho[from][b];
        out[b][from] -= 0.5 * k * rho[b][from];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Numerics

// Central difference of f at x along coordinate j.
template <class F>
double central_difference(F&& f, std::vector<double> x, std::size_t j, double h) {
  x[j] += h;
  const double up = f(x);
  x[j] -= 2.0 * h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

// O(N^2) DFT, all N bins.
inline std::vector<cd> naive_dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<cd> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cd s = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * m) % n) /
                         static_cast<double>(n);
      s += x[m] * cd(std::cos(ang), std::sin(ang));
    }
    out[k] = s;
  }
  return out;
}

// Straight line by Cramer's rule on the raw 2x2 normal equations.
inline std::pair<double, double> normal_equation_line(std::span<const double> x,
                                                      std::span<const double> y) {
  long double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    n += 1;
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  const long double det = n * sxx - sx * sx;
  const long double intercept = (sy * sxx - sx * sxy) / det;
  const long double slope = (n * sxy - sx * sy) / det;
  return {static_cast<double>(intercept), static_cast<double>(slope)};
}

// Two-sided band for the sample standard deviation of n Gaussian draws with
// true std sigma, at +-z standard normal deviates, via the Wilson-Hilferty
// approximation to the chi-square quantiles with n - 1 degrees of freedom.
inline std::pair<double, double> sample_std_band(double sigma, std::size_t n, double z) {
  const double k = static_cast<double>(n - 1);
  auto quantile = [&](double zz) {
    const double c = 2.0 / (9.0 * k);
    return k * std::pow(1.0 - c + zz * std::sqrt(c), 3.0);
  };
  return {sigma * std::sqrt(quantile(-z) / k), sigma * std::sqrt(quantile(z) / k)};
}

// Golden-section maximum of a unimodal function on [a, b].
template <class F>
double golden_max(F&& f, double a, double b, int iterations = 200) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  for (int i = 0; i < iterations; ++i) {
    if (f(c) > f(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - g * (b - a);
    d = a + g * (b - a);
  }
  return 0.5 * (a + b);
}

}  // namespace oracle
