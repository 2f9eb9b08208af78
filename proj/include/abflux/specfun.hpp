#pragma once

// Bessel functions J0, J1, Y0, Y1 on the real half-line and generalized
// Laguerre polynomials.
//
// Regimes for the Bessel functions:
//   x <= 8       ascending power series
//   8 < x < 25   Miller backward recurrence for J_k, Neumann series for Y
//   x >= 25      Hankel asymptotic expansion summed to its smallest term
//
// The Hankel series at x = 8 bottoms out near 1e-7, so a third regime is
// needed to hold 1e-12 between the series and the asymptotic expansion.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "abflux/error.hpp"

namespace abflux::specfun {

/// Target accuracies, checked by the test-suite against extended precision.
struct Accuracy {
  double rel_tol;
};

inline constexpr Accuracy kBesselAccuracy{1e-12};
inline constexpr Accuracy kLaguerreAccuracy{1e-10};

namespace detail {

inline constexpr double kEulerGamma = 0.57721566490153286060651209;
inline constexpr double kSeriesLimit = 8.0;
inline constexpr double kAsymptoticLimit = 25.0;

inline void check_order(int order) {
  if (order != 0 && order != 1) {
    throw DomainError("bessel: order must be 0 or 1, got " +
                      std::to_string(order));
  }
}

// J0 and J1 by the ascending series.
inline void series_j(double x, double& j0, double& j1) {
  const double t = -0.25 * x * x;
  double term0 = 1.0;
  double term1 = 0.5 * x;
  j0 = term0;
  j1 = term1;
  for (int k = 1; k < 200; ++k) {
    term0 *= t / (double(k) * k);
    term1 *= t / (double(k) * (k + 1));
    j0 += term0;
    j1 += term1;
    if (std::abs(term0) < 1e-18 * std::abs(j0) + 1e-300 &&
        std::abs(term1) < 1e-18 * std::abs(j1) + 1e-300) {
      break;
    }
  }
}

// Y0 and Y1 by the ascending series (A&S 9.1.13 and 9.1.11 with n = 1).
inline void series_y(double x, double j0, double j1, double& y0, double& y1) {
  using std::numbers::pi;
  const double t = -0.25 * x * x;
  const double lg = std::log(0.5 * x) + kEulerGamma;

  // sum_{k>=1} (-1)^{k+1} H_k (x^2/4)^k / (k!)^2
  double sum0 = 0.0;
  double term = 1.0;
  double harmonic = 0.0;
  // sum_{k>=0} (psi(k+1) + psi(k+2)) (-x^2/4)^k / (k!(k+1)!)
  double sum1 = 0.0;
  double term1 = 1.0;
  for (int k = 0; k < 200; ++k) {
    if (k > 0) {
      term *= t / (double(k) * k);
      harmonic += 1.0 / k;
      sum0 -= harmonic * term;
      term1 *= t / (double(k) * (k + 1));
    }
    const double psi_sum = 2.0 * harmonic + 1.0 / (k + 1) - 2.0 * kEulerGamma;
    sum1 += psi_sum * term1;
    if (k > 4 && std::abs(term) * (harmonic + 1.0) < 1e-18 &&
        std::abs(term1) * (std::abs(psi_sum) + 1.0) < 1e-18) {
      break;
    }
  }
  y0 = (2.0 / pi) * (lg * j0 + sum0);
  y1 = -2.0 / (pi * x) + (2.0 / pi) * (lg - kEulerGamma) * j1 -
       (0.5 * x / pi) * sum1;
}

// Miller backward recurrence with the normalization J0 + 2 sum J_2k = 1;
// Y0 and Y1 then follow from the Neumann series.
inline void miller(double x, double& j0, double& j1, double& y0, double& y1) {
  using std::numbers::pi;
  int start = static_cast<int>(x + 40.0 + 8.0 * std::sqrt(x));
  start += start % 2;
  std::vector<double> j(static_cast<std::size_t>(start) + 2, 0.0);
  j[start + 1] = 0.0;
  j[start] = 1e-30;
  for (int k = start; k >= 1; --k) {
    j[k - 1] = (2.0 * k / x) * j[k] - j[k + 1];
    if (std::abs(j[k - 1]) > 1e250) {
      for (int m = k - 1; m <= start; ++m) j[m] *= 1e-250;
    }
  }
  double norm = j[0];
  for (int k = 2; k <= start; k += 2) norm += 2.0 * j[k];
  for (auto& v : j) v /= norm;

  double even_sum = 0.0;  // sum (-1)^k J_2k / k
  double odd_sum = 0.0;   // sum (-1)^k (J_{2k-1} - J_{2k+1}) / k
  for (int k = 1; 2 * k + 1 <= start + 1; ++k) {
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    even_sum += sign * j[2 * k] / k;
    odd_sum += sign * (j[2 * k - 1] - j[2 * k + 1]) / k;
  }
  const double lg = std::log(0.5 * x) + kEulerGamma;
  j0 = j[0];
  j1 = j[1];
  y0 = (2.0 / pi) * lg * j0 - (4.0 / pi) * even_sum;
  y1 = (2.0 / pi) * (lg * j1 - j0 / x) + (2.0 / pi) * odd_sum;
}

// Hankel expansion: J = sqrt(2/(pi x)) (P cos chi - Q sin chi),
//                   Y = sqrt(2/(pi x)) (P sin chi + Q cos chi).
inline void hankel(int order, double x, double& j, double& y) {
  using std::numbers::pi;
  const double mu = 4.0 * order * order;
  double p = 1.0;
  double q = 0.0;
  double term = 1.0;
  double last = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = term * (mu - odd * odd) / (k * 8.0 * x);
    if (std::abs(next) > last) break;  // asymptotic series turned
    term = next;
    last = std::abs(term);
    // k odd -> Q, k even -> P, alternating signs in each
    switch (k % 4) {
      case 1: q += term; break;
      case 2: p -= term; break;
      case 3: q -= term; break;
      case 0: p += term; break;
    }
    if (last < 1e-17) break;
  }
  // chi = x - (order/2 + 1/4) pi, expanded so that x keeps full precision.
  const double c = std::cos(x);
  const double s = std::sin(x);
  const double r = std::numbers::sqrt2 / 2.0;
  double cos_chi = 0.0;
  double sin_chi = 0.0;
  if (order == 0) {
    cos_chi = r * (c + s);
    sin_chi = r * (s - c);
  } else {
    cos_chi = r * (s - c);
    sin_chi = -r * (c + s);
  }
  const double amp = std::sqrt(2.0 / (pi * x));
  j = amp * (p * cos_chi - q * sin_chi);
  y = amp * (p * sin_chi + q * cos_chi);
}

}  // namespace detail

/// Bessel function of the first kind J_order(x), order in {0, 1}, x >= 0.
inline double bessel_j(int order, double x) {
  detail::check_order(order);
  if (!std::isfinite(x) || x < 0.0) {
    throw DomainError("bessel_j: x must be finite and >= 0");
  }
  if (x <= detail::kSeriesLimit) {
    double j0 = 0.0, j1 = 0.0;
    detail::series_j(x, j0, j1);
    return order == 0 ? j0 : j1;
  }
  if (x < detail::kAsymptoticLimit) {
    double j0 = 0.0, j1 = 0.0, y0 = 0.0, y1 = 0.0;
    detail::miller(x, j0, j1, y0, y1);
    return order == 0 ? j0 : j1;
  }
  double j = 0.0, y = 0.0;
  detail::hankel(order, x, j, y);
  return j;
}

/// Bessel function of the second kind Y_order(x), order in {0, 1}, x > 0.
inline double bessel_y(int order, double x) {
  detail::check_order(order);
  if (!std::isfinite(x) || x <= 0.0) {
    throw DomainError("bessel_y: x must be finite and > 0");
  }
  if (x <= detail::kSeriesLimit) {
    double j0 = 0.0, j1 = 0.0, y0 = 0.0, y1 = 0.0;
    detail::series_j(x, j0, j1);
    detail::series_y(x, j0, j1, y0, y1);
    return order == 0 ? y0 : y1;
  }
  if (x < detail::kAsymptoticLimit) {
    double j0 = 0.0, j1 = 0.0, y0 = 0.0, y1 = 0.0;
    detail::miller(x, j0, j1, y0, y1);
    return order == 0 ? y0 : y1;
  }
  double j = 0.0, y = 0.0;
  detail::hankel(order, x, j, y);
  return y;
}

/// All four of J0, J1, Y0, Y1 at once; shares the work of each regime.
struct BesselSet {
  double j0, j1, y0, y1;
};

inline BesselSet bessel_all(double x) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw DomainError("bessel_all: x must be finite and > 0");
  }
  BesselSet b{};
  if (x <= detail::kSeriesLimit) {
    detail::series_j(x, b.j0, b.j1);
    detail::series_y(x, b.j0, b.j1, b.y0, b.y1);
  } else if (x < detail::kAsymptoticLimit) {
    detail::miller(x, b.j0, b.j1, b.y0, b.y1);
  } else {
    detail::hankel(0, x, b.j0, b.y0);
    detail::hankel(1, x, b.j1, b.y1);
  }
  return b;
}

/// Generalized Laguerre polynomial L_n^(alpha)(x) by the ascending
/// three-term recurrence
///   (k+1) L_{k+1} = (2k+1+alpha-x) L_k - (k+alpha) L_{k-1}.
inline double laguerre(int n, double alpha, double x) {
  if (n < 0 || n > 500) throw DomainError("laguerre: need 0 <= n <= 500");
  if (!(alpha > -1.0) || !std::isfinite(alpha)) {
    throw DomainError("laguerre: need alpha > -1");
  }
  if (!std::isfinite(x) || x < 0.0) throw DomainError("laguerre: need x >= 0");
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = 1.0 + alpha - x;
  for (int k = 1; k < n; ++k) {
    const double next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) /
                        (k + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

}  // namespace abflux::specfun
