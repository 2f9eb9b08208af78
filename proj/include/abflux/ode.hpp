#pragma once

// Dormand-Prince 5(4) with the 4th-order continuous extension of Hairer,
// Norsett & Wanner. Works forward or backward in time.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "abflux/error.hpp"

namespace abflux::ode {

template <std::size_t D>
using State = std::array<double, D>;

struct Tolerances {
  double rtol = 1e-10;
  double atol = 1e-10;
  double h_init = 0.0;  // 0 -> automatic
  double h_min = 1e-14;
  long max_steps = 50'000'000;
};

/// One accepted step together with its dense interpolant.
template <std::size_t D>
struct Step {
  double t0 = 0.0;
  double h = 0.0;
  double t_end = 0.0;
  State<D> y0{};
  State<D> y1{};
  std::array<State<D>, 5> cont{};

  double t1() const { return t_end; }

  State<D> at(double t) const {
    const double th = (t - t0) / h;
    const double th1 = 1.0 - th;
    State<D> y{};
    for (std::size_t i = 0; i < D; ++i) {
      y[i] = cont[0][i] +
             th * (cont[1][i] +
                   th1 * (cont[2][i] + th * (cont[3][i] + th1 * cont[4][i])));
    }
    return y;
  }
};

namespace detail {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                        a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                        a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113,
                        a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                        e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0,
                        d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0,
                        d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0,
                        d7 = 69997945.0 / 29380423.0;
}  // namespace detail

/// Integrates y' = rhs(t, y) from t0 to t_end. `on_step(const Step&)` is
/// called after every accepted step and may return false to stop early.
/// Returns the number of accepted steps.
template <std::size_t D, class Rhs, class OnStep>
long integrate(Rhs&& rhs, double t0, State<D> y0, double t_end,
               const Tolerances& tol, OnStep&& on_step) {
  using namespace detail;
  if (t_end == t0) return 0;
  const double dir = t_end > t0 ? 1.0 : -1.0;

  auto err_scale = [&](const State<D>& a, const State<D>& b, std::size_t i) {
    return tol.atol + tol.rtol * std::max(std::abs(a[i]), std::abs(b[i]));
  };

  State<D> k1 = rhs(t0, y0);
  double h = tol.h_init;
  if (h <= 0.0) {
    // Hairer's starting-step heuristic, first part only.
    double d0 = 0.0, dd = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      const double sc = tol.atol + tol.rtol * std::abs(y0[i]);
      d0 += (y0[i] / sc) * (y0[i] / sc);
      dd += (k1[i] / sc) * (k1[i] / sc);
    }
    d0 = std::sqrt(d0 / D);
    dd = std::sqrt(dd / D);
    h = (d0 < 1e-5 || dd < 1e-5) ? 1e-6 : 0.01 * d0 / dd;
    h = std::min(h, 0.1);
  }
  h = std::min(h, std::abs(t_end - t0));

  double t = t0;
  State<D> y = y0;
  Step<D> step;
  long accepted = 0;
  long attempts = 0;
  bool last = false;
  State<D> yt{}, k2{}, k3{}, k4{}, k5{}, k6{}, k7{}, y1{};
  while (true) {
    if (++attempts > tol.max_steps) throw StepFailure("ode: too many steps");
    if (std::abs(h) < tol.h_min * std::max(1.0, std::abs(t))) {
      throw StepFailure("ode: step size underflow at t = " + std::to_string(t));
    }
    if (std::abs(t + dir * h - t_end) <= 1e-12 * std::abs(h) ||
        dir * (t + dir * h - t_end) > 0.0) {
      h = std::abs(t_end - t);
      last = true;
    }
    const double hs = dir * h;
    for (std::size_t i = 0; i < D; ++i) yt[i] = y[i] + hs * a21 * k1[i];
    k2 = rhs(t + c2 * hs, yt);
    for (std::size_t i = 0; i < D; ++i)
      yt[i] = y[i] + hs * (a31 * k1[i] + a32 * k2[i]);
    k3 = rhs(t + c3 * hs, yt);
    for (std::size_t i = 0; i < D; ++i)
      yt[i] = y[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    k4 = rhs(t + c4 * hs, yt);
    for (std::size_t i = 0; i < D; ++i)
      yt[i] = y[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] +
                           a54 * k4[i]);
    k5 = rhs(t + c5 * hs, yt);
    for (std::size_t i = 0; i < D; ++i)
      yt[i] = y[i] + hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] +
                           a64 * k4[i] + a65 * k5[i]);
    k6 = rhs(t + hs, yt);
    for (std::size_t i = 0; i < D; ++i)
      y1[i] = y[i] + hs * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] +
                           a75 * k5[i] + a76 * k6[i]);
    k7 = rhs(t + hs, y1);

    double err = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      const double e = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] +
                             e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double r = e / err_scale(y, y1, i);
      err += r * r;
    }
    err = std::sqrt(err / D);
    if (!std::isfinite(err)) {
      h *= 0.25;
      last = false;
      continue;
    }

    if (err <= 1.0) {
      step.t0 = t;
      step.h = last ? (t_end - t) : hs;
      step.t_end = last ? t_end : t + hs;
      step.y0 = y;
      step.y1 = y1;
      for (std::size_t i = 0; i < D; ++i) {
        const double ydiff = y1[i] - y[i];
        const double bspl = hs * k1[i] - ydiff;
        step.cont[0][i] = y[i];
        step.cont[1][i] = ydiff;
        step.cont[2][i] = bspl;
        step.cont[3][i] = ydiff - hs * k7[i] - bspl;
        step.cont[4][i] = hs * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] +
                                d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
      }
      ++accepted;
      t = last ? t_end : t + hs;
      y = y1;
      k1 = k7;
      if (!on_step(static_cast<const Step<D>&>(step))) return accepted;
      if (last) return accepted;
      const double fac = std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h *= fac;
    } else {
      last = false;
      h *= std::max(0.9 * std::pow(err, -0.2), 0.1);
    }
  }
}

}  // namespace abflux::ode
