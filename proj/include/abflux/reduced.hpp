#pragma once

// Reduced two-dimensional dynamics behind the classical asymptotics and the
// Bessel-kernel integral equations that encode it.
//
// Change of variables (derived here, verified by crosscheck_ode):
// with s0 the per-trajectory constant of |c|^2/2 - H = phi (s - s0), put
//
//   sigma = s - s0 = (I1 - I2) / phi,
//   x1 + i (x2 - phi) = -i c conj(v) = 2 sqrt(I1 I2) exp(i (phi1 + phi2)),
//
// i.e. x1 = -(c x v), x2 = phi - c.v. The action-angle flow generated by
// K = I2 - phi arg(q) then becomes
//
//   x1' = x1/sigma - x2 + F(sigma, x1, x2),   x2' = x1,
//   F = phi - x1/sigma - phi^2 sigma / (sqrt(x1^2 + (x2-phi)^2 + phi^2 sigma^2) + x1),
//
// where sqrt(...) = I1 + I2 = J and sqrt(...) + x1 = |q|^2/2. Variation of
// constants on the homogeneous solutions sigma (J0, J1) and sigma (Y0, Y1)
// gives, for j = 1, 2,
//
//   x_j(s) = c1 s J_{j-1}(s) + c2 s Y_{j-1}(s)
//            - (pi s/2) int_s^inf (Y_{j-1}(s) J1(t) - J_{j-1}(s) Y1(t)) F dt.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "abflux/classical.hpp"
#include "abflux/error.hpp"
#include "abflux/quadrature.hpp"
#include "abflux/specfun.hpp"

namespace abflux::reduced {

struct ReducedState {
  double s = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
};

struct IntegralEqConfig {
  double s_max = 1000.0;
  int quad_nodes = 16;       // Gauss-Legendre nodes per panel
  double panel_width = 1.0;  // composite panel length in s
  double picard_tol = 1e-10;
  int max_iters = 200;
  double c1 = 1.0;
  double c2 = 0.0;
  bool zero_forcing = false;  // test hook: F == 0

  void validate(double s_start) const {
    if (!(s_start > 0.0)) throw DomainError("IntegralEqConfig: s_start must be > 0");
    if (!(s_max >= 10.0 * s_start)) {
      throw DomainError("IntegralEqConfig: s_max must be >= 10 s_start");
    }
    if (!(picard_tol >= 1e-12 && picard_tol <= 1e-6)) {
      throw DomainError("IntegralEqConfig: picard_tol must lie in [1e-12, 1e-6]");
    }
    if (quad_nodes < 2 || max_iters < 1 || !(panel_width > 0.0)) {
      throw DomainError("IntegralEqConfig: bad quadrature or iteration settings");
    }
    // at least 8 nodes per 2 pi of Bessel oscillation
    if (quad_nodes * 2.0 * std::numbers::pi / panel_width < 8.0) {
      throw DomainError("IntegralEqConfig: panels too wide for the kernel");
    }
    if (!std::isfinite(c1) || !std::isfinite(c2)) {
      throw DomainError("IntegralEqConfig: c1, c2 must be finite");
    }
  }
};

/// Stable rearrangement of F: with R^2 = x1^2 + (x2-phi)^2 and
/// J = sqrt(R^2 + phi^2 s^2),
///   F = [R^2 (phi s - x1)/(J + phi s) - x1^2] / (s (J + x1)).
/// The leading phi and x1/s terms cancel analytically, which keeps relative
/// accuracy for large s where F ~ 1/s.
inline double f_nonlinearity(double s, double x1, double x2, double phi) {
  if (!(s > 0.0)) throw DomainError("f_nonlinearity: s must be > 0");
  const double y = x2 - phi;
  const double r2 = x1 * x1 + y * y;
  const double ps = phi * s;
  const double j = std::sqrt(r2 + ps * ps);
  const double denom = j + x1;
  if (!(denom > 1e-14 * (j + 1.0))) {
    throw DenominatorVanishes("f_nonlinearity: sqrt(...) + x1 <= 0");
  }
  return (r2 * (ps - x1) / (j + ps) - x1 * x1) / (s * denom);
}

/// Integral-equation kernel Y_{j-1}(s) J1(t) - J_{j-1}(s) Y1(t).
inline double kernel(int j, double s, double t) {
  const int order = j - 1;
  return specfun::bessel_y(order, s) * specfun::bessel_j(1, t) -
         specfun::bessel_j(order, s) * specfun::bessel_y(1, t);
}

inline ReducedState reduced_from_phase(const classical::PhaseState& st,
                                       const classical::FluxParams& params) {
  params.require_positive();
  const auto d = classical::to_guiding_center(st, params);
  return {(d.I1 - d.I2) / params.phi, -classical::cross(d.c, d.v),
          params.phi - classical::dot(d.c, d.v)};
}

/// Inverse of reduced_from_phase. The reduced system forgets the overall
/// rotation (arg c = `center_angle`) and the time origin (s = sigma + s0).
inline classical::PhaseState phase_from_reduced(const ReducedState& r,
                                                const classical::FluxParams& params,
                                                double s0 = 0.0,
                                                double center_angle = 0.0) {
  using classical::Vec2;
  params.require_positive();
  const double y = r.x2 - params.phi;
  const double r2 = r.x1 * r.x1 + y * y;
  const double ps = params.phi * r.s;
  const double j = std::sqrt(r2 + ps * ps);
  // I1 - I2 = phi sigma, I1 + I2 = J; I2 written without cancellation.
  const double i1 = ps >= 0.0 ? 0.5 * (j + ps) : 0.5 * r2 / (j - ps);
  const double i2 = ps >= 0.0 ? 0.5 * r2 / (j + ps) : 0.5 * (j - ps);
  const double psi = std::atan2(y, r.x1);
  const double phi2 = psi - center_angle;
  const Vec2 c = std::sqrt(2.0 * i1) * classical::unit(center_angle);
  const Vec2 v_perp = std::sqrt(2.0 * i2) * classical::unit(-phi2);
  const Vec2 v{v_perp.y, -v_perp.x};
  classical::PhaseState st;
  st.s = r.s + s0;
  st.q = c + v_perp;
  st.p = v + classical::vector_potential(st.s, st.q, params);
  return st;
}

/// Energy I2 = H carried by a reduced state.
inline double reduced_energy(const ReducedState& r, double phi) {
  const double y = r.x2 - phi;
  const double r2 = r.x1 * r.x1 + y * y;
  const double ps = phi * r.s;
  const double j = std::sqrt(r2 + ps * ps);
  return ps >= 0.0 ? 0.5 * r2 / (j + ps) : 0.5 * (j - ps);
}

/// Fixed point of the truncated integral operator on composite
/// Gauss-Legendre panels covering [s_start, s_max].
class ReducedSolution {
 public:
  double phi = 0.0;
  double s_start = 0.0;
  IntegralEqConfig config;
  int iterations = 0;
  double tail_estimate = 0.0;
  std::vector<double> increments;  // sup-norm distance per iteration

  std::vector<double> s;  // nodes, ascending
  std::vector<double> x1;
  std::vector<double> x2;
  std::vector<double> forcing;  // F at the nodes

  int panels() const { return static_cast<int>(panel_lo_.size()); }
  int nodes_per_panel() const { return config.quad_nodes; }

  /// Homogeneous part c1 s (J, Y)_{j-1}(s).
  ReducedState homogeneous(double at) const {
    const auto b = specfun::bessel_all(at);
    return {at, config.c1 * at * b.j0 + config.c2 * at * b.y0,
            config.c1 * at * b.j1 + config.c2 * at * b.y1};
  }

  /// Nystrom evaluation: the integral equation applied to the converged
  /// forcing, with F interpolated inside the panel containing `at`.
  ReducedState evaluate(double at) const {
    if (at < s_start || at > config.s_max) {
      throw DomainError("ReducedSolution::evaluate: outside [s_start, s_max]");
    }
    const int p = panel_of(at);
    const int n = config.quad_nodes;
    const double b = panel_hi_[p];
    double gj = tail_j_[p];
    double gy = tail_y_[p];
    if (at < b) {
      const auto rule = quad::gauss_legendre(n, at, b);
      for (int k = 0; k < n; ++k) {
        const double t = rule.nodes[k];
        const double f = interpolate_panel(p, forcing, t);
        gj += rule.weights[k] * specfun::bessel_j(1, t) * f;
        gy += rule.weights[k] * specfun::bessel_y(1, t) * f;
      }
    }
    return apply(at, gj, gy);
  }

  /// Panel-wise Lagrange interpolation of the node values.
  ReducedState interpolate(double at) const {
    if (at < s_start || at > config.s_max) {
      throw DomainError("ReducedSolution::interpolate: outside [s_start, s_max]");
    }
    const int p = panel_of(at);
    return {at, interpolate_panel(p, x1, at), interpolate_panel(p, x2, at)};
  }

  // Internal layout, filled by picard_solve.
  std::vector<double> panel_lo_, panel_hi_;
  std::vector<double> tail_j_, tail_y_;  // int_{panel_hi}^{s_max} (J1, Y1) F
  std::vector<double> ref_nodes_, bary_;

  int panel_of(double at) const {
    const auto it = std::upper_bound(panel_lo_.begin(), panel_lo_.end(), at);
    int p = static_cast<int>(it - panel_lo_.begin()) - 1;
    return std::clamp(p, 0, panels() - 1);
  }

  double interpolate_panel(int p, const std::vector<double>& values,
                           double at) const {
    const int n = config.quad_nodes;
    const double a = panel_lo_[p], b = panel_hi_[p];
    const double u = (2.0 * at - a - b) / (b - a);
    double num = 0.0, den = 0.0;
    for (int k = 0; k < n; ++k) {
      const double diff = u - ref_nodes_[k];
      if (diff == 0.0) return values[p * n + k];
      const double w = bary_[k] / diff;
      num += w * values[p * n + k];
      den += w;
    }
    return num / den;
  }

  ReducedState apply(double at, double gj, double gy) const {
    const auto h = homogeneous(at);
    const auto bes = specfun::bessel_all(at);
    const double pre = 0.5 * std::numbers::pi * at;
    return {at, h.x1 - pre * (bes.y0 * gj - bes.j0 * gy),
            h.x2 - pre * (bes.y1 * gj - bes.j1 * gy)};
  }
};

namespace detail {

inline std::vector<double> barycentric_weights(const std::vector<double>& x) {
  std::vector<double> w(x.size(), 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (k != i) w[i] /= (x[i] - x[k]);
    }
  }
  return w;
}

inline double lagrange_basis(const std::vector<double>& x,
                             const std::vector<double>& bary, std::size_t k,
                             double u) {
  double den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = u - x[i];
    if (diff == 0.0) return i == k ? 1.0 : 0.0;
    den += bary[i] / diff;
  }
  return (bary[k] / (u - x[k])) / den;
}

}  // namespace detail

inline ReducedSolution picard_solve(const IntegralEqConfig& config, double phi,
                                    double s_start) {
  config.validate(s_start);
  if (!(phi > 0.0) || !std::isfinite(phi)) {
    throw DomainError("picard_solve: phi must be > 0");
  }
  const int n = config.quad_nodes;
  const int np = std::max(
      1, static_cast<int>(std::ceil((config.s_max - s_start) / config.panel_width -
                                    1e-9)));
  const double width = (config.s_max - s_start) / np;

  ReducedSolution sol;
  sol.phi = phi;
  sol.s_start = s_start;
  sol.config = config;
  const auto ref = quad::gauss_legendre(n);
  sol.ref_nodes_ = ref.nodes;
  sol.bary_ = detail::barycentric_weights(ref.nodes);
  sol.panel_lo_.resize(np);
  sol.panel_hi_.resize(np);
  for (int p = 0; p < np; ++p) {
    sol.panel_lo_[p] = s_start + p * width;
    sol.panel_hi_[p] = (p + 1 == np) ? config.s_max : s_start + (p + 1) * width;
  }

  const std::size_t total = static_cast<std::size_t>(np) * n;
  sol.s.resize(total);
  std::vector<double> w(total), bj1(total), by1(total);
  std::vector<specfun::BesselSet> bes(total);
  for (int p = 0; p < np; ++p) {
    const double a = sol.panel_lo_[p], b = sol.panel_hi_[p];
    for (int i = 0; i < n; ++i) {
      const std::size_t idx = static_cast<std::size_t>(p) * n + i;
      sol.s[idx] = 0.5 * (a + b) + 0.5 * (b - a) * ref.nodes[i];
      w[idx] = 0.5 * (b - a) * ref.weights[i];
      bes[idx] = specfun::bessel_all(sol.s[idx]);
    }
  }

  // Reference-panel data for the partial integrals int_{t_i}^{1}: sub-rule
  // nodes and the Lagrange basis of the panel nodes evaluated there.
  std::vector<std::vector<double>> sub_u(n), sub_w(n);
  std::vector<std::vector<double>> lag(n);  // lag[i][j*n + k] = L_k(u_ij)
  for (int i = 0; i < n; ++i) {
    const auto sub = quad::gauss_legendre(n, ref.nodes[i], 1.0);
    sub_u[i] = sub.nodes;
    sub_w[i] = sub.weights;
    lag[i].resize(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        lag[i][j * n + k] =
            detail::lagrange_basis(ref.nodes, sol.bary_, k, sub.nodes[j]);
      }
    }
  }
  // partial_j[idx * n + k]: weight of F_k (same panel) in int_{s_idx}^{b} J1 F
  std::vector<double> partial_j(total * n, 0.0), partial_y(total * n, 0.0);
  for (int p = 0; p < np; ++p) {
    const double a = sol.panel_lo_[p], b = sol.panel_hi_[p];
    const double half = 0.5 * (b - a);
    for (int i = 0; i < n; ++i) {
      const std::size_t idx = static_cast<std::size_t>(p) * n + i;
      for (int j = 0; j < n; ++j) {
        const double t = 0.5 * (a + b) + half * sub_u[i][j];
        const auto bt = specfun::bessel_all(t);
        const double wt = half * sub_w[i][j];
        for (int k = 0; k < n; ++k) {
          const double l = lag[i][j * n + k];
          partial_j[idx * n + k] += wt * bt.j1 * l;
          partial_y[idx * n + k] += wt * bt.y1 * l;
        }
      }
    }
  }

  sol.x1.resize(total);
  sol.x2.resize(total);
  sol.forcing.assign(total, 0.0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    const double t = sol.s[idx];
    sol.x1[idx] = config.c1 * t * bes[idx].j0 + config.c2 * t * bes[idx].y0;
    sol.x2[idx] = config.c1 * t * bes[idx].j1 + config.c2 * t * bes[idx].y1;
  }

  sol.tail_j_.assign(np, 0.0);
  sol.tail_y_.assign(np, 0.0);
  std::vector<double> nx1(total), nx2(total);
  auto sweep = [&]() {
    for (std::size_t idx = 0; idx < total; ++idx) {
      sol.forcing[idx] =
          config.zero_forcing
              ? 0.0
              : f_nonlinearity(sol.s[idx], sol.x1[idx], sol.x2[idx], phi);
    }
    double acc_j = 0.0, acc_y = 0.0;
    for (int p = np - 1; p >= 0; --p) {
      sol.tail_j_[p] = acc_j;
      sol.tail_y_[p] = acc_y;
      for (int i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(p) * n + i;
        double gj = acc_j, gy = acc_y;
        for (int k = 0; k < n; ++k) {
          const double f = sol.forcing[static_cast<std::size_t>(p) * n + k];
          gj += partial_j[idx * n + k] * f;
          gy += partial_y[idx * n + k] * f;
        }
        const double t = sol.s[idx];
        const double pre = 0.5 * std::numbers::pi * t;
        const auto& bb = bes[idx];
        nx1[idx] = config.c1 * t * bb.j0 + config.c2 * t * bb.y0 -
                   pre * (bb.y0 * gj - bb.j0 * gy);
        nx2[idx] = config.c1 * t * bb.j1 + config.c2 * t * bb.y1 -
                   pre * (bb.y1 * gj - bb.j1 * gy);
      }
      for (int i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(p) * n + i;
        acc_j += w[idx] * bes[idx].j1 * sol.forcing[idx];
        acc_y += w[idx] * bes[idx].y1 * sol.forcing[idx];
      }
    }
    double diff = 0.0;
    for (std::size_t idx = 0; idx < total; ++idx) {
      diff = std::max({diff, std::abs(nx1[idx] - sol.x1[idx]),
                       std::abs(nx2[idx] - sol.x2[idx])});
    }
    sol.x1.swap(nx1);
    sol.x2.swap(nx2);
    return diff;
  };

  for (int it = 1; it <= config.max_iters; ++it) {
    const double diff = sweep();
    sol.increments.push_back(diff);
    sol.iterations = it;
    if (diff <= config.picard_tol) break;
    if (it == config.max_iters || !std::isfinite(diff)) {
      throw NoConvergence("picard_solve: no convergence after " +
                          std::to_string(it) + " iterations (last increment " +
                          std::to_string(diff) + ")");
    }
  }
  // Forcing consistent with the returned iterate.
  for (std::size_t idx = 0; idx < total; ++idx) {
    sol.forcing[idx] = config.zero_forcing
                           ? 0.0
                           : f_nonlinearity(sol.s[idx], sol.x1[idx], sol.x2[idx], phi);
  }
  {
    double acc_j = 0.0, acc_y = 0.0;
    for (int p = np - 1; p >= 0; --p) {
      sol.tail_j_[p] = acc_j;
      sol.tail_y_[p] = acc_y;
      for (int i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(p) * n + i;
        acc_j += w[idx] * bes[idx].j1 * sol.forcing[idx];
        acc_y += w[idx] * bes[idx].y1 * sol.forcing[idx];
      }
    }
  }

  // Truncation of int_s^inf at s_max: integration by parts on the
  // oscillatory kernel (frequency >= 1) bounds the neglected piece by about
  // (pi s/2) * 2 * amplitude^2 * |F| near s_max, amplitude^2 = 2/(pi s).
  double f_tail = 0.0;
  for (int i = 0; i < n; ++i) {
    f_tail = std::max(f_tail, std::abs(sol.forcing[(np - 1) * n + i]));
  }
  sol.tail_estimate = 2.0 * f_tail;
  return sol;
}

/// Residual of the truncated integral equation at the points `at`, with the
/// integral recomputed on a finer composite Gauss grid (twice the nodes on
/// half-width panels) from the panel interpolant of F; x(s) itself is the
/// Nystrom value.
struct Residual {
  double s;
  double r1;
  double r2;
};

inline std::vector<Residual> integral_equation_residual(
    const ReducedSolution& sol, const std::vector<double>& at) {
  const double phi = sol.phi;
  const int m = 2 * sol.config.quad_nodes;
  const auto ref = quad::gauss_legendre(m);
  // fine grid on each half panel: cumulative integrals from the right
  struct Sub {
    double lo, hi, int_j, int_y;
  };
  std::vector<Sub> subs;
  auto forcing_at = [&](double t) {
    if (sol.config.zero_forcing) return 0.0;
    const auto x = sol.interpolate(t);
    return f_nonlinearity(t, x.x1, x.x2, phi);
  };
  auto integrate_piece = [&](double lo, double hi, double& ij, double& iy) {
    ij = iy = 0.0;
    if (hi <= lo) return;
    for (int k = 0; k < m; ++k) {
      const double t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * ref.nodes[k];
      const double wt = 0.5 * (hi - lo) * ref.weights[k];
      const double f = forcing_at(t);
      const auto b = specfun::bessel_all(t);
      ij += wt * b.j1 * f;
      iy += wt * b.y1 * f;
    }
  };
  for (int p = 0; p < sol.panels(); ++p) {
    const double a = sol.panel_lo_[p], b = sol.panel_hi_[p];
    const double mid = 0.5 * (a + b);
    Sub s1{a, mid, 0, 0}, s2{mid, b, 0, 0};
    integrate_piece(s1.lo, s1.hi, s1.int_j, s1.int_y);
    integrate_piece(s2.lo, s2.hi, s2.int_j, s2.int_y);
    subs.push_back(s1);
    subs.push_back(s2);
  }
  std::vector<double> cum_j(subs.size() + 1, 0.0), cum_y(subs.size() + 1, 0.0);
  for (std::size_t i = subs.size(); i-- > 0;) {
    cum_j[i] = cum_j[i + 1] + subs[i].int_j;
    cum_y[i] = cum_y[i + 1] + subs[i].int_y;
  }
  std::vector<Residual> out;
  out.reserve(at.size());
  for (double t : at) {
    std::size_t k = 0;
    while (k + 1 < subs.size() && subs[k].hi <= t) ++k;
    double pj = 0.0, py = 0.0;
    integrate_piece(t, subs[k].hi, pj, py);
    const double gj = cum_j[k + 1] + pj;
    const double gy = cum_y[k + 1] + py;
    const auto rhs = sol.apply(t, gj, gy);
    const auto x = sol.evaluate(t);
    out.push_back({t, x.x1 - rhs.x1, x.x2 - rhs.x2});
  }
  return out;
}

/// Max deviation of (x1, x2) between a Picard solution and a classical
/// trajectory mapped through reduced_from_phase, over their common interval
/// in the reduced time.
inline double crosscheck_ode(const ReducedSolution& sol,
                             const classical::Trajectory& traj,
                             const classical::FluxParams& params) {
  double worst = 0.0;
  int used = 0;
  for (const auto& st : traj.states) {
    const auto r = reduced_from_phase(st, params);
    if (r.s < sol.s_start || r.s > sol.config.s_max) continue;
    const auto x = sol.evaluate(r.s);
    worst = std::max({worst, std::abs(x.x1 - r.x1), std::abs(x.x2 - r.x2)});
    ++used;
  }
  if (used == 0) throw NoOverlap("crosscheck_ode: no common s-interval");
  return worst;
}

struct ReducedConstants {
  double c1 = 0.0;
  double c2 = 0.0;
  double a0 = 0.0;         // sqrt(4 phi H_limit), H from the tail of the solution
  double a0_bessel = 0.0;  // sqrt(2 (c1^2 + c2^2) / pi), asymptotic amplitude
  double H_limit = 0.0;
  double fit_residual = 0.0;  // rms relative misfit in the window
  bool degenerate = false;
};

inline constexpr double kDegenerateAmplitude = 1e-8;

/// Least-squares fit of the tail window [s_max - window, s_max] against the
/// homogeneous basis {s J_{j-1}, s Y_{j-1}}, both components stacked.
inline ReducedConstants extract_constants(const ReducedSolution& sol,
                                          double window = 50.0,
                                          double max_fit_residual = 1e-3) {
  if (sol.config.s_max < 1e3) {
    throw DomainError("extract_constants: solution must extend to s_max >= 1e3");
  }
  const double lo = sol.config.s_max - window;
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0, norm_x = 0;
  double h_sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < sol.s.size(); ++i) {
    const double t = sol.s[i];
    if (t < lo) continue;
    const auto b = specfun::bessel_all(t);
    const double u[2] = {t * b.j0, t * b.j1};
    const double v[2] = {t * b.y0, t * b.y1};
    const double x[2] = {sol.x1[i], sol.x2[i]};
    for (int c = 0; c < 2; ++c) {
      a11 += u[c] * u[c];
      a12 += u[c] * v[c];
      a22 += v[c] * v[c];
      b1 += u[c] * x[c];
      b2 += v[c] * x[c];
      norm_x += x[c] * x[c];
    }
    h_sum += reduced_energy({t, sol.x1[i], sol.x2[i]}, sol.phi);
    ++count;
  }
  if (count < 4) throw DomainError("extract_constants: window holds too few nodes");
  ReducedConstants out;
  const double det = a11 * a22 - a12 * a12;
  out.c1 = (b1 * a22 - b2 * a12) / det;
  out.c2 = (a11 * b2 - a12 * b1) / det;
  double misfit = 0.0;
  for (std::size_t i = 0; i < sol.s.size(); ++i) {
    const double t = sol.s[i];
    if (t < lo) continue;
    const auto b = specfun::bessel_all(t);
    const double e1 = sol.x1[i] - t * (out.c1 * b.j0 + out.c2 * b.y0);
    const double e2 = sol.x2[i] - t * (out.c1 * b.j1 + out.c2 * b.y1);
    misfit += e1 * e1 + e2 * e2;
  }
  out.fit_residual = norm_x > 0.0 ? std::sqrt(misfit / norm_x) : std::sqrt(misfit);
  out.H_limit = h_sum / count;
  out.a0 = std::sqrt(4.0 * sol.phi * out.H_limit);
  out.a0_bessel =
      std::sqrt(2.0 * (out.c1 * out.c1 + out.c2 * out.c2) / std::numbers::pi);
  out.degenerate = out.a0_bessel < kDegenerateAmplitude;
  if (!out.degenerate && out.fit_residual > max_fit_residual) {
    throw NotConverged("extract_constants: tail fit residual too large");
  }
  return out;
}

}  // namespace abflux::reduced
