#pragma once

// Classical charged particle in the punctured plane: unit homogeneous field
// plus a linearly ramped flux line through the origin, in rescaled units
//
//   H(s, q, p) = 1/2 |p - a(s, q)|^2,   a(s, q) = (1/2 - phi s / |q|^2) q_perp,
//   q_perp = (-q_y, q_x),  e(angle) = (cos angle, sin angle).
//
// Guiding-centre split: v = p - a, c = q - v_perp, and the action-angle
// chart q = |c| e(phi1) + |v| e(-phi2), I1 = |c|^2/2, I2 = H.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "abflux/error.hpp"
#include "abflux/ode.hpp"

namespace abflux::classical {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double norm2(Vec2 a) { return dot(a, a); }
inline double arg(Vec2 a) { return std::atan2(a.y, a.x); }
inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// Rescaled flux ramp rate phi = e Phi_0 / (2 pi omega).
///
/// The dynamics accept phi = 0 (pure Landau problem, used as an oracle);
/// everything that quantifies the flux-driven asymptotics requires phi > 0
/// via require_positive().
struct FluxParams {
  double phi = 0.5;

  void validate() const {
    if (!std::isfinite(phi) || phi < 0.0) {
      throw DomainError("FluxParams: phi must be finite and >= 0");
    }
  }
  void require_positive() const {
    if (!std::isfinite(phi) || phi <= 0.0) {
      throw DomainError("FluxParams: phi must be > 0");
    }
  }
};

struct PhaseState {
  double s = 0.0;
  Vec2 q;
  Vec2 p;
};

struct GuidingDecomposition {
  double s = 0.0;
  Vec2 c;
  Vec2 v;
  double I1 = 0.0;
  double I2 = 0.0;
  double phi1 = 0.0;
  double phi2 = 0.0;

  /// |c| e(phi1) + |v| e(-phi2); equals q.
  Vec2 reconstruct() const {
    return std::sqrt(2.0 * I1) * unit(phi1) + std::sqrt(2.0 * I2) * unit(-phi2);
  }
};

/// Running continuation datum for the unwrapped arg in K.
struct BranchDatum {
  double angle = 0.0;
};

struct MotionConstant {
  double K = 0.0;
  double s0 = 0.0;
  BranchDatum branch;
};

inline void require_off_puncture(Vec2 q, const char* where) {
  if (q.x == 0.0 && q.y == 0.0) {
    throw SingularityError(std::string(where) + ": q = 0 is the flux line");
  }
}

inline Vec2 vector_potential(double s, Vec2 q, const FluxParams& params) {
  require_off_puncture(q, "vector_potential");
  return (0.5 - params.phi * s / norm2(q)) * perp(q);
}

inline Vec2 velocity(const PhaseState& st, const FluxParams& params) {
  return st.p - vector_potential(st.s, st.q, params);
}

inline double hamiltonian(const PhaseState& st, const FluxParams& params) {
  return 0.5 * norm2(velocity(st, params));
}

struct FlowDerivative {
  Vec2 dq;
  Vec2 dp;
};

/// Canonical equations of H.
///
/// With f = 1/2 - phi s/|q|^2, a = f q_perp and
///   d a_x/d q_k = -q_y g q_k - f delta_{ky},
///   d a_y/d q_k =  q_x g q_k + f delta_{kx},   g = 2 phi s / |q|^4,
/// the momentum equation dp_k = sum_j v_j d a_j/d q_k becomes
///   dp = g (q x v) q - f v_perp.
/// The field is curl a = 2f + g|q|^2 = 1 and the induced electric field is
/// -da/ds = phi q_perp/|q|^2.
inline FlowDerivative flow_rhs(const PhaseState& st, const FluxParams& params) {
  require_off_puncture(st.q, "flow_rhs");
  const double r2 = norm2(st.q);
  const double f = 0.5 - params.phi * st.s / r2;
  const double g = 2.0 * params.phi * st.s / (r2 * r2);
  const Vec2 v = st.p - f * perp(st.q);
  return {v, g * cross(st.q, v) * st.q - f * perp(v)};
}

inline GuidingDecomposition to_guiding_center(const PhaseState& st,
                                              const FluxParams& params) {
  GuidingDecomposition d;
  d.s = st.s;
  d.v = velocity(st, params);
  d.c = st.q - perp(d.v);
  d.I1 = 0.5 * norm2(d.c);
  d.I2 = 0.5 * norm2(d.v);
  d.phi1 = (d.c.x == 0.0 && d.c.y == 0.0) ? 0.0 : arg(d.c);
  // v_perp = |v| e(-phi2)
  const Vec2 vp = perp(d.v);
  d.phi2 = (vp.x == 0.0 && vp.y == 0.0) ? 0.0 : -arg(vp);
  return d;
}

/// Largest principal angle increment accepted between consecutive samples.
inline constexpr double kMaxUnwrapStep = 0.9 * std::numbers::pi;

inline double wrap_pi(double a) {
  using std::numbers::pi;
  a = std::remainder(a, 2.0 * pi);
  return a;
}

/// K = I2 - phi * arg(sqrt(2 I1) e(phi1) + sqrt(2 I2) e(-phi2)), with the
/// arg continued from `prev` (first call: principal branch).
inline MotionConstant motion_constant(const GuidingDecomposition& d,
                                      const FluxParams& params,
                                      std::optional<BranchDatum> prev = {}) {
  const Vec2 w = d.reconstruct();
  require_off_puncture(w, "motion_constant");
  double angle = arg(w);
  if (prev) {
    const double step = wrap_pi(angle - prev->angle);
    if (std::abs(step) > kMaxUnwrapStep) {
      throw BranchError("motion_constant: samples too far apart to unwrap");
    }
    angle = prev->angle + step;
  }
  MotionConstant m;
  m.K = d.I2 - params.phi * angle;
  m.s0 = params.phi > 0.0 ? d.s - (d.I1 - d.I2) / params.phi
                          : std::numeric_limits<double>::quiet_NaN();
  m.branch.angle = angle;
  return m;
}

struct IntegrateOptions {
  double tol = 1e-12;
  /// Output times, monotone in the direction of integration. If empty,
  /// `samples` equally spaced points including both ends are produced.
  std::vector<double> sample_times;
  int samples = 1001;
  double r_guard = 1e-8;
};

struct Trajectory {
  std::vector<PhaseState> states;
  /// Unwrapped polar angle of q at each sample, tracked step by step.
  std::vector<double> winding;
  /// Set when |q| fell below r_guard; states end just before the hit.
  std::optional<double> puncture_time;
  long steps = 0;
};

namespace detail {

using Y = ode::State<4>;

inline Y pack(const PhaseState& st) { return {st.q.x, st.q.y, st.p.x, st.p.y}; }
inline PhaseState unpack(double s, const Y& y) {
  return {s, {y[0], y[1]}, {y[2], y[3]}};
}

struct PunctureSignal {
  double s;
};

}  // namespace detail

inline Trajectory integrate(const PhaseState& initial, double s_end,
                            const FluxParams& params,
                            const IntegrateOptions& opt = {}) {
  params.validate();
  require_off_puncture(initial.q, "integrate");
  if (!(opt.tol >= 1e-13 && opt.tol <= 1e-6)) {
    throw DomainError("integrate: tol must lie in [1e-13, 1e-6]");
  }
  if (norm(initial.q) < opt.r_guard) {
    throw DomainError("integrate: initial |q| below r_guard");
  }

  std::vector<double> times = opt.sample_times;
  if (times.empty()) {
    const int n = s_end == initial.s ? 1 : std::max(opt.samples, 2);
    times.resize(n);
    for (int i = 0; i < n; ++i) {
      times[i] = n == 1 ? initial.s : initial.s + (s_end - initial.s) * double(i) / (n - 1);
    }
    times.back() = s_end;
  }
  const double dir = s_end >= initial.s ? 1.0 : -1.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    if (dir * (t - initial.s) < 0.0 || dir * (t - s_end) > 0.0 ||
        (i > 0 && dir * (t - times[i - 1]) < 0.0)) {
      throw DomainError("integrate: sample times must be monotone within the span");
    }
  }

  Trajectory traj;
  traj.states.reserve(times.size());
  traj.winding.reserve(times.size());
  std::size_t next = 0;
  const double theta0 = arg(initial.q);
  while (next < times.size() && times[next] == initial.s) {
    traj.states.push_back(initial);
    traj.winding.push_back(theta0);
    ++next;
  }
  if (s_end == initial.s) return traj;

  auto rhs = [&](double s, const detail::Y& y) {
    const double r = std::hypot(y[0], y[1]);
    if (r < opt.r_guard) throw detail::PunctureSignal{s};
    const FlowDerivative d = flow_rhs(detail::unpack(s, y), params);
    return detail::Y{d.dq.x, d.dq.y, d.dp.x, d.dp.y};
  };

  double theta_step0 = theta0;  // unwrapped angle at the current step start
  auto on_step = [&](const ode::Step<4>& st) {
    const double a0 = std::atan2(st.y0[1], st.y0[0]);
    while (next < times.size() && dir * (times[next] - st.t1()) <= 0.0) {
      const double t = times[next];
      const detail::Y y = (t == st.t1()) ? st.y1 : st.at(t);
      if (std::hypot(y[0], y[1]) < opt.r_guard) {
        traj.puncture_time = t;
        return false;
      }
      const double a = std::atan2(y[1], y[0]);
      traj.states.push_back(detail::unpack(t, y));
      traj.winding.push_back(theta_step0 + wrap_pi(a - a0));
      ++next;
    }
    theta_step0 += wrap_pi(std::atan2(st.y1[1], st.y1[0]) - a0);
    return true;
  };

  ode::Tolerances tol;
  tol.rtol = opt.tol;
  tol.atol = opt.tol;
  try {
    traj.steps = ode::integrate<4>(rhs, initial.s, detail::pack(initial), s_end,
                                   tol, on_step);
  } catch (const detail::PunctureSignal& hit) {
    traj.puncture_time = hit.s;
  }
  return traj;
}

/// K along a trajectory, using the integrator's step-level winding as the
/// arg branch.
inline std::vector<double> motion_constants(const Trajectory& traj,
                                            const FluxParams& params) {
  std::vector<double> k(traj.states.size());
  for (std::size_t i = 0; i < k.size(); ++i) {
    k[i] = hamiltonian(traj.states[i], params) - params.phi * traj.winding[i];
  }
  return k;
}

inline double motion_constant_drift(const Trajectory& traj,
                                    const FluxParams& params) {
  const auto k = motion_constants(traj, params);
  double worst = 0.0;
  for (double v : k) worst = std::max(worst, std::abs(v - k.front()));
  return worst;
}

struct CenterEnergyFit {
  double slope = 0.0;         // free least-squares slope, should equal phi
  double s0 = 0.0;            // from the intercept with the slope fixed to phi
  double max_residual = 0.0;  // max |y - phi (s - s0)|
};

/// Fits y(s) = |c(s)|^2/2 - H(s) against phi (s - s0).
inline CenterEnergyFit center_energy_fit(std::span<const PhaseState> states,
                                         const FluxParams& params) {
  params.require_positive();
  if (states.size() < 10) {
    throw DomainError("center_energy_fit: need at least 10 samples");
  }
  const double n = double(states.size());
  std::vector<double> y(states.size());
  double ms = 0.0, my = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto d = to_guiding_center(states[i], params);
    y[i] = d.I1 - d.I2;
    ms += states[i].s;
    my += y[i];
  }
  ms /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    sxx += (states[i].s - ms) * (states[i].s - ms);
    sxy += (states[i].s - ms) * (y[i] - my);
  }
  CenterEnergyFit fit;
  fit.slope = sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
  fit.s0 = ms - my / params.phi;
  for (std::size_t i = 0; i < states.size(); ++i) {
    fit.max_residual = std::max(
        fit.max_residual, std::abs(y[i] - params.phi * (states[i].s - fit.s0)));
  }
  return fit;
}

struct ForwardAsymptotics {
  double a0 = 0.0;
  double drift_angle = 0.0;  // tail average of the unwrapped arg q
  double H_limit = 0.0;      // tail average of H
  double K = 0.0;
  double drift_residual = 0.0;  // |drift - (a0^2/(4 phi^2) - K/phi)| mod 2 pi
  double radius_ratio = 0.0;    // |q|/sqrt(s) / sqrt(2 phi) at the last sample
  double energy_deviation = 0.0;  // |H(s_end) - H_limit| / H_limit
  double tail_rel_std = 0.0;
};

inline ForwardAsymptotics asymptotics_forward(const Trajectory& traj,
                                              const FluxParams& params,
                                              double tail_fraction = 0.1,
                                              double max_tail_rel_std = 0.05) {
  params.require_positive();
  if (traj.puncture_time) {
    throw DomainError("asymptotics_forward: trajectory hit the puncture");
  }
  if (traj.states.size() < 10 || traj.states.back().s < 1e3) {
    throw DomainError("asymptotics_forward: need samples out to s >= 1e3");
  }
  const double s_end = traj.states.back().s;
  const double s_tail = s_end - tail_fraction * (s_end - traj.states.front().s);
  double sum_h = 0.0, sum_h2 = 0.0, sum_a = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    if (traj.states[i].s < s_tail) continue;
    const double h = hamiltonian(traj.states[i], params);
    sum_h += h;
    sum_h2 += h * h;
    sum_a += traj.winding[i];
    ++count;
  }
  if (count < 3) throw DomainError("asymptotics_forward: tail too short");

  ForwardAsymptotics out;
  out.H_limit = sum_h / count;
  const double var = std::max(sum_h2 / count - out.H_limit * out.H_limit, 0.0);
  out.tail_rel_std = std::sqrt(var) / std::max(out.H_limit, 1e-300);
  if (out.tail_rel_std > max_tail_rel_std) {
    throw NotConverged("asymptotics_forward: tail variance of H too large");
  }
  out.a0 = std::sqrt(4.0 * params.phi * out.H_limit);
  out.drift_angle = sum_a / count;
  out.K = motion_constants(traj, params).front();
  const double predicted =
      out.a0 * out.a0 / (4.0 * params.phi * params.phi) - out.K / params.phi;
  out.drift_residual = std::abs(wrap_pi(out.drift_angle - predicted));
  const PhaseState& last = traj.states.back();
  out.radius_ratio = norm(last.q) / std::sqrt(last.s) / std::sqrt(2.0 * params.phi);
  out.energy_deviation =
      std::abs(hamiltonian(last, params) - out.H_limit) / out.H_limit;
  return out;
}

struct BackwardAsymptotics {
  double s = 0.0;
  double energy_ratio = 0.0;  // H(s)/|s| / phi
  double radius_ratio = 0.0;  // |q(s)|/sqrt|s| / sqrt(2 phi)
};

/// Evaluated at the last sample of a trajectory integrated towards s -> -inf.
inline BackwardAsymptotics asymptotics_backward(const Trajectory& traj,
                                                const FluxParams& params) {
  params.require_positive();
  if (traj.states.empty() || traj.states.back().s >= 0.0) {
    throw DomainError("asymptotics_backward: last sample must have s < 0");
  }
  const PhaseState& last = traj.states.back();
  const double as = std::abs(last.s);
  BackwardAsymptotics out;
  out.s = last.s;
  out.energy_ratio = hamiltonian(last, params) / as / params.phi;
  out.radius_ratio = norm(last.q) / std::sqrt(as) / std::sqrt(2.0 * params.phi);
  return out;
}

}  // namespace abflux::classical
