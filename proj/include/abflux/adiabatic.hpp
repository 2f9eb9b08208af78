#pragma once

// Adiabatic propagator, Dyson corrector and U_w = U_ad C for
// i eps dU/ds = H(s) U, all in the moving eigenbasis psi_n(s).
//
// Writing U psi_k(0) = sum_n a_nk(s) psi_n(s) and using
// d psi_n/ds = -i sum_m Pi_mn psi_m, the coefficients obey
//   i eps a' = (diag(E) - eps Pi) a.
// U_ad = diag(exp(-i Theta_n / eps)), Theta_n = (2n+1) s + s^2, and
// C = U_ad^{-1} a solves i C' = -A C with
//   A_mn = (U_ad^{-1} Pi U_ad)_mn = Pi_mn exp(2 i (m-n) s / eps).
//
// C is integrated through b = exp(i (s + s^2)/eps) a, which removes the
// common phase of the levels and leaves i eps b' = (Lambda - eps Pi) b with
// Lambda = diag(2n). Each step freezes M = Lambda - eps Pi(mid) exactly and
// treats the quadratic remainder of Pi by a first-order Magnus term whose
// oscillatory integrals are evaluated in closed form, so the step size
// follows Pi's slow variation rather than 1/eps.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "abflux/error.hpp"
#include "abflux/spectral.hpp"

namespace abflux::adiabatic {

using spectral::CMatrix;
using spectral::Complex;

struct AdiabaticConfig {
  double epsilon = 0.1;
  double s_end = 2.0;
  int N = 64;
  double ode_tol = 1e-10;      // local error per corrector step (max entry)
  double h_max = 0.05;         // largest corrector step
  std::vector<double> s_grid;  // empty -> 0, 0.05, ..., s_end
  bool zero_coupling = false;  // test hook: Pi == 0

  void validate() const {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) {
      throw DomainError("AdiabaticConfig: epsilon must lie in (0, 1]");
    }
    if (!(s_end >= 0.0) || !std::isfinite(s_end)) {
      throw DomainError("AdiabaticConfig: s_end must be >= 0");
    }
    if (N < 2) throw DomainError("AdiabaticConfig: N must be >= 2");
    if (!(ode_tol > 0.0 && ode_tol < 1e-4)) {
      throw DomainError("AdiabaticConfig: ode_tol must lie in (0, 1e-4)");
    }
    if (!(h_max > 0.0)) throw DomainError("AdiabaticConfig: h_max must be > 0");
    const auto g = grid();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (g[k] < 0.0 || g[k] > s_end + 1e-12 || (k > 0 && g[k] <= g[k - 1])) {
        throw DomainError("AdiabaticConfig: s_grid must ascend inside [0, s_end]");
      }
    }
    if (g.front() != 0.0) throw DomainError("AdiabaticConfig: s_grid must start at 0");
  }

  std::vector<double> grid() const {
    if (!s_grid.empty()) return s_grid;
    std::vector<double> g;
    const int n = std::max(1, static_cast<int>(std::ceil(s_end / 0.05 - 1e-9)));
    for (int k = 0; k <= n; ++k) g.push_back(s_end * k / n);
    return g;
  }
};

/// Pi(s) for the analytic family, memoized by s. All families carry the
/// positive sign convention, which verify_sign_continuity checks.
class CouplingSource {
 public:
  CouplingSource(int N, bool zero) : N_(N), zero_(zero) {}

  const CMatrix& at(double s) {
    auto it = cache_.find(s);
    if (it != cache_.end()) return it->second;
    CMatrix P = zero_ ? CMatrix::Zero(N_, N_) : spectral::analytic_coupling(s, N_).P;
    return cache_.emplace(s, std::move(P)).first->second;
  }

  /// Smallest diagonal overlap <psi_n(s_k), psi_n(s_{k+1})> along a grid of
  /// spacing <= `spacing` on [0, s_end]; throws BranchError if any is <= 0.
  double verify_sign_continuity(double s_end, double spacing = 0.01) const {
    const int n = std::max(1, static_cast<int>(std::ceil(s_end / spacing)));
    double worst = 1.0;
    auto prev = spectral::analytic_spectrum({0.0, N_});
    for (int k = 1; k <= n; ++k) {
      auto cur = spectral::analytic_spectrum({s_end * k / n, N_});
      for (double v : spectral::level_overlaps(prev, cur)) {
        if (!(v > 0.0)) throw BranchError("sign continuity lost along the s-grid");
        worst = std::min(worst, v);
      }
      prev = std::move(cur);
    }
    return worst;
  }

  int N() const { return N_; }
  bool zero() const { return zero_; }

 private:
  int N_;
  bool zero_;
  std::map<double, CMatrix> cache_;
};

enum class PropagatorKind { Adiabatic, Corrector, Weak };

struct PropagatorMatrix {
  double s = 0.0;
  CMatrix M;
  PropagatorKind kind = PropagatorKind::Adiabatic;
};

inline double theta(int n, double s) { return (2.0 * n + 1.0) * s + s * s; }

inline CMatrix u_ad_at(double s, double epsilon, int N) {
  CMatrix U = CMatrix::Zero(N, N);
  for (int n = 0; n < N; ++n) U(n, n) = std::polar(1.0, -theta(n, s) / epsilon);
  return U;
}

/// U_ad(s2 <- s1) = diag(exp(-i (Theta_n(s2) - Theta_n(s1)) / eps)).
inline CMatrix u_ad_between(double s2, double s1, double epsilon, int N) {
  CMatrix U = CMatrix::Zero(N, N);
  for (int n = 0; n < N; ++n) {
    U(n, n) = std::polar(1.0, -(theta(n, s2) - theta(n, s1)) / epsilon);
  }
  return U;
}

inline std::vector<PropagatorMatrix> u_ad(const AdiabaticConfig& config) {
  config.validate();
  std::vector<PropagatorMatrix> out;
  for (double s : config.grid()) {
    out.push_back({s, u_ad_at(s, config.epsilon, config.N), PropagatorKind::Adiabatic});
  }
  return out;
}

inline double operator_norm(const CMatrix& M) { return spectral::spectral_norm(M); }

inline double unitarity_defect(const CMatrix& M) {
  const auto n = M.rows();
  return spectral::spectral_norm(M.adjoint() * M - CMatrix::Identity(n, n));
}

namespace detail {

/// M_p = int_{-d}^{d} u^p e^{i w u} du for p = 0, 1, 2.
inline std::array<Complex, 3> oscillatory_moments(double w, double d) {
  const double z = w * d;
  std::array<Complex, 3> m{};
  if (std::abs(z) < 0.5) {
    // sum_k (i w)^k / k! int u^{p+k}; only even p+k survive
    for (int p = 0; p < 3; ++p) {
      Complex acc = 0.0;
      Complex fac = 1.0;  // (i w)^k / k!
      for (int k = 0; k < 30; ++k) {
        if ((p + k) % 2 == 0) {
          acc += fac * (2.0 * std::pow(d, p + k + 1) / (p + k + 1));
        }
        fac *= Complex(0.0, w) / double(k + 1);
      }
      m[p] = acc;
    }
    return m;
  }
  const double sn = std::sin(z), cs = std::cos(z);
  m[0] = 2.0 * sn / w;
  m[1] = Complex(0.0, 2.0 * (sn / (w * w) - d * cs / w));
  m[2] = 2.0 * (d * d * sn / w + 2.0 * d * cs / (w * w) - 2.0 * sn / (w * w * w));
  return m;
}

// One corrector step for b over [s0, s0 + h].
inline void magnus_step(CMatrix& b, double s0, double h, double eps, CouplingSource& src) {
  const int N = src.N();
  const double mid = s0 + 0.5 * h;
  const CMatrix& p0 = src.at(s0);
  const CMatrix& pm = src.at(mid);
  const CMatrix& p1 = src.at(s0 + h);
  const CMatrix d1 = (p1 - p0) / h;
  const CMatrix d2 = 2.0 * (p1 - 2.0 * pm + p0) / (h * h);

  CMatrix M = -eps * pm;
  for (int n = 0; n < N; ++n) M(n, n) += 2.0 * n;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(M);
  const CMatrix& V = es.eigenvectors();
  const Eigen::VectorXd& mu = es.eigenvalues();
  const CMatrix q1 = V.adjoint() * d1 * V;
  const CMatrix q2 = V.adjoint() * d2 * V;

  // Omega_jk = i int (q1 u + q2 u^2)_jk e^{i nu (u + h/2)} du, nu = (mu_j - mu_k)/eps
  CMatrix omega(N, N);
  for (int j = 0; j < N; ++j) {
    for (int k = 0; k < N; ++k) {
      const double nu = (mu[j] - mu[k]) / eps;
      const auto mom = oscillatory_moments(nu, 0.5 * h);
      const Complex shift = std::polar(1.0, 0.5 * nu * h);
      omega(j, k) = Complex(0.0, 1.0) * shift * (q1(j, k) * mom[1] + q2(j, k) * mom[2]);
    }
  }
  // exp(Omega) with -i Omega hermitian
  CMatrix herm = Complex(0.0, -1.0) * omega;
  herm = 0.5 * (herm + herm.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> ew(herm);
  CMatrix expo = ew.eigenvectors() *
                 ew.eigenvalues()
                     .unaryExpr([](double l) { return std::polar(1.0, l); })
                     .asDiagonal() *
                 ew.eigenvectors().adjoint();
  CMatrix phase = CMatrix::Zero(N, N);
  for (int j = 0; j < N; ++j) phase(j, j) = std::polar(1.0, -mu[j] * h / eps);
  b = (V * phase * expo * V.adjoint() * b).eval();
}

inline CMatrix corrector_from_b(const CMatrix& b, double s, double eps) {
  CMatrix c = b;
  for (Eigen::Index n = 0; n < b.rows(); ++n) {
    c.row(n) *= std::polar(1.0, 2.0 * static_cast<double>(n) * s / eps);
  }
  return c;
}

}  // namespace detail

struct CorrectorRun {
  std::vector<PropagatorMatrix> C;
  std::vector<double> unitarity;  // ||C^dagger C - id|| per sample
  int steps = 0;
  int rejected = 0;
};

inline constexpr double kUnitarityLimit = 1e-8;

/// C(s) on the configured grid by adaptive step doubling of the Magnus
/// scheme; C(0) = id exactly.
inline CorrectorRun dyson_corrector(const AdiabaticConfig& config, CouplingSource& src) {
  config.validate();
  const auto grid = config.grid();
  const double eps = config.epsilon;
  const int N = config.N;
  CorrectorRun run;
  CMatrix b = CMatrix::Identity(N, N);
  run.C.push_back({0.0, b, PropagatorKind::Corrector});
  run.unitarity.push_back(0.0);
  if (src.zero()) {
    // A vanishes identically, so C stays the identity
    for (std::size_t k = 1; k < grid.size(); ++k) {
      run.C.push_back({grid[k], b, PropagatorKind::Corrector});
      run.unitarity.push_back(0.0);
    }
    return run;
  }
  double s = 0.0;
  double h = std::min(config.h_max, 0.01);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double target = grid[k];
    while (s < target) {
      bool last = false;
      double step = h;
      if (s + step >= target - 1e-12 * std::max(1.0, target)) {
        step = target - s;
        last = true;
      }
      CMatrix big = b;
      detail::magnus_step(big, s, step, eps, src);
      CMatrix half = b;
      detail::magnus_step(half, s, 0.5 * step, eps, src);
      detail::magnus_step(half, s + 0.5 * step, 0.5 * step, eps, src);
      const double err = (big - half).cwiseAbs().maxCoeff();
      if (!std::isfinite(err)) throw StepFailure("dyson_corrector: non-finite state");
      if (err <= config.ode_tol || step < 1e-10) {
        if (step < 1e-10 && err > config.ode_tol) {
          throw StepFailure("dyson_corrector: step size underflow");
        }
        b = half;
        s = last ? target : s + step;
        ++run.steps;
        const double grow = err > 0.0 ? 0.9 * std::pow(config.ode_tol / err, 0.25) : 2.0;
        if (!last || step >= h) h = std::min(config.h_max, step * std::clamp(grow, 0.2, 2.0));
      } else {
        ++run.rejected;
        h = step * std::clamp(0.9 * std::pow(config.ode_tol / err, 0.25), 0.1, 0.5);
      }
    }
    const CMatrix c = detail::corrector_from_b(b, target, eps);
    const double defect = unitarity_defect(c);
    if (defect > kUnitarityLimit) {
      throw StepFailure("dyson_corrector: unitarity drift " + std::to_string(defect) +
                        " at s = " + std::to_string(target));
    }
    run.C.push_back({target, c, PropagatorKind::Corrector});
    run.unitarity.push_back(defect);
  }
  return run;
}

struct TwistedIntegral {
  std::vector<double> s;
  std::vector<CMatrix> I;
  std::vector<double> norm;
  double panel = 0.0;
  double refine_change = 0.0;  // |norm(s_end)| change when panels are halved
};

namespace detail {

// I(s) = int_0^s A on the grid, with panels no wider than `panel`. On each
// panel Pi is replaced by its quadratic interpolant and the phases
// exp(2 i (m-n) s / eps) are integrated exactly.
inline std::vector<CMatrix> twisted_on(const std::vector<double>& grid, double eps,
                                       double panel, CouplingSource& src) {
  const int N = src.N();
  std::vector<CMatrix> out;
  CMatrix acc = CMatrix::Zero(N, N);
  out.push_back(acc);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double lo = grid[k - 1], hi = grid[k];
    const int pieces = std::max(1, static_cast<int>(std::ceil((hi - lo) / panel - 1e-9)));
    for (int q = 0; q < pieces; ++q) {
      const double a = lo + (hi - lo) * q / pieces;
      const double b = lo + (hi - lo) * (q + 1) / pieces;
      const double c = 0.5 * (a + b), d = 0.5 * (b - a);
      const CMatrix& pa = src.at(a);
      const CMatrix& pc = src.at(c);
      const CMatrix& pb = src.at(b);
      // Pi(c + u) = pc + l1 u + l2 u^2
      const CMatrix l1 = (pb - pa) / (2.0 * d);
      const CMatrix l2 = (pb - 2.0 * pc + pa) / (2.0 * d * d);
      for (int m = 0; m < N; ++m) {
        for (int n = 0; n < N; ++n) {
          if (m == n) continue;
          const double w = 2.0 * (m - n) / eps;
          const auto mom = oscillatory_moments(w, d);
          acc(m, n) += std::polar(1.0, w * c) *
                       (pc(m, n) * mom[0] + l1(m, n) * mom[1] + l2(m, n) * mom[2]);
        }
      }
    }
    out.push_back(acc);
  }
  return out;
}

}  // namespace detail

/// I(s) = int_0^s U_ad^{-1} Pi U_ad. Panels are at most eps pi / (2 gap)
/// with gap = 2; GridTooCoarse if halving them moves ||I(s_end)|| by > 1e-6.
inline TwistedIntegral twisted_coupling_integral(const AdiabaticConfig& config,
                                                 CouplingSource& src) {
  config.validate();
  const auto grid = config.grid();
  TwistedIntegral out;
  out.s = grid;
  out.panel = std::min(config.epsilon * std::numbers::pi / 4.0, config.h_max);
  const auto coarse = detail::twisted_on(grid, config.epsilon, out.panel, src);
  out.I = detail::twisted_on(grid, config.epsilon, 0.5 * out.panel, src);
  for (const auto& m : out.I) out.norm.push_back(operator_norm(m));
  out.refine_change = std::abs(out.norm.back() - operator_norm(coarse.back()));
  if (out.refine_change > 1e-6) {
    throw GridTooCoarse("twisted_coupling_integral: norm moved by " +
                        std::to_string(out.refine_change) + " under refinement");
  }
  return out;
}

inline std::vector<PropagatorMatrix> u_weak(const std::vector<PropagatorMatrix>& uad,
                                            const std::vector<PropagatorMatrix>& corr) {
  if (uad.size() != corr.size()) throw GridMismatch("u_weak: sequences differ in length");
  std::vector<PropagatorMatrix> out;
  for (std::size_t k = 0; k < uad.size(); ++k) {
    if (uad[k].s != corr[k].s) throw GridMismatch("u_weak: sample points differ");
    out.push_back({uad[k].s, uad[k].M * corr[k].M, PropagatorKind::Weak});
  }
  return out;
}

/// ||C(s) - id - i I(s)||: what the Dyson series leaves after its first two
/// terms (C = id + i int A + ...).
inline std::vector<double> dyson_remainder(const std::vector<PropagatorMatrix>& corr,
                                           const TwistedIntegral& twisted) {
  if (corr.size() != twisted.I.size()) throw GridMismatch("dyson_remainder: grid mismatch");
  std::vector<double> out;
  for (std::size_t k = 0; k < corr.size(); ++k) {
    const auto n = corr[k].M.rows();
    out.push_back(operator_norm(corr[k].M - CMatrix::Identity(n, n) -
                                Complex(0.0, 1.0) * twisted.I[k]));
  }
  return out;
}

struct GeneratorResidual {
  double s = 0.0;
  double adiabatic = 0.0;  // ||i eps dU_ad - (H + eps Pi) U_ad||
  double weak = 0.0;       // ||i eps dU_w - H U_w||
};

/// Centred differences of step delta = fd_scale * eps around each sample;
/// U_w at s +- delta is obtained by a single corrector step from s.
inline std::vector<GeneratorResidual> residual_generator_check(
    const AdiabaticConfig& config, CouplingSource& src, const CorrectorRun& corr,
    double fd_scale = 1e-5) {
  config.validate();
  const double eps = config.epsilon;
  const int N = config.N;
  const double delta = fd_scale * eps;
  std::vector<GeneratorResidual> out;
  auto energies = [&](double s) {
    CMatrix E = CMatrix::Zero(N, N);
    for (int n = 0; n < N; ++n) E(n, n) = 2.0 * n + 2.0 * s + 1.0;
    return E;
  };
  const Complex ieps(0.0, eps);
  for (const auto& c : corr.C) {
    const double s = c.s;
    if (s - delta < 0.0 || s + delta > config.s_end) continue;
    const CMatrix& P = src.at(s);
    const CMatrix E = energies(s);
    // coordinates of U psi_k(0) on psi_n(s): i eps d(U psi)/ds -> i eps a' + eps Pi a
    const CMatrix a0 = u_ad_at(s, eps, N);
    const CMatrix da = (u_ad_at(s + delta, eps, N) - u_ad_at(s - delta, eps, N)) / (2 * delta);
    const CMatrix r_ad = ieps * da + eps * P * a0 - (E + eps * P) * a0;

    // U_w coordinates a = U_ad C, C = diag(e^{2 i n s/eps}) b
    CMatrix cp = c.M, cm = c.M;
    if (!src.zero()) {
      CMatrix b = c.M;
      for (int n = 0; n < N; ++n) b.row(n) *= std::polar(1.0, -2.0 * n * s / eps);
      CMatrix bp = b, bm = b;
      detail::magnus_step(bp, s, delta, eps, src);
      detail::magnus_step(bm, s, -delta, eps, src);
      cp = detail::corrector_from_b(bp, s + delta, eps);
      cm = detail::corrector_from_b(bm, s - delta, eps);
    }
    const CMatrix ap = u_ad_at(s + delta, eps, N) * cp;
    const CMatrix am = u_ad_at(s - delta, eps, N) * cm;
    const CMatrix aw = a0 * c.M;
    const CMatrix r_w = ieps * (ap - am) / (2 * delta) + eps * P * aw - E * aw;
    out.push_back({s, operator_norm(r_ad), operator_norm(r_w)});
  }
  return out;
}

struct SweepRow {
  double epsilon = 0.0;
  double s = 0.0;
  double norm_I = 0.0;
  double norm_C_minus_id = 0.0;
  double norm_Uw_minus_Uad = 0.0;
  double unitarity_defect = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  // least-squares slope of log(quantity at s_end) against log(eps)
  std::optional<double> exponent_I, exponent_C, exponent_W;
  std::vector<double> refine_change;  // twisted integral, per epsilon
};

inline std::optional<double> fit_exponent(const std::vector<double>& eps,
                                          const std::vector<double>& values) {
  if (eps.size() < 2 || eps.size() != values.size()) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(values[i] > 0.0)) return std::nullopt;
    mx += std::log(eps[i]);
    my += std::log(values[i]);
  }
  mx /= eps.size();
  my /= eps.size();
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double dx = std::log(eps[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(values[i]) - my);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

/// Runs every epsilon of the sweep on the base configuration.
inline SweepResult adiabatic_sweep(const std::vector<double>& epsilons,
                                   const AdiabaticConfig& base) {
  if (epsilons.empty()) throw DomainError("adiabatic_sweep: no epsilon given");
  SweepResult res;
  CouplingSource src(base.N, base.zero_coupling);
  std::vector<double> fi, fc, fw;
  for (double eps : epsilons) {
    AdiabaticConfig cfg = base;
    cfg.epsilon = eps;
    cfg.validate();
    const auto tw = twisted_coupling_integral(cfg, src);
    const auto corr = dyson_corrector(cfg, src);
    const auto uad = u_ad(cfg);
    const auto uw = u_weak(uad, corr.C);
    res.refine_change.push_back(tw.refine_change);
    for (std::size_t k = 0; k < uad.size(); ++k) {
      SweepRow row;
      row.epsilon = eps;
      row.s = uad[k].s;
      row.norm_I = tw.norm[k];
      row.norm_C_minus_id = operator_norm(corr.C[k].M - CMatrix::Identity(cfg.N, cfg.N));
      row.norm_Uw_minus_Uad = operator_norm(uw[k].M - uad[k].M);
      row.unitarity_defect = std::max(corr.unitarity[k], unitarity_defect(uw[k].M));
      res.rows.push_back(row);
    }
    const auto& last = res.rows.back();
    fi.push_back(last.norm_I);
    fc.push_back(last.norm_C_minus_id);
    fw.push_back(last.norm_Uw_minus_Uad);
  }
  res.exponent_I = fit_exponent(epsilons, fi);
  res.exponent_C = fit_exponent(epsilons, fc);
  res.exponent_W = fit_exponent(epsilons, fw);
  return res;
}

}  // namespace abflux::adiabatic
