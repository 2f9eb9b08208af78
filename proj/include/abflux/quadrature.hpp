#pragma once

// Gauss rules used throughout: Legendre on [-1, 1] for composite panels,
// generalized Laguerre on (0, inf) with weight x^alpha e^{-x}.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "abflux/error.hpp"

namespace abflux::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1] (Newton on P_n).
inline Rule gauss_legendre(int n) {
  if (n < 1) throw DomainError("gauss_legendre: n must be >= 1");
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // re-evaluate the derivative at the converged node
    {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

/// Gauss-Legendre rule mapped to [a, b].
inline Rule gauss_legendre(int n, double a, double b) {
  Rule r = gauss_legendre(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = mid + half * r.nodes[i];
    r.weights[i] *= half;
  }
  return r;
}

/// Generalized Gauss-Laguerre rule for the weight x^alpha e^{-x}.
///
/// `weights` are normalized so that they sum to one; the true weights are
/// weights[i] * Gamma(alpha + 1). Keeping the factor out lets callers pass
/// alpha close to -1 and multiply by (alpha + 1) analytically.
struct LaguerreRule {
  double alpha = 0.0;
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Orthonormal Laguerre polynomials p_0..p_{n-1} for the normalized measure
/// x^alpha e^{-x} dx / Gamma(alpha+1), evaluated at x.
inline void orthonormal_laguerre(int n, double alpha, double x,
                                 std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(n), 0.0);
  if (n == 0) return;
  out[0] = 1.0;
  if (n == 1) return;
  out[1] = (alpha + 1.0 - x) / std::sqrt(alpha + 1.0);
  for (int k = 1; k + 1 < n; ++k) {
    out[k + 1] = ((2.0 * k + 1.0 + alpha - x) * out[k] -
                  std::sqrt(k * (k + alpha)) * out[k - 1]) /
                 std::sqrt((k + 1.0) * (k + 1.0 + alpha));
  }
}

inline LaguerreRule gauss_laguerre(int n, double alpha) {
  if (n < 1) throw DomainError("gauss_laguerre: n must be >= 1");
  if (!(alpha > -1.0)) throw DomainError("gauss_laguerre: alpha must be > -1");
  Eigen::VectorXd diag(n);
  Eigen::VectorXd sub(std::max(n - 1, 1));
  for (int k = 0; k < n; ++k) diag[k] = 2.0 * k + alpha + 1.0;
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(k * (k + alpha));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub.head(std::max(n - 1, 0)),
                            Eigen::EigenvaluesOnly);

  LaguerreRule rule;
  rule.alpha = alpha;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  std::vector<double> p;
  for (int i = 0; i < n; ++i) {
    double x = std::max(es.eigenvalues()[i], 0.0);
    // Newton polish on the monic-free orthonormal p_n using p_n' from the
    // Christoffel-Darboux relation x p_n' = n p_n - sqrt(n(n+alpha)) p_{n-1}.
    for (int it = 0; it < 3 && x > 0.0; ++it) {
      orthonormal_laguerre(n + 1, alpha, x, p);
      const double pn = p[n];
      const double dpn =
          (n * pn - std::sqrt(n * (n + alpha)) * p[n - 1]) / x;
      if (dpn == 0.0) break;
      const double dx = pn / dpn;
      if (!std::isfinite(dx) || std::abs(dx) > 1e-6 * (1.0 + x)) break;
      x -= dx;
    }
    orthonormal_laguerre(n, alpha, x, p);
    double k = 0.0;
    for (double v : p) k += v * v;
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / k;
  }
  return rule;
}

}  // namespace abflux::quad
