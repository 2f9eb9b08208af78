#include <gtest/gtest.h>

#include <boost/math/constants/constants.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "abflux/specfun.hpp"

using namespace abflux;
using specfun::bessel_j;
using specfun::bessel_y;
using specfun::laguerre;

namespace {

using Big = boost::multiprecision::cpp_bin_float_100;

// Ascending series in 100-digit arithmetic; the cancellation at x <= 60
// costs fewer than 30 digits.
struct BigBessel {
  Big j0, j1, y0, y1;
};

BigBessel series_oracle(double xd) {
  const Big x = xd;
  const Big pi = boost::math::constants::pi<Big>();
  const Big gamma = boost::math::constants::euler<Big>();
  const Big h = x / 2;
  const Big t = -h * h;
  Big term0 = 1, term1 = h;  // (-x^2/4)^k/(k!)^2, (x/2)(-x^2/4)^k/(k!(k+1)!)
  Big j0 = 0, j1 = 0, s0 = 0, s1 = 0, harm = 0;
  for (int k = 0; k < 400; ++k) {
    if (k > 0) {
      term0 *= t / (Big(k) * k);
      term1 *= t / (Big(k) * (k + 1));
      harm += Big(1) / k;
    }
    j0 += term0;
    j1 += term1;
    s0 += harm * term0;                                      // sum H_k (-1)^k (x/2)^{2k}/(k!)^2
    s1 += (2 * harm + Big(1) / (k + 1) - 2 * gamma) * term1;  // (psi(k+1)+psi(k+2)) ...
    if (k > 10 && abs(term0) * (harm + 1) < Big("1e-90") && abs(term1) * (harm + 3) < Big("1e-90")) {
      break;
    }
  }
  const Big lg = log(h);
  BigBessel out;
  out.j0 = j0;
  out.j1 = j1;
  out.y0 = (2 / pi) * ((lg + gamma) * j0 - s0);
  out.y1 = -2 / (pi * x) + (2 / pi) * lg * j1 - s1 / pi;
  return out;
}

// 1e-12 relative, measured against the envelope sqrt(2/(pi x)) once the
// functions oscillate.
double scale(double x, double ref) {
  if (x < 2.0) return std::abs(ref);
  return std::max(std::abs(ref), std::sqrt(2.0 / (std::numbers::pi * x)));
}

}  // namespace

TEST(Bessel, ValuesAtZero) {
  EXPECT_EQ(bessel_j(0, 0.0), 1.0);
  EXPECT_EQ(bessel_j(1, 0.0), 0.0);
}

TEST(Bessel, ReferenceValuesAtOne) {
  const auto o = series_oracle(1.0);
  EXPECT_NEAR(bessel_j(0, 1.0), o.j0.convert_to<double>(), 1e-16);
  EXPECT_NEAR(bessel_y(0, 1.0), o.y0.convert_to<double>(), 1e-16);
  EXPECT_NEAR(bessel_y(1, 1.0), o.y1.convert_to<double>(), 1e-16);
  EXPECT_NEAR(bessel_j(0, 1.0), 0.76519768655796655, 1e-16);
  EXPECT_NEAR(bessel_y(0, 1.0), 0.08825696421567696, 1e-16);
  EXPECT_NEAR(bessel_y(1, 1.0), -0.78121282130028872, 1e-16);
}

TEST(Bessel, AgreesWithExtendedPrecisionSeries) {
  double worst = 0.0;
  std::vector<double> xs;
  for (double x = 0.01; x < 60.0; x *= 1.013) xs.push_back(x);
  for (double b : {8.0, 25.0}) {
    xs.push_back(std::nextafter(b, 0.0));
    xs.push_back(b);
    xs.push_back(std::nextafter(b, 100.0));
  }
  for (double x : xs) {
    const auto o = series_oracle(x);
    const auto b = specfun::bessel_all(x);
    const double r[4] = {o.j0.convert_to<double>(), o.j1.convert_to<double>(),
                         o.y0.convert_to<double>(), o.y1.convert_to<double>()};
    const double v[4] = {b.j0, b.j1, b.y0, b.y1};
    for (int k = 0; k < 4; ++k) {
      const double err = std::abs(v[k] - r[k]) / scale(x, r[k]);
      worst = std::max(worst, err);
      EXPECT_LE(err, specfun::kBesselAccuracy.rel_tol) << "x=" << x << " k=" << k;
    }
    EXPECT_EQ(bessel_j(0, x), b.j0);
    EXPECT_EQ(bessel_y(1, x), b.y1);
  }
  RecordProperty("worst_scaled_error", std::to_string(worst));
}

TEST(Bessel, LargeArgumentsAgreeWithBoost) {
  for (double x = 60.0; x < 3000.0; x *= 1.07) {
    const auto b = specfun::bessel_all(x);
    const double r[4] = {boost::math::cyl_bessel_j(0, x), boost::math::cyl_bessel_j(1, x),
                         boost::math::cyl_neumann(0, x), boost::math::cyl_neumann(1, x)};
    const double v[4] = {b.j0, b.j1, b.y0, b.y1};
    for (int k = 0; k < 4; ++k) {
      EXPECT_LE(std::abs(v[k] - r[k]) / scale(x, r[k]), specfun::kBesselAccuracy.rel_tol)
          << "x=" << x << " k=" << k;
    }
  }
}

TEST(Bessel, Wronskian) {
  for (double x = 0.1; x <= 100.0; x *= 1.05) {
    const auto b = specfun::bessel_all(x);
    const double w = b.j1 * b.y0 - b.j0 * b.y1;
    const double exact = 2.0 / (std::numbers::pi * x);
    EXPECT_NEAR(w / exact, 1.0, 1e-10) << x;
  }
}

TEST(Bessel, DerivativeOfJ0IsMinusJ1) {
  const double h = 1e-4;
  for (double x = 0.5; x < 60.0; x += 0.37) {
    const double d = (bessel_j(0, x + h) - bessel_j(0, x - h)) / (2 * h);
    EXPECT_NEAR(d, -bessel_j(1, x), 1e-8) << x;
  }
}

TEST(Bessel, SecondKindNearOriginIsFiniteAndDiverging) {
  const double a = bessel_y(0, 1e-10), b = bessel_y(0, 1e-100);
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_TRUE(std::isfinite(b));
  EXPECT_LT(b, a);
  EXPECT_LT(a, -10.0);
}

TEST(Bessel, DomainErrors) {
  EXPECT_THROW(bessel_j(0, -1.0), DomainError);
  EXPECT_THROW(bessel_j(2, 1.0), DomainError);
  EXPECT_THROW(bessel_j(0, NAN), DomainError);
  EXPECT_THROW(bessel_y(0, 0.0), DomainError);
  EXPECT_THROW(bessel_y(1, -2.0), DomainError);
  EXPECT_THROW(bessel_y(0, INFINITY), DomainError);
}

TEST(Laguerre, LowOrders) {
  EXPECT_EQ(laguerre(0, 0.3, 7.0), 1.0);
  EXPECT_DOUBLE_EQ(laguerre(1, 0.5, 2.0), -0.5);
}

TEST(Laguerre, DegreeFiveExactRational) {
  using boost::multiprecision::cpp_rational;
  // L_5(x) = sum_k C(5,k) (-x)^k / k!
  cpp_rational x = 3, sum = 0, binom = 1, fact = 1, power = 1;
  for (int k = 0; k <= 5; ++k) {
    if (k > 0) {
      binom = binom * (5 - k + 1) / k;
      fact *= k;
      power *= -x;
    }
    sum += binom * power / fact;
  }
  EXPECT_NEAR(laguerre(5, 0.0, 3.0), sum.convert_to<double>(), 1e-15);
}

TEST(Laguerre, AgreesWithExplicitSumUpToDegree200) {
  using Wide = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<400>>;
  // explicit sum with c_{k+1}/c_k = -(n-k) x / ((k+1)(alpha+k+1))
  auto oracle = [](int n, double alpha, double xd) {
    const Wide x = xd, a = alpha;
    Wide c = 1;
    for (int j = 1; j <= n; ++j) c *= (a + j) / j;
    Wide sum = c;
    for (int k = 0; k < n; ++k) {
      c *= -Wide(n - k) * x / ((k + 1) * (a + k + 1));
      sum += c;
    }
    return sum.convert_to<double>();
  };
  for (int n : {7, 30, 64, 128, 200}) {
    for (double alpha : {-0.5, 0.0, 0.5, 2.0, 5.0}) {
      const double x_hi = 4.0 * n + 2.0 * alpha + 2.0;
      for (double x : {0.0, 0.01, 0.7, 3.3, 0.25 * x_hi, 0.5 * x_hi, 0.9 * x_hi}) {
        const double ref = oracle(n, alpha, x);
        const double next = oracle(n + 1, alpha, x);
        // consecutive degrees never vanish together
        const double env = std::hypot(ref, next);
        EXPECT_LE(std::abs(laguerre(n, alpha, x) - ref), specfun::kLaguerreAccuracy.rel_tol * env)
            << "n=" << n << " alpha=" << alpha << " x=" << x;
      }
    }
  }
}

TEST(Laguerre, RecurrenceResidualProperty) {
  std::mt19937 rng(20240611);
  std::uniform_int_distribution<int> nd(1, 199);
  std::uniform_real_distribution<double> ad(-0.99, 10.0);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = nd(rng);
    const double alpha = ad(rng);
    std::uniform_real_distribution<double> xd(0.0, 4.0 * n + 2.0 * alpha + 2.0);
    const double x = xd(rng);
    const double lm = laguerre(n - 1, alpha, x), l0 = laguerre(n, alpha, x),
                 lp = laguerre(n + 1, alpha, x);
    const double t1 = (n + 1) * lp, t2 = (2 * n + 1 + alpha - x) * l0, t3 = (n + alpha) * lm;
    const double size = std::max({std::abs(t1), std::abs(t2), std::abs(t3)});
    EXPECT_LE(std::abs(t1 - t2 + t3), 1e-10 * size);
  }
}

TEST(Laguerre, DomainErrors) {
  EXPECT_THROW(laguerre(-1, 0.0, 1.0), DomainError);
  EXPECT_THROW(laguerre(501, 0.0, 1.0), DomainError);
  EXPECT_THROW(laguerre(3, -1.0, 1.0), DomainError);
  EXPECT_THROW(laguerre(3, 0.0, -0.1), DomainError);
}
