#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "levelcorr/quadrature.hpp"
#include "levelcorr/special.hpp"

using namespace levelcorr;

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  for (int n : {1, 2, 5, 12, 40}) {
    const auto& r = quad::gauss_legendre(n);
    for (int p = 0; p < 2 * n; ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], p);
      const double exact = (p % 2 == 1) ? 0.0 : 2.0 / (p + 1);
      EXPECT_NEAR(s, exact, 1e-14) << "n=" << n << " p=" << p;
    }
  }
}

TEST(GaussLegendre, MappedIntervalAndSpectralConvergence) {
  const auto r = quad::gauss_legendre(20, 0.0, 3.0);
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += r.weights[i] * std::exp(r.nodes[i]);
  EXPECT_NEAR(s, std::exp(3.0) - 1.0, 1e-13);
}

TEST(GaussLegendre, RejectsNonPositiveOrder) { EXPECT_THROW(quad::gauss_legendre(0), std::invalid_argument); }

TEST(Kronrod, AdaptiveHandlesEndpointSingularity) {
  auto f = [](double x) { return std::sqrt(x); };
  const auto r = quad::integrate_adaptive<double>(f, 0.0, 1.0, 1e-13);
  EXPECT_NEAR(r.value, 2.0 / 3.0, 1e-12);
}

TEST(Kronrod, ComplexIntegrand) {
  auto f = [](double x) { return std::exp(std::complex<double>(0.0, 5.0 * x)); };
  const auto r = quad::integrate_adaptive<std::complex<double>>(f, 0.0, 2.0, 1e-13);
  const auto exact = (std::exp(std::complex<double>(0.0, 10.0)) - 1.0) / std::complex<double>(0.0, 5.0);
  EXPECT_LT(std::abs(r.value - exact), 1e-12);
}

TEST(Chebyshev, InterpolatesAndExpandsSmoothFunction) {
  const int n = 41;
  const auto x = quad::chebyshev_lobatto(n, 0.5, 2.0);
  std::vector<double> v;
  for (double xi : x) v.push_back(std::log(xi));
  for (double t : {0.5, 0.77, 1.3, 1.99}) EXPECT_NEAR(quad::barycentric_lobatto(x, v.data(), t), std::log(t), 1e-13);
  const auto c = quad::chebyshev_coefficients(v.data(), n);
  EXPECT_LT(std::abs(c.back()), 1e-12);
  EXPECT_GT(std::abs(c[1]), 0.1);
  // T_k(-1) = (-1)^k recovers the left endpoint.
  double left = 0.0;
  for (int k = 0; k < n; ++k) left += (k % 2 ? -1.0 : 1.0) * c[k];
  EXPECT_NEAR(left, std::log(0.5), 1e-13);
}

// Reference values computed with mpmath at 30 digits.
TEST(Special, CosineIntegral) {
  EXPECT_NEAR(special::cosine_integral(0.5), -0.177784078806612901335810271071, 1e-15);
  EXPECT_NEAR(special::cosine_integral(1.0), 0.337403922900968134662646203889, 1e-15);
  EXPECT_NEAR(special::cosine_integral(2.0), 0.422980828774864995698565153198, 1e-15);
  EXPECT_NEAR(special::cosine_integral(std::numbers::pi), 0.0736679120464254859901009652302, 1e-15);
  EXPECT_NEAR(special::cosine_integral(10.0), -0.0454564330044553726345328299526, 1e-15);
  EXPECT_NEAR(special::cosine_integral(40 * std::numbers::pi), -0.0000633017092733496074579619972584, 1e-16);
}

TEST(Special, CosineIntegralMatchesQuadratureOfTail) {
  // Ci(pi) = -int_pi^inf cos t / t dt, summed over half-periods.
  double s = 0.0;
  for (int j = 0; j < 200000; ++j) {
    const double a = std::numbers::pi * (1 + j), b = a + std::numbers::pi;
    s += quad::integrate_adaptive<double>([](double t) { return std::cos(t) / t; }, a, b, 1e-16).value;
  }
  // Alternating tail beyond the last half-period is below 1/(2 * 2e5 pi).
  EXPECT_NEAR(-s, special::cosine_integral(std::numbers::pi), 1e-6);
}

TEST(Special, ZetaAndBarnes) {
  EXPECT_NEAR(special::riemann_zeta(3.0), 1.20205690315959428539973816151, 1e-15);
  EXPECT_NEAR(special::riemann_zeta(5.0), 1.03692775514336992633136548646, 1e-15);
  EXPECT_NEAR(std::exp(2 * special::log_barnes_g_pair(0.05)), 0.992137470662893141408321859573, 1e-14);
  EXPECT_NEAR(std::exp(2 * special::log_barnes_g_pair(0.25)), 0.817075023736997237309870148544, 1e-14);
  EXPECT_NEAR(std::exp(2 * special::log_barnes_g_pair(0.5)), 0.416028158583349638359134995444, 1e-14);
}

TEST(Special, Trigamma) {
  EXPECT_NEAR(special::trigamma(1.0), 1.64493406684822643647241516665, 1e-14);
  EXPECT_NEAR(special::trigamma(2.5), 0.490357756100234864972801055494, 1e-14);
  EXPECT_NEAR(special::trigamma(51.0), 0.0198013332266971258059706450657, 1e-15);
}
