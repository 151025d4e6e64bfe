#pragma once

// Special functions needed by the asymptotic formulas and the large-lambda
// expansion of the sine-kernel determinant.

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace levelcorr::special {

inline constexpr double kEulerGamma = 0.57721566490153286061;

/// Cosine integral Ci(x) = gamma + log x + int_0^x (cos t - 1)/t dt, x > 0.
inline double cosine_integral(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("cosine_integral: x must be positive");
  if (x <= 2.0) {
    const double x2 = x * x;
    double term = 1.0, sum = 0.0;
    for (int k = 1; k < 40; ++k) {
      term *= -x2 / ((2.0 * k - 1.0) * (2.0 * k));
      const double add = term / (2.0 * k);
      sum += add;
      if (std::abs(add) < 1e-18 * std::abs(sum)) break;
    }
    return kEulerGamma + std::log(x) + sum;
  }
  // Modified Lentz on the continued fraction of E1(ix); Ci(x) = -Re E1(ix).
  using C = std::complex<double>;
  constexpr double tiny = 1e-300;
  C b(1.0, x);
  C c(1.0 / tiny, 0.0);
  C d = 1.0 / b;
  C h = d;
  for (int i = 2; i < 10000; ++i) {
    const double a = -(i - 1.0) * (i - 1.0);
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const C del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  h *= C(std::cos(x), -std::sin(x));
  return -h.real();
}

/// Riemann zeta at real s > 1 by Euler-Maclaurin summation.
inline double riemann_zeta(double s) {
  if (!(s > 1.0)) throw std::invalid_argument("riemann_zeta: s must exceed 1");
  constexpr int n = 12;
  double sum = 0.0;
  for (int k = 1; k < n; ++k) sum += std::pow(k, -s);
  const double N = n;
  sum += std::pow(N, 1.0 - s) / (s - 1.0) + 0.5 * std::pow(N, -s);
  // Bernoulli corrections B_{2j}/(2j)! * s(s+1)...(s+2j-2) N^{-s-2j+1}.
  constexpr double b2j[] = {1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730, 7.0 / 6};
  double rising = s, fact = 2.0;
  for (int j = 1; j <= 7; ++j) {
    sum += b2j[j - 1] / fact * rising * std::pow(N, -s - 2.0 * j + 1.0);
    rising *= (s + 2.0 * j - 1.0) * (s + 2.0 * j);
    fact *= (2.0 * j + 1.0) * (2.0 * j + 2.0);
  }
  return sum;
}

/// log(G(1+nu) G(1-nu)) for |nu| <= 1/2, G the Barnes G-function.
inline double log_barnes_g_pair(double nu) {
  if (std::abs(nu) > 0.5 + 1e-15) throw std::invalid_argument("log_barnes_g_pair: |nu| must be <= 1/2");
  const double n2 = nu * nu;
  double out = -(1.0 + kEulerGamma) * n2;
  double p = n2;
  for (int m = 2; m < 200; ++m) {
    p *= n2;
    const double term = riemann_zeta(2.0 * m - 1.0) * p / m;
    out -= term;
    if (term < 1e-18) break;
  }
  return out;
}

/// Amplitude of the e^{i(nu+n) lambda} lambda^{-2(nu+n)^2} branch in the large-lambda
/// expansion of det(I - zeta K) with zeta = 1 - e^{2 pi i nu}, 0 < nu <= 1/2,
/// for n in {-2, -1, 0, 1}.
inline double fisher_hartwig_amplitude(int n, double nu) {
  const double a0 = std::exp(2.0 * log_barnes_g_pair(nu));
  auto sq = [](double x) { return x * x; };
  switch (n) {
    case 0:
      return a0;
    case -1:
      return a0 * sq(std::tgamma(1.0 - nu) / std::tgamma(nu));
    case 1:
      return a0 * sq(std::tgamma(1.0 + nu) / std::tgamma(-nu));
    case -2:
      return a0 * sq(std::tgamma(1.0 - nu) / std::tgamma(nu)) *
             sq(std::tgamma(2.0 - nu) / std::tgamma(nu - 1.0));
    default:
      throw std::invalid_argument("fisher_hartwig_amplitude: n must be in {-2,-1,0,1}");
  }
}

/// Trigamma psi_1(x) for x > 0.
inline double trigamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("trigamma: x must be positive");
  double acc = 0.0;
  while (x < 12.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double x2 = 1.0 / (x * x);
  // 1/x + 1/2x^2 + sum B_2k / x^{2k+1}
  const double series =
      1.0 / x + 0.5 * x2 +
      (1.0 / 6 - (1.0 / 30 - (1.0 / 42 - (1.0 / 30 - 5.0 / 66 * x2) * x2) * x2) * x2) * x2 / x;
  return acc + series;
}

}  // namespace levelcorr::special
