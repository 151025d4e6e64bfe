#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "levelcorr/autocov.hpp"

using namespace levelcorr;
constexpr double pi = std::numbers::pi;

namespace {

const SpectrumInterpolant& shared_interpolant() {
  static const SpectrumInterpolant s = SpectrumInterpolant::build(SpectrumConfig{}, SpectrumInterpolant::Options{});
  return s;
}

const AutocovSeries& shared_series() {
  static const AutocovSeries a = autocov_exact_series(50, shared_interpolant());
  return a;
}

// Counting route: with E_n(s) the probability of n points in (0, s),
// int_0^inf E_n ds = 1 + delta I_n (n >= 1) and (1 + delta I_0)/2 (n = 0).
// E_n from the generating polynomial prod_i (1 - mu_i + z mu_i) over the
// eigenvalues mu_i of the sine kernel, computed here independently of the library.
std::vector<double> counting_oracle(int k_max) {
  const double s_max = k_max + 16.0;
  Eigen::VectorXd x, w;
  {
    const int n = 320;
    const auto r = quad::gauss_legendre(n, 0.0, s_max);
    x = Eigen::Map<const Eigen::VectorXd>(r.nodes.data(), n);
    w = Eigen::Map<const Eigen::VectorXd>(r.weights.data(), n);
  }
  std::vector<double> e(k_max + 1, 0.0);
  for (int q = 0; q < x.size(); ++q) {
    const double s = x(q);
    const int m = static_cast<int>(2 * s) + 40;
    Eigen::VectorXd t(m), c(m);
    // Legendre nodes on (0, s) by Golub-Welsch.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
    for (int i = 1; i < m; ++i) J(i, i - 1) = J(i - 1, i) = i / std::sqrt(4.0 * i * i - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gw(J);
    for (int i = 0; i < m; ++i) {
      t(i) = 0.5 * s * (gw.eigenvalues()(i) + 1);
      c(i) = s * gw.eigenvectors()(0, i) * gw.eigenvectors()(0, i);
    }
    Eigen::MatrixXd K(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double d = pi * (t(i) - t(j));
        K(i, j) = std::sqrt(c(i) * c(j)) * (i == j ? 1.0 : std::sin(d) / d);
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
    std::vector<double> p{1.0};
    for (int i = 0; i < m; ++i) {
      const double mu = std::clamp(es.eigenvalues()(i), 0.0, 1.0);
      p.push_back(0.0);
      for (std::size_t j = p.size() - 1; j > 0; --j) p[j] = p[j] * (1 - mu) + p[j - 1] * mu;
      p[0] *= 1 - mu;
    }
    for (int k = 0; k <= k_max && k < static_cast<int>(p.size()); ++k) e[k] += w(q) * p[k];
  }
  std::vector<double> di(k_max + 1);
  di[0] = 2 * e[0] - 1;
  for (int k = 1; k <= k_max; ++k) di[k] = e[k] - 1;
  return di;
}

// counting_oracle(50) with 1400 nodes, frozen.
constexpr double kFrozen[] = {
    0.17999387768563535,     -0.055505000874376154,   -0.013895900285992857,  -0.005959174023015046,
    -0.0032882391153992163,  -0.002081729173552427,   -0.0014359970182372672, -0.0010503632166810606,
    -0.0008017114431170258,  -0.0006320362206774233,  -0.0005110909773322625, -0.00042184310702275685,
    -0.00035410399297219897, -0.00030147457466200844, -0.00025977104830743336, -0.00022616414814058405};
constexpr int kFrozenFar[] = {20, 30, 40, 50};
constexpr double kFrozenFarValues[] = {-0.00012699693776119236, -5.636539622411174e-05, -3.1688585737765784e-05,
                                       -2.0275316589879466e-05};

}  // namespace

TEST(Autocov, MatchesLiveCountingOracle) {
  const auto di = counting_oracle(3);
  const auto& a = shared_series();
  for (int k = 0; k <= 3; ++k) EXPECT_NEAR(a.values[k], di[k], 1e-10) << "k = " << k;
}

TEST(Autocov, MatchesFrozenCountingOracle) {
  const auto& a = shared_series();
  EXPECT_NEAR(a.values[0], kFrozen[0], 2e-11);
  for (int k = 1; k < 16; ++k) EXPECT_NEAR(a.values[k], kFrozen[k], 1e-12) << "k = " << k;
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a.values[kFrozenFar[i]], kFrozenFarValues[i], 1e-12);
}

TEST(Autocov, ZeroLagIsSpacingVariance) {
  // delta I_0 = int (s - 1)^2 P(s) ds.
  double v = 0.0;
  for (int p = 0; p < 10; ++p) {
    const auto r = quad::gauss_legendre(16, 0.5 * p, 0.5 * (p + 1));
    for (std::size_t i = 0; i < r.size(); ++i)
      v += r.weights[i] * (r.nodes[i] - 1) * (r.nodes[i] - 1) * spacing_distribution(r.nodes[i]);
  }
  EXPECT_NEAR(shared_series().values[0], v, 1e-6);
}

TEST(Autocov, ApproachesDyson) {
  const auto& a = shared_series();
  double prev = 1.0;
  for (int k = 10; k <= 40; ++k) {
    const double r = a.values[k] / autocov_dyson(k);
    EXPECT_GT(r, 0.9);
    EXPECT_LT(r, 1.1);
    EXPECT_LT(std::abs(r - 1), prev) << "k = " << k;
    prev = std::abs(r - 1);
  }
}

TEST(Autocov, SubleadingRemainderDecreases) {
  const auto& a = shared_series();
  double prev = 1.0;
  for (int k : {10, 15, 20, 30, 40, 50}) {
    const double r = std::pow(k, 4) * std::abs(a.values[k] - autocov_asymptotic(k));
    EXPECT_LT(r, prev) << "k = " << k;
    prev = r;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(Autocov, CosineIntegralTermIsHigherOrder) {
  // Ci(x) ~ sin(x)/x - cos(x)/x^2, so the Ci term is O(k^-6) at integer k.
  for (int k : {10, 20, 40}) {
    const double d = std::abs(autocov_asymptotic_ci(k) - autocov_asymptotic(k));
    const double bound = 3.0 / (2 * std::pow(pi, 4)) * 2.0 / (pi * pi) / std::pow(k, 6);
    EXPECT_LT(d, bound) << k;
    EXPECT_GT(d, 0.25 * bound) << k;
  }
}

TEST(Autocov, ParsevalIdentity) {
  EXPECT_NEAR(autocov_energy(shared_series()), spectrum_energy(shared_interpolant()), 1e-6);
}

TEST(Autocov, SumRuleMatchesAsymptoticTail) {
  // delta I_0 + 2 sum_k delta I_k = 0, so the truncated sum equals minus the tail.
  const auto& a = shared_series();
  for (int K : {20, 30, 50}) {
    double tail = 1.0 / (pi * pi * 200000.5);
    for (int k = 200000; k > K; --k) tail -= 2 * autocov_asymptotic(k);
    const double r = sum_rule_residual(K, a);
    EXPECT_NEAR(r, tail, 5e-8) << K;
    EXPECT_NEAR(r, dyson_tail_estimate(K), 1e-5) << K;
  }
  EXPECT_NEAR(sum_rule_residual(50, a), 1.0 / (pi * pi * 50), 1e-4);
}

TEST(Autocov, FormulaSeries) {
  const auto s = autocov_formula_series(5, AutocovBackend::dyson);
  EXPECT_TRUE(std::isnan(s.values[0]));
  EXPECT_DOUBLE_EQ(s.values[3], autocov_dyson(3));
  EXPECT_THROW(autocov_formula_series(5, AutocovBackend::exact), std::invalid_argument);
  EXPECT_THROW(sum_rule_residual(5, s), std::invalid_argument);
}

TEST(Autocov, RejectsBadLags) {
  EXPECT_THROW(autocov_dyson(0), std::invalid_argument);
  EXPECT_THROW(autocov_asymptotic(-1), std::invalid_argument);
  EXPECT_THROW(autocov_exact(-1, shared_interpolant()), std::invalid_argument);
  EXPECT_THROW(sum_rule_residual(51, shared_series()), std::invalid_argument);
  EXPECT_EQ(autocov_backend_from_string("asymptotic_ci"), AutocovBackend::asymptotic_ci);
  EXPECT_THROW(autocov_backend_from_string("x"), std::invalid_argument);
}

TEST(Autocov, RefusesUnresolvableLag) {
  AutocovConfig cfg;
  cfg.max_relative_error = 1e-20;
  EXPECT_THROW(autocov_exact(5, shared_interpolant(), cfg), ResolutionError);
}

TEST(Autocov, ThreadCountDoesNotChangeValues) {
  const auto one = autocov_exact_series(12, shared_interpolant(), {}, 1);
  const auto many = autocov_exact_series(12, shared_interpolant(), {}, 4);
  EXPECT_EQ(one.values, many.values);
}
