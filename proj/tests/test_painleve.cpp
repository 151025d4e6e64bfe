#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "levelcorr/fredholm.hpp"
#include "levelcorr/painleve.hpp"

using namespace levelcorr;
using std::numbers::pi;

TEST(Series, LeadingCoefficients) {
  const auto c = series_sigma0(1.0, 2);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_NEAR(c[0].real(), -1.0 / (2 * pi), 1e-16);
  EXPECT_NEAR(c[1].real(), -1.0 / (4 * pi * pi), 1e-16);
}

TEST(Series, ZeroZetaGivesZeroSeries) {
  for (auto v : series_sigma0(0.0, 8)) EXPECT_EQ(v, cplx(0.0));
}

TEST(Series, ThirdCoefficientFromLowestOrderBalance) {
  // The t^3 coefficient of the sigma-form, with s = c1 t + c2 t^2 + c3 t^3, is
  // 8 c1^2 c3 + 24 c2 c3 ... restricted to the terms linear in c3 plus
  // 16 c1 c2^2 (from A = c2 t^2 + 2 c3 t^3 and 4 s'^2 = 4 c1^2 + 16 c1 c2 t).
  // Solving 4 * 4 c1^2 c3 ... by hand: c3 = 16 c1 c2^2 / (-16 c1^2) = c1^3.
  const double c1 = -1.0 / (2 * pi);
  const auto c = series_sigma0(1.0, 3);
  EXPECT_NEAR(c[2].real(), c1 * c1 * c1, 1e-17);
  EXPECT_NEAR(c[2].imag(), 0.0, 1e-20);
}

TEST(Series, CoefficientsAnnihilateSigmaForm) {
  const cplx zeta = 1.0 - std::polar(1.0, 2.0);
  const auto c = series_sigma0(zeta, 20);
  for (double t : {0.05, 0.1, 0.2}) {
    cplx s = 0, sp = 0, spp = 0;
    for (int k = 1; k <= 20; ++k) {
      s += c[k - 1] * std::pow(t, k);
      sp += double(k) * c[k - 1] * std::pow(t, k - 1);
      spp += double(k) * (k - 1) * c[k - 1] * std::pow(t, k - 2);
    }
    auto [F, scale] = sigma_form_residual(t, s, sp, spp);
    EXPECT_LT(F / scale, 1e-15) << t;
  }
}

TEST(Series, RejectsBadInput) {
  EXPECT_THROW(series_sigma0(1.0, 1), std::invalid_argument);
  EXPECT_THROW(series_sigma0(cplx(NAN, 0), 4), std::invalid_argument);
}

TEST(SpectralParameter, CircleAndTrivialCase) {
  for (double w : {0.1, 1.0, 2.5, pi}) {
    const auto p = SpectralParameter::from_omega(w);
    EXPECT_NEAR(std::abs(1.0 - p.zeta()), 1.0, 1e-15);
  }
  EXPECT_TRUE(SpectralParameter::from_omega(0.0).trivial());
  EXPECT_THROW(SpectralParameter::from_omega(4.0), std::invalid_argument);
  EXPECT_FALSE(SpectralParameter::from_zeta(0.5).on_circle());
}

TEST(Solve, TrivialZetaGivesZeroTrajectory) {
  const auto tr = solve_sigma0(SpectralParameter::from_omega(0.0), 10.0);
  for (std::size_t i = 0; i < tr.t_grid.size(); ++i) {
    EXPECT_EQ(tr.sigma[i], cplx(0.0));
    EXPECT_EQ(tr.log_integral[i], cplx(0.0));
  }
}

TEST(Solve, SmallTMatchesTwoTermSeries) {
  const auto tr = solve_sigma0(SpectralParameter::from_zeta(1.0), 0.5, {}, 0.01);
  for (std::size_t i = 0; i < tr.t_grid.size(); ++i) {
    const double t = tr.t_grid[i];
    const double two = -t / (2 * pi) - t * t / (4 * pi * pi);
    EXPECT_NEAR(tr.sigma[i].real(), two, 1.1 * std::pow(t / (2 * pi), 3) + 1e-15);
  }
}

TEST(Solve, GridInvariants) {
  for (double w : {pi / 8, pi / 2, pi}) {
    const auto tr = solve_sigma0(SpectralParameter::from_omega(w), 12.0, {}, 0.25);
    EXPECT_EQ(tr.sigma.front(), cplx(0.0));
    EXPECT_EQ(tr.log_integral.front(), cplx(0.0));
    for (double r : tr.residual) EXPECT_LT(r, 1e-9);
  }
}

TEST(Solve, IntegratorAgreesWithSeriesInsideSeriesRegion) {
  // A low-order series hands over early, so the integrator covers the region
  // where the order-24 series is exact to rounding.
  SolverConfig low;
  low.series_order = 4;
  const auto p = SpectralParameter::from_omega(2.0);
  GeneratingFunction g(p, low);
  SolverConfig high;
  high.series_order = 24;
  GeneratingFunction ref(p, high);
  ASSERT_LT(g.series_radius(), ref.series_radius() / 4);
  for (double t : {ref.series_radius() / 4, ref.series_radius() / 2}) {
    EXPECT_LT(std::abs(g.at(t).sigma - ref.at(t).sigma), 1e-10) << t;
    EXPECT_LT(std::abs(g.at(t).log_integral - ref.at(t).log_integral), 1e-10) << t;
  }
}

TEST(Solve, RealZetaStaysReal) {
  for (double z : {0.3, 1.0}) {
    GeneratingFunction g(SpectralParameter::from_zeta(z), {});
    for (double t : {0.5, 3.0, 10.0, 25.0}) {
      const auto s = g.at(t);
      EXPECT_EQ(s.sigma.imag(), 0.0);
      EXPECT_EQ(s.log_integral.imag(), 0.0);
      EXPECT_LT(s.sigma.real(), 0.0);
    }
  }
}

TEST(Solve, ConjugationSymmetry) {
  const cplx z = 1.0 - std::polar(1.0, 1.3);
  GeneratingFunction a(SpectralParameter::from_zeta(z), {});
  GeneratingFunction b(SpectralParameter::from_zeta(std::conj(z)), {});
  for (double t : {0.2, 2.0, 7.5, 19.0}) {
    EXPECT_LT(std::abs(a.at(t).sigma - std::conj(b.at(t).sigma)), 1e-11);
    EXPECT_LT(std::abs(a.at(t).log_integral - std::conj(b.at(t).log_integral)), 1e-11);
  }
}

TEST(Solve, GapProbabilityAtUnitInterval) {
  const double e1 = std::exp(log_generating_function(SpectralParameter::from_zeta(1.0), 2 * pi).real());
  EXPECT_NEAR(e1, fredholm::gap_probability(1.0), 1e-12);
  EXPECT_NEAR(e1, 0.17021742137918552, 1e-12);
}

TEST(Solve, MatchesNystromAtQuarterCircle) {
  const auto p = SpectralParameter::from_omega(pi / 2);
  const cplx L = log_generating_function(p, 5.0);
  const cplx d = fredholm::sine_kernel_det({p.zeta(), 5.0 / (2 * pi), 60});
  EXPECT_LT(std::abs(std::exp(L) - d), 1e-8);
}

TEST(Solve, ZeroLambdaIsZero) {
  EXPECT_EQ(log_generating_function(SpectralParameter::from_omega(1.0), 0.0), cplx(0.0));
  EXPECT_THROW(log_generating_function(SpectralParameter::from_omega(1.0), -1.0), std::invalid_argument);
}

TEST(Solve, ResidualDriftIsReported) {
  SolverConfig cfg;
  cfg.residual_tol = 1e-22;
  try {
    solve_sigma0(SpectralParameter::from_omega(1.0), 5.0, cfg);
    FAIL() << "expected ResidualDriftError";
  } catch (const ResidualDriftError& e) {
    EXPECT_GT(e.where(), 0.0);
    EXPECT_GT(e.residual(), 1e-22);
  }
}

TEST(Solve, TrajectoryCsvDump) {
  const auto tr = solve_sigma0(SpectralParameter::from_zeta(1.0), 1.0, {}, 0.5);
  const std::string path = ::testing::TempDir() + "/traj.csv";
  tr.write_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,re_sigma,im_sigma,re_log_integral,im_log_integral");
}
