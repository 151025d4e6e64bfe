#pragma once

// Adaptive Dormand-Prince 8(5,3) stepping for complex state vectors driven by
// a real path parameter, with 7th-order dense output on every accepted step.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>

#include "levelcorr/detail/dop853_tableau.hpp"
#include "levelcorr/error.hpp"

namespace levelcorr::detail {

template <std::size_t Dim>
using CState = std::array<std::complex<double>, Dim>;

/// Dense interpolant of one accepted step on [tau0, tau0 + h].
template <std::size_t Dim>
struct DenseStep {
  double tau0 = 0.0;
  double h = 0.0;
  CState<Dim> y0{};
  std::array<CState<Dim>, dop853::kInterpolatorPower> F{};

  CState<Dim> operator()(double tau) const {
    const double x = (tau - tau0) / h;
    CState<Dim> y{};
    for (int i = 0; i < dop853::kInterpolatorPower; ++i) {
      const auto& f = F[dop853::kInterpolatorPower - 1 - i];
      const double m = (i % 2 == 0) ? x : 1.0 - x;
      for (std::size_t d = 0; d < Dim; ++d) y[d] = (y[d] + f[d]) * m;
    }
    for (std::size_t d = 0; d < Dim; ++d) y[d] += y0[d];
    return y;
  }
  double tau1() const { return tau0 + h; }
};

struct StepperOptions {
  double rtol = 1e-11;
  double atol = 1e-11;
  long max_steps = 2'000'000;
};

/// Integrates y' = f(tau, y) from tau0 to tau1 (tau1 > tau0). `on_step` receives
/// each accepted DenseStep and the state at its end; it may throw to abort.
/// Returns the state at tau1.
template <std::size_t Dim, class Rhs, class OnStep>
CState<Dim> integrate_dop853(Rhs&& f, double tau0, double tau1, CState<Dim> y, const StepperOptions& opt,
                             OnStep&& on_step) {
  using namespace dop853;
  using S = CState<Dim>;
  constexpr double kSafety = 0.9, kMinFactor = 0.2, kMaxFactor = 10.0, kExponent = -1.0 / 8.0;

  auto axpy = [](S& out, const S& base, double a, const S& x) {
    for (std::size_t d = 0; d < Dim; ++d) out[d] = base[d] + a * x[d];
  };
  auto rms = [](const S& v, const std::array<double, Dim>& scale) {
    double s = 0.0;
    for (std::size_t d = 0; d < Dim; ++d) s += std::norm(v[d]) / (scale[d] * scale[d]);
    return std::sqrt(s / Dim);
  };

  double tau = tau0;
  S fy = f(tau, y);

  // Initial step selection (Hairer-Norsett-Wanner, sec. II.4).
  double h;
  {
    std::array<double, Dim> scale;
    for (std::size_t d = 0; d < Dim; ++d) scale[d] = opt.atol + std::abs(y[d]) * opt.rtol;
    const double d0 = rms(y, scale), d1 = rms(fy, scale);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, tau1 - tau0);
    S y1;
    axpy(y1, y, h0, fy);
    const S f1 = f(tau + h0, y1);
    S df;
    for (std::size_t d = 0; d < Dim; ++d) df[d] = f1[d] - fy[d];
    const double d2 = rms(df, scale) / h0;
    const double h1 = (d1 <= 1e-15 && d2 <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                  : std::pow(0.01 / std::max(d1, d2), 1.0 / 8.0);
    h = std::min(100.0 * h0, h1);
  }

  std::array<S, kStagesExtended> K;
  long steps = 0;
  while (tau < tau1) {
    const double min_step =
        10.0 * std::abs(std::nextafter(tau, std::numeric_limits<double>::infinity()) - tau);
    bool rejected = false;
    while (true) {
      if (h < min_step) throw StepSizeUnderflow(tau);
      if (++steps > opt.max_steps) throw StepSizeUnderflow(tau);
      double hs = h;
      if (tau + hs > tau1 || tau1 - (tau + hs) < min_step) hs = tau1 - tau;

      K[0] = fy;
      S tmp;
      for (int s = 1; s < kStages; ++s) {
        for (std::size_t d = 0; d < Dim; ++d) {
          std::complex<double> acc = 0.0;
          for (int j = 0; j < s; ++j) acc += A[s][j] * K[j][d];
          tmp[d] = y[d] + hs * acc;
        }
        K[s] = f(tau + C[s] * hs, tmp);
      }
      S y_new;
      for (std::size_t d = 0; d < Dim; ++d) {
        std::complex<double> acc = 0.0;
        for (int j = 0; j < kStages; ++j) acc += B[j] * K[j][d];
        y_new[d] = y[d] + hs * acc;
      }
      const double tau_new = (hs == tau1 - tau) ? tau1 : tau + hs;
      K[kStages] = f(tau_new, y_new);

      std::array<double, Dim> scale;
      for (std::size_t d = 0; d < Dim; ++d)
        scale[d] = opt.atol + std::max(std::abs(y[d]), std::abs(y_new[d])) * opt.rtol;
      double e5 = 0.0, e3 = 0.0;
      for (std::size_t d = 0; d < Dim; ++d) {
        std::complex<double> a5 = 0.0, a3 = 0.0;
        for (int j = 0; j <= kStages; ++j) {
          a5 += E5[j] * K[j][d];
          a3 += E3[j] * K[j][d];
        }
        e5 += std::norm(a5) / (scale[d] * scale[d]);
        e3 += std::norm(a3) / (scale[d] * scale[d]);
      }
      double err = 0.0;
      if (e5 != 0.0 || e3 != 0.0) err = hs * e5 / std::sqrt((e5 + 0.01 * e3) * Dim);
      if (!std::isfinite(err)) err = 1e10;

      if (err < 1.0) {
        double factor = (err == 0.0) ? kMaxFactor : std::min(kMaxFactor, kSafety * std::pow(err, kExponent));
        if (rejected) factor = std::min(1.0, factor);

        // Extra stages for the dense output.
        for (int s = kStages + 1; s < kStagesExtended; ++s) {
          for (std::size_t d = 0; d < Dim; ++d) {
            std::complex<double> acc = 0.0;
            for (int j = 0; j < s; ++j) acc += A[s][j] * K[j][d];
            tmp[d] = y[d] + hs * acc;
          }
          K[s] = f(tau + C[s] * hs, tmp);
        }
        DenseStep<Dim> step;
        step.tau0 = tau;
        step.h = tau_new - tau;
        step.y0 = y;
        for (std::size_t d = 0; d < Dim; ++d) {
          const auto dy = y_new[d] - y[d];
          step.F[0][d] = dy;
          step.F[1][d] = hs * K[0][d] - dy;
          step.F[2][d] = 2.0 * dy - hs * (K[kStages][d] + K[0][d]);
          for (int r = 0; r < 4; ++r) {
            std::complex<double> acc = 0.0;
            for (int j = 0; j < kStagesExtended; ++j) acc += D[r][j] * K[j][d];
            step.F[3 + r][d] = hs * acc;
          }
        }
        on_step(step, y_new);
        y = y_new;
        fy = K[kStages];
        tau = tau_new;
        h *= factor;
        break;
      }
      h *= std::max(kMinFactor, kSafety * std::pow(err, kExponent));
      rejected = true;
    }
  }
  return y;
}

}  // namespace levelcorr::detail
