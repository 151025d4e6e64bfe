#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "levelcorr/detail/parallel.hpp"
#include "levelcorr/error.hpp"
#include "levelcorr/quadrature.hpp"
#include "levelcorr/special.hpp"
#include "levelcorr/spectral.hpp"

namespace levelcorr {

enum class AutocovBackend { exact, dyson, asymptotic, asymptotic_ci, montecarlo };

inline const char* to_string(AutocovBackend b) {
  switch (b) {
    case AutocovBackend::exact: return "exact";
    case AutocovBackend::dyson: return "dyson";
    case AutocovBackend::asymptotic: return "asymptotic";
    case AutocovBackend::asymptotic_ci: return "asymptotic_ci";
    default: return "montecarlo";
  }
}

inline AutocovBackend autocov_backend_from_string(const std::string& s) {
  for (auto b : {AutocovBackend::exact, AutocovBackend::dyson, AutocovBackend::asymptotic,
                 AutocovBackend::asymptotic_ci, AutocovBackend::montecarlo})
    if (s == to_string(b)) return b;
  throw std::invalid_argument("unknown autocov backend '" + s + "'");
}

/// delta I_k for k = 0..k_max (k = 0 is NaN for the asymptotic backends).
struct AutocovSeries {
  int k_max = 0;
  std::vector<double> values;
  AutocovBackend backend = AutocovBackend::exact;
  std::optional<std::vector<double>> uncertainty;

  void write_csv(std::ostream& out) const {
    out.precision(17);
    out << "k,backend,value,uncertainty\n";
    for (int k = 0; k <= k_max; ++k) {
      out << k << ',' << to_string(backend) << ',' << values[k] << ',';
      if (uncertainty) out << (*uncertainty)[k];
      out << '\n';
    }
  }
};

inline void require_positive_lag(int k, const char* who) {
  if (k < 1) throw std::invalid_argument(std::string(who) + ": k must be >= 1");
}

/// -1/(2 pi^2 k^2).
inline double autocov_dyson(int k) {
  require_positive_lag(k, "autocov_dyson");
  constexpr double pi = std::numbers::pi;
  return -1.0 / (2 * pi * pi * double(k) * k);
}

/// Dyson term plus the k^-4 (log k + const) correction.
inline double autocov_asymptotic(int k) {
  require_positive_lag(k, "autocov_asymptotic");
  constexpr double pi = std::numbers::pi;
  const double k4 = std::pow(double(k), 4);
  return autocov_dyson(k) - 3.0 / (2 * std::pow(pi, 4) * k4) *
                                (std::log(2 * pi * k) + special::kEulerGamma - 11.0 / 6.0);
}

/// As autocov_asymptotic with the cosine-integral term Ci(pi k) kept.
inline double autocov_asymptotic_ci(int k) {
  require_positive_lag(k, "autocov_asymptotic_ci");
  constexpr double pi = std::numbers::pi;
  const double k4 = std::pow(double(k), 4);
  return autocov_dyson(k) - 3.0 / (2 * std::pow(pi, 4) * k4) *
                                (std::log(2 * pi * k) - special::cosine_integral(pi * k) +
                                 special::kEulerGamma - 11.0 / 6.0);
}

struct AutocovConfig {
  /// Target absolute quadrature error per lag.
  double tolerance = 1e-9;
  /// Gauss nodes per period of cos(omega k), and the minimum per panel.
  int nodes_per_oscillation = 10;
  int min_nodes = 32;
  /// Refuse lags where the spectrum's error bound exceeds this fraction of the Dyson term.
  double max_relative_error = 1e-3;
};

namespace detail {

template <class F>
double cosine_panel(F&& f, double a, double b, int k, const AutocovConfig& cfg) {
  const double periods = k * (b - a) / (2 * std::numbers::pi);
  const int n = std::max(cfg.min_nodes, static_cast<int>(std::ceil(cfg.nodes_per_oscillation * periods)) + 1);
  const auto r = quad::gauss_legendre(n, a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += r.weights[i] * f(r.nodes[i]) * std::cos(k * r.nodes[i]);
  return s;
}

}  // namespace detail

/// (1/pi) int_0^pi S(omega) cos(omega k) d omega. Panels of the interpolant are
/// integrated with Gauss rules sized to the oscillation; [0, omega_min] uses
/// the closed-form small-omega model on dyadic panels.
inline double autocov_exact(int k, const SpectrumInterpolant& s, const AutocovConfig& cfg = {}) {
  if (k < 0) throw std::invalid_argument("autocov_exact: k must be >= 0");
  const double bound = s.max_sample_error() + s.trailing_coefficient();
  if (k > 0 && bound > cfg.max_relative_error * std::abs(autocov_dyson(k)))
    throw ResolutionError("autocov_exact: spectrum error " + std::to_string(bound) +
                          " too large to resolve lag " + std::to_string(k));
  if (bound > cfg.tolerance)
    throw ResolutionError("autocov_exact: spectrum error " + std::to_string(bound) + " exceeds tolerance");
  double total = 0.0;
  const auto& e = s.options().edges;
  for (std::size_t p = 0; p + 1 < e.size(); ++p)
    total += detail::cosine_panel([&](double w) { return s(w); }, e[p], e[p + 1], k, cfg);
  double hi = s.omega_min();
  for (int j = 0; j < 60; ++j) {
    const double lo = 0.5 * hi;
    total += detail::cosine_panel([&](double w) { return s.small_model(w); }, lo, hi, k, cfg);
    hi = lo;
  }
  return total / std::numbers::pi;
}

inline AutocovSeries autocov_exact_series(int k_max, const SpectrumInterpolant& s, const AutocovConfig& cfg = {},
                                          unsigned threads = default_threads()) {
  if (k_max < 0) throw std::invalid_argument("autocov_exact_series: k_max must be >= 0");
  AutocovSeries out;
  out.k_max = k_max;
  out.backend = AutocovBackend::exact;
  out.values.resize(k_max + 1);
  detail::parallel_for(k_max + 1, threads, [&](std::size_t k) { out.values[k] = autocov_exact(int(k), s, cfg); });
  return out;
}

/// Closed-form series; entry 0 is NaN.
inline AutocovSeries autocov_formula_series(int k_max, AutocovBackend b) {
  AutocovSeries out;
  out.k_max = k_max;
  out.backend = b;
  out.values.assign(k_max + 1, std::numeric_limits<double>::quiet_NaN());
  for (int k = 1; k <= k_max; ++k) {
    switch (b) {
      case AutocovBackend::dyson: out.values[k] = autocov_dyson(k); break;
      case AutocovBackend::asymptotic: out.values[k] = autocov_asymptotic(k); break;
      case AutocovBackend::asymptotic_ci: out.values[k] = autocov_asymptotic_ci(k); break;
      default: throw std::invalid_argument("autocov_formula_series: not a closed-form backend");
    }
  }
  return out;
}

/// delta I_0 + 2 sum_{k=1}^{k_max} delta I_k.
inline double sum_rule_residual(int k_max, const AutocovSeries& series) {
  if (series.backend != AutocovBackend::exact)
    throw std::invalid_argument("sum_rule_residual: series must come from the exact backend");
  if (k_max < 1 || k_max > series.k_max) throw std::invalid_argument("sum_rule_residual: k_max out of range");
  double r = series.values[0];
  for (int k = 1; k <= k_max; ++k) r += 2 * series.values[k];
  return r;
}

/// Value of the residual predicted by the Dyson tail,
/// -2 sum_{k > k_max} dyson(k) = psi_1(k_max + 1)/pi^2 ~ 1/(pi^2 k_max).
inline double dyson_tail_estimate(int k_max) {
  require_positive_lag(k_max, "dyson_tail_estimate");
  return special::trigamma(k_max + 1.0) / (std::numbers::pi * std::numbers::pi);
}

/// (1/pi) int_0^pi S^2 d omega.
inline double spectrum_energy(const SpectrumInterpolant& s) {
  AutocovConfig cfg;
  double total = 0.0;
  const auto& e = s.options().edges;
  auto sq = [&](double w) { const double v = s(w); return v * v; };
  for (std::size_t p = 0; p + 1 < e.size(); ++p) total += detail::cosine_panel(sq, e[p], e[p + 1], 0, cfg);
  double hi = s.omega_min();
  for (int j = 0; j < 60; ++j) {
    const double lo = 0.5 * hi;
    total += detail::cosine_panel([&](double w) { const double v = s.small_model(w); return v * v; }, lo, hi, 0, cfg);
    hi = lo;
  }
  return total / std::numbers::pi;
}

/// delta I_0^2 + 2 sum_k delta I_k^2 with the Dyson tail beyond k_max.
inline double autocov_energy(const AutocovSeries& series) {
  double e = series.values[0] * series.values[0];
  for (int k = 1; k <= series.k_max; ++k) e += 2 * series.values[k] * series.values[k];
  // 2 sum_{k > K} 1/(4 pi^4 k^4), with sum_{k > K} k^-4 = psi_3(K + 1)/6 ~ 1/(3 K^3).
  const double K = series.k_max + 0.5;
  e += 2.0 / (4 * std::pow(std::numbers::pi, 4)) / (3 * K * K * K);
  return e;
}

}  // namespace levelcorr
