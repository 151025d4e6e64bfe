#pragma once

// Power spectrum of spacings
//   S(omega) = (1/pi) Re int_0^inf D(lambda) dlambda,
//   D(lambda) = exp(int_0^lambda sigma_0(t; 1 - e^{i omega})/t dt) = det(I - zeta K_{lambda/2pi}).
//
// D decays only like lambda^{-2 nu^2}, nu = omega/2pi, so the integral cannot
// be truncated where the integrand is small. It is split at Lambda:
//  * [0, Lambda]: integrated numerically (painleve backend: carried along the
//    ODE path, which is legitimate because D is entire in lambda; fredholm
//    backend: Gauss-Legendre panels on the real axis);
//  * [Lambda, inf): D is replaced by its large-lambda expansion
//      sum_n A_n e^{i(nu+n) lambda} lambda^{-2(nu+n)^2} (1 + sum_j a_{n,j} lambda^{-j}),
//    n in {0, -1, 1, -2}, with the A_n known in closed form and the a_{n,j}
//    fitted by least squares on [Lambda_fit, Lambda]. Each term is integrated
//    exactly by rotating the ray into the half-plane where it decays.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levelcorr/detail/parallel.hpp"
#include "levelcorr/error.hpp"
#include "levelcorr/fredholm.hpp"
#include "levelcorr/painleve.hpp"
#include "levelcorr/quadrature.hpp"
#include "levelcorr/special.hpp"

namespace levelcorr {

enum class Backend { painleve, fredholm };

inline const char* to_string(Backend b) { return b == Backend::painleve ? "painleve" : "fredholm"; }
inline Backend backend_from_string(const std::string& s) {
  if (s == "painleve") return Backend::painleve;
  if (s == "fredholm") return Backend::fredholm;
  throw std::invalid_argument("unknown backend '" + s + "' (expected painleve or fredholm)");
}

struct SpectrumConfig {
  Backend backend = Backend::painleve;
  SolverConfig solver{1e-13, 1e-13};
  /// Start of the fit window and end of the numerical integral.
  double lambda_fit = 150.0;
  double lambda_max = 300.0;
  int fit_points = 301;
  /// Correction orders for the two dominant branches (n = 0, -1) and the
  /// two weaker ones (n = 1, -2).
  int terms_major = 6;
  int terms_minor = 2;
  /// Below omega_min the small-omega expansion replaces the integral.
  double omega_min = 0.05;
  /// Largest acceptable tail error estimate.
  double max_error = 1e-8;
  /// Fredholm backend: panel width in lambda and Gauss nodes per panel.
  double panel_width = 5.0;
  int panel_nodes = 40;
};

struct SpectrumValue {
  double value = 0.0;
  double err = 0.0;
};

/// omega/(2pi) + (omega^3/4pi^3) log(omega/2pi).
inline double power_spectrum_small_omega(double omega, double threshold = 0.2) {
  if (!(omega > 0.0) || omega > threshold)
    throw std::invalid_argument("power_spectrum_small_omega: omega must lie in (0, threshold]");
  constexpr double pi = std::numbers::pi;
  return omega / (2 * pi) + omega * omega * omega / (4 * pi * pi * pi) * std::log(omega / (2 * pi));
}

namespace detail {

/// int_{z0}^{z0 + inf} lambda^{-p} e^{i a lambda} d lambda along a horizontal ray,
/// evaluated on the ray z0 + i sign(a) u where the integrand decays as e^{-|a| u}.
inline cplx oscillatory_tail(double a, double p, cplx z0) {
  const double sg = a > 0 ? 1.0 : -1.0, aa = std::abs(a);
  const cplx dir(0.0, sg);
  const cplx base = std::exp(cplx(0.0, a) * z0);
  auto f = [&](double v) {
    const cplx z = z0 + dir * (v / aa);
    return std::exp(-p * std::log(z)) * std::exp(-v);
  };
  const auto r = quad::integrate_adaptive<cplx>(f, 0.0, 45.0, 1e-17, 1e-15, 4000, 8);
  return base * dir * r.value / aa;
}

struct TailFit {
  cplx tail;
  double residual;
};

/// Fits the large-lambda expansion to samples (z_j, D_j) and integrates it
/// from z_end to infinity along a horizontal ray.
inline TailFit fit_tail(double nu, const std::vector<cplx>& z, const std::vector<cplx>& d, cplx z_end,
                        int terms_major, int terms_minor) {
  const int branches[4] = {0, -1, 1, -2};
  double amp[4];
  for (int b = 0; b < 4; ++b) amp[b] = special::fisher_hartwig_amplitude(branches[b], nu);
  auto term = [&](int b, double extra, cplx x) {
    const double a = nu + branches[b];
    return amp[b] * std::exp(cplx(0.0, a) * x - (2 * a * a + extra) * std::log(x));
  };
  struct Col {
    int b, j;
  };
  std::vector<Col> cols;
  for (int b = 0; b < 4; ++b) {
    const int J = b < 2 ? terms_major : terms_minor;
    for (int j = 1; j <= J; ++j) cols.push_back({b, j});
  }
  const int m = static_cast<int>(z.size()), k = static_cast<int>(cols.size());
  Eigen::MatrixXcd M(m, k);
  Eigen::VectorXcd rhs(m);
  for (int i = 0; i < m; ++i) {
    cplx lead = 0.0;
    for (int b = 0; b < 4; ++b) lead += term(b, 0.0, z[i]);
    rhs(i) = d[i] - lead;
    for (int c = 0; c < k; ++c) M(i, c) = term(cols[c].b, cols[c].j, z[i]);
  }
  Eigen::VectorXd norms(k);
  for (int c = 0; c < k; ++c) {
    norms(c) = M.col(c).norm();
    M.col(c) /= norms(c);
  }
  const Eigen::VectorXcd coef = M.colPivHouseholderQr().solve(rhs);
  const double residual = (M * coef - rhs).cwiseAbs().maxCoeff();

  cplx tail = 0.0;
  for (int b = 0; b < 4; ++b) {
    const double a = nu + branches[b];
    tail += amp[b] * oscillatory_tail(a, 2 * a * a, z_end);
  }
  for (int c = 0; c < k; ++c) {
    const double a = nu + branches[cols[c].b];
    tail += coef(c) / norms(c) * amp[cols[c].b] * oscillatory_tail(a, 2 * a * a + cols[c].j, z_end);
  }
  return {tail, residual};
}

}  // namespace detail

/// S(omega) by the selected backend, with an error estimate for the tail.
inline SpectrumValue power_spectrum(double omega, const SpectrumConfig& cfg = {}) {
  constexpr double pi = std::numbers::pi;
  if (!(omega > 0.0) || omega > pi + 1e-14) throw std::invalid_argument("power_spectrum: omega must lie in (0, pi]");
  omega = std::min(omega, pi);
  if (omega < cfg.omega_min) return {power_spectrum_small_omega(omega, cfg.omega_min), std::pow(omega, 4)};
  if (!(cfg.lambda_fit > 0.0 && cfg.lambda_max > cfg.lambda_fit && cfg.fit_points > 4 * (cfg.terms_major + cfg.terms_minor)))
    throw std::invalid_argument("power_spectrum: inconsistent fit window");

  const auto p = SpectralParameter::from_omega(omega);
  const double nu = omega / (2 * pi);
  std::vector<cplx> z, d;
  cplx head = 0.0, z_end;

  if (cfg.backend == Backend::painleve) {
    auto g = detail::cached_generating_function(p, cfg.solver);
    g->extend(cfg.lambda_max);
    const double off = g->backbone_offset();
    for (int i = 0; i < cfg.fit_points; ++i) {
      const double x = cfg.lambda_fit + (cfg.lambda_max - cfg.lambda_fit) * i / (cfg.fit_points - 1);
      z.emplace_back(x, off);
      d.push_back(std::exp(g->at_backbone(x).log_integral));
    }
    z_end = cplx(cfg.lambda_max, off);
    head = g->at_backbone(cfg.lambda_max).det_integral;
  } else {
    const int panels = static_cast<int>(std::ceil(cfg.lambda_max / cfg.panel_width));
    const double w = cfg.lambda_max / panels;
    for (int k = 0; k < panels; ++k) {
      const auto rule = quad::gauss_legendre(cfg.panel_nodes, k * w, (k + 1) * w);
      for (std::size_t i = 0; i < rule.size(); ++i) {
        const double s = rule.nodes[i] / (2 * pi);
        const cplx v = fredholm::sine_kernel_det({p.zeta(), s, fredholm::default_nodes(s)});
        head += rule.weights[i] * v;
        if (rule.nodes[i] >= cfg.lambda_fit) {
          z.emplace_back(rule.nodes[i], 0.0);
          d.push_back(v);
        }
      }
    }
    z_end = cplx(cfg.lambda_max, 0.0);
  }

  const auto fit = detail::fit_tail(nu, z, d, z_end, cfg.terms_major, cfg.terms_minor);
  const auto coarse = detail::fit_tail(nu, z, d, z_end, cfg.terms_major - 1, cfg.terms_minor);
  const double value = (head + fit.tail).real() / pi;
  const double err = std::abs((fit.tail - coarse.tail).real()) / pi + 1e-13;
  if (!(err <= cfg.max_error) || !std::isfinite(value))
    throw TruncationError("power_spectrum: tail not certified at omega = " + std::to_string(omega), value, err);
  return {value, err};
}

/// S_eig(omega) = S(omega) / (4 sin^2(omega/2)); S(0) vanishes by the sum rule.
inline double eig_spectrum_from_sp(double omega, const SpectrumConfig& cfg = {}) {
  const double s = power_spectrum(omega, cfg).value;
  const double h = std::sin(omega / 2);
  return s / (4 * h * h);
}

struct SpacingDensityConfig {
  double step = 1e-3;
  double negative_tol = 1e-7;
};

/// P(s) = E''(s), E the gap probability: second differences of the Nystrom
/// determinant with step h and h/2, combined by Richardson extrapolation.
/// A one-sided stencil is used for s < 2h.
inline double spacing_distribution(double s, const SpacingDensityConfig& cfg = {}) {
  if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("spacing_distribution: s must be >= 0");
  const int nodes = fredholm::default_nodes(s + 3 * cfg.step) + 10;
  auto E = [nodes](double x) { return fredholm::gap_probability(x, nodes); };
  auto second = [&](double h) {
    if (s >= 2 * cfg.step) return (E(s + h) - 2 * E(s) + E(s - h)) / (h * h);
    return (2 * E(s) - 5 * E(s + h) + 4 * E(s + 2 * h) - E(s + 3 * h)) / (h * h);
  };
  const double h = cfg.step;
  const double p = (4 * second(h / 2) - second(h)) / 3;
  if (p < -cfg.negative_tol) throw NumericalError("spacing_distribution: negative density at s = " + std::to_string(s));
  return std::max(p, 0.0);
}

struct PowerSpectrumTable {
  std::vector<double> omegas;
  std::vector<double> values;
  std::vector<double> err_estimates;
  Backend backend = Backend::painleve;

  void write_csv(std::ostream& out) const {
    out.precision(17);
    out << "omega,S,err,backend\n";
    for (std::size_t i = 0; i < omegas.size(); ++i)
      out << omegas[i] << ',' << values[i] << ',' << err_estimates[i] << ',' << to_string(backend) << '\n';
  }
};

/// S on an arbitrary grid, evaluated in parallel.
inline PowerSpectrumTable power_spectrum_table(const std::vector<double>& omegas, const SpectrumConfig& cfg = {},
                                               unsigned threads = default_threads()) {
  PowerSpectrumTable t;
  t.backend = cfg.backend;
  t.omegas = omegas;
  t.values.resize(omegas.size());
  t.err_estimates.resize(omegas.size());
  detail::parallel_for(omegas.size(), threads, [&](std::size_t i) {
    const auto v = power_spectrum(omegas[i], cfg);
    t.values[i] = v.value;
    t.err_estimates[i] = v.err;
  });
  return t;
}

/// Piecewise Chebyshev representation of S on [omega_min, pi] on panels graded
/// toward 0, plus the small-omega model
///   S = omega/2pi + (omega^3/4pi^3) log(omega/2pi) + sum_j b_j phi_j(omega)
/// on [0, omega_min], with the b_j fitted on the first panels.
class SpectrumInterpolant {
 public:
  struct Options {
    std::vector<double> edges{0.05, 0.1, 0.2, 0.4, 0.8, 1.6, std::numbers::pi};
    int nodes_per_panel = 24;
    /// Largest admissible magnitude of the trailing Chebyshev coefficients.
    double coefficient_tol = 1e-11;
    /// Upper end of the window used to fit the small-omega correction.
    double fit_window = 0.2;
  };

  /// Correction basis on [0, omega_min].
  static constexpr int kModelTerms = 4;
  static double model_basis(int j, double w) {
    const double l = std::log(w / (2 * std::numbers::pi));
    switch (j) {
      case 0: return std::pow(w, 4);
      case 1: return std::pow(w, 5) * l;
      case 2: return std::pow(w, 5);
      default: return std::pow(w, 6);
    }
  }

  static SpectrumInterpolant build(const SpectrumConfig& cfg, const Options& opt, unsigned threads = default_threads()) {
    SpectrumInterpolant s;
    s.opt_ = opt;
    if (opt.edges.size() < 2 || opt.edges.front() < cfg.omega_min - 1e-15 || opt.edges.back() > std::numbers::pi + 1e-14)
      throw std::invalid_argument("SpectrumInterpolant: panel edges must lie in [omega_min, pi]");
    std::vector<double> all;
    for (std::size_t p = 0; p + 1 < opt.edges.size(); ++p) {
      s.nodes_.push_back(quad::chebyshev_lobatto(opt.nodes_per_panel, opt.edges[p], opt.edges[p + 1]));
      for (double w : s.nodes_.back()) all.push_back(w);
    }
    s.table_ = power_spectrum_table(all, cfg, threads);
    std::size_t idx = 0;
    for (std::size_t p = 0; p < s.nodes_.size(); ++p) {
      std::vector<double> v(s.table_.values.begin() + idx, s.table_.values.begin() + idx + opt.nodes_per_panel);
      idx += opt.nodes_per_panel;
      const auto c = quad::chebyshev_coefficients(v.data(), opt.nodes_per_panel);
      const double trailing = std::max({std::abs(c.end()[-1]), std::abs(c.end()[-2]), std::abs(c.end()[-3])});
      if (trailing > opt.coefficient_tol)
        throw ResolutionError("SpectrumInterpolant: panel [" + std::to_string(opt.edges[p]) + ", " +
                              std::to_string(opt.edges[p + 1]) + "] not resolved (trailing coefficient " +
                              std::to_string(trailing) + ")");
      s.trailing_ = std::max(s.trailing_, trailing);
      s.values_.push_back(std::move(v));
    }
    s.fit_small_omega();
    return s;
  }

  double omega_min() const { return opt_.edges.front(); }

  /// S(omega) for omega in [0, pi].
  double operator()(double w) const {
    if (w < omega_min()) return small_model(w);
    const auto& e = opt_.edges;
    std::size_t p = std::upper_bound(e.begin(), e.end(), w) - e.begin();
    p = std::clamp<std::size_t>(p, 1, e.size() - 1) - 1;
    return quad::barycentric_lobatto(nodes_[p], values_[p].data(), w);
  }

  /// Small-omega model used on [0, omega_min].
  double small_model(double w) const {
    if (w <= 0.0) return 0.0;
    constexpr double pi = std::numbers::pi;
    double v = w / (2 * pi) + w * w * w / (4 * pi * pi * pi) * std::log(w / (2 * pi));
    for (int j = 0; j < kModelTerms; ++j) v += model_coef_[j] * model_basis(j, w);
    return v;
  }

  const std::array<double, kModelTerms>& model_coefficients() const { return model_coef_; }
  const PowerSpectrumTable& table() const { return table_; }
  const Options& options() const { return opt_; }
  double trailing_coefficient() const { return trailing_; }
  /// Max error estimate of the sampled values.
  double max_sample_error() const {
    return *std::max_element(table_.err_estimates.begin(), table_.err_estimates.end());
  }

  /// One-sided derivative at omega = pi from the last panel's interpolant.
  double derivative_at_pi() const {
    const auto& x = nodes_.back();
    const auto& v = values_.back();
    const int n = static_cast<int>(x.size());
    // Derivative of the barycentric interpolant at the last node.
    double d = 0.0;
    auto weight = [n](int j) {
      double w = (j % 2 == 0) ? 1.0 : -1.0;
      if (j == 0 || j == n - 1) w *= 0.5;
      return w;
    };
    for (int j = 0; j < n - 1; ++j) d += weight(j) / weight(n - 1) * (v[j] - v[n - 1]) / (x[n - 1] - x[j]);
    return d;
  }

 private:
  void fit_small_omega() {
    constexpr double pi = std::numbers::pi;
    std::vector<double> xs;
    for (int i = 0; i <= 60; ++i) xs.push_back(omega_min() + (opt_.fit_window - omega_min()) * i / 60.0);
    Eigen::MatrixXd M(xs.size(), kModelTerms);
    Eigen::VectorXd r(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double w = xs[i];
      r(i) = (*this)(w) - (w / (2 * pi) + w * w * w / (4 * pi * pi * pi) * std::log(w / (2 * pi)));
      for (int j = 0; j < kModelTerms; ++j) M(i, j) = model_basis(j, w);
    }
    Eigen::VectorXd scale = M.colwise().norm();
    for (int j = 0; j < kModelTerms; ++j) M.col(j) /= scale(j);
    const Eigen::VectorXd c = M.colPivHouseholderQr().solve(r);
    for (int j = 0; j < kModelTerms; ++j) model_coef_[j] = c(j) / scale(j);
  }

  Options opt_;
  std::vector<std::vector<double>> nodes_;
  std::vector<std::vector<double>> values_;
  PowerSpectrumTable table_;
  std::array<double, kModelTerms> model_coef_{};
  double trailing_ = 0.0;
};

}  // namespace levelcorr
