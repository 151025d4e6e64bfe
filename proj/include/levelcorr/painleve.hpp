#pragma once

// The family sigma_0(t; zeta) of sigma-form Painleve V solutions analytic at
// t = 0 with sigma_0 = -(zeta/2pi) t - (zeta/2pi)^2 t^2 + O(t^3), and the
// log-integral L(lambda) = int_0^lambda sigma_0(t)/t dt.
//
// exp(L(lambda)) = det(I - zeta K) on an interval of length lambda/(2pi), so
// sigma_0 has poles at the zeros of that determinant. For complex zeta these
// lie off the real axis; for real zeta > 1 some lie on it. The solver never
// integrates through them: it follows the horizontal line Im t = d*h (the
// "backbone", d = sign of Im zeta, d = -1 for real zeta > 1) and reaches real
// t with short vertical spokes. Real zeta <= 1 uses the real axis directly.
//
// Instead of the sigma-form (quadratic in sigma'') we integrate its
// t-derivative, which is linear in sigma''':
//   2 t^2 sigma''' + 2 t sigma'' + t (A + 4 sigma'^2) + A (t + 8 sigma') = 0,
//   A = t sigma' - sigma.
// The sigma-form left-hand side is a first integral of this equation and is
// monitored on every step as the residual.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "levelcorr/detail/dop853.hpp"
#include "levelcorr/error.hpp"
#include "levelcorr/quadrature.hpp"

namespace levelcorr {

using cplx = std::complex<double>;

/// A point zeta = 1 - e^{i omega} on the circle |1 - zeta| = 1, or (for gap
/// probabilities) a real zeta in [0, 1] off the circle.
class SpectralParameter {
 public:
  /// omega in [0, pi]; omega = 0 gives the trivial zeta = 0.
  static SpectralParameter from_omega(double omega) {
    if (!std::isfinite(omega) || omega < 0.0 || omega > std::numbers::pi + 1e-14)
      throw std::invalid_argument("SpectralParameter: omega must lie in [0, pi]");
    omega = std::min(omega, std::numbers::pi);
    SpectralParameter p;
    p.omega_ = omega;
    p.zeta_ = (omega == std::numbers::pi) ? cplx(2.0, 0.0) : 1.0 - std::polar(1.0, omega);
    return p;
  }
  /// Arbitrary finite zeta; omega is NaN unless zeta lies on the circle.
  static SpectralParameter from_zeta(cplx zeta) {
    if (!std::isfinite(zeta.real()) || !std::isfinite(zeta.imag()))
      throw std::invalid_argument("SpectralParameter: zeta must be finite");
    SpectralParameter p;
    p.zeta_ = zeta;
    p.omega_ = std::abs(std::abs(1.0 - zeta) - 1.0) < 1e-14 ? std::abs(std::arg(1.0 - zeta))
                                                           : std::numeric_limits<double>::quiet_NaN();
    if (zeta == cplx(0.0)) p.omega_ = 0.0;
    return p;
  }
  double omega() const { return omega_; }
  cplx zeta() const { return zeta_; }
  bool trivial() const { return zeta_ == cplx(0.0); }
  bool on_circle() const { return !std::isnan(omega_); }

 private:
  double omega_ = 0.0;
  cplx zeta_{0.0, 0.0};
};

struct SolverConfig {
  double rtol = 1e-11;
  double atol = 1e-11;
  int series_order = 12;
  double series_tol = 1e-14;
  /// Distance of the backbone from the real axis.
  double detour = 1.5;
  /// Bound on |first integral| / max(1, |t s''|^2, |A|^2, 4|A||s'|^2).
  double residual_tol = 1e-9;
  /// Backbone extension granularity; makes results independent of query order.
  double block = 32.0;

  auto key() const { return std::tuple(rtol, atol, series_order, series_tol, detour, residual_tol, block); }
};

/// Coefficients c_1..c_order of sigma_0(t; zeta) = sum c_n t^n.
/// c_1 = -zeta/2pi, c_2 = -c_1^2; for m >= 3 the t^m coefficient of the
/// sigma-form is 4 (m-1)^2 c_1^2 c_m + (terms in c_1..c_{m-1}).
inline std::vector<cplx> series_sigma0(cplx zeta, int order) {
  if (order < 2) throw std::invalid_argument("series_sigma0: order must be >= 2");
  if (!std::isfinite(zeta.real()) || !std::isfinite(zeta.imag()))
    throw std::invalid_argument("series_sigma0: zeta must be finite");
  std::vector<cplx> c(order + 1, 0.0);
  if (zeta == cplx(0.0)) return {c.begin() + 1, c.end()};
  c[1] = -zeta / (2.0 * std::numbers::pi);
  c[2] = -c[1] * c[1];
  for (int m = 3; m <= order; ++m) {
    // Truncated polynomials (degree <= m) of t s'', s', A with c_m = 0.
    std::vector<cplx> tspp(m + 1, 0.0), sp(m + 1, 0.0), A(m + 1, 0.0);
    for (int i = 1; i < m; ++i) {
      tspp[i - 1] += double(i) * (i - 1) * c[i];
      sp[i - 1] += double(i) * c[i];
      A[i] += double(i - 1) * c[i];
    }
    auto coef_of_product = [m](const std::vector<cplx>& a, const std::vector<cplx>& b) {
      cplx s = 0.0;
      for (int i = 0; i <= m; ++i) s += a[i] * b[m - i];
      return s;
    };
    std::vector<cplx> sp2(m + 1, 0.0);
    for (int i = 0; i <= m; ++i)
      for (int j = 0; i + j <= m; ++j) sp2[i + j] += sp[i] * sp[j];
    std::vector<cplx> inner(m + 1);
    for (int i = 0; i <= m; ++i) inner[i] = A[i] + 4.0 * sp2[i];
    const cplx Fm = coef_of_product(tspp, tspp) + coef_of_product(A, inner);
    c[m] = Fm / (4.0 * double(m - 1) * (m - 1) * c[1] * c[1]);
  }
  return {c.begin() + 1, c.end()};
}

/// Sigma-form left-hand side (t s'')^2 + A (A + 4 s'^2) and its natural scale.
inline std::pair<double, double> sigma_form_residual(cplx t, cplx s, cplx sp, cplx spp) {
  const cplx A = t * sp - s;
  const cplx tspp = t * spp;
  const cplx F = tspp * tspp + A * (A + 4.0 * sp * sp);
  const double scale = std::max({1.0, std::norm(tspp), std::norm(A), 4.0 * std::abs(A) * std::norm(sp)});
  return {std::abs(F), scale};
}

/// sigma, sigma', sigma'', L = int sigma/t, I = int exp(L) (path integral from 0).
struct SigmaState {
  cplx sigma, dsigma, d2sigma, log_integral, det_integral;
};

/// Sigma-form solution on a real grid.
struct SigmaTrajectory {
  SpectralParameter zeta;
  std::vector<double> t_grid;
  std::vector<cplx> sigma;
  std::vector<cplx> sigma_prime;
  std::vector<cplx> sigma_second;
  std::vector<cplx> log_integral;
  std::vector<double> residual;
  double series_radius = 0.0;

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    write_csv(out);
  }

  void write_csv(std::ostream& out) const {
    out.precision(17);
    out << "t,re_sigma,im_sigma,re_log_integral,im_log_integral\n";
    for (std::size_t i = 0; i < t_grid.size(); ++i)
      out << t_grid[i] << ',' << sigma[i].real() << ',' << sigma[i].imag() << ',' << log_integral[i].real()
          << ',' << log_integral[i].imag() << '\n';
  }
};

/// sigma_0 and its log-integral for one zeta, with a lazily extended backbone.
/// Thread-safe: extension is exclusive, lookups are shared.
class GeneratingFunction {
 public:
  using State = detail::CState<5>;

  GeneratingFunction(SpectralParameter p, SolverConfig cfg) : p_(p), cfg_(cfg) {
    zeta_ = p.zeta();
    if (p.trivial()) return;
    c_ = series_sigma0(zeta_, cfg_.series_order);
    const int n = cfg_.series_order;
    const double ratio = std::abs(c_[0]) / std::abs(c_[n - 1]);
    t0_ = std::min(0.5, std::pow(cfg_.series_tol * ratio, 1.0 / (n - 1)));
    start_ = series_state(t0_);
    real_path_ = zeta_.imag() == 0.0 && zeta_.real() <= 1.0;
    dir_ = (zeta_.imag() > 0.0) ? 1.0 : -1.0;
    if (real_path_) {
      corner_ = start_;
    } else {
      const cplx a(t0_, 0.0), b(t0_, dir_ * cfg_.detour);
      corner_ = integrate_segment(a, b, start_, nullptr);
    }
    x_end_ = t0_;
    end_ = corner_;
  }

  const SpectralParameter& parameter() const { return p_; }
  const SolverConfig& config() const { return cfg_; }
  double series_radius() const { return t0_; }
  bool real_path() const { return real_path_; }
  /// Imaginary offset of the backbone (0 on the real path).
  double backbone_offset() const { return real_path_ ? 0.0 : dir_ * cfg_.detour; }
  const std::vector<cplx>& coefficients() const { return c_; }

  /// State at real t >= 0.
  SigmaState at(double t) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("GeneratingFunction: t must be >= 0");
    if (p_.trivial()) return {0.0, 0.0, 0.0, 0.0, t};
    if (t <= t0_) return unpack(series_state(t));
    State b = backbone_state(t);
    if (real_path_) return unpack(b);
    const cplx top(t, dir_ * cfg_.detour);
    return unpack(integrate_segment(top, cplx(t, 0.0), b, nullptr));
  }

  /// State on the backbone at Re t = x >= t0 (t = x + i*offset).
  SigmaState at_backbone(double x) {
    if (p_.trivial()) return {0.0, 0.0, 0.0, 0.0, cplx(x, 0.0)};
    if (x < t0_) throw std::invalid_argument("at_backbone: x below series radius");
    return unpack(backbone_state(x));
  }

  /// L(lambda) = int_0^lambda sigma_0(t)/t dt.
  cplx log_integral(double lambda) { return at(lambda).log_integral; }

  /// Ensures the backbone reaches Re t >= x.
  void extend(double x) {
    if (p_.trivial()) return;
    {
      std::shared_lock lock(mutex_);
      if (x <= x_end_) return;
    }
    std::unique_lock lock(mutex_);
    while (x_end_ < x) {
      const double x1 = t0_ + cfg_.block * (std::floor((x_end_ - t0_) / cfg_.block + 1e-9) + 1.0);
      const double off = backbone_offset();
      const cplx a(x_end_, off), b(x1, off);
      std::vector<detail::DenseStep<5>> steps;
      end_ = integrate_segment(a, b, end_, &steps);
      for (auto& s : steps) {
        s.tau0 += x_end_;
        dense_.push_back(std::move(s));
      }
      x_end_ = x1;
    }
  }

 private:
  static SigmaState unpack(const State& y) { return {y[0], y[1], y[2], y[3], y[4]}; }

  State series_state(double t) const {
    const cplx tt(t, 0.0);
    cplx s = 0.0, sp = 0.0, spp = 0.0, L = 0.0;
    cplx p = 1.0;  // t^{n-1}
    const int n = static_cast<int>(c_.size());
    for (int k = 1; k <= n; ++k) {
      const cplx ck = c_[k - 1];
      if (k >= 2) spp += double(k) * (k - 1) * ck * (p / tt);
      sp += double(k) * ck * p;
      s += ck * p * tt;
      L += ck * p * tt / double(k);
      p *= tt;
    }
    if (t == 0.0) spp = 2.0 * c_[1];
    const auto& g = quad::gauss_legendre(30);
    cplx I = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double u = 0.5 * t * (g.nodes[i] + 1.0);
      cplx Lu = 0.0, pu = u;
      for (int k = 1; k <= n; ++k) {
        Lu += c_[k - 1] * pu / double(k);
        pu *= u;
      }
      I += 0.5 * t * g.weights[i] * std::exp(Lu);
    }
    return {s, sp, spp, L, I};
  }

  State rhs(cplx t, const State& y) const {
    const cplx s = y[0], sp = y[1], spp = y[2];
    const cplx A = t * sp - s;
    const cplx sppp = -(2.0 * t * spp + t * (A + 4.0 * sp * sp) + A * (t + 8.0 * sp)) / (2.0 * t * t);
    return {sp, spp, sppp, s / t, std::exp(y[3])};
  }

  /// Integrates along the straight segment a -> b (arc-length parameter).
  State integrate_segment(cplx a, cplx b, const State& y0, std::vector<detail::DenseStep<5>>* steps) const {
    const double len = std::abs(b - a);
    if (len == 0.0) return y0;
    const cplx e = (b - a) / len;
    auto f = [&](double tau, const State& y) {
      State d = rhs(a + e * tau, y);
      for (auto& v : d) v *= e;
      return d;
    };
    detail::StepperOptions opt{cfg_.rtol, cfg_.atol};
    const double tol = cfg_.residual_tol;
    auto on_step = [&](const detail::DenseStep<5>& st, const State& y) {
      const cplx t = a + e * st.tau1();
      auto [F, scale] = sigma_form_residual(t, y[0], y[1], y[2]);
      if (!(F <= tol * scale)) throw ResidualDriftError(std::abs(t), F / scale);
      if (steps) steps->push_back(st);
    };
    return detail::integrate_dop853<5>(f, 0.0, len, y0, opt, on_step);
  }

  State backbone_state(double x) {
    extend(x);
    std::shared_lock lock(mutex_);
    auto it = std::upper_bound(dense_.begin(), dense_.end(), x,
                               [](double v, const detail::DenseStep<5>& s) { return v < s.tau1(); });
    if (it == dense_.end()) --it;
    return (*it)(x);
  }

  SpectralParameter p_;
  SolverConfig cfg_;
  cplx zeta_;
  std::vector<cplx> c_;
  double t0_ = 0.0;
  bool real_path_ = true;
  double dir_ = -1.0;
  State start_{}, corner_{}, end_{};
  double x_end_ = 0.0;
  std::vector<detail::DenseStep<5>> dense_;
  mutable std::shared_mutex mutex_;
};

namespace detail {

inline std::shared_ptr<GeneratingFunction> cached_generating_function(const SpectralParameter& p,
                                                                      const SolverConfig& cfg) {
  using Key = std::tuple<double, double, decltype(cfg.key())>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<GeneratingFunction>> cache;
  const Key key{p.zeta().real(), p.zeta().imag(), cfg.key()};
  std::lock_guard lock(mutex);
  auto& slot = cache[key];
  if (!slot) slot = std::make_shared<GeneratingFunction>(p, cfg);
  return slot;
}

}  // namespace detail

/// int_0^lambda sigma_0(t; zeta)/t dt via a shared per-zeta cache.
inline cplx log_generating_function(const SpectralParameter& p, double lambda, const SolverConfig& cfg = {}) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("log_generating_function: lambda must be >= 0");
  if (lambda == 0.0 || p.trivial()) return 0.0;
  return detail::cached_generating_function(p, cfg)->log_integral(lambda);
}

/// Tabulates sigma_0 on t = 0, dt, 2dt, ..., t_max (t_max appended if needed).
inline SigmaTrajectory solve_sigma0(const SpectralParameter& p, double t_max, const SolverConfig& cfg = {},
                                    double dt = 0.05) {
  if (!(t_max > 0.0) || !std::isfinite(t_max)) throw std::invalid_argument("solve_sigma0: t_max must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("solve_sigma0: dt must be > 0");
  SigmaTrajectory tr;
  tr.zeta = p;
  const long n = static_cast<long>(std::floor(t_max / dt + 1e-9));
  for (long i = 0; i <= n; ++i) tr.t_grid.push_back(i * dt);
  if (tr.t_grid.back() < t_max - 1e-12 * t_max) tr.t_grid.push_back(t_max);
  GeneratingFunction g(p, cfg);
  tr.series_radius = g.series_radius();
  g.extend(t_max);
  for (double t : tr.t_grid) {
    const SigmaState s = g.at(t);
    tr.sigma.push_back(s.sigma);
    tr.sigma_prime.push_back(s.dsigma);
    tr.sigma_second.push_back(s.d2sigma);
    tr.log_integral.push_back(s.log_integral);
    auto [F, scale] = sigma_form_residual(t, s.sigma, s.dsigma, s.d2sigma);
    tr.residual.push_back(F / scale);
  }
  return tr;
}

}  // namespace levelcorr
