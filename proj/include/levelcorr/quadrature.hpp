#pragma once

// Quadrature and interpolation building blocks: Gauss-Legendre rules,
// Gauss-Kronrod (7,15) panels, and Chebyshev-Lobatto interpolation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace levelcorr::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

namespace detail {

// Newton iteration on the three-term recurrence, nodes ordered ascending.
inline Rule compute_gauss_legendre(int n) {
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Re-evaluate the derivative at the converged node for the weight.
    double p1 = 1.0, p2 = 0.0;
    for (int j = 1; j <= n; ++j) {
      const double p3 = p2;
      p2 = p1;
      p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
    }
    pp = n * (z * p1 - p2) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * pp * pp);
    r.nodes[i] = -z;
    r.nodes[n - 1 - i] = z;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

}  // namespace detail

/// n-point Gauss-Legendre rule on [-1, 1]. Rules are computed once and cached.
inline const Rule& gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<Rule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Rule>(detail::compute_gauss_legendre(n));
  return *slot;
}

/// Gauss-Legendre rule mapped to [a, b].
inline Rule gauss_legendre(int n, double a, double b) {
  const Rule& ref = gauss_legendre(n);
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = mid + half * ref.nodes[i];
    r.weights[i] = half * ref.weights[i];
  }
  return r;
}

// QUADPACK qk15 abscissae and weights.
inline constexpr double kKronrodNodes[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kKronrodWeights[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kGauss7Weights[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class T>
struct PanelResult {
  T kronrod{};
  T gauss{};
  double error() const { return std::abs(kronrod - gauss); }
};

/// One G7/K15 panel. `sample(x, fx)` is called for each of the 15 nodes,
/// which lets callers keep the function values.
template <class T, class F, class Sink>
PanelResult<T> kronrod_panel(F&& f, double a, double b, Sink&& sample) {
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  PanelResult<T> r;
  const T fc = f(mid);
  sample(mid, fc);
  r.kronrod = fc * kKronrodWeights[7];
  r.gauss = fc * kGauss7Weights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const T f1 = f(mid - dx), f2 = f(mid + dx);
    sample(mid - dx, f1);
    sample(mid + dx, f2);
    r.kronrod += (f1 + f2) * kKronrodWeights[j];
    if (j % 2 == 1) r.gauss += (f1 + f2) * kGauss7Weights[j / 2];
  }
  r.kronrod *= half;
  r.gauss *= half;
  return r;
}

template <class T>
struct Integral {
  T value{};
  double error = 0.0;
  int evaluations = 0;
};

/// Adaptive G7/K15 integration of f over [a, b] by recursive bisection of the
/// worst panel. Works for real- or complex-valued f.
template <class T, class F>
Integral<T> integrate_adaptive(F&& f, double a, double b, double abs_tol, double rel_tol = 0.0,
                               int max_panels = 2000, int initial_panels = 1) {
  struct Panel {
    double a, b;
    PanelResult<T> r;
  };
  std::vector<Panel> panels;
  auto noop = [](double, const T&) {};
  Integral<T> out;
  for (int i = 0; i < initial_panels; ++i) {
    const double pa = a + (b - a) * i / initial_panels, pb = a + (b - a) * (i + 1) / initial_panels;
    panels.push_back({pa, pb, kronrod_panel<T>(f, pa, pb, noop)});
    out.evaluations += 15;
  }
  auto total = [&] {
    T v{};
    double e = 0.0;
    for (const auto& p : panels) {
      v += p.r.kronrod;
      e += p.r.error();
    }
    return std::pair{v, e};
  };
  while (true) {
    auto [v, e] = total();
    out.value = v;
    out.error = e;
    if (e <= std::max(abs_tol, rel_tol * std::abs(v)) || static_cast<int>(panels.size()) >= max_panels)
      break;
    auto worst = std::max_element(panels.begin(), panels.end(), [](const Panel& x, const Panel& y) {
      return x.r.error() < y.r.error();
    });
    const double pa = worst->a, pb = worst->b, pm = 0.5 * (pa + pb);
    *worst = {pa, pm, kronrod_panel<T>(f, pa, pm, noop)};
    panels.push_back({pm, pb, kronrod_panel<T>(f, pm, pb, noop)});
    out.evaluations += 30;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chebyshev-Lobatto interpolation

/// Chebyshev points of the second kind on [a, b], ascending, endpoints included.
inline std::vector<double> chebyshev_lobatto(int n, double a, double b) {
  if (n < 2) throw std::invalid_argument("chebyshev_lobatto: need at least 2 points");
  std::vector<double> x(n);
  for (int j = 0; j < n; ++j) {
    const double c = -std::cos(std::numbers::pi * j / (n - 1));
    x[j] = 0.5 * (a + b) + 0.5 * (b - a) * c;
  }
  x.front() = a;
  x.back() = b;
  return x;
}

/// Barycentric interpolation through values at chebyshev_lobatto(n, a, b).
inline double barycentric_lobatto(const std::vector<double>& nodes, const double* values, double x) {
  const int n = static_cast<int>(nodes.size());
  double num = 0.0, den = 0.0;
  for (int j = 0; j < n; ++j) {
    const double d = x - nodes[j];
    if (d == 0.0) return values[j];
    double w = (j % 2 == 0) ? 1.0 : -1.0;
    if (j == 0 || j == n - 1) w *= 0.5;
    w /= d;
    num += w * values[j];
    den += w;
  }
  return num / den;
}

/// Chebyshev coefficients c_0..c_{n-1} of the Lobatto interpolant (values in
/// ascending-node order).
inline std::vector<double> chebyshev_coefficients(const double* values, int n) {
  const int m = n - 1;
  std::vector<double> c(n, 0.0);
  for (int k = 0; k <= m; ++k) {
    double s = 0.0;
    for (int j = 0; j <= m; ++j) {
      // Ascending nodes are x_j = -cos(pi j / m) = cos(pi (m - j) / m).
      double term = values[j] * std::cos(std::numbers::pi * k * (m - j) / m);
      if (j == 0 || j == m) term *= 0.5;
      s += term;
    }
    c[k] = 2.0 * s / m;
    if (k == 0 || k == m) c[k] *= 0.5;
  }
  return c;
}

}  // namespace levelcorr::quad
