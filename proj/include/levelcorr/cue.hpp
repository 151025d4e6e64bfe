#pragma once

// Haar-random unitary spectra: dense QR sampling, and the five-diagonal
// (Verblunsky coefficient) representation solved through its paraorthogonal
// characteristic polynomial.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace levelcorr::mc {

using cplx = std::complex<double>;
using Rng = std::mt19937_64;

enum class Sampler { qr_haar, sparse_cmv };

inline const char* to_string(Sampler s) { return s == Sampler::qr_haar ? "qr_haar" : "sparse_cmv"; }

inline Sampler sampler_from_string(const std::string& s) {
  if (s == "qr_haar") return Sampler::qr_haar;
  if (s == "sparse_cmv") return Sampler::sparse_cmv;
  throw std::invalid_argument("unknown sampler '" + s + "'");
}

/// Independent stream for sample `index` of a run seeded with `seed`.
inline Rng sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

namespace detail {

inline std::vector<double> sorted_angles(const Eigen::VectorXcd& ev) {
  std::vector<double> th(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    double a = std::arg(ev(i));
    if (a < 0) a += 2 * std::numbers::pi;
    if (a >= 2 * std::numbers::pi) a = 0.0;
    th[i] = a;
  }
  std::sort(th.begin(), th.end());
  return th;
}

}  // namespace detail

/// Eigenangles of Q diag(R_ii/|R_ii|), Z = QR with Z complex Ginibre.
/// Returns nullopt if the eigensolver fails.
inline std::optional<std::vector<double>> qr_haar_eigenangles(int n, Rng& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  Eigen::MatrixXcd z(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) z(i, j) = cplx(g(rng), g(rng));
  const Eigen::HouseholderQR<Eigen::MatrixXcd> qr(z);
  Eigen::MatrixXcd q = qr.householderQ();
  const auto& r = qr.matrixQR();
  for (int j = 0; j < n; ++j) {
    const double a = std::abs(r(j, j));
    q.col(j) *= (a > 0 ? r(j, j) / a : cplx(1.0));
  }
  const Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(q, false);
  if (es.info() != Eigen::Success) return std::nullopt;
  return detail::sorted_angles(es.eigenvalues());
}

/// Verblunsky coefficients of a Haar unitary: |a_k|^2 ~ Beta(1, n-k-1) for
/// k < n-1, a_{n-1} uniform on the unit circle, all phases uniform.
inline std::vector<cplx> cue_verblunsky(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<cplx> a(n);
  for (int k = 0; k + 1 < n; ++k) {
    const double r2 = 1.0 - std::pow(1.0 - u(rng), 1.0 / (n - k - 1));
    a[k] = std::polar(std::sqrt(r2), 2 * std::numbers::pi * u(rng));
  }
  a[n - 1] = std::polar(1.0, 2 * std::numbers::pi * u(rng));
  return a;
}

/// Verblunsky coefficients split into real and imaginary parts.
struct Verblunsky {
  std::vector<double> re, im;

  explicit Verblunsky(const std::vector<cplx>& a) {
    for (const auto& x : a) {
      re.push_back(x.real());
      im.push_back(x.imag());
    }
  }
  int size() const { return static_cast<int>(re.size()); }
  cplx last() const { return {re.back(), im.back()}; }
};

struct TrigValue {
  double g;      ///< G(theta)
  double slope;  ///< G'(theta)
};

/// G(theta) = Re[sqrt(-a_{n-1}) e^{-i n theta / 2} Phi_n(e^{i theta})], with Phi_n
/// from the Szegoe recursion
///   Phi_{k+1} = z Phi_k - conj(a_k) Phi*_k,  Phi*_{k+1} = Phi*_k - a_k z Phi_k.
/// |a_{n-1}| = 1 makes Phi_n paraorthogonal, so the bracket is real and its
/// zeros are the n eigenangles. G is only defined up to a positive factor:
/// the recursion is rescaled to avoid overflow.
inline void paraorthogonal_trig(const double* theta, std::size_t count, const Verblunsky& a, TrigValue* out) {
  constexpr std::size_t B = 8;
  const std::size_t n = a.re.size();
  const cplx s = std::sqrt(-a.last());
  for (std::size_t base = 0; base < count; base += B) {
    const std::size_t lanes = std::min(B, count - base);
    double zr[B], zi[B], pr[B], pi_[B], qr[B], qi[B], dpr[B], dpi[B], dqr[B], dqi[B];
    for (std::size_t l = 0; l < B; ++l) {
      const double t = theta[base + std::min(l, lanes - 1)];
      zr[l] = std::cos(t);
      zi[l] = std::sin(t);
      pr[l] = qr[l] = 1.0;
      pi_[l] = qi[l] = dpr[l] = dpi[l] = dqr[l] = dqi[l] = 0.0;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double ar = a.re[k], ai = a.im[k];
      for (std::size_t l = 0; l < B; ++l) {
        // zp = z p, dzp = d(z p)/d theta = i z p + z dp
        const double zpr = zr[l] * pr[l] - zi[l] * pi_[l], zpi = zr[l] * pi_[l] + zi[l] * pr[l];
        const double dzpr = -zpi + zr[l] * dpr[l] - zi[l] * dpi[l], dzpi = zpr + zr[l] * dpi[l] + zi[l] * dpr[l];
        // conj(a) q and a zp
        const double cqr = ar * qr[l] + ai * qi[l], cqi = ar * qi[l] - ai * qr[l];
        const double cdqr = ar * dqr[l] + ai * dqi[l], cdqi = ar * dqi[l] - ai * dqr[l];
        const double azr = ar * zpr - ai * zpi, azi = ar * zpi + ai * zpr;
        const double adzr = ar * dzpr - ai * dzpi, adzi = ar * dzpi + ai * dzpr;
        pr[l] = zpr - cqr;
        pi_[l] = zpi - cqi;
        dpr[l] = dzpr - cdqr;
        dpi[l] = dzpi - cdqi;
        qr[l] -= azr;
        qi[l] -= azi;
        dqr[l] -= adzr;
        dqi[l] -= adzi;
      }
      if (k % 32 == 31) {
        for (std::size_t l = 0; l < B; ++l) {
          const double m = std::abs(pr[l]) + std::abs(pi_[l]) + std::abs(qr[l]) + std::abs(qi[l]);
          if (m > 1e100 || (m < 1e-100 && m > 0)) {
            const double f = 1.0 / m;
            pr[l] *= f, pi_[l] *= f, qr[l] *= f, qi[l] *= f, dpr[l] *= f, dpi[l] *= f, dqr[l] *= f, dqi[l] *= f;
          }
        }
      }
    }
    for (std::size_t l = 0; l < lanes; ++l) {
      const double t = theta[base + l];
      const cplx e = s * std::polar(1.0, -0.5 * double(n) * t);
      const cplx p(pr[l], pi_[l]), dp(dpr[l], dpi[l]);
      out[base + l] = {(e * p).real(), (e * (dp - cplx(0.0, 0.5 * double(n)) * p)).real()};
    }
  }
}

inline TrigValue paraorthogonal_trig(double theta, const Verblunsky& a) {
  TrigValue v;
  paraorthogonal_trig(&theta, 1, a, &v);
  return v;
}

namespace detail {

struct Bracket {
  double a, b;
  TrigValue fa, fb;
};

inline bool sign_change(const Bracket& c) { return (c.fa.g < 0) != (c.fb.g < 0); }

/// Same sign at both ends with G heading toward zero from both: a close pair
/// of roots may hide inside.
inline bool suspicious(const Bracket& c) {
  return !sign_change(c) && c.fa.g * c.fa.slope < 0 && c.fb.g * c.fb.slope > 0;
}

}  // namespace detail

/// Eigenangles of the unitary with Verblunsky coefficients `a`, ascending in
/// [0, 2 pi). Returns nullopt if the n roots could not be isolated.
inline std::optional<std::vector<double>> cmv_eigenangles(const std::vector<cplx>& coeffs) {
  constexpr double tau = 2 * std::numbers::pi;
  // Absolute angle accuracy; G is evaluated to ~1e-11 relative near its roots.
  constexpr double kRootTol = 4e-13;
  const Verblunsky a(coeffs);
  const int n = a.size();
  for (int grid = 2 * n; grid <= 32 * n; grid *= 4) {
    std::vector<double> th(grid);
    std::vector<TrigValue> v(grid);
    for (int j = 0; j < grid; ++j) th[j] = tau * j / grid;
    paraorthogonal_trig(th.data(), grid, a, v.data());
    // G(theta + 2 pi) = (-1)^n G(theta).
    const double wrap = (n % 2 == 0) ? 1.0 : -1.0;

    std::vector<detail::Bracket> found, pending;
    for (int j = 0; j < grid; ++j) {
      detail::Bracket c{th[j], j + 1 < grid ? th[j + 1] : tau, v[j],
                        j + 1 < grid ? v[j + 1] : TrigValue{wrap * v[0].g, wrap * v[0].slope}};
      if (detail::sign_change(c)) found.push_back(c);
      else if (detail::suspicious(c)) pending.push_back(c);
    }
    // Split suspicious cells until the pair separates or the dip clears zero.
    for (int depth = 0; depth < 48 && !pending.empty(); ++depth) {
      std::vector<double> mid(pending.size());
      std::vector<TrigValue> fm(pending.size());
      for (std::size_t i = 0; i < pending.size(); ++i) mid[i] = 0.5 * (pending[i].a + pending[i].b);
      paraorthogonal_trig(mid.data(), mid.size(), a, fm.data());
      std::vector<detail::Bracket> next;
      for (std::size_t i = 0; i < pending.size(); ++i) {
        const detail::Bracket l{pending[i].a, mid[i], pending[i].fa, fm[i]}, r{mid[i], pending[i].b, fm[i], pending[i].fb};
        for (const auto& c : {l, r}) {
          if (detail::sign_change(c)) found.push_back(c);
          else if (detail::suspicious(c)) next.push_back(c);
        }
      }
      pending.swap(next);
    }
    if (static_cast<int>(found.size()) != n) continue;

    // Safeguarded Newton on all brackets at once.
    struct Root {
      double lo, hi, x;
      bool lo_negative;
    };
    std::vector<Root> roots;
    for (const auto& c : found) {
      const double x = c.a + (c.b - c.a) * c.fa.g / (c.fa.g - c.fb.g);
      roots.push_back({c.a, c.b, std::clamp(x, c.a, c.b), c.fa.g < 0});
    }
    std::vector<std::size_t> active(n);
    for (int i = 0; i < n; ++i) active[i] = i;
    std::vector<double> xs;
    std::vector<TrigValue> fx;
    for (int it = 0; it < 100 && !active.empty(); ++it) {
      xs.resize(active.size());
      fx.resize(active.size());
      for (std::size_t i = 0; i < active.size(); ++i) xs[i] = roots[active[i]].x;
      paraorthogonal_trig(xs.data(), xs.size(), a, fx.data());
      std::size_t keep = 0;
      for (std::size_t i = 0; i < active.size(); ++i) {
        auto& r = roots[active[i]];
        if (fx[i].g == 0.0) continue;
        if ((fx[i].g < 0) == r.lo_negative) r.lo = r.x; else r.hi = r.x;
        const double d = fx[i].g / fx[i].slope;
        if (std::abs(d) < kRootTol) {
          r.x = std::clamp(r.x - d, r.lo, r.hi);
          continue;
        }
        double next = r.x - d;
        if (!(next > r.lo && next < r.hi)) next = 0.5 * (r.lo + r.hi);
        r.x = next;
        if (r.hi - r.lo > kRootTol) active[keep++] = active[i];
      }
      active.resize(keep);
    }
    if (!active.empty()) continue;

    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = roots[i].x >= tau ? roots[i].x - tau : roots[i].x;
    std::sort(out.begin(), out.end());
    bool distinct = true;
    for (int i = 1; i < n; ++i) distinct = distinct && out[i] > out[i - 1];
    if (distinct) return out;
  }
  return std::nullopt;
}

/// Ordered eigenangles of a Haar unitary of dimension n. Failed draws are
/// replaced by fresh ones from the same stream and counted in `resamples`.
inline std::vector<double> sample_cue_eigenangles(int n, Rng& rng, Sampler s = Sampler::qr_haar,
                                                  long* resamples = nullptr) {
  if (n < 2) throw std::invalid_argument("sample_cue_eigenangles: n must be >= 2");
  while (true) {
    auto th = s == Sampler::qr_haar ? qr_haar_eigenangles(n, rng) : cmv_eigenangles(cue_verblunsky(n, rng));
    if (th) return std::move(*th);
    if (resamples) ++*resamples;
  }
}

}  // namespace levelcorr::mc
