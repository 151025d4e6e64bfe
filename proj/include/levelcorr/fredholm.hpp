#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "levelcorr/error.hpp"
#include "levelcorr/quadrature.hpp"

namespace levelcorr::fredholm {

using cplx = std::complex<double>;

struct DeterminantRequest {
  cplx zeta;
  double interval_length;
  int nodes;
};

/// Symmetrized Nystrom matrix sqrt(w_i) K(x_i, x_j) sqrt(w_j) on (0, s).
inline Eigen::MatrixXd sine_kernel_matrix(double s, int nodes) {
  const auto rule = quad::gauss_legendre(nodes, 0.0, s);
  Eigen::MatrixXd m(nodes, nodes);
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double d = std::numbers::pi * (rule.nodes[i] - rule.nodes[j]);
      const double k = (i == j) ? 1.0 : std::sin(d) / d;
      const double v = std::sqrt(rule.weights[i] * rule.weights[j]) * k;
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return m;
}

/// log det(I - zeta K_s), imaginary part reduced to [-pi, pi].
inline cplx sine_kernel_log_det(const DeterminantRequest& req) {
  if (!std::isfinite(req.zeta.real()) || !std::isfinite(req.zeta.imag()) || !std::isfinite(req.interval_length))
    throw std::invalid_argument("sine_kernel_det: non-finite input");
  if (req.interval_length < 0.0) throw std::invalid_argument("sine_kernel_det: interval_length must be >= 0");
  if (req.nodes < 4) throw std::invalid_argument("sine_kernel_det: nodes must be >= 4");
  if (req.interval_length == 0.0 || req.zeta == cplx(0.0)) return 0.0;
  const Eigen::MatrixXcd a =
      Eigen::MatrixXcd::Identity(req.nodes, req.nodes) - req.zeta * sine_kernel_matrix(req.interval_length, req.nodes).cast<cplx>();
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
  const auto& m = lu.matrixLU();
  cplx out = 0.0;
  for (int i = 0; i < req.nodes; ++i) out += std::log(m(i, i));
  // Each row swap flips the sign.
  if (lu.permutationP().determinant() < 0) out += cplx(0.0, std::numbers::pi);
  return {out.real(), std::remainder(out.imag(), 2.0 * std::numbers::pi)};
}

/// det(I - zeta K_s) with a fixed node count.
inline cplx sine_kernel_det(const DeterminantRequest& req) { return std::exp(sine_kernel_log_det(req)); }

/// Node count that resolves the kernel on (0, s) to double precision.
inline int default_nodes(double s) { return static_cast<int>(std::ceil(1.2 * s)) + 40; }

struct AutoDet {
  cplx value;
  int nodes;
  double change;
};

/// Doubles the node count from 40 until successive determinants differ by
/// less than tol; gives up at 640 nodes.
inline AutoDet sine_kernel_det_auto(cplx zeta, double s, double tol = 1e-13) {
  int n = 40;
  cplx prev = sine_kernel_det({zeta, s, n});
  while (true) {
    const int m = 2 * n;
    const cplx cur = sine_kernel_det({zeta, s, m});
    const double change = std::abs(cur - prev);
    if (change < tol) return {cur, m, change};
    if (m >= 640) throw NumericalError("sine_kernel_det: no convergence at 640 nodes");
    n = m;
    prev = cur;
  }
}

/// Probability of no point of the sine process in an interval of length s.
inline double gap_probability(double s, int nodes = 0) {
  if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("gap_probability: s must be >= 0");
  const cplx d = sine_kernel_det({1.0, s, nodes > 0 ? nodes : default_nodes(s)});
  if (std::abs(d.imag()) > 1e-10) throw NumericalError("gap_probability: complex determinant");
  return d.real();
}

/// Probabilities E_n(s), n = 0.., of exactly n points in an interval of length s:
/// coefficients of prod_i (1 - mu_i + z mu_i) over kernel eigenvalues mu_i.
inline std::vector<double> counting_probabilities(double s, int nodes = 0) {
  if (!(s >= 0.0)) throw std::invalid_argument("counting_probabilities: s must be >= 0");
  if (s == 0.0) return {1.0};
  const int n = nodes > 0 ? nodes : std::max(30, static_cast<int>(2.0 * s) + 30);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sine_kernel_matrix(s, n), Eigen::EigenvaluesOnly);
  std::vector<double> p{1.0};
  for (int i = 0; i < n; ++i) {
    const double mu = std::clamp(es.eigenvalues()(i), 0.0, 1.0);
    if (mu < 1e-18) continue;
    p.push_back(0.0);
    for (std::size_t j = p.size() - 1; j > 0; --j) p[j] = p[j] * (1.0 - mu) + p[j - 1] * mu;
    p[0] *= 1.0 - mu;
  }
  return p;
}

}  // namespace levelcorr::fredholm
