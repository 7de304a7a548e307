#pragma once

// Harmonic-oscillator special functions in dimensionless oscillator units.
//
// Conventions: physicists' Hermite polynomials H_n; the unit-width eigenfunction
// is phi_n(x) = pi^{-1/4} (2^n n!)^{-1/2} H_n(x) exp(-x^2/2). A "width" w
// eigenfunction is w^{-1/4} phi_n(x / sqrt(w)), i.e. the ground state decays
// as exp(-x^2 / (2w)).

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtherm/errors.hpp"

namespace qtherm {

/// Magnitude-in-log-space plus sign. `sign == 0` encodes an exact zero.
struct SignedLog {
  double log_abs = -INFINITY;
  int sign = 0;

  [[nodiscard]] double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }
};

/// Physicists' Hermite polynomial H_n(x) by three-term recurrence.
inline double hermite(int n, double x) {
  if (n < 0) throw std::invalid_argument("hermite: n must be non-negative");
  if (n == 0) return 1.0;
  double prev = 1.0;
  double cur = 2.0 * x;
  for (int k = 1; k < n; ++k) {
    const double next = 2.0 * x * cur - 2.0 * k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

namespace detail {

inline const double kPiQuarterInv = std::pow(std::numbers::pi, -0.25);

}  // namespace detail

/// Normalized polynomial parts h_k(x) = phi_k(x) exp(x^2/2), k = 0..nmax.
/// Orthonormal with respect to the weight exp(-x^2).
inline std::vector<double> hermite_polynomial_parts(int nmax, double x) {
  std::vector<double> h(static_cast<std::size_t>(nmax) + 1);
  h[0] = detail::kPiQuarterInv;
  if (nmax >= 1) h[1] = std::sqrt(2.0) * x * h[0];
  for (int k = 2; k <= nmax; ++k) {
    h[k] = std::sqrt(2.0 / k) * x * h[k - 1] - std::sqrt((k - 1.0) / k) * h[k - 2];
  }
  return h;
}

/// Unit-width eigenfunctions phi_0..phi_nmax at x. Valid while exp(-x^2/2)
/// is representable (|x| < ~37); use ho_eigenfunction_log beyond that.
inline std::vector<double> hermite_functions(int nmax, double x) {
  std::vector<double> f(static_cast<std::size_t>(nmax) + 1);
  f[0] = detail::kPiQuarterInv * std::exp(-0.5 * x * x);
  if (nmax >= 1) f[1] = std::sqrt(2.0) * x * f[0];
  for (int k = 2; k <= nmax; ++k) {
    f[k] = std::sqrt(2.0 / k) * x * f[k - 1] - std::sqrt((k - 1.0) / k) * f[k - 2];
  }
  return f;
}

/// Log-space evaluation of the width-`width` eigenfunction; never overflows.
inline SignedLog ho_eigenfunction_log(int n, double x, double width) {
  if (n < 0) throw std::invalid_argument("ho_eigenfunction: n must be non-negative");
  if (!(width > 0.0)) throw std::invalid_argument("ho_eigenfunction: width must be positive");
  const double y = x / std::sqrt(width);
  constexpr double kRescale = 1e150;
  double log_scale = 0.0;
  double prev = 0.0;
  double cur = detail::kPiQuarterInv;
  for (int k = 1; k <= n; ++k) {
    const double next = std::sqrt(2.0 / k) * y * cur - std::sqrt((k - 1.0) / k) * prev;
    prev = cur;
    cur = next;
    if (std::abs(cur) > kRescale) {
      cur /= kRescale;
      prev /= kRescale;
      log_scale += std::log(kRescale);
    }
  }
  if (cur == 0.0) return {};
  return {std::log(std::abs(cur)) + log_scale - 0.5 * y * y - 0.25 * std::log(width),
          cur > 0.0 ? 1 : -1};
}

inline double ho_eigenfunction(int n, double x, double width = 1.0) {
  return ho_eigenfunction_log(n, x, width).value();
}

/// ln(n!!) with the conventions 0!! = (-1)!! = 1.
inline double log_double_factorial(int n) {
  if (n < -1) throw std::invalid_argument("double_factorial: n must be >= -1");
  if (n <= 0) return 0.0;
  if (n % 2 == 0) {
    const int k = n / 2;
    return k * std::numbers::ln2 + std::lgamma(k + 1.0);
  }
  const int k = (n + 1) / 2;
  return std::lgamma(2.0 * k + 1.0) - k * std::numbers::ln2 - std::lgamma(k + 1.0);
}

/// n!!; exact product for small n, log space above that.
inline double double_factorial(int n) {
  if (n < -1) throw std::invalid_argument("double_factorial: n must be >= -1");
  if (n <= 60) {
    double p = 1.0;
    for (int k = n; k > 1; k -= 2) p *= k;
    return p;
  }
  return std::exp(log_double_factorial(n));
}

/// <psi_0(width eps) | phi_n> for the sudden trap quench omega1 -> omega2,
/// eps = omega2/omega1. Zero for odd n.
inline SignedLog frequency_overlap_log(int n, double epsilon) {
  if (n < 0) throw std::invalid_argument("frequency_overlap: n must be non-negative");
  if (!(epsilon > 0.0)) throw std::invalid_argument("frequency_overlap: epsilon must be positive");
  if (n % 2 != 0) return {};
  const double ratio = (epsilon - 1.0) / (epsilon + 1.0);
  const double prefactor = std::log(2.0 * std::sqrt(epsilon)) - std::log(epsilon + 1.0);
  if (n == 0) return {0.5 * prefactor, 1};
  if (ratio == 0.0) return {};
  const double log_abs = 0.5 * (prefactor - std::lgamma(n + 1.0)) +
                         0.5 * n * std::log(std::abs(ratio)) + log_double_factorial(n - 1);
  const int sign = (ratio < 0.0 && (n / 2) % 2 == 1) ? -1 : 1;
  return {log_abs, sign};
}

inline double frequency_overlap(int n, double epsilon) {
  return frequency_overlap_log(n, epsilon).value();
}

/// Gauss-Hermite rule for the weight exp(-x^2).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }
};

/// Largest rule whose weights stay representable in double precision.
inline constexpr int kMaxGaussHermiteNodes = 340;

/// n-point Gauss-Hermite rule: Golub-Welsch start, Newton polish, weights from
/// the Christoffel function (always positive).
inline QuadratureRule gauss_hermite(int n) {
  if (n < 1 || n > kMaxGaussHermiteNodes) {
    throw std::invalid_argument("gauss_hermite: node count must be in [1, " +
                                std::to_string(kMaxGaussHermiteNodes) + "]");
  }
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);

  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = solver.eigenvalues()[i];
    for (int iter = 0; iter < 8; ++iter) {
      const auto f = hermite_functions(n, x);
      const double step = f[n] / (std::sqrt(2.0 * n) * f[n - 1]);
      x -= step;
      if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    const auto f = hermite_functions(n - 1, x);
    double christoffel = 0.0;
    for (double v : f) christoffel += v * v;
    rule.nodes[i] = x;
    rule.weights[i] = std::exp(-x * x) / christoffel;
  }
  // Enforce exact mirror symmetry of the nodes.
  for (int i = 0; i < n / 2; ++i) {
    const double x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

/// Node count giving exactness for a polynomial of the given total degree,
/// plus rounding headroom.
inline int quadrature_nodes_for_degree(int degree) { return degree / 2 + 8; }

/// Integral of phi_a phi_b phi_c phi_d over the real line. Zero when the
/// total parity is odd; otherwise exact Gauss-Hermite in y = sqrt(2) x.
inline double quartic_overlap(int a, int b, int c, int d, int nodes = 0) {
  if (a < 0 || b < 0 || c < 0 || d < 0) {
    throw std::invalid_argument("quartic_overlap: indices must be non-negative");
  }
  const int degree = a + b + c + d;
  if (degree % 2 != 0) return 0.0;
  const QuadratureRule rule = gauss_hermite(nodes > 0 ? nodes : quadrature_nodes_for_degree(degree));
  const int nmax = std::max(std::max(a, b), std::max(c, d));
  double sum = 0.0;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const auto h = hermite_polynomial_parts(nmax, rule.nodes[k] / std::numbers::sqrt2);
    sum += rule.weights[k] * h[a] * h[b] * h[c] * h[d];
  }
  return sum / std::numbers::sqrt2;
}

}  // namespace qtherm
