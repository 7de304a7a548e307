#pragma once

// Analytic results for a trap-frequency quench of one atom and of a
// Tonks-Girardeau (infinitely repulsive) pair. Energies in hbar*omega2,
// times in 1/omega2.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "qtherm/errors.hpp"
#include "qtherm/hermite.hpp"

namespace qtherm {

/// Sudden trap quench omega1 -> omega2 with epsilon = omega2 / omega1.
struct TrapQuench {
  double epsilon = 1.0;
  double omega2 = 1.0;

  TrapQuench() = default;
  explicit TrapQuench(double eps, double w2 = 1.0) : epsilon(eps), omega2(w2) {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ValidationError("TrapQuench: epsilon must be positive");
    if (!(w2 > 0.0) || !std::isfinite(w2)) throw ValidationError("TrapQuench: omega2 must be positive");
  }
};

inline double le_single(const TrapQuench& q, double t) {
  const double eps = q.epsilon;
  const double c = 2.0 * eps * std::cos(q.omega2 * t);
  const double s = (1.0 + eps * eps) * std::sin(q.omega2 * t);
  return 2.0 * eps / std::sqrt(c * c + s * s);
}

inline double work_single(const TrapQuench& q) {
  return (q.epsilon * q.epsilon - 1.0) / (4.0 * q.epsilon);
}

inline double deltaF_single(const TrapQuench& q) { return (q.epsilon - 1.0) / (2.0 * q.epsilon); }

inline double wirr_single(const TrapQuench& q) {
  const double d = q.epsilon - 1.0;
  return d * d / (4.0 * q.epsilon);
}

/// Lower bound on entropy production, (8/pi^2) arccos^2(sqrt(F)).
inline double bures_bound(double fidelity) {
  constexpr double kSlack = 1e-12;
  if (!(fidelity >= -kSlack && fidelity <= 1.0 + kSlack)) {
    throw std::domain_error("bures_bound: fidelity outside [0, 1]");
  }
  const double f = std::clamp(fidelity, 0.0, 1.0);
  const double angle = std::acos(std::sqrt(f));
  return 8.0 / (std::numbers::pi * std::numbers::pi) * angle * angle;
}

inline double sigmaB_single(const TrapQuench& q, double t) {
  const double eps = q.epsilon;
  const double a = std::pow(1.0 - eps, 4);
  const double b = std::pow(1.0 + eps, 4);
  const double c = 1.0 - eps * eps;
  const double denom = std::pow(a + b - 2.0 * c * c * std::cos(2.0 * q.omega2 * t), 0.25);
  const double arg = std::min(1.0, 2.0 * std::sqrt(eps) / denom);
  const double angle = std::acos(arg);
  return 8.0 / (std::numbers::pi * std::numbers::pi) * angle * angle;
}

/// Overlap of the pre-quench lowest odd relative state (width eps) with the
/// odd post-quench relative state p. Zero for even p.
inline SignedLog rel_overlap_tg_log(int p, double epsilon) {
  if (p < 0) throw std::invalid_argument("rel_overlap_tg: p must be non-negative");
  if (!(epsilon > 0.0)) throw std::invalid_argument("rel_overlap_tg: epsilon must be positive");
  if (p % 2 == 0) return {};
  const double inv = 1.0 / epsilon;
  const double base = 1.0 - inv;
  const int half = (p - 1) / 2;
  if (base == 0.0 && half > 0) return {};
  double log_abs = 0.5 * (p + 3) * std::numbers::ln2 + 0.75 * std::log(inv) + log_double_factorial(p) -
                   0.5 * (p * std::numbers::ln2 + std::lgamma(p + 1.0) + (p + 2) * std::log(inv + 1.0));
  if (half > 0) log_abs += half * std::log(std::abs(base));
  const int sign = (base < 0.0 && half % 2 == 1) ? -1 : 1;
  return {log_abs, sign};
}

inline double rel_overlap_tg(int p, double epsilon) { return rel_overlap_tg_log(p, epsilon).value(); }

struct TruncatedEcho {
  double value = 1.0;
  double weight_deficit = 0.0;  ///< 1 - captured squared-overlap weight
  bool converged = true;        ///< weight_deficit <= 1e-3
};

inline constexpr double kEchoDeficitWarning = 1e-3;

/// TG-pair Loschmidt echo from the COM-even x REL-odd channel sum, truncated
/// to `truncation` terms per channel. The double sum factorizes into the
/// product of the two channel sums.
inline TruncatedEcho le_tg_pair(const TrapQuench& q, double t, int truncation) {
  if (truncation < 1) throw std::invalid_argument("le_tg_pair: truncation must be >= 1");
  const double eps = q.epsilon;
  const double wt = q.omega2 * t;
  std::complex<double> com{0.0, 0.0};
  std::complex<double> rel{0.0, 0.0};
  double com_weight = 0.0;
  double rel_weight = 0.0;
  const double e0_initial = 0.5 / eps;
  const double a1_initial = 1.5 / eps;
  for (int n = 0; n < truncation; ++n) {
    const double c = frequency_overlap(2 * n, eps);
    const double w = c * c;
    com_weight += w;
    com += w * std::polar(1.0, (2.0 * n + 0.5 - e0_initial) * wt);
    const double d = rel_overlap_tg(2 * n + 1, eps);
    const double v = d * d;
    rel_weight += v;
    rel += v * std::polar(1.0, (2.0 * n + 1.5 - a1_initial) * wt);
  }
  TruncatedEcho out;
  out.value = std::norm(com * rel);
  out.weight_deficit = std::max(0.0, 1.0 - com_weight * rel_weight);
  out.converged = out.weight_deficit <= kEchoDeficitWarning;
  return out;
}

/// Smallest per-channel truncation whose weight deficit is below `target`.
inline int tg_truncation_for(const TrapQuench& q, double target = 1e-6, int max_terms = 200000) {
  double com_weight = 0.0;
  double rel_weight = 0.0;
  for (int n = 0; n < max_terms; ++n) {
    const double c = frequency_overlap(2 * n, q.epsilon);
    const double d = rel_overlap_tg(2 * n + 1, q.epsilon);
    com_weight += c * c;
    rel_weight += d * d;
    if (1.0 - com_weight * rel_weight <= target) return n + 1;
  }
  throw ConvergenceError("tg_truncation_for: weight deficit target not reached");
}

/// Average work for N hard-core bosons under a trap quench: N^2 times the
/// single-atom value.
inline double work_tg(int n_atoms, const TrapQuench& q) {
  if (n_atoms < 1 || n_atoms > 3) throw std::invalid_argument("work_tg: N must be 1, 2 or 3");
  return n_atoms * n_atoms * work_single(q);
}

}  // namespace qtherm
