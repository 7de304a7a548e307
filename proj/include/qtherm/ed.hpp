#pragma once

// One-body and two-body exact diagonalization in the unit-width oscillator
// basis of the post-quench trap.
//
// Two-body convention: with X = (x1 + x2)/sqrt(2) and u = (x1 - x2)/sqrt(2)
// both centre-of-mass and relative motion are unit oscillators, so the
// relative energies are A_n = n + 1/2. The contact term g*delta(x1 - x2)
// becomes (g / sqrt(2)) * delta(u); that 1/sqrt(2) is the only Jacobian and
// lives in relative_coupling().

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "qtherm/eigensystem.hpp"
#include "qtherm/errors.hpp"
#include "qtherm/hermite.hpp"

namespace qtherm {

inline constexpr int kDefaultRelCutoff = 400;

/// Strength of delta(u) in the relative coordinate for a lab coupling g.
inline double relative_coupling(double g) { return g / std::numbers::sqrt2; }

/// x^2 in the unit-width oscillator basis, modes 0..cutoff.
inline Eigen::MatrixXd position_squared_matrix(int cutoff) {
  const int n = cutoff + 1;
  Eigen::MatrixXd x2 = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    x2(i, i) = i + 0.5;
    if (i + 2 < n) x2(i, i + 2) = x2(i + 2, i) = 0.5 * std::sqrt((i + 1.0) * (i + 2.0));
  }
  return x2;
}

/// Oscillator -1/2 d^2 + x^2 / (2 s^2) written in the unit-width basis.
inline Eigen::MatrixXd scaled_trap_hamiltonian(double scale, int cutoff) {
  Eigen::MatrixXd h = (1.0 / (scale * scale) - 1.0) * 0.5 * position_squared_matrix(cutoff);
  for (int i = 0; i <= cutoff; ++i) h(i, i) += i + 0.5;
  return h;
}

/// Analytic eigensystem of the oscillator with ground-state width `scale`
/// (the pre-quench trap when scale = epsilon), expanded in unit-width modes.
///
/// Each parity sector of the Hamiltonian is tridiagonal in the unit basis, so
/// the columns come from a tridiagonal solve on an extended basis (a ladder
/// recurrence is unstable for large cutoffs). A state is retained while its
/// norm outside the truncated basis stays below 1e-9; the ground state is
/// always retained. Energies are the exact (m + 1/2) / scale.
inline EigenSystem build_single(double scale, int cutoff) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("build_single: scale must be positive");
  if (cutoff < 1) throw ValidationError("build_single: cutoff must be >= 1");
  const int rows = cutoff + 1;
  EigenSystem es;
  es.basis = {BasisKind::single, cutoff, BasisSymmetry::none};
  es.hamiltonian = scaled_trap_hamiltonian(scale, cutoff);
  if (scale == 1.0) {
    es.energies.resize(rows);
    for (int n = 0; n < rows; ++n) es.energies[n] = n + 0.5;
    es.vectors = Eigen::MatrixXd::Identity(rows, rows);
    return es;
  }

  const int ext = 4 * cutoff + 40;
  const double k = (1.0 / (scale * scale) - 1.0) * 0.5;
  Eigen::MatrixXd sector_vecs[2];
  for (int p = 0; p < 2; ++p) {
    const int n_sec = (ext - p) / 2 + 1;
    Eigen::VectorXd diag(n_sec);
    Eigen::VectorXd off(n_sec - 1);
    for (int j = 0; j < n_sec; ++j) {
      const double n = 2.0 * j + p;
      diag[j] = n + 0.5 + k * (n + 0.5);
      if (j + 1 < n_sec) off[j] = k * 0.5 * std::sqrt((n + 1.0) * (n + 2.0));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
    sector_vecs[p] = solver.eigenvectors();
  }

  std::vector<Eigen::VectorXd> kept;
  for (int m = 0; m <= cutoff; ++m) {
    const int p = m % 2;
    const Eigen::VectorXd& sv = sector_vecs[p].col(m / 2);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(rows);
    double tail = 0.0;
    for (Eigen::Index j = 0; j < sv.size(); ++j) {
      const int n = 2 * static_cast<int>(j) + p;
      if (n < rows) v[n] = sv[j];
      else tail += sv[j] * sv[j];
    }
    if (m > 0 && std::sqrt(tail) > 1e-9) break;
    kept.push_back(std::move(v));
  }
  const auto count = static_cast<Eigen::Index>(kept.size());
  es.energies.resize(count);
  es.vectors.resize(rows, count);
  for (Eigen::Index m = 0; m < count; ++m) {
    es.energies[m] = (m + 0.5) / scale;
    es.vectors.col(m) = kept[m];
    detail::fix_sign(es.vectors.col(m));
  }
  // Column 0 is exact in closed form.
  for (int n = 0; n < rows; ++n) es.vectors(n, 0) = frequency_overlap(n, scale);
  es.residual_norm = detail::max_residual(es.hamiltonian, es.energies, es.vectors);
  return es;
}

/// Relative-motion Hamiltonian of two atoms with contact coupling g in a trap
/// whose frequency is omega2 / epsilon (epsilon = 1 is the post-quench trap).
inline Eigen::MatrixXd two_body_rel_hamiltonian(double g, int cutoff, double epsilon = 1.0) {
  Eigen::MatrixXd h = scaled_trap_hamiltonian(epsilon, cutoff);
  const std::vector<double> phi0 = hermite_functions(cutoff, 0.0);
  const double lambda = relative_coupling(g);
  for (int i = 0; i <= cutoff; i += 2) {
    for (int j = 0; j <= cutoff; j += 2) h(i, j) += lambda * phi0[i] * phi0[j];
  }
  return h;
}

/// Relative-coordinate eigensystem. Even and odd modes are diagonalized
/// separately, so parity sectors never mix; odd modes do not feel the contact.
inline EigenSystem build_two_body_rel(double g, int cutoff = kDefaultRelCutoff, double epsilon = 1.0) {
  if (!std::isfinite(g)) {
    throw ValidationError("build_two_body_rel: coupling must be finite (use g = 20 or the closed forms for TG)");
  }
  if (g < 0.0) throw ValidationError("build_two_body_rel: coupling must be non-negative");
  if (cutoff < 2) throw ValidationError("build_two_body_rel: cutoff must be >= 2");
  if (!(epsilon > 0.0)) throw ValidationError("build_two_body_rel: epsilon must be positive");
  const Eigen::MatrixXd h = two_body_rel_hamiltonian(g, cutoff, epsilon);
  const int rows = cutoff + 1;

  Eigen::VectorXd energies(rows);
  Eigen::MatrixXd vectors = Eigen::MatrixXd::Zero(rows, rows);
  Eigen::Index filled = 0;
  for (int parity = 0; parity < 2; ++parity) {
    std::vector<int> idx;
    for (int i = parity; i < rows; i += 2) idx.push_back(i);
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd block(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = 0; b < n; ++b) block(a, b) = h(idx[a], idx[b]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(block);
    if (solver.info() != Eigen::Success) throw ConvergenceError("build_two_body_rel: eigensolver failed");
    for (Eigen::Index k = 0; k < n; ++k) {
      energies[filled] = solver.eigenvalues()[k];
      for (Eigen::Index a = 0; a < n; ++a) vectors(idx[a], filled) = solver.eigenvectors()(a, k);
      ++filled;
    }
  }
  EigenSystem es;
  es.energies = std::move(energies);
  es.vectors = std::move(vectors);
  detail::canonicalize(es.energies, es.vectors, 1e-12 * std::max(1.0, es.energies.cwiseAbs().maxCoeff()));
  es.hamiltonian = h;
  es.basis = {BasisKind::two_body_rel, cutoff, BasisSymmetry::none};
  es.residual_norm = detail::max_residual(h, es.energies, es.vectors);
  return es;
}

/// Coupling implied by a relative-motion energy E on the even ground branch:
/// the derivative jump of the parabolic-cylinder solution D_{E-1/2}(sqrt2 |u|)
/// gives lambda = -2 Gamma(3/4 - E/2) / Gamma(1/4 - E/2).
inline double busch_coupling_for_energy(double energy) {
  return -2.0 * std::tgamma(0.75 - 0.5 * energy) / std::tgamma(0.25 - 0.5 * energy);
}

/// Exact relative ground energy for contact coupling g > 0, in (1/2, 3/2).
inline double busch_rel_energy(double g) {
  if (!(g > 0.0) || !std::isfinite(g)) throw ValidationError("busch_rel_energy: g must be positive and finite");
  const double lambda = relative_coupling(g);
  const double lo = 0.5 + 1e-13;
  const double hi = 1.5 - 1e-12;
  auto f = [lambda](double e) { return busch_coupling_for_energy(e) - lambda; };
  const double flo = f(lo);
  const double fhi = f(hi);
  if (!(flo < 0.0 && fhi > 0.0)) {
    std::ostringstream msg;
    msg << "busch_rel_energy: root not bracketed for g=" << g << " on [" << lo << ", " << hi << "]: f(lo)=" << flo
        << " f(hi)=" << fhi;
    throw ConvergenceError(msg.str());
  }
  std::uintmax_t iters = 200;
  const auto [a, b] =
      boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(52), iters);
  if (iters >= 200) {
    std::ostringstream msg;
    msg << "busch_rel_energy: no convergence for g=" << g << ", final bracket [" << a << ", " << b << "]";
    throw ConvergenceError(msg.str());
  }
  return 0.5 * (a + b);
}

}  // namespace qtherm
