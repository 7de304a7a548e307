#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "qtherm/errors.hpp"

namespace qtherm {

/// Contact couplings (intra-species g_x, inter-species g_xy), repulsive only.
/// Two-body problems use g_x and ignore g_xy.
struct CouplingPair {
  double g_x = 0.0;
  double g_xy = 0.0;

  CouplingPair() = default;
  CouplingPair(double gx, double gxy) : g_x(gx), g_xy(gxy) {
    if (!(gx >= 0.0) || !(gxy >= 0.0) || !std::isfinite(gx) || !std::isfinite(gxy)) {
      throw ValidationError("CouplingPair: couplings must be finite and non-negative");
    }
  }

  friend bool operator==(const CouplingPair&, const CouplingPair&) = default;
};

enum class BasisKind : std::int32_t { single = 0, two_body_rel = 1, three_body_symmetrized = 2 };
enum class BasisSymmetry : std::int32_t { none = 0, bosonic_in_x_pair = 1, fully_bosonic = 2 };

inline const char* to_string(BasisKind k) {
  switch (k) {
    case BasisKind::single: return "single";
    case BasisKind::two_body_rel: return "two_body_rel";
    case BasisKind::three_body_symmetrized: return "three_body_symmetrized";
  }
  return "?";
}

inline const char* to_string(BasisSymmetry s) {
  switch (s) {
    case BasisSymmetry::none: return "none";
    case BasisSymmetry::bosonic_in_x_pair: return "bosonic_in_x_pair";
    case BasisSymmetry::fully_bosonic: return "fully_bosonic";
  }
  return "?";
}

/// Identifies the coordinate system eigenvectors are expressed in.
///
/// single / two_body_rel: unit-width oscillator modes 0..cutoff.
/// three_body_symmetrized: the centre-of-mass-ground frame of the X-pair
/// symmetrized product basis (n1 <= n2, m) with n1 + n2 + m <= cutoff.
/// `symmetry` records the extra constraint satisfied by the stored
/// eigenvectors; it does not change the coordinates.
struct BasisDescriptor {
  BasisKind kind = BasisKind::single;
  int cutoff = 1;
  BasisSymmetry symmetry = BasisSymmetry::none;

  /// True when coefficient vectors of the two descriptors can be contracted.
  [[nodiscard]] bool same_coordinates(const BasisDescriptor& o) const {
    return kind == o.kind && cutoff == o.cutoff;
  }
  friend bool operator==(const BasisDescriptor&, const BasisDescriptor&) = default;
};

/// Eigenpairs in ascending energy order over a truncated basis.
struct EigenSystem {
  Eigen::VectorXd energies;
  Eigen::MatrixXd vectors;       ///< column j = eigenvector j in basis coordinates
  Eigen::MatrixXd hamiltonian;   ///< operator in basis coordinates; empty after load
  BasisDescriptor basis;
  double residual_norm = 0.0;    ///< max_j |H v_j - E_j v_j|

  [[nodiscard]] Eigen::Index size() const { return energies.size(); }
  [[nodiscard]] Eigen::Index dimension() const { return vectors.rows(); }
  [[nodiscard]] double ground_energy() const { return energies[0]; }
  [[nodiscard]] Eigen::VectorXd ground_state() const { return vectors.col(0); }
};

namespace detail {

/// Flip so the first significant coefficient is positive.
inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double scale = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-10 * scale) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

/// Sort by energy; inside near-degenerate groups order sign-fixed vectors
/// lexicographically so raw dumps are reproducible.
inline void canonicalize(Eigen::VectorXd& energies, Eigen::MatrixXd& vectors, double degeneracy_tol) {
  const Eigen::Index n = energies.size();
  for (Eigen::Index j = 0; j < n; ++j) fix_sign(vectors.col(j));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return energies[a] < energies[b]; });
  auto lex_greater = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double x = vectors(i, a);
      const double y = vectors(i, b);
      if (std::abs(x - y) > 1e-12) return x > y;
    }
    return false;
  };
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && energies[order[end]] - energies[order[start]] <= degeneracy_tol) ++end;
    if (end - start > 1) std::stable_sort(order.begin() + start, order.begin() + end, lex_greater);
    start = end;
  }
  Eigen::VectorXd e(n);
  Eigen::MatrixXd v(vectors.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e[j] = energies[order[j]];
    v.col(j) = vectors.col(order[j]);
  }
  energies = std::move(e);
  vectors = std::move(v);
}

inline double max_residual(const Eigen::MatrixXd& h, const Eigen::VectorXd& e, const Eigen::MatrixXd& v) {
  if (h.size() == 0 || v.cols() == 0) return 0.0;
  const Eigen::MatrixXd r = h * v - v * e.asDiagonal();
  return r.colwise().norm().maxCoeff();
}

}  // namespace detail

/// Diagonalize a dense symmetric matrix into a canonical EigenSystem.
inline EigenSystem diagonalize(const Eigen::MatrixXd& h, const BasisDescriptor& basis) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
  if (solver.info() != Eigen::Success) throw ConvergenceError("diagonalize: eigensolver failed");
  EigenSystem es;
  es.energies = solver.eigenvalues();
  es.vectors = solver.eigenvectors();
  const double scale = std::max(1.0, es.energies.cwiseAbs().maxCoeff());
  detail::canonicalize(es.energies, es.vectors, 1e-12 * scale);
  es.hamiltonian = h;
  es.basis = basis;
  es.residual_norm = detail::max_residual(h, es.energies, es.vectors);
  return es;
}

// Binary layout (little-endian host order):
//   char[4] "QTES", int32 version(=1), int32 kind, int32 cutoff, int32 symmetry,
//   int64 rows (basis dimension), int64 cols (states), float64 residual_norm,
//   float64 energies[cols], float64 vectors[rows * cols] row-major.
inline void write_eigensystem(const std::string& path, const EigenSystem& es) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_eigensystem: cannot open " + path);
  const char magic[4] = {'Q', 'T', 'E', 'S'};
  const std::int32_t header[4] = {1, static_cast<std::int32_t>(es.basis.kind), es.basis.cutoff,
                                  static_cast<std::int32_t>(es.basis.symmetry)};
  const std::int64_t dims[2] = {es.vectors.rows(), es.vectors.cols()};
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(&es.residual_norm), sizeof(double));
  out.write(reinterpret_cast<const char*>(es.energies.data()),
            static_cast<std::streamsize>(sizeof(double) * es.energies.size()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = es.vectors;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
  if (!out) throw std::runtime_error("write_eigensystem: write failed for " + path);
}

inline EigenSystem read_eigensystem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_eigensystem: cannot open " + path);
  char magic[4];
  std::int32_t header[4];
  std::int64_t dims[2];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof header);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || std::string(magic, 4) != "QTES" || header[0] != 1 || dims[0] < 0 || dims[1] < 0) {
    throw std::runtime_error("read_eigensystem: not a version-1 eigensystem file: " + path);
  }
  EigenSystem es;
  es.basis = {static_cast<BasisKind>(header[1]), header[2], static_cast<BasisSymmetry>(header[3])};
  in.read(reinterpret_cast<char*>(&es.residual_norm), sizeof(double));
  es.energies.resize(dims[1]);
  in.read(reinterpret_cast<char*>(es.energies.data()), static_cast<std::streamsize>(sizeof(double) * dims[1]));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
  if (!in) throw std::runtime_error("read_eigensystem: truncated file " + path);
  es.vectors = rm;
  return es;
}

}  // namespace qtherm
