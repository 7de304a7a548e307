#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "qtherm/ed.hpp"
#include "qtherm/eigensystem.hpp"

using namespace qtherm;

namespace {

bool definite_parity(const Eigen::VectorXd& v) {
  double even = 0.0, odd = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) (i % 2 == 0 ? even : odd) += v[i] * v[i];
  return std::min(even, odd) < 1e-28;
}

}  // namespace

TEST(Ed, UnitTrapIsDiagonal) {
  const EigenSystem es = build_single(1.0, 50);
  for (int n = 0; n <= 50; ++n) EXPECT_EQ(es.energies[n], n + 0.5);
  EXPECT_EQ(es.residual_norm, 0.0);
}

TEST(Ed, ScaledTrapEigensystem) {
  const double eps = 3.0;
  const EigenSystem es = build_single(eps, 200);
  EXPECT_EQ(es.basis.kind, BasisKind::single);
  EXPECT_NEAR(es.ground_energy(), 0.5 / eps, 1e-14);
  for (int n = 0; n <= 200; ++n) EXPECT_NEAR(es.vectors(n, 0), frequency_overlap(n, eps), 1e-14);
  // Truncation edge: retained tail (<= 1e-9) times the edge coupling ~ cutoff.
  EXPECT_LT(es.residual_norm, 1e-9 * 200);
  const Eigen::MatrixXd gram = es.vectors.transpose() * es.vectors;
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index m = 0; m < es.size(); ++m) EXPECT_NEAR(es.energies[m], (m + 0.5) / eps, 1e-13);
}

TEST(Ed, ScaledTrapHamiltonianMatchesDirectDiagonalization) {
  const EigenSystem ref = diagonalize(scaled_trap_hamiltonian(0.5, 120), {BasisKind::single, 120});
  const EigenSystem es = build_single(0.5, 120);
  for (Eigen::Index m = 0; m < std::min<Eigen::Index>(es.size(), 20); ++m) {
    EXPECT_NEAR(es.energies[m], ref.energies[m], 1e-9);
  }
}

TEST(Ed, NonInteractingRelSpectrum) {
  const EigenSystem es = build_two_body_rel(0.0, 60);
  for (int n = 0; n <= 60; ++n) EXPECT_NEAR(es.energies[n], n + 0.5, 1e-12);
}

TEST(Ed, HamiltonianIsSymmetric) {
  const Eigen::MatrixXd h = two_body_rel_hamiltonian(3.0, 200, 2.0);
  EXPECT_LT((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Ed, ParitySectorsNeverMixAndOddLevelsAreUnshifted) {
  const EigenSystem es = build_two_body_rel(7.0, 120);
  int odd_count = 0;
  for (Eigen::Index j = 0; j < es.size(); ++j) {
    const Eigen::VectorXd v = es.vectors.col(j);
    ASSERT_TRUE(definite_parity(v)) << j;
    double odd_weight = 0.0;
    for (Eigen::Index i = 1; i < v.size(); i += 2) odd_weight += v[i] * v[i];
    if (odd_weight > 0.5) {
      ++odd_count;
      const double e = es.energies[j];
      EXPECT_NEAR(e - std::round(e - 0.5) - 0.5, 0.0, 1e-12);
    }
  }
  EXPECT_EQ(odd_count, 60);
  EXPECT_LT(es.residual_norm, 1e-10);
}

TEST(Ed, VariationalMonotonicityInCutoff) {
  for (double g : {1.0, 20.0}) {
    double prev[5] = {INFINITY, INFINITY, INFINITY, INFINITY, INFINITY};
    for (int cutoff : {20, 40, 80, 160, 320}) {
      const EigenSystem es = build_two_body_rel(g, cutoff);
      for (int k = 0; k < 5; ++k) {
        EXPECT_LE(es.energies[k], prev[k] + 1e-12) << g << " " << cutoff << " " << k;
        prev[k] = es.energies[k];
      }
      EXPECT_GE(es.ground_energy(), busch_rel_energy(g) - 1e-12);
    }
  }
}

TEST(Ed, BuschOracleLimits) {
  // first-order shift lambda |phi_0(0)|^2
  const double g = 1e-3;
  EXPECT_NEAR(busch_rel_energy(g), 0.5 + g / std::numbers::sqrt2 / std::sqrt(std::numbers::pi), 1e-5);
  EXPECT_NEAR(busch_rel_energy(1e6), 1.5, 1e-5);
  double prev = 0.5;
  for (double gg : {0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0}) {
    const double e = busch_rel_energy(gg);
    EXPECT_GT(e, prev);
    prev = e;
    EXPECT_NEAR(busch_coupling_for_energy(e), relative_coupling(gg), 1e-9 * std::max(1.0, gg));
  }
  EXPECT_THROW(busch_rel_energy(0.0), ValidationError);
  EXPECT_THROW(busch_rel_energy(-1.0), ValidationError);
}

TEST(Ed, StrongCouplingEvenLevelApproachesThreeHalves) {
  EXPECT_LT(busch_rel_energy(1e4), 1.5);
  EXPECT_GT(busch_rel_energy(1e4), 1.4998);
  // The truncated even level stays above the exact one; the lowest level is
  // then the unshifted odd state at 3/2.
  const EigenSystem es = build_two_body_rel(1e4, 400);
  EXPECT_NEAR(es.ground_energy(), 1.5, 1e-12);
  double even_ground = INFINITY;
  for (Eigen::Index j = 0; j < es.size(); ++j) {
    if (std::abs(es.vectors(0, j)) > 1e-12) even_ground = std::min(even_ground, es.energies[j]);
  }
  EXPECT_GE(even_ground, busch_rel_energy(1e4));
  EXPECT_LT(even_ground, 1.6);
}

TEST(Ed, InputValidation) {
  EXPECT_THROW(build_two_body_rel(-1.0, 50), ValidationError);
  EXPECT_THROW(build_two_body_rel(INFINITY, 50), ValidationError);
  EXPECT_THROW(build_two_body_rel(NAN, 50), ValidationError);
  EXPECT_THROW(build_two_body_rel(1.0, 1), ValidationError);
  EXPECT_THROW(build_single(0.0, 10), ValidationError);
  EXPECT_THROW(build_single(2.0, 0), ValidationError);
  EXPECT_THROW(CouplingPair(-1.0, 0.0), ValidationError);
  EXPECT_THROW(CouplingPair(0.0, NAN), ValidationError);
}

TEST(Ed, CanonicalOrderingIsDeterministic) {
  // Doubly degenerate spectrum presented in two rotated bases.
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(4, 4);
  h.diagonal() << 1.0, 1.0, 2.0, 2.0;
  const double c = std::cos(0.3), s = std::sin(0.3);
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(4, 4);
  r.block(0, 0, 2, 2) << c, -s, s, c;
  const EigenSystem a = diagonalize(h, {});
  const EigenSystem b = diagonalize(h, {});
  EXPECT_EQ(a.vectors, b.vectors);
  const EigenSystem rot = diagonalize(r.transpose() * h * r, {});
  EXPECT_LT((rot.energies - a.energies).cwiseAbs().maxCoeff(), 1e-14);
  for (Eigen::Index j = 0; j < 4; ++j) {
    const Eigen::VectorXd v = rot.vectors.col(j);
    EXPECT_LT(((r.transpose() * h * r) * v - rot.energies[j] * v).norm(), 1e-12);
  }
}

TEST(Ed, EigensystemDumpRoundTrip) {
  const EigenSystem es = build_two_body_rel(2.5, 80, 2.0);
  const auto path = (std::filesystem::temp_directory_path() / "qtherm_es_roundtrip.bin").string();
  write_eigensystem(path, es);
  const EigenSystem back = read_eigensystem(path);
  std::remove(path.c_str());
  EXPECT_EQ(back.basis, es.basis);
  EXPECT_EQ(back.energies, es.energies);
  EXPECT_EQ(back.vectors, es.vectors);
  EXPECT_EQ(back.residual_norm, es.residual_norm);
  EXPECT_EQ(back.hamiltonian.size(), 0);
  EXPECT_THROW(read_eigensystem(path), std::runtime_error);
}
