#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "qtherm/ed.hpp"
#include "qtherm/hermite.hpp"
#include "qtherm/three_body.hpp"

using namespace qtherm;

namespace {

using State = ThreeBodyBasis::ProductState;

// X-symmetrized product-basis Hamiltonian assembled from four-mode overlaps,
// independent of the frame construction.
Eigen::MatrixXd product_hamiltonian(const ThreeBodyBasis& b, double gx, double gxy) {
  const auto& s = b.product_states();
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  auto norm = [](const State& x) { return 1.0 / std::sqrt(2.0 * (x.n1 == x.n2 ? 2.0 : 1.0)); };
  auto q = [](int a, int bb, int c, int d) { return quartic_overlap(a, bb, c, d); };
  for (Eigen::Index i = 0; i < n; ++i) {
    const State& l = s[i];
    h(i, i) += l.n1 + l.n2 + l.m + 1.5;
    for (Eigen::Index j = 0; j < n; ++j) {
      const State& r = s[j];
      const double nn = norm(l) * norm(r);
      double xx = 0.0, xy = 0.0;
      if (l.m == r.m) xx = 4.0 * nn * q(l.n1, l.n2, r.n1, r.n2);
      const int a = l.n1, bb = l.n2, c = r.n1, d = r.n2;
      if (bb == d) xy += q(a, l.m, c, r.m);
      if (bb == c) xy += q(a, l.m, d, r.m);
      if (a == d) xy += q(bb, l.m, c, r.m);
      if (a == c) xy += q(bb, l.m, d, r.m);
      xy *= nn;
      h(i, j) += gx * xx + 2.0 * gxy * xy;
    }
  }
  return h;
}

std::vector<double> sorted_eigenvalues(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  return v;
}

}  // namespace

TEST(ThreeBody, FrameDimensionEqualsTopShellSize) {
  for (int k : {4, 9, 16}) {
    const auto b = three_body_basis(k);
    int top = 0;
    for (const auto& s : b->product_states()) top += (s.n1 + s.n2 + s.m == k);
    EXPECT_EQ(b->frame_dimension(), top) << k;
  }
  EXPECT_EQ(three_body_basis(40)->frame_dimension(), 441);
}

TEST(ThreeBody, FrameVectorsAreCentreOfMassGround) {
  const auto b = three_body_basis(10);
  for (Eigen::Index i = 0; i < b->frame_dimension(); ++i) {
    std::map<std::tuple<int, int, int>, double> psi;
    double norm = 0.0;
    for (const auto& e : b->frame_tensor(i)) {
      psi[{e.a, e.b, e.m}] += e.value;
      norm += e.value * e.value;
    }
    EXPECT_NEAR(norm, 1.0, 1e-12);
    // (a1 + a2 + a3) psi = 0
    std::map<std::tuple<int, int, int>, double> lowered;
    for (const auto& [key, v] : psi) {
      const auto [a, bb, m] = key;
      if (a > 0) lowered[{a - 1, bb, m}] += std::sqrt(static_cast<double>(a)) * v;
      if (bb > 0) lowered[{a, bb - 1, m}] += std::sqrt(static_cast<double>(bb)) * v;
      if (m > 0) lowered[{a, bb, m - 1}] += std::sqrt(static_cast<double>(m)) * v;
    }
    double res = 0.0;
    for (const auto& kv : lowered) res += kv.second * kv.second;
    EXPECT_LT(std::sqrt(res), 1e-10) << i;
  }
}

TEST(ThreeBody, FrameHamiltonianIsProjectionOfProductHamiltonian) {
  const auto b = three_body_basis(8);
  const double gx = 2.7, gxy = 1.3;
  Eigen::MatrixXd f(b->product_dimension(), b->frame_dimension());
  for (Eigen::Index i = 0; i < b->frame_dimension(); ++i) f.col(i) = b->frame_product_coefficients(i);
  EXPECT_LT((f.transpose() * f - Eigen::MatrixXd::Identity(f.cols(), f.cols())).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::MatrixXd hp = product_hamiltonian(*b, gx, gxy);
  const Eigen::MatrixXd hf = b->hamiltonian({gx, gxy});
  EXPECT_LT((f.transpose() * hp * f - hf).cwiseAbs().maxCoeff(), 1e-11);
  EXPECT_LT((hf - hf.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ThreeBody, ProductSpectrumIsUnionOfShiftedFrameSpectra) {
  const int k = 8;
  const double gx = 4.0, gxy = 1.5;
  const auto full = sorted_eigenvalues(product_hamiltonian(*three_body_basis(k), gx, gxy));
  std::vector<double> uni;
  for (int c = 0; c <= k - 2; ++c) {
    const EigenSystem es = build_three_body({gx, gxy}, k - c);
    for (Eigen::Index j = 0; j < es.size(); ++j) uni.push_back(es.energies[j] + c);
  }
  std::sort(uni.begin(), uni.end());
  ASSERT_GE(full.size(), uni.size());
  // Frame cutoffs below 2 are not built, so only containment and the lowest levels are compared.
  for (double e : uni) {
    const auto it = std::lower_bound(full.begin(), full.end(), e - 1e-9);
    ASSERT_NE(it, full.end());
    EXPECT_NEAR(*it, e, 1e-9);
  }
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(full[j], uni[j], 1e-9) << j;
}

TEST(ThreeBody, NonInteractingSpectrum) {
  const EigenSystem es = build_three_body({0.0, 0.0}, 20);
  EXPECT_NEAR(es.ground_energy(), 1.5, 1e-14);
  EXPECT_GT(es.energies[1] - es.energies[0], 0.5);
  for (Eigen::Index j = 0; j < es.size(); ++j) {
    const double e = es.energies[j] - 1.5;
    EXPECT_NEAR(e, std::round(e), 1e-12);
  }
}

TEST(ThreeBody, SpectatorPairReducesToTwoBodyRel) {
  // g_xy = 0: the X pair relative motion decouples from the other frame mode.
  // Bosonic X atoms only see the even relative levels.
  for (double g : {1.0, 6.0, 20.0}) {
    const int k = 24;
    const EigenSystem rel = build_two_body_rel(g, k);
    double even_ground = INFINITY;
    for (Eigen::Index j = 0; j < rel.size(); ++j) {
      if (std::abs(rel.vectors(0, j)) > 1e-12) even_ground = std::min(even_ground, rel.energies[j]);
    }
    EXPECT_NEAR(build_three_body({g, 0.0}, k).ground_energy(), even_ground + 1.0, 1e-10) << g;
  }
}

TEST(ThreeBody, XExchangeIsIdentityOnFrame) {
  const auto b = three_body_basis(12);
  const Eigen::MatrixXd p12 = b->exchange_matrix(ThreeBodyBasis::Exchange::x1_x2);
  EXPECT_LT((p12 - Eigen::MatrixXd::Identity(p12.rows(), p12.cols())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ThreeBody, FullySymmetricFrame) {
  const auto b = three_body_basis(12);
  const Eigen::MatrixXd p13 = b->exchange_matrix(ThreeBodyBasis::Exchange::x1_y);
  // P13 leaves the X-symmetric frame; its compression gives the S3 symmetrizer.
  const Eigen::MatrixXd sym = (Eigen::MatrixXd::Identity(p13.rows(), p13.cols()) + 2.0 * p13) / 3.0;
  EXPECT_LT((p13 - p13.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((sym * sym - sym).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::MatrixXd& u = b->fully_symmetric_frame();
  ASSERT_GT(u.cols(), 0);
  EXPECT_LT((u.transpose() * u - Eigen::MatrixXd::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((p13 * u - u).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(three_body_basis(40)->fully_symmetric_frame().cols(), 154);
}

TEST(ThreeBody, FullyBosonicLevelsAppearInMixtureSpectrum) {
  const CouplingPair c{3.0, 3.0};
  const EigenSystem sym = build_three_body(c, 20, BasisSymmetry::fully_bosonic);
  const EigenSystem mix = build_three_body(c, 20);
  EXPECT_EQ(sym.basis.symmetry, BasisSymmetry::fully_bosonic);
  for (Eigen::Index j = 0; j < sym.size(); ++j) {
    const double d = (mix.energies.array() - sym.energies[j]).abs().minCoeff();
    EXPECT_LT(d, 1e-9) << j;
  }
  EXPECT_THROW(build_three_body({3.0, 2.0}, 20, BasisSymmetry::fully_bosonic), ValidationError);
}

TEST(ThreeBody, IndistinguishableMatchesStrategyAGroundEnergy) {
  for (double g : {2.0, 6.0}) {
    const auto ind = spectrum_sweep(SpectrumFamily::indistinguishable, {g}, 40, 1);
    const auto a = spectrum_sweep(SpectrumFamily::A, {g}, 40, 1);
    ASSERT_TRUE(ind[0].error.empty());
    EXPECT_NEAR(ind[0].energies[0], a[0].energies[0], 1e-9) << g;
  }
}

TEST(ThreeBody, EigenvectorsHaveDefiniteShellParity) {
  const auto b = three_body_basis(16);
  const EigenSystem es = build_three_body({5.0, 2.0}, 16);
  EXPECT_LT(es.residual_norm, 1e-10);
  for (Eigen::Index j = 0; j < es.size(); ++j) {
    double w[2] = {0.0, 0.0};
    for (Eigen::Index i = 0; i < es.dimension(); ++i) w[b->frame_shell(i) % 2] += std::pow(es.vectors(i, j), 2);
    EXPECT_LT(std::min(w[0], w[1]), 1e-20) << j;
  }
}

TEST(ThreeBody, VariationalMonotonicityInCutoff) {
  double prev[4] = {INFINITY, INFINITY, INFINITY, INFINITY};
  for (int k : {10, 14, 18, 22}) {
    const EigenSystem es = build_three_body({5.0, 5.0}, k);
    for (int j = 0; j < 4; ++j) {
      EXPECT_LE(es.energies[j], prev[j] + 1e-12) << k << " " << j;
      prev[j] = es.energies[j];
    }
  }
}

TEST(ThreeBody, SpectrumSweepRowsAndErrors) {
  const auto rows = spectrum_sweep(SpectrumFamily::B, {0.0, 1.0, 2.0}, 12, 5, 2);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_DOUBLE_EQ(rows[0].g, 0.0);
  for (const auto& r : rows) {
    ASSERT_TRUE(r.error.empty()) << r.error;
    EXPECT_EQ(r.energies.size(), 5u);
    EXPECT_TRUE(std::is_sorted(r.energies.begin(), r.energies.end()));
  }
  EXPECT_NEAR(rows[0].energies[0], 1.5, 1e-12);
  const auto bad = spectrum_sweep(SpectrumFamily::A, {1.0}, 4, 100000);
  EXPECT_FALSE(bad[0].error.empty());
}

TEST(ThreeBody, ResourceLimits) {
  EXPECT_THROW(ThreeBodyBasis(40, 1000), ResourceError);
  EXPECT_THROW(ThreeBodyBasis(1), ValidationError);
  EXPECT_GT(ThreeBodyBasis::estimated_bytes(60), ThreeBodyBasis::estimated_bytes(40));
}
