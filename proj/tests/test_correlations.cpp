#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "qtherm/correlations.hpp"
#include "qtherm/ed.hpp"
#include "qtherm/hermite.hpp"
#include "qtherm/scenario.hpp"

using namespace qtherm;

namespace {

constexpr double kPi = std::numbers::pi;

QuenchProtocol pair_protocol(double eps, double g) {
  QuenchProtocol p;
  p.system = SystemKind::pair;
  p.trap = TrapQuench(eps);
  p.g = g;
  p.outputs = {};
  resolve_couplings(p);
  return p;
}

QuenchProtocol triple_protocol(Strategy s, double g, int cutoff = kDefaultThreeBodyCutoff) {
  QuenchProtocol p;
  p.system = SystemKind::triple;
  p.strategy = s;
  p.g = g;
  p.cutoffs.three_body = cutoff;
  p.outputs = {};
  resolve_couplings(p);
  return p;
}

int count_local_maxima(const std::vector<double>& v) {
  int n = 0;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) n += (v[i] > v[i - 1] && v[i] > v[i + 1]);
  return n;
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

}  // namespace

TEST(Correlations, EvolutionPreservesNorm) {
  const SpectralDecomposition sd = project_initial(build_single(3.0, 400), build_single(1.0, 400));
  for (int k = 0; k < 10000; ++k) {
    const double t = 0.01 * k;
    EXPECT_NEAR(evolve(sd, t).norm(), sd.captured_weight, 1e-12);
  }
  const EvolvedState s0 = evolve(sd, 0.0);
  for (Eigen::Index j = 0; j < sd.size(); ++j) EXPECT_EQ(s0.coefficients[j], std::complex<double>(sd.amplitudes[j]));
  EXPECT_THROW(evolve(sd, NAN), ValidationError);
}

TEST(Correlations, VonNeumannEntropyBasics) {
  Eigen::MatrixXcd pure = Eigen::MatrixXcd::Zero(3, 3);
  pure(0, 0) = 1.0;
  EXPECT_EQ(vne(ReducedDensityMatrix(pure, Species::X)), 0.0);
  Eigen::MatrixXcd half = Eigen::MatrixXcd::Zero(2, 2);
  half(0, 0) = half(1, 1) = 0.5;
  EXPECT_NEAR(vne(ReducedDensityMatrix(half, Species::X)), std::numbers::ln2, 1e-15);
  Eigen::MatrixXcd bad = half * 1.1;
  EXPECT_THROW(vne(ReducedDensityMatrix(bad, Species::X)), NumericalError);
  Eigen::MatrixXcd neg = Eigen::MatrixXcd::Zero(2, 2);
  neg(0, 0) = 1.2;
  neg(1, 1) = -0.2;
  EXPECT_THROW(ReducedDensityMatrix(neg, Species::X), NumericalError);
}

TEST(Correlations, RdmIsHermitizedAndSorted) {
  Eigen::MatrixXcd m(2, 2);
  m << 0.3, std::complex<double>(0.1, 0.2), std::complex<double>(0.1, -0.2), 0.7;
  const ReducedDensityMatrix r(m, Species::Y);
  EXPECT_GE(r.occupations[0], r.occupations[1]);
  EXPECT_NEAR(r.occupations.sum(), 1.0, 1e-15);
  EXPECT_NEAR(r.trace(), 1.0, 1e-15);
  for (Eigen::Index k = 0; k < 2; ++k) {
    EXPECT_LT((m * r.orbitals.col(k) - r.occupations[k] * r.orbitals.col(k)).norm(), 1e-14);
  }
}

TEST(Correlations, LabTransformMatchesQuadrature) {
  const LabTransform tr(4, 5);
  const QuadratureRule rule = gauss_hermite(24);
  for (int c = 0; c <= 4; ++c) {
    for (int r = 0; r <= 5; ++r) {
      const auto& v = tr.shell_vector(c, r);
      ASSERT_EQ(static_cast<int>(v.size()), c + r + 1);
      for (int n1 = 0; n1 <= c + r; ++n1) {
        const int n2 = c + r - n1;
        // <n1 n2 | c r> with X = (x1 + x2)/sqrt2, u = (x1 - x2)/sqrt2
        double s = 0.0;
        for (std::size_t i = 0; i < rule.size(); ++i) {
          for (std::size_t j = 0; j < rule.size(); ++j) {
            const double x1 = rule.nodes[i], x2 = rule.nodes[j];
            const double w = rule.weights[i] * rule.weights[j] * std::exp(x1 * x1 + x2 * x2);
            s += w * ho_eigenfunction(n1, x1) * ho_eigenfunction(n2, x2) *
                 ho_eigenfunction(c, (x1 + x2) / std::numbers::sqrt2) * ho_eigenfunction(r, (x1 - x2) / std::numbers::sqrt2);
          }
        }
        EXPECT_NEAR(v[static_cast<std::size_t>(n1)], s, 1e-11) << c << " " << r << " " << n1;
      }
    }
  }
}

TEST(Correlations, LabTransformIsOrthonormalAtLargeCutoffs) {
  const LabTransform tr(70, 150);
  for (int q : {60, 150, 220}) {
    for (int c1 = std::max(0, q - 150); c1 <= std::min(q, 70); c1 += 7) {
      for (int c2 = c1; c2 <= std::min(q, 70); c2 += 5) {
        const auto& a = tr.shell_vector(c1, q - c1);
        const auto& b = tr.shell_vector(c2, q - c2);
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
        EXPECT_NEAR(dot, c1 == c2 ? 1.0 : 0.0, 1e-12) << q << " " << c1 << " " << c2;
      }
    }
  }
}

TEST(Correlations, NonInteractingPairGroundIsRankOneGaussian) {
  const EigenSystem rel = build_two_body_rel(0.0, 60);
  const ReducedDensityMatrix r = pair_stationary_rdm(rel.ground_state(), 60);
  EXPECT_NEAR(r.occupations[0], 1.0, 1e-13);
  EXPECT_NEAR(vne(r), 0.0, 1e-12);
  const auto x = linspace(-5.0, 5.0, 101);
  const auto rho = density_profile(r, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(rho[i], std::exp(-x[i] * x[i]) / std::sqrt(kPi), 1e-13);
}

TEST(Correlations, NonInteractingTripleGroundIsRankOne) {
  const EigenSystem es = build_three_body({0.0, 0.0}, 20);
  const auto b = three_body_basis(20);
  for (Species s : {Species::X, Species::Y}) {
    const ReducedDensityMatrix r = ThreeBodyDynamics::stationary(*b, es.ground_state(), s);
    EXPECT_NEAR(r.occupations[0], 1.0, 1e-12);
    EXPECT_NEAR(vne(r), 0.0, 1e-10);
  }
}

TEST(Correlations, InteractingRdmInvariants) {
  const ResultBundle b = run(pair_protocol(2.0, 3.0));
  // High modes reach beyond the default plotting window.
  const auto x = linspace(-14.0, 14.0, 2049);
  for (double t : {0.0, 0.7, 2.5}) {
    const ReducedDensityMatrix r = b.dynamics->rdm(t, Species::X);
    EXPECT_NEAR(r.trace(), 1.0, 1e-10);
    EXPECT_GT(r.occupations.minCoeff(), -1e-12);
    EXPECT_LT((r.mode_matrix - r.mode_matrix.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
    const auto rho = density_profile(r, x);
    EXPECT_NEAR(trapezoid(x, rho), 1.0, 1e-6);
    EXPECT_GT(*std::min_element(rho.begin(), rho.end()), -1e-12);
  }
  EXPECT_THROW((void)b.dynamics->rdm(0.0, Species::Y), ValidationError);
}

TEST(Correlations, LargeComCutoffKeepsUnitTrace) {
  // eps = 5 needs ~60 COM modes on top of the REL cutoff.
  const ResultBundle b = run(pair_protocol(5.0, 20.0));
  for (double t : {0.0, 0.4, 1.3}) EXPECT_NEAR(b.dynamics->rdm(t, Species::X).trace(), 1.0, 1e-10);
}

TEST(Correlations, IdentityQuenchKeepsRdmStatic) {
  const ResultBundle b = run(triple_protocol(Strategy::custom, 0.0, 16));
  const ReducedDensityMatrix r0 = b.dynamics->rdm(0.0, Species::X);
  const ReducedDensityMatrix r1 = b.dynamics->rdm(3.3, Species::X);
  EXPECT_LT((r0.mode_matrix - r1.mode_matrix).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Correlations, StrategyAGivesIdenticalSpeciesEntropies) {
  const ResultBundle b = run(triple_protocol(Strategy::A, 4.0, 20));
  for (double t : {0.5, 1.9, 4.0}) {
    const auto x = b.dynamics->rdm(t, Species::X);
    const auto y = b.dynamics->rdm(t, Species::Y);
    EXPECT_LT((x.occupations - y.occupations).cwiseAbs().maxCoeff(), 1e-10) << t;
  }
}

TEST(Correlations, TimeAverage) {
  const TimeGrid g = TimeGrid::uniform(0.0, 10.0, 11);
  const TimeSeries<double> flat(g, std::vector<double>(11, 0.7));
  EXPECT_NEAR(time_average(flat, 10.0), 0.7, 1e-15);
  EXPECT_NEAR(time_average(flat, 3.5), 0.7, 1e-15);
  std::vector<double> ramp(11);
  for (int k = 0; k <= 10; ++k) ramp[k] = k;
  EXPECT_NEAR(time_average(TimeSeries<double>(g, ramp), 10.0), 5.0, 1e-14);
  EXPECT_NEAR(time_average(TimeSeries<double>(g, ramp), 4.5), 2.25, 1e-14);
  EXPECT_THROW(time_average(flat, 11.0), ValidationError);
  EXPECT_THROW(time_average(flat, 0.0), ValidationError);
}

TEST(Correlations, MeanEntropyInsensitiveToTauDoubling) {
  // Default window against twice the default, same sample spacing.
  QuenchProtocol p = pair_protocol(2.0, 1.0);
  p.outputs = {"mean_entropy"};
  const double tau = p.time.tau;
  const std::size_t n = p.time.tau_samples;
  const double a = run(p).mean_entropy.at(Species::X);
  p.time.tau = 2.0 * tau;
  p.time.tau_samples = 2 * n - 1;
  const double b = run(p).mean_entropy.at(Species::X);
  EXPECT_NEAR(b / a, 1.0, 0.02);
}

TEST(Correlations, MeanEntropyConvergedInSampling) {
  QuenchProtocol p = pair_protocol(2.0, 1.0);
  p.outputs = {"mean_entropy"};
  const double a = run(p).mean_entropy.at(Species::X);
  p.time.tau_samples = 4 * p.time.tau_samples - 3;
  const double b = run(p).mean_entropy.at(Species::X);
  EXPECT_NEAR(b / a, 1.0, 1e-3);
}

TEST(Correlations, TgProxyEntropyNearlyConstant) {
  const ResultBundle b = run(pair_protocol(2.0, 20.0));
  const auto s = vne_series(*b.dynamics, TimeGrid::uniform(0.0, kPi, 65), Species::X);
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  EXPECT_LT(*hi - *lo, 5e-2);
}

TEST(Correlations, RevivalDipsAlignWithEchoPeaks) {
  QuenchProtocol p = triple_protocol(Strategy::A, 20.0);
  p.outputs = {"echo"};
  p.time.samples = 257;
  const ResultBundle b = run(p);
  const auto s = vne_series(*b.dynamics, b.echo->grid(), Species::X);
  const auto& L = b.echo->values;
  int checked = 0;
  for (std::size_t k = 1; k + 1 < L.size(); ++k) {
    if (!(L[k] > L[k - 1] && L[k] > L[k + 1] && L[k] > 0.4)) continue;
    ++checked;
    bool dip = false;
    for (std::size_t j = k - 1; j <= k + 1; ++j) {
      dip = dip || (j > 0 && j + 1 < s.size() && s.values[j] < s.values[j - 1] && s.values[j] < s.values[j + 1]);
    }
    EXPECT_TRUE(dip) << "echo peak at t=" << b.echo->time(k);
  }
  EXPECT_GE(checked, 3);
}

TEST(Correlations, StrategyBDevelopsDoublePeakedY) {
  const ResultBundle b = run(triple_protocol(Strategy::B, 1.0));
  const auto x = linspace(-4.0, 4.0, 401);
  int double_peaked = 0;
  for (int k = 0; k <= 32; ++k) {
    const auto rho = density_profile(b.dynamics->rdm(k * kPi / 4, Species::Y), x);
    double_peaked += count_local_maxima(rho) >= 2;
  }
  EXPECT_GT(double_peaked, 0);
  EXPECT_EQ(count_local_maxima(density_profile(b.dynamics->rdm(0.0, Species::Y), x)), 1);
}

TEST(Correlations, CenterDensityOfStationaryGaussian) {
  const SpectralDecomposition sd = project_initial(build_single(1.0, 20), build_single(1.0, 20));
  const SingleDynamics dyn(sd, build_single(1.0, 20));
  const auto c = center_density_series(dyn, TimeGrid::uniform(0.0, 5.0, 11), Species::single);
  for (double v : c.values) EXPECT_NEAR(v, 1.0 / std::sqrt(kPi), 1e-14);
  EXPECT_THROW((void)dyn.rdm(0.0, Species::X), ValidationError);
}

TEST(Correlations, DensityMovieWritesCsvAndSidecar) {
  const SpectralDecomposition sd = project_initial(build_single(3.0, 100), build_single(1.0, 100));
  const SingleDynamics dyn(sd, build_single(1.0, 100));
  const DensityMovie m = density_movie(dyn, TimeGrid::uniform(0.0, kPi, 5), Species::single, linspace(-3, 3, 7));
  ASSERT_EQ(m.frames.size(), 5u);
  // breathing: the width at t = pi/2 is smaller than at t = 0 for eps > 1
  EXPECT_GT(m.frames[2][3], m.frames[0][3]);
  EXPECT_NEAR(m.frames[4][3], m.frames[0][3], 1e-10);
  const auto path = (std::filesystem::temp_directory_path() / "qtherm_movie.csv").string();
  write_density_movie(path, m, nlohmann::json{{"system", "single"}}, {"header"});
  std::ifstream side(path + ".json");
  const nlohmann::json meta = nlohmann::json::parse(side);
  EXPECT_EQ(meta["protocol"]["system"], "single");
  EXPECT_EQ(meta["columns"]["count"], 7);
  EXPECT_EQ(meta["rows"]["count"], 5);
  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}
