#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "qtherm/closed_forms.hpp"
#include "qtherm/hermite.hpp"

using namespace qtherm;

namespace {

constexpr double kPi = std::numbers::pi;

template <class F>
double trapezoid(F&& f, double L, int n = 40001) {
  const double h = 2.0 * L / (n - 1);
  double s = 0.5 * (f(-L) + f(L));
  for (int i = 1; i < n - 1; ++i) s += f(-L + i * h);
  return s * h;
}

// Echo from the explicit eigen-sum over unit-oscillator modes.
double echo_by_mode_sum(double eps, double t) {
  std::complex<double> chi{0.0, 0.0};
  for (int n = 0; n <= 600; n += 2) {
    const double c = frequency_overlap(n, eps);
    chi += c * c * std::polar(1.0, (n + 0.5) * t);
  }
  return std::norm(chi);
}

}  // namespace

TEST(ClosedForms, EchoIdentityQuench) {
  const TrapQuench q(1.0);
  for (double t : {0.0, 0.3, 1.7, 10.0}) EXPECT_NEAR(le_single(q, t), 1.0, 1e-15);
}

TEST(ClosedForms, EchoAgainstModeSum) {
  for (double eps : {0.5, 3.0, 6.0}) {
    const TrapQuench q(eps);
    for (double t : {0.0, 0.4, kPi / 2, 2.2, 5.0}) EXPECT_NEAR(le_single(q, t), echo_by_mode_sum(eps, t), 1e-10);
  }
  EXPECT_NEAR(le_single(TrapQuench(3.0), kPi / 2), 0.6, 1e-14);
}

TEST(ClosedForms, EchoPeriodAndMinimum) {
  for (double eps : {0.2, 1.5, 6.0, 20.0}) {
    const TrapQuench q(eps);
    double lmin = 2.0, tmin = 0.0;
    for (int k = 0; k <= 4000; ++k) {
      const double t = kPi * k / 4000.0;
      const double l = le_single(q, t);
      EXPECT_GT(l, 0.0);
      EXPECT_LE(l, 1.0 + 1e-15);
      EXPECT_NEAR(le_single(q, t + kPi), l, 1e-12);
      if (l < lmin) {
        lmin = l;
        tmin = t;
      }
    }
    EXPECT_NEAR(lmin, 2 * eps / (1 + eps * eps), 1e-12);
    EXPECT_NEAR(tmin, kPi / 2, 1e-9);
  }
}

TEST(ClosedForms, WorkAgainstQuadratureOfFinalHamiltonian) {
  for (double eps : {0.5, 3.0, 20.0}) {
    // <psi_0^I | p^2/2 + x^2/2 | psi_0^I> with psi' = -(x/eps) psi.
    const double e = trapezoid(
        [&](double x) {
          const double psi = ho_eigenfunction(0, x, eps);
          return 0.5 * std::pow(x / eps * psi, 2) + 0.5 * x * x * psi * psi;
        },
        16.0 * std::sqrt(eps));
    EXPECT_NEAR(work_single(TrapQuench(eps)), e - 0.5 / eps, 1e-10) << eps;
  }
}

TEST(ClosedForms, SpecExampleValues) {
  EXPECT_NEAR(work_single(TrapQuench(3.0)), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(deltaF_single(TrapQuench(3.0)), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(wirr_single(TrapQuench(3.0)), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(work_single(TrapQuench(0.5)), -3.0 / 8.0, 1e-15);
  EXPECT_NEAR(wirr_single(TrapQuench(20.0)), 361.0 / 80.0, 1e-13);
  for (double eps : {0.01, 0.5, 1.0, 2.0, 50.0}) {
    const TrapQuench q(eps);
    EXPECT_GE(wirr_single(q), 0.0);
    EXPECT_NEAR(wirr_single(q), work_single(q) - deltaF_single(q), 1e-12);
  }
}

TEST(ClosedForms, BuresBound) {
  EXPECT_EQ(bures_bound(1.0), 0.0);
  EXPECT_NEAR(bures_bound(0.0), 2.0, 1e-15);
  EXPECT_NEAR(bures_bound(0.6), 8.0 / (kPi * kPi) * std::pow(std::acos(std::sqrt(0.6)), 2), 1e-15);
  EXPECT_THROW(bures_bound(1.1), std::domain_error);
  EXPECT_THROW(bures_bound(-0.2), std::domain_error);
  EXPECT_THROW(bures_bound(NAN), std::domain_error);
}

TEST(ClosedForms, SigmaBMatchesBuresOfEcho) {
  for (double eps : {0.3, 3.0, 6.0}) {
    const TrapQuench q(eps);
    for (int k = 0; k <= 500; ++k) {
      const double t = 2 * kPi * k / 500.0;
      EXPECT_NEAR(sigmaB_single(q, t), bures_bound(le_single(q, t)), 1e-12);
    }
  }
}

TEST(ClosedForms, RelOverlapAgainstQuadrature) {
  for (double eps : {0.5, 2.0, 6.0}) {
    for (int p = 0; p <= 11; ++p) {
      const double oracle = trapezoid(
          [&](double x) { return ho_eigenfunction(1, x, eps) * ho_eigenfunction(p, x); }, 16.0 * std::sqrt(eps));
      EXPECT_NEAR(rel_overlap_tg(p, eps), oracle, 1e-10) << eps << " " << p;
    }
  }
  EXPECT_NEAR(rel_overlap_tg(1, 1.0), 1.0, 1e-15);
  for (int p = 3; p < 30; p += 2) EXPECT_EQ(rel_overlap_tg(p, 1.0), 0.0);
}

TEST(ClosedForms, RelOverlapSumRule) {
  for (double eps : {0.3, 2.0, 6.0}) {
    double s = 0.0;
    for (int p = 1; p <= 4001; p += 2) s += std::pow(rel_overlap_tg(p, eps), 2);
    EXPECT_NEAR(s, 1.0, 1e-9) << eps;
  }
}

TEST(ClosedForms, TgPairEchoFactorsIntoSingleAtomEchoes) {
  // COM channel is the single-atom echo; the odd REL channel is its cube.
  for (double eps : {2.0, 6.0}) {
    const TrapQuench q(eps);
    const int trunc = tg_truncation_for(q, 1e-12);
    for (double t : {0.0, 0.5, kPi / 2, 2.0, 3.0}) {
      const TruncatedEcho e = le_tg_pair(q, t, trunc);
      EXPECT_TRUE(e.converged);
      EXPECT_NEAR(e.value, std::pow(le_single(q, t), 4), 1e-9) << eps << " " << t;
    }
  }
  EXPECT_NEAR(le_tg_pair(TrapQuench(1.0), 1.3, 1).value, 1.0, 1e-14);
}

TEST(ClosedForms, TgTruncationReportsDeficit) {
  const TrapQuench q(6.0);
  const TruncatedEcho coarse = le_tg_pair(q, 0.0, 2);
  EXPECT_FALSE(coarse.converged);
  EXPECT_GT(coarse.weight_deficit, 1e-3);
  EXPECT_LT(le_tg_pair(q, 0.0, 40).weight_deficit, coarse.weight_deficit);
  EXPECT_THROW(tg_truncation_for(q, 1e-14, 3), ConvergenceError);
  EXPECT_THROW(le_tg_pair(q, 0.0, 0), std::invalid_argument);
}

TEST(ClosedForms, TgWorkAgainstChannelSums) {
  for (double eps : {0.5, 2.0, 3.0}) {
    const TrapQuench q(eps);
    double com = 0.0, rel = 0.0;
    for (int n = 0; n <= 4000; n += 2) com += std::pow(frequency_overlap(n, eps), 2) * (n + 0.5);
    for (int p = 1; p <= 4001; p += 2) rel += std::pow(rel_overlap_tg(p, eps), 2) * (p + 0.5);
    const double oracle = (com - 0.5 / eps) + (rel - 1.5 / eps);
    EXPECT_NEAR(work_tg(2, q), oracle, 1e-6) << eps;
  }
  EXPECT_NEAR(work_tg(2, TrapQuench(2.0)), 1.5, 1e-15);
  EXPECT_NEAR(work_tg(3, TrapQuench(2.0)), 27.0 / 8.0, 1e-15);
  EXPECT_EQ(work_tg(1, TrapQuench(3.0)), work_single(TrapQuench(3.0)));
  EXPECT_THROW(work_tg(4, TrapQuench(2.0)), std::invalid_argument);
}

TEST(ClosedForms, QuenchValidation) {
  EXPECT_THROW(TrapQuench{0.0}, ValidationError);
  EXPECT_THROW(TrapQuench{-1.0}, ValidationError);
  EXPECT_THROW(TrapQuench{INFINITY}, ValidationError);
  EXPECT_THROW((TrapQuench{2.0, 0.0}), ValidationError);
}
