#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "gen.hpp"

using namespace sfde;
using cplx = std::complex<double>;

namespace {

DelayMeasure scalar_ode(double a) { return DelayMeasure(0.0, 1, {{0.0, Eigen::MatrixXd::Constant(1, 1, a)}}); }

}  // namespace

TEST(CharDet, Examples) {
  const auto m = gen::example_measure();
  EXPECT_NEAR(std::abs(char_det(m, 0.0) - cplx(1.0)), 0.0, 1e-15);
  EXPECT_LT(std::abs(char_det(m, gen::example_root_oracle())), 1e-12);
  EXPECT_LT(std::abs(char_det(scalar_ode(-3.0), -3.0)), 1e-15);
}

TEST(RootCount, Examples) {
  const auto m = gen::example_measure();
  EXPECT_EQ(root_count(m, 0.0), 0);
  EXPECT_EQ(root_count(m, -0.5), 1);
  EXPECT_EQ(root_count(scalar_ode(1.0), 0.0), 1);
}

TEST(RootCount, MatrixWithComplexPair) {
  // Eigenvalues 0.5 +- 2i and -1.
  Eigen::MatrixXd A(3, 3);
  A << 0.5, 2.0, 0.0, -2.0, 0.5, 0.0, 0.0, 0.0, -1.0;
  const DelayMeasure m(0.0, 3, {{0.0, A}});
  EXPECT_EQ(root_count(m, 0.0), 2);
  EXPECT_EQ(root_count(m, -2.0), 3);
  EXPECT_EQ(root_count(m, 1.0), 0);
}

TEST(RootCount, RootOnContourIsReported) {
  RootCountOptions opt;
  opt.contour_tol = 1e-6;
  try {
    root_count(scalar_ode(-1.0), -1.0, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::root_on_contour);
  }
}

TEST(SpectralAbscissa, Examples) {
  const double tol = 1e-6;
  EXPECT_NEAR(spectral_abscissa(gen::example_measure(), tol), gen::example_root_oracle(), tol);
  EXPECT_NEAR(spectral_abscissa(scalar_ode(-2.0), tol), -2.0, tol);
  // lambda = i pi/2 solves lambda = -(pi/2) e^{-lambda}.
  const DelayMeasure osc(1.0, 1, {{-1.0, Eigen::MatrixXd::Constant(1, 1, -std::numbers::pi / 2)}});
  EXPECT_NEAR(spectral_abscissa(osc, tol), 0.0, 2 * tol);
}

TEST(DecayRateRoot, Examples) {
  const double mu = decay_rate_root(2.0, 1.0);
  EXPECT_LE(std::abs(mu * std::exp(-2.0 + mu) - 1.0), 1e-10);
  // Independent oracle: Newton on ln mu + mu = 2.
  double x = 1.5;
  for (int i = 0; i < 50; ++i) x -= (std::log(x) + x - 2.0) / (1.0 / x + 1.0);
  EXPECT_NEAR(mu, x, 1e-9);
  EXPECT_NEAR(mu, 1.5572, 1e-4);
  EXPECT_EQ(decay_rate_root(1.0, 0.0), 0.0);
  EXPECT_THROW(decay_rate_root(1.0, 2.0), Error);
}

TEST(CAlpha, Examples) {
  EXPECT_NEAR(estimate_c_alpha(compute_resolvent(scalar_ode(-2.0), 1.0 / 256, 5.0), 2.0, 1.0).value, 1.0, 5e-4);
  EXPECT_LE(estimate_c_alpha(compute_resolvent(gen::example_measure(), 1.0 / 256, 40.0), 0.4, 1.0).value, 1.0 + 1e-3);
  const DelayMeasure pd(1.0, 1, {{-1.0, Eigen::MatrixXd::Constant(1, 1, -1.0)}});
  EXPECT_NEAR(estimate_c_alpha(compute_resolvent(pd, 1.0 / 256, 2.0), 0.3, 1.0).value, std::exp(0.3), 1e-12);
}

TEST(Certify, Examples) {
  const auto m = gen::example_measure();
  const auto table = compute_resolvent(m, 1.0 / 256, 40.0);
  CertifyOptions opt;
  opt.safety = 1.0;
  const auto c = certify(m, 0.25, {0.4}, table, opt);
  EXPECT_NEAR(c.rate, std::exp(0.4) / 4 - 0.4, 1e-6);
  EXPECT_TRUE(c.certified);

  const auto affine = certify(m, 0.0, {0.3}, table, opt);
  EXPECT_DOUBLE_EQ(affine.rate, -0.3);
  EXPECT_TRUE(affine.certified);

  const auto big = certify(m, 1.0, {0.4}, table, opt);
  EXPECT_NEAR(big.rate, std::exp(0.4) - 0.4, 1e-6);
  EXPECT_FALSE(big.certified);
}

TEST(Certify, UnstableIsRefused) {
  const auto m = scalar_ode(0.5);
  const auto table = compute_resolvent(m, 1.0 / 16, 2.0);
  try {
    certify(m, 0.0, {0.1}, table);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unstable);
  }
}

TEST(Properties, CharDetIsAnalytic) {
  gen::Rng g(41);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = gen::measure(g, 1.0, 0.25, 2, trial % 2 == 0);
    const cplx z(gen::uniform(g, -1, 1), gen::uniform(g, -3, 3));
    const double e = 1e-6;
    const cplx dx = (char_det(m, z + e) - char_det(m, z - e)) / (2 * e);
    const cplx dy = (char_det(m, z + cplx(0, e)) - char_det(m, z - cplx(0, e))) / (2 * e);
    // Cauchy-Riemann: df/dy = i df/dx.
    EXPECT_LE(std::abs(dy - cplx(0, 1) * dx), 1e-6 * (1.0 + std::abs(dx))) << "trial " << trial;
  }
}

TEST(Properties, RootCountMonotone) {
  gen::Rng g(42);
  for (int trial = 0; trial < 6; ++trial) {
    const auto m = gen::measure(g, 1.0, 0.25, 1, false);
    int prev = 1 << 30;
    for (double beta = -1.6; beta <= 2.0; beta += 0.3137) {
      const int c = root_count(m, beta);
      EXPECT_LE(c, prev) << "trial " << trial << " beta " << beta;
      prev = c;
    }
  }
}

TEST(Properties, OdeAbscissaIsMaxEigenvalue) {
  gen::Rng g(43);
  for (int trial = 0; trial < 10; ++trial) {
    const auto A = gen::matrix(g, 3, 3, 1.5);
    const DelayMeasure m(0.0, 3, {{0.0, A}});
    const double expected = Eigen::EigenSolver<Eigen::MatrixXd>(A).eigenvalues().real().maxCoeff();
    EXPECT_NEAR(spectral_abscissa(m, 1e-6), expected, 2e-6) << "trial " << trial;
  }
}

TEST(Properties, ScalarAbscissaMatchesDecayRoot) {
  gen::Rng g(44);
  for (int trial = 0; trial < 8; ++trial) {
    const double a = gen::uniform(g, 0.5, 3.0), b = gen::uniform(g, 0.05, 0.95) * a;
    const DelayMeasure m(1.0, 1, {{0.0, Eigen::MatrixXd::Constant(1, 1, -a)}, {-1.0, Eigen::MatrixXd::Constant(1, 1, b)}});
    EXPECT_NEAR(spectral_abscissa(m, 1e-6), decay_rate_root(a, b) - a, 2e-6) << a << " " << b;
  }
}

TEST(Properties, CertificateInvariants) {
  gen::Rng g(45);
  for (int trial = 0; trial < 8; ++trial) {
    const auto m = gen::stable_scalar(g, 1.0);
    const auto table = compute_resolvent(m, 1.0 / 64, 40.0);
    const double L = gen::uniform(g, 0.0, 0.5);
    const double a0 = spectral_abscissa(m);
    const auto c = certify(m, L, default_alpha_grid(a0), table);
    EXPECT_EQ(c.certified, c.rate < 0.0);
    EXPECT_GE(c.k_const, c.c_alpha);
    EXPECT_GE(c.c_alpha, 1.0);
    if (c.certified) {
      EXPECT_GT(c.alpha_star, 0.0);
      EXPECT_LT(c.alpha_star, -c.alpha0_est);
    }
  }
}
