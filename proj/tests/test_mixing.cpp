#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <random>

#include "spodgt/mixing.hpp"
#include "test_support.hpp"

using namespace spodgt;
using spodgt::testing::random_constants;
using spodgt::testing::random_profile;

namespace {

// Left eigenvector of M for the eigenvalue closest to 1, via a full eigensolver.
VectorXd dense_left_perron(const MatrixXd& M) {
  Eigen::EigenSolver<MatrixXd> es(M.transpose());
  Index best = 0;
  for (Index k = 1; k < M.rows(); ++k)
    if (std::abs(es.eigenvalues()(k) - 1.0) < std::abs(es.eigenvalues()(best) - 1.0)) best = k;
  VectorXd v = es.eigenvectors().col(best).real();
  return v / v.sum();
}

}  // namespace

TEST(Mixing, CompleteGraphUniform) {
  auto pair = build_mixing(Digraph::complete(3));
  EXPECT_TRUE(pair.A.isApprox(MatrixXd::Constant(3, 3, 1.0 / 3.0), 1e-15));
  EXPECT_TRUE(pair.B.isApprox(MatrixXd::Constant(3, 3, 1.0 / 3.0), 1e-15));
}

TEST(Mixing, SingleNode) {
  auto pair = build_mixing(Digraph(1, {}));
  EXPECT_DOUBLE_EQ(pair.A(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(pair.B(0, 0), 1.0);
}

TEST(Mixing, ThreeCycleSparsityAndStochasticity) {
  auto pair = build_mixing(Digraph::cycle(3));
  for (int i = 0; i < 3; ++i) {
    const int pred = (i + 2) % 3;
    const int succ = (i + 1) % 3;
    EXPECT_DOUBLE_EQ(pair.A(i, i), 0.5);
    EXPECT_DOUBLE_EQ(pair.A(i, pred), 0.5);
    EXPECT_DOUBLE_EQ(pair.B(i, i), 0.5);
    EXPECT_DOUBLE_EQ(pair.B(succ, i), 0.5);
  }
  EXPECT_LE((pair.A.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_LE((pair.B.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Mixing, RandomGraphsStochasticAndCompatible) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    Digraph g = spodgt::testing::random_strong_digraph(2 + t % 8, 0.2, rng);
    auto pair = build_mixing(g);
    EXPECT_LE((pair.A.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_LE((pair.B.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    for (int i = 0; i < g.size(); ++i)
      for (int j = 0; j < g.size(); ++j)
        if (i != j) {
          EXPECT_EQ(pair.A(i, j) > 0, g.has_edge(j, i));
          EXPECT_EQ(pair.B(i, j) > 0, g.has_edge(j, i));
        }
  }
}

TEST(Mixing, ExpectedMatricesUnitProbabilities) {
  Digraph g = generate_rgg(6, 0.6, 2);
  auto pair = build_mixing(g);
  auto [A_hat, B_hat] = expected_matrices(pair, SporadicityProfile::ones(g));
  EXPECT_TRUE(A_hat.isApprox(pair.A, 1e-15));
  EXPECT_TRUE(B_hat.isApprox(pair.B, 1e-15));
}

TEST(Mixing, ExpectedMatricesCompleteUniformQ) {
  const int m = 5;
  const double q = 0.7;
  Digraph g = Digraph::complete(m);
  auto [A_hat, B_hat] = expected_matrices(build_mixing(g), SporadicityProfile::uniform(g, 1.0, q));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const double want = i == j ? 1.0 - (m - 1) * q / m : q / m;
      EXPECT_NEAR(A_hat(i, j), want, 1e-15);
      EXPECT_NEAR(B_hat(i, j), want, 1e-15);
    }
}

TEST(Mixing, ExpectedMatricesHeterogeneousSums) {
  std::mt19937_64 rng(8);
  Digraph g = spodgt::testing::random_strong_digraph(5, 0.4, rng);
  auto pair = build_mixing(g);
  auto prof = random_profile(g, rng, 0.05);
  auto [A_hat, B_hat] = expected_matrices(pair, prof);
  double row_dev = 0.0, col_dev = 0.0;
  for (int i = 0; i < 5; ++i) {
    double r = 0.0, c = 0.0;
    for (int j = 0; j < 5; ++j) {
      r += A_hat(i, j);
      c += B_hat(j, i);
    }
    row_dev = std::max(row_dev, std::abs(r - 1.0));
    col_dev = std::max(col_dev, std::abs(c - 1.0));
  }
  EXPECT_LE(row_dev, 1e-14);
  EXPECT_LE(col_dev, 1e-14);
}

TEST(Mixing, ExpectedMatricesRejectOffGraphProbability) {
  Digraph g = Digraph::cycle(3);
  auto prof = SporadicityProfile::ones(g);
  prof.p_hat(0, 1) = 0.5;  // 1 -> 0 is not an edge
  EXPECT_THROW(expected_matrices(build_mixing(g), prof), PreconditionError);
}

TEST(Mixing, PerronDoublyStochastic) {
  auto pair = build_mixing(Digraph::complete(6));
  auto [phi, pi] = perron_vectors(pair.A, pair.B);
  EXPECT_LE((phi.array() - 1.0 / 6.0).abs().maxCoeff(), 1e-12);
  EXPECT_LE((pi.array() - 1.0 / 6.0).abs().maxCoeff(), 1e-12);
}

TEST(Mixing, PerronSingleNode) {
  MatrixXd one = MatrixXd::Ones(1, 1);
  auto [phi, pi] = perron_vectors(one, one);
  EXPECT_DOUBLE_EQ(phi(0), 1.0);
  EXPECT_DOUBLE_EQ(pi(0), 1.0);
}

TEST(Mixing, PerronMatchesDenseEigensolver) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 40; ++t) {
    const int m = 3 + t % 6;
    Digraph g = spodgt::testing::random_strong_digraph(m, 0.15, rng);
    auto pair = build_mixing(g);
    auto prof = random_profile(g, rng, 0.1);
    auto [A_hat, B_hat] = expected_matrices(pair, prof);
    auto [phi, pi] = perron_vectors(A_hat, B_hat);
    EXPECT_LE((phi - dense_left_perron(A_hat)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((pi - dense_left_perron(B_hat.transpose())).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((A_hat.transpose() * phi - phi).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((B_hat * pi - pi).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(phi.sum(), 1.0, 1e-12);
    EXPECT_NEAR(pi.sum(), 1.0, 1e-12);
    EXPECT_GT(phi.minCoeff(), 0.0);
    EXPECT_GT(pi.minCoeff(), 0.0);
  }
}

TEST(Mixing, PerronLowProbabilityCycle) {
  // Slow mixing: a long cycle with rare links.
  Digraph g = Digraph::cycle(12);
  auto pair = build_mixing(g);
  auto [A_hat, B_hat] = expected_matrices(pair, SporadicityProfile::uniform(g, 1.0, 0.05));
  auto [phi, pi] = perron_vectors(A_hat, B_hat);
  EXPECT_LE((A_hat.transpose() * phi - phi).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((phi - dense_left_perron(A_hat)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mixing, PerronReportsNonConvergence) {
  // Not stochastic: no vector satisfies v^T M = v^T with unit eigenvalue.
  MatrixXd bad(2, 2);
  bad << 0.5, 0.5, 0.5, 0.7;
  PerronOptions opts;
  opts.max_iterations = 50;
  try {
    stochastic_left_eigenvector(bad, opts);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_GT(e.residual(), 1e-12);
  }
}

TEST(Mixing, PerronPeriodicChain) {
  // Period two: plain power iteration oscillates, the squaring stage still
  // lands on the stationary vector.
  MatrixXd periodic(4, 4);
  periodic << 0, 0, 1, 0,
              0, 0, 0.5, 0.5,
              1, 0, 0, 0,
              0, 1, 0, 0;
  VectorXd v = stochastic_left_eigenvector(periodic);
  EXPECT_LE((periodic.transpose() * v - v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mixing, EigenvectorBounds) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    const int m = 3 + t % 5;
    Digraph g = spodgt::testing::random_strong_digraph(m, 0.2, rng);
    auto pair = build_mixing(g);
    auto prof = random_profile(g, rng, 0.3);
    auto [A_hat, B_hat] = expected_matrices(pair, prof);
    auto [phi, pi] = perron_vectors(A_hat, B_hat);
    double amin = 1.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        if (pair.A(i, j) > 0) amin = std::min(amin, pair.A(i, j) * prof.p_hat(i, j));
    EXPECT_GE(phi.minCoeff(), std::pow(amin, m) / m);
    EXPECT_LE(phi.maxCoeff(), 1.0);
  }
}

TEST(Mixing, ContractionRadiiCompleteGraphFormula) {
  // Re-evaluated from the formula: phi = pi = 1/m, min(a p) = q/m, D = K = 1,
  // so rho = 1 - q^2 / m.
  for (int m : {2, 3, 5, 8}) {
    for (double q : {1.0, 0.8, 0.3}) {
      Digraph g = Digraph::complete(m);
      auto pair = build_mixing(g);
      auto prof = SporadicityProfile::uniform(g, 1.0, q);
      auto em = expected_mixing(pair, prof, metrics(g));
      EXPECT_NEAR(em.rho_A, 1.0 - q * q / m, 1e-12) << m << " " << q;
      EXPECT_NEAR(em.rho_B, 1.0 - q * q / m, 1e-12) << m << " " << q;
    }
  }
}

TEST(Mixing, ContractionRadiiThreeCycleScalarOracle) {
  Digraph g = Digraph::cycle(3);
  auto pair = build_mixing(g);
  auto prof = SporadicityProfile::ones(g);
  prof.p_hat(1, 0) = 0.9;
  prof.p_hat(2, 1) = 0.6;
  prof.p_hat(0, 2) = 0.8;
  auto gm = metrics(g);
  auto em = expected_mixing(pair, prof, gm);
  // Positive entries are 0.5 on the diagonal and 0.5 * p_hat on the edges.
  const double a_min = 0.5 * 0.6;
  const double phi_min = em.phi.minCoeff(), phi_max = em.phi.maxCoeff();
  const double pi_min = em.pi.minCoeff(), pi_max = em.pi.maxCoeff();
  const double dk = 2.0 * gm.edge_utility;
  EXPECT_NEAR(em.rho_A, 1.0 - phi_min * a_min * a_min / (phi_max * phi_max * dk), 1e-14);
  EXPECT_NEAR(em.rho_B, 1.0 - pi_min * pi_min * a_min * a_min / (pi_max * pi_max * pi_max * dk), 1e-14);
  EXPECT_GE(em.rho_A, 0.0);
  EXPECT_LT(em.rho_A, 1.0);
}

TEST(Mixing, SporadicRadiiUnitProbabilities) {
  Digraph g = generate_rgg(7, 0.5, 3);
  auto pair = build_mixing(g);
  auto em = expected_mixing(pair, SporadicityProfile::ones(g), metrics(g));
  EXPECT_EQ(em.rho0_A, 0.0);
  EXPECT_EQ(em.rho0_B, 0.0);
}

TEST(Mixing, SporadicRadiiHalfComplete) {
  for (int m : {3, 4, 6}) {
    Digraph g = Digraph::complete(m);
    auto pair = build_mixing(g);
    auto em = expected_mixing(pair, SporadicityProfile::uniform(g, 1.0, 0.5), metrics(g));
    EXPECT_NEAR(em.rho0_A, double(m - 1) / (m * m), 1e-14);
    EXPECT_NEAR(em.rho0_B, double(m - 1) / (2.0 * m * m), 1e-14);
  }
}

TEST(Mixing, SporadicRadiiHeterogeneousOracle) {
  std::mt19937_64 rng(29);
  Digraph g = spodgt::testing::random_strong_digraph(5, 0.3, rng);
  auto pair = build_mixing(g);
  auto prof = random_profile(g, rng, 0.05);
  auto em = expected_mixing(pair, prof, metrics(g));
  double va = 0.0, vb = 0.0;
  for (const auto& e : g.edges()) {
    const double q = prof.p_hat(e.to, e.from);
    const double a = pair.A(e.to, e.from), b = pair.B(e.to, e.from);
    va = std::max(va, a * a * q * (1 - q));
    vb = std::max(vb, b * b * q * (1 - q));
  }
  EXPECT_NEAR(em.rho0_A, 4.0 * 4.0 * em.phi.maxCoeff() / em.phi.minCoeff() * va, 1e-14);
  EXPECT_NEAR(em.rho0_B, 2.0 * 4.0 * em.pi.maxCoeff() / em.pi.minCoeff() * vb, 1e-14);
}

TEST(Mixing, ThresholdRootDefinition) {
  for (double tau : {0.01, 0.5, 3.0, 1e3, 1e6}) {
    for (int d : {4, 8, 11}) {
      const double r = threshold_root(tau, d);
      EXPECT_GT(r, 0.0);
      EXPECT_LT(r, 1.0);
      const long double x = r;
      const long double f = std::pow(x, d) + tau * x - tau;
      EXPECT_LE(std::abs(f), 1e-9L) << tau << " " << d;
    }
  }
  // For larger tau a double cannot place x closer than half an ulp to the
  // root, so the residual is bounded by tau * ulp(1) instead.
  for (double tau : {1e8, 1e10}) {
    const double r = threshold_root(tau, 8);
    const long double x = r;
    const long double f = std::pow(x, 8) + tau * x - tau;
    EXPECT_LE(std::abs(f), tau * std::numeric_limits<double>::epsilon());
  }
}

TEST(Mixing, ThresholdRootExtremeTau) {
  const double tau = 1e12;
  const double r = threshold_root(tau, 8);
  EXPECT_GT(r, 0.999999);
  // Near x = 1 the root sits at about 1 - 1/tau.
  EXPECT_NEAR((1.0 - r) * tau, 1.0, 1e-3);
}

TEST(Mixing, MinCommProbabilitySignChange) {
  Digraph g = Digraph::complete(3);
  auto pair = build_mixing(g);
  auto gm = metrics(g);
  auto [tau_A, tau_B] = threshold_taus(pair, gm);
  // 16 m^2 (m-1) * max^2 / min^(2(m+1)) with max = min = 1/3.
  EXPECT_NEAR(tau_A, 16.0 * 9 * 2 * std::pow(3.0, 6), 1e-6 * tau_A);
  EXPECT_NEAR(tau_B, 4.0 * 27 * 2 * std::pow(3.0, 9), 1e-6 * tau_B);
  auto [r_A, r_B] = min_comm_probability(pair, gm);
  auto f_A = [&](double x) { return std::pow(x, 8) + tau_A * x - tau_A; };
  auto f_B = [&](double x) { return std::pow(x, 11) + tau_B * x - tau_B; };
  EXPECT_LT(f_A(r_A - 1e-8), 0.0);
  EXPECT_GT(f_A(r_A + 1e-8), 0.0);
  EXPECT_LT(f_B(r_B - 1e-8), 0.0);
  EXPECT_GT(f_B(r_B + 1e-8), 0.0);
}

TEST(Mixing, DeviationBoundAboveThreshold) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 10; ++t) {
    const int m = 3 + t % 4;
    Digraph g = spodgt::testing::random_strong_digraph(m, 0.3, rng);
    auto pair = build_mixing(g);
    auto gm = metrics(g);
    auto [r_A, r_B] = min_comm_probability(pair, gm);
    const double q = 0.5 * (1.0 + std::max(r_A, r_B));
    auto em = expected_mixing(pair, SporadicityProfile::uniform(g, 1.0, q), gm);
    EXPECT_LE(em.rho0_A, (1.0 - em.rho_A) / 4.0);
    EXPECT_LE(em.rho0_B, (1.0 - em.rho_B) / 2.0);
  }
}

TEST(Mixing, KappaTwoWithoutSporadicity) {
  Digraph g = Digraph::complete(4);
  auto pair = build_mixing(g);
  auto prof = SporadicityProfile::ones(g);
  auto gm = metrics(g);
  auto em = expected_mixing(pair, prof, gm);
  std::mt19937_64 rng(2);
  auto pc = random_constants(4, rng);
  pc.sigma1.setZero();
  auto c = constant_tables(pc, em, prof, pair, gm);
  EXPECT_DOUBLE_EQ(c.kappa2, 3.0);
  EXPECT_DOUBLE_EQ(c.rho_tilde_A, c.rho_A);
  EXPECT_DOUBLE_EQ(c.rho_tilde_B, c.rho_B);
}

TEST(Mixing, ConstantTablesMatchSecondEvaluation) {
  std::mt19937_64 rng(41);
  const int m = 5;
  Digraph g = spodgt::testing::random_strong_digraph(m, 0.3, rng);
  auto pair = build_mixing(g);
  auto prof = random_profile(g, rng, 0.6);
  auto gm = metrics(g);
  auto em = expected_mixing(pair, prof, gm);
  auto pc = random_constants(m, rng);
  auto c = constant_tables(pc, em, prof, pair, gm);

  // Straight transcription of the table, one scalar loop per entry.
  double k1 = 0, k4 = 0, k8 = 0, s1p = 0, d1p = 0, k5a = 0, k5b = 0;
  const double Lb2 = pc.L_bar * pc.L_bar;
  for (int i = 0; i < m; ++i) {
    const double p = prof.p(i), B = pc.B(i), D = pc.D(i);
    const double s = pc.sigma1(i) * pc.sigma1(i) * (1 - B / D) / B;
    const double L2 = pc.L(i) * pc.L(i);
    k1 = std::max(k1, p / em.phi(i) * (2 * s * Lb2 + 3 * L2));
    k4 = std::max(k4, p / em.phi(i) * (2 * s * Lb2 + 5 * L2));
    k8 = std::max(k8, p * (2 * s * Lb2 + 3 * L2));
    s1p += s * p / m;
    d1p += (1 - p) * pc.delta1(i) * pc.delta1(i) / m;
    k5a += p * (2 * s + 5 * (1 - p) * pc.delta1(i) * pc.delta1(i)) / m;
    k5b += p * p * L2 / m;
  }
  const double k2 = 2 * s1p + 3 * d1p + 3;
  double col = 0;
  for (int j = 0; j < m; ++j) {
    double avg = 0;
    for (int i = 0; i < m; ++i) {
      const double q = prof.p_hat(i, j);
      avg += pair.B(i, j) * pair.B(i, j) * q * (1 - q) / m;
    }
    col = std::max(col, em.pi(j) * avg);
  }
  const double pmax = em.pi.maxCoeff(), pmin = em.pi.minCoeff(), fmax = em.phi.maxCoeff();
  const double k3 = fmax * (pmax * pmax / pmin + 2 * m * col);
  const double k5 = 2 * k5a * Lb2 + 5 * k5b;
  const double rtA = em.rho_A + 2 * em.rho0_A, rtB = em.rho_B + em.rho0_B;
  const double k6 = (1 + em.rho_A) / (1 - rtA);
  const double k7 = 2 * (m + 1) * (1 + rtB) / (1 - rtB);
  const double k9 = (m * (1 + 3 * em.rho0_B) / (3 * k7 * rtB) + 1) * k4 * k6 + k5 / m;
  double fp = 0;
  for (int i = 0; i < m; ++i) fp = std::max(fp, em.phi(i) * em.pi(i));
  const double k10 = 8 / (3 * k2 * k3) * fp / fmax;

  const double tol = 1e-12;
  auto rel = [&](double v) { return tol * std::abs(v); };
  EXPECT_NEAR(c.kappa1, k1, tol * k1);
  EXPECT_NEAR(c.kappa2, k2, tol * k2);
  EXPECT_NEAR(c.kappa3, k3, tol * k3);
  EXPECT_NEAR(c.kappa4, k4, tol * k4);
  EXPECT_NEAR(c.kappa5, k5, tol * k5);
  EXPECT_NEAR(c.kappa6, k6, rel(k6));
  EXPECT_NEAR(c.kappa7, k7, rel(k7));
  EXPECT_NEAR(c.kappa8, k8, tol * k8);
  EXPECT_NEAR(c.kappa9, k9, rel(k9));
  EXPECT_NEAR(c.kappa10, k10, tol * k10);
  EXPECT_NEAR(c.rho_tilde_A, rtA, tol);
  EXPECT_NEAR(c.rho_tilde_B, rtB, tol);
}

TEST(Mixing, ConstantTablesPure) {
  std::mt19937_64 rng(43);
  Digraph g = spodgt::testing::random_strong_digraph(4, 0.3, rng);
  auto pair = build_mixing(g);
  auto prof = random_profile(g, rng, 0.5);
  auto gm = metrics(g);
  auto em = expected_mixing(pair, prof, gm);
  auto pc = random_constants(4, rng);
  auto a = constant_tables(pc, em, prof, pair, gm);
  auto b = constant_tables(pc, em, prof, pair, gm);
  EXPECT_EQ(a.kappa9, b.kappa9);
  EXPECT_EQ(a.kappa3, b.kappa3);
  EXPECT_EQ(a.r_B, b.r_B);
}

TEST(Mixing, KappaNineInfiniteWithoutContraction) {
  // A single client has rho_B = 0 and no sporadic deviation.
  Digraph g(1, {});
  auto pair = build_mixing(g);
  auto prof = SporadicityProfile::ones(g);
  auto gm = metrics(g);
  auto em = expected_mixing(pair, prof, gm);
  std::mt19937_64 rng(1);
  auto c = constant_tables(random_constants(1, rng), em, prof, pair, gm);
  EXPECT_TRUE(std::isinf(c.kappa9));
}

TEST(Mixing, PrimeThresholdFormula) {
  Digraph g = Digraph::complete(4);
  auto pair = build_mixing(g);
  auto prof = SporadicityProfile::ones(g);
  auto gm = metrics(g);
  auto em = expected_mixing(pair, prof, gm);
  std::mt19937_64 rng(5);
  auto c = constant_tables(random_constants(4, rng), em, prof, pair, gm);
  const double gamma1 = 3.0;
  const double tau = 2.0 * 4 / (9.0 * 3 * c.kappa2 * gamma1 * (1.0 / 16)) * (1.0 / 16) / 0.25;
  EXPECT_NEAR(prime_threshold_B(c, em, pair, gamma1), 0.5 * (1 + std::sqrt(std::max(0.0, 1 - tau))), 1e-12);
}
