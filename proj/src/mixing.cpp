#include "spodgt/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spodgt {

namespace {

void check_profile(const MixingPair& pair, const SporadicityProfile& profile) {
  const Index m = pair.A.rows();
  if (profile.p.size() != m || profile.p_hat.rows() != m || profile.p_hat.cols() != m) {
    throw PreconditionError("profile dimensions do not match the mixing pair (m=" +
                            std::to_string(m) + ")");
  }
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) {
      if (i == j) continue;
      const bool edge = pair.A(i, j) > 0.0;
      const double q = profile.p_hat(i, j);
      if (edge && !(q > 0.0 && q <= 1.0)) {
        throw PreconditionError("p_hat(" + std::to_string(i) + ", " + std::to_string(j) +
                                ") must lie in (0, 1] on an edge");
      }
      if (!edge && q != 0.0) {
        throw PreconditionError("p_hat(" + std::to_string(i) + ", " + std::to_string(j) +
                                ") is nonzero off the edge set");
      }
    }
  }
}

// min and max of w(i, j) * scale(i, j) over the strictly positive entries of w.
std::pair<double, double> positive_extrema(const MatrixXd& w, const MatrixXd& scale) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j)
      if (w(i, j) > 0.0) {
        const double s = i == j ? w(i, j) : w(i, j) * scale(i, j);
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
  return {lo, hi};
}

double max_edge_variance(const MatrixXd& w, const MatrixXd& p_hat) {
  double best = 0.0;
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j)
      if (i != j && w(i, j) > 0.0) {
        const double q = p_hat(i, j);
        best = std::max(best, w(i, j) * w(i, j) * q * (1.0 - q));
      }
  return best;
}

double mean(const VectorXd& v) { return v.mean(); }

}  // namespace

SporadicityProfile SporadicityProfile::ones(const Digraph& g) { return uniform(g, 1.0, 1.0); }

SporadicityProfile SporadicityProfile::uniform(const Digraph& g, double compute, double link) {
  const int m = g.size();
  SporadicityProfile out;
  out.p = VectorXd::Constant(m, compute);
  out.p_hat = MatrixXd::Identity(m, m);
  for (const auto& e : g.edges()) out.p_hat(e.to, e.from) = link;
  return out;
}

MixingPair build_mixing(const Digraph& g) {
  if (!is_strongly_connected(g)) throw PreconditionError("build_mixing: graph is not strongly connected");
  const int m = g.size();
  MixingPair pair{MatrixXd::Zero(m, m), MatrixXd::Zero(m, m)};
  for (int i = 0; i < m; ++i) {
    const auto& in = g.in_neighbors(i);
    const double a = 1.0 / (1.0 + static_cast<double>(in.size()));
    pair.A(i, i) = a;
    for (int j : in) pair.A(i, j) = a;

    const auto& out = g.out_neighbors(i);
    const double b = 1.0 / (1.0 + static_cast<double>(out.size()));
    pair.B(i, i) = b;
    for (int j : out) pair.B(j, i) = b;
  }
  return pair;
}

std::pair<MatrixXd, MatrixXd> expected_matrices(const MixingPair& pair,
                                                const SporadicityProfile& profile) {
  check_profile(pair, profile);
  const Index m = pair.A.rows();
  MatrixXd A_hat = pair.A.cwiseProduct(profile.p_hat);
  MatrixXd B_hat = pair.B.cwiseProduct(profile.p_hat);
  for (Index i = 0; i < m; ++i) {
    A_hat(i, i) = 0.0;
    B_hat(i, i) = 0.0;
    A_hat(i, i) = 1.0 - A_hat.row(i).sum();
    B_hat(i, i) = 1.0 - B_hat.col(i).sum();
    if (A_hat(i, i) < -1e-15 || B_hat(i, i) < -1e-15) {
      throw NumericalError("expected_matrices: negative diagonal residual", std::min(A_hat(i, i), B_hat(i, i)));
    }
  }
  return {std::move(A_hat), std::move(B_hat)};
}

std::pair<VectorXd, VectorXd> perron_vectors(const MatrixXd& A_hat, const MatrixXd& B_hat,
                                             PerronOptions opts) {
  VectorXd phi = stochastic_left_eigenvector(A_hat, opts);
  // A right eigenvector of a column-stochastic matrix is a left one of its transpose.
  VectorXd pi = stochastic_left_eigenvector(B_hat.transpose(), opts);
  return {std::move(phi), std::move(pi)};
}

std::pair<double, double> contraction_radii(const MixingPair& pair, const SporadicityProfile& profile,
                                            const VectorXd& phi, const VectorXd& pi,
                                            const GraphMetrics& metrics) {
  const double dk = double(metrics.diameter) * double(metrics.edge_utility);
  const double a_min = positive_extrema(pair.A, profile.p_hat).first;
  const double b_min = positive_extrema(pair.B, profile.p_hat).first;
  const double phi_max = phi.maxCoeff();
  const double pi_max = pi.maxCoeff();
  const double rho_A = 1.0 - phi.minCoeff() * a_min * a_min / (phi_max * phi_max * dk);
  const double rho_B = 1.0 - std::pow(pi.minCoeff(), 2) * b_min * b_min / (std::pow(pi_max, 3) * dk);
  return {std::max(rho_A, 0.0), std::max(rho_B, 0.0)};
}

std::pair<double, double> sporadic_deviation_radii(const MixingPair& pair,
                                                   const SporadicityProfile& profile,
                                                   const VectorXd& phi, const VectorXd& pi) {
  const double m = double(pair.A.rows());
  const double rho0_A = 4.0 * (m - 1.0) * (phi.maxCoeff() / phi.minCoeff()) *
                        max_edge_variance(pair.A, profile.p_hat);
  const double rho0_B = 2.0 * (m - 1.0) * (pi.maxCoeff() / pi.minCoeff()) *
                        max_edge_variance(pair.B, profile.p_hat);
  return {rho0_A, rho0_B};
}

ExpectedMixing expected_mixing(const MixingPair& pair, const SporadicityProfile& profile,
                               const GraphMetrics& metrics, PerronOptions opts) {
  ExpectedMixing em;
  std::tie(em.A_hat, em.B_hat) = expected_matrices(pair, profile);
  std::tie(em.phi, em.pi) = perron_vectors(em.A_hat, em.B_hat, opts);
  std::tie(em.rho_A, em.rho_B) = contraction_radii(pair, profile, em.phi, em.pi, metrics);
  std::tie(em.rho0_A, em.rho0_B) = sporadic_deviation_radii(pair, profile, em.phi, em.pi);
  return em;
}

std::pair<double, double> threshold_taus(const MixingPair& pair, const GraphMetrics& metrics) {
  const double m = double(pair.A.rows());
  const double dk = double(metrics.diameter) * double(metrics.edge_utility);
  const MatrixXd ones = MatrixXd::Ones(pair.A.rows(), pair.A.cols());
  const auto [a_lo, a_hi] = positive_extrema(pair.A, ones);
  const auto [b_lo, b_hi] = positive_extrema(pair.B, ones);
  const double tau_A = 16.0 * m * m * (m - 1.0) * dk * a_hi * a_hi / std::pow(a_lo, 2.0 * (m + 1.0));
  const double tau_B = 4.0 * m * m * m * (m - 1.0) * dk * b_hi * b_hi / std::pow(b_lo, 3.0 * m + 2.0);
  return {tau_A, tau_B};
}

double threshold_root(double tau, int degree, double tolerance) {
  if (!(tau > 0.0)) throw PreconditionError("threshold_root: tau must be positive");
  if (degree < 1) throw PreconditionError("threshold_root: degree must be >= 1");
  // g(s) = tau s - (1 - s)^degree is increasing on [0, 1], g(0) = -1, g(1) = tau.
  auto g = [&](double s) { return tau * s - std::pow(1.0 - s, degree); };
  double lo = 0.0;
  double hi = std::min(1.0, 1.0 / tau);  // g(1/tau) = 1 - (1 - 1/tau)^d >= 0
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (g(mid) < 0.0) lo = mid;
    else hi = mid;
    if (hi - lo <= tolerance * 1e-6 * hi) break;
  }
  return 1.0 - 0.5 * (lo + hi);
}

std::pair<double, double> min_comm_probability(const MixingPair& pair, const GraphMetrics& metrics) {
  const int m = static_cast<int>(pair.A.rows());
  if (m == 1) return {0.0, 0.0};
  const auto [tau_A, tau_B] = threshold_taus(pair, metrics);
  return {threshold_root(tau_A, 2 * (m + 1)), threshold_root(tau_B, 3 * m + 2)};
}

Constants constant_tables(const ProblemConstants& pc, const ExpectedMixing& em,
                          const SporadicityProfile& profile, const MixingPair& pair,
                          const GraphMetrics& metrics) {
  const Index m_i = pc.size();
  if (em.phi.size() != m_i || profile.p.size() != m_i) {
    throw PreconditionError("constant_tables: client count mismatch");
  }
  const double m = double(m_i);
  const VectorXd& p = profile.p;
  const double L_bar2 = pc.L_bar * pc.L_bar;
  const VectorXd var_factor = (1.0 - pc.B.array() / pc.D.array()) / pc.B.array();  // (1 - B/D)/B
  const VectorXd s1 = pc.sigma1.array().square() * var_factor.array();           // sigma1^2 (1-B/D)/B
  const VectorXd d1 = pc.delta1.array().square();
  const VectorXd L2 = pc.L.array().square();
  const ArrayXd one_minus_p = 1.0 - p.array();

  Constants c;
  c.rho_A = em.rho_A;
  c.rho_B = em.rho_B;
  c.rho0_A = em.rho0_A;
  c.rho0_B = em.rho0_B;
  c.rho_tilde_A = em.rho_A + 2.0 * em.rho0_A;
  c.rho_tilde_B = em.rho_B + em.rho0_B;

  const ArrayXd per_phi = p.array() / em.phi.array();
  c.kappa1 = (per_phi * (2.0 * s1.array() * L_bar2 + 3.0 * L2.array())).maxCoeff();
  c.kappa4 = (per_phi * (2.0 * s1.array() * L_bar2 + 5.0 * L2.array())).maxCoeff();
  c.kappa8 = (p.array() * (2.0 * s1.array() * L_bar2 + 3.0 * L2.array())).maxCoeff();
  c.kappa2 = 2.0 * mean((s1.array() * p.array()).matrix()) +
             3.0 * mean((one_minus_p * d1.array()).matrix()) + 3.0;

  double col_term = 0.0;
  for (Index j = 0; j < m_i; ++j) {
    double acc = 0.0;
    for (Index i = 0; i < m_i; ++i) {
      if (i == j || pair.B(i, j) <= 0.0) continue;
      const double q = profile.p_hat(i, j);
      acc += pair.B(i, j) * pair.B(i, j) * q * (1.0 - q);
    }
    col_term = std::max(col_term, em.pi(j) * acc / m);
  }
  const double pi_max = em.pi.maxCoeff();
  c.kappa3 = em.phi.maxCoeff() * (pi_max * pi_max / em.pi.minCoeff() + 2.0 * m * col_term);

  c.kappa5 = 2.0 * mean((p.array() * (2.0 * s1.array() + 5.0 * one_minus_p * d1.array())).matrix()) * L_bar2 +
             5.0 * mean((p.array().square() * L2.array()).matrix());
  c.kappa6 = (1.0 + c.rho_A) / (1.0 - c.rho_tilde_A);
  c.kappa7 = 2.0 * (m + 1.0) * (1.0 + c.rho_tilde_B) / (1.0 - c.rho_tilde_B);
  c.kappa9 = c.rho_tilde_B > 0.0
                 ? (m * (1.0 + 3.0 * c.rho0_B) / (3.0 * c.kappa7 * c.rho_tilde_B) + 1.0) * c.kappa4 * c.kappa6 +
                       c.kappa5 / m
                 : std::numeric_limits<double>::infinity();
  c.kappa10 = 8.0 / (3.0 * c.kappa2 * c.kappa3) *
              (em.phi.array() * em.pi.array()).maxCoeff() / em.phi.maxCoeff();

  if (m_i > 1) {
    std::tie(c.tau_A, c.tau_B) = threshold_taus(pair, metrics);
    std::tie(c.r_A, c.r_B) = min_comm_probability(pair, metrics);
  }
  return c;
}

double prime_threshold_B(const Constants& c, const ExpectedMixing& em, const MixingPair& pair,
                         double gamma1) {
  const Index m_i = pair.B.rows();
  if (m_i == 1) return 0.0;
  const double m = double(m_i);
  double b = 0.0;
  for (Index i = 0; i < m_i; ++i)
    for (Index j = 0; j < m_i; ++j)
      if (i != j) b = std::max(b, pair.B(i, j));
  const double pi_min = em.pi.minCoeff();
  const double tau = 2.0 * m / (9.0 * (m - 1.0) * c.kappa2 * gamma1 * b * b) * pi_min * pi_min /
                     em.pi.maxCoeff();
  return 0.5 * (1.0 + std::sqrt(std::max(0.0, 1.0 - tau)));
}

}  // namespace spodgt
