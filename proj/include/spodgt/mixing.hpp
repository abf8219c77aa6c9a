#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "spodgt/common.hpp"
#include "spodgt/digraph.hpp"

namespace spodgt {

/// Row-stochastic A (receiver weights) and column-stochastic B (sender
/// weights). Entry (i, j) is nonzero only for j == i or an edge j -> i.
struct MixingPair {
  MatrixXd A;
  MatrixXd B;
};

/// Participation probabilities. `p_hat(i, j)` is the activation probability
/// of the link j -> i; the diagonal is fixed to 1 and non-edges hold 0.
struct SporadicityProfile {
  VectorXd p;
  MatrixXd p_hat;

  int size() const { return static_cast<int>(p.size()); }
  /// p = 1 and p_hat = 1 on every edge of g.
  static SporadicityProfile ones(const Digraph& g);
  /// p = compute everywhere, p_hat = link on every edge of g.
  static SporadicityProfile uniform(const Digraph& g, double compute, double link);
};

struct ExpectedMixing {
  MatrixXd A_hat;
  MatrixXd B_hat;
  VectorXd phi;  // left Perron vector of A_hat, sums to one
  VectorXd pi;   // right Perron vector of B_hat, sums to one
  double rho_A = 0.0;
  double rho_B = 0.0;
  double rho0_A = 0.0;
  double rho0_B = 0.0;
};

/// Per-client problem parameters feeding the constant tables.
struct ProblemConstants {
  VectorXd L;       // smoothness L_i
  double L_bar = 0.0;
  VectorXd sigma0;  // variance bound parameters
  VectorXd sigma1;
  VectorXd delta0;  // gradient diversity parameters
  VectorXd delta1;
  VectorXd D;       // dataset sizes
  VectorXd B;       // batch sizes

  int size() const { return static_cast<int>(L.size()); }
};

/// Closed-form scalars shared by the lemmas and propositions.
struct Constants {
  double kappa1 = 0, kappa2 = 0, kappa3 = 0, kappa4 = 0, kappa5 = 0;
  double kappa6 = 0, kappa7 = 0, kappa8 = 0, kappa9 = 0, kappa10 = 0;
  double rho_A = 0, rho_B = 0;
  double rho0_A = 0, rho0_B = 0;
  double rho_tilde_A = 0, rho_tilde_B = 0;
  double tau_A = 0, tau_B = 0;
  double r_A = 0, r_B = 0;
  /// Depends on Gamma_1, so it stays NaN until participation_constraints runs.
  double r_prime_B = std::numeric_limits<double>::quiet_NaN();
};

MixingPair build_mixing(const Digraph& g);

std::pair<MatrixXd, MatrixXd> expected_matrices(const MixingPair& pair,
                                                const SporadicityProfile& profile);

struct PerronOptions {
  double tolerance = 1e-12;
  /// Zero selects 100 m log(m) + 1000.
  long max_iterations = 0;
};

/// Stochastic left eigenvector of a primitive row-stochastic matrix
/// (`v^T M = v^T`, `sum v = 1`). Repeated squaring brings M^(2^s) close to
/// its rank-one limit, then plain power steps `v <- M^T v` with L1
/// renormalization polish v until `|M^T v - v|_inf <= tolerance`.
template <typename Derived>
Vector<typename Derived::Scalar> stochastic_left_eigenvector(const Eigen::MatrixBase<Derived>& M,
                                                              PerronOptions opts = {}) {
  using Scalar = typename Derived::Scalar;
  const Index m = M.rows();
  if (M.cols() != m || m == 0) throw PreconditionError("perron: matrix must be square and nonempty");
  Vector<Scalar> v = Vector<Scalar>::Constant(m, Scalar(1) / Scalar(m));
  if (m == 1) return Vector<Scalar>::Ones(1);

  Matrix<Scalar> P = M;
  for (int s = 0; s < 64; ++s) {
    Matrix<Scalar> spread = P.rowwise() - P.row(0);
    if (spread.cwiseAbs().maxCoeff() <= Scalar(opts.tolerance)) break;
    P = (P * P).eval();
    P = P.array().colwise() / P.rowwise().sum().array();
  }
  v = P.colwise().mean().transpose();
  v = v.cwiseMax(Scalar(0));
  v /= v.sum();

  const long cap = opts.max_iterations > 0
                       ? opts.max_iterations
                       : static_cast<long>(100.0 * double(m) * std::log(double(m))) + 1000;
  Scalar residual = (M.transpose() * v - v).cwiseAbs().maxCoeff();
  for (long it = 0; it < cap && residual > Scalar(opts.tolerance); ++it) {
    v = M.transpose() * v;
    v /= v.sum();
    residual = (M.transpose() * v - v).cwiseAbs().maxCoeff();
  }
  if (residual > Scalar(opts.tolerance)) {
    throw NumericalError("perron: power iteration did not converge", double(residual));
  }
  return v;
}

/// (phi, pi): left Perron vector of A_hat, right Perron vector of B_hat.
std::pair<VectorXd, VectorXd> perron_vectors(const MatrixXd& A_hat, const MatrixXd& B_hat,
                                             PerronOptions opts = {});

/// Conservative contraction factors of the expected matrices in the
/// phi- and pi-weighted consensus norms.
std::pair<double, double> contraction_radii(const MixingPair& pair, const SporadicityProfile& profile,
                                            const VectorXd& phi, const VectorXd& pi,
                                            const GraphMetrics& metrics);

/// Extra contraction loss caused by the randomness of sporadic links.
std::pair<double, double> sporadic_deviation_radii(const MixingPair& pair,
                                                   const SporadicityProfile& profile,
                                                   const VectorXd& phi, const VectorXd& pi);

/// Expected matrices, Perron vectors and all four radii in one go.
ExpectedMixing expected_mixing(const MixingPair& pair, const SporadicityProfile& profile,
                               const GraphMetrics& metrics, PerronOptions opts = {});

/// Thresholds (tau_A, tau_B) of the minimum link probability polynomials.
std::pair<double, double> threshold_taus(const MixingPair& pair, const GraphMetrics& metrics);

/// Unique root in (0, 1) of x^degree + tau x - tau, by bisection on the
/// gap s = 1 - x so large tau keeps full relative precision.
double threshold_root(double tau, int degree, double tolerance = 1e-10);

/// Minimum admissible link probabilities (r_A, r_B).
std::pair<double, double> min_comm_probability(const MixingPair& pair, const GraphMetrics& metrics);

/// Every kappa, rho-tilde, tau and r value except r'_B.
Constants constant_tables(const ProblemConstants& pc, const ExpectedMixing& em,
                          const SporadicityProfile& profile, const MixingPair& pair,
                          const GraphMetrics& metrics);

/// r'_B for a given Gamma_1.
double prime_threshold_B(const Constants& c, const ExpectedMixing& em, const MixingPair& pair,
                         double gamma1);

}  // namespace spodgt
