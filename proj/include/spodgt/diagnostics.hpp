#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "spodgt/common.hpp"
#include "spodgt/digraph.hpp"
#include "spodgt/mixing.hpp"
#include "spodgt/sporadic.hpp"

namespace spodgt {

struct Averages {
  RowVectorXd x_bar_phi;  // phi^T X
  RowVectorXd y_bar;      // plain mean of the rows of Y
  RowVectorXd g_bar_v;    // plain mean of the rows of Lambda_v G
};

Averages weighted_averages(const MatrixXd& X, const MatrixXd& Y, const MatrixXd& G_masked,
                           const VectorXd& phi);

/// x_err = sum_i phi_i |x_i - x_bar|^2, y_err = sum_i pi_i |y_i / pi_i - m y_bar|^2.
struct ConsensusError {
  double x_err = 0.0;
  double y_err = 0.0;
};

ConsensusError consensus_errors(const MatrixXd& X, const MatrixXd& Y, const VectorXd& phi,
                                const VectorXd& pi);

/// Normalized per-iteration delay. Each active event is charged 1/probability.
struct DelayRecord {
  double tau_in = 0.0;
  double tau_proc = 0.0;
  double tau_out = 0.0;
  double tau_total = 0.0;
};

DelayRecord delay_step(const EventDraw& draw, const SporadicityProfile& profile, const Digraph& g);

/// ceil(mean(1 / p_i)).
int kgt_interval(const VectorXd& p);

/// The 2x2 consensus recursion and the loss-descent coefficients at a given
/// learning-rate vector.
struct PsiSystem {
  Eigen::Matrix2d Psi = Eigen::Matrix2d::Zero();
  Eigen::Vector2d gamma = Eigen::Vector2d::Zero();
  Eigen::Vector2d omega = Eigen::Vector2d::Zero();
  Eigen::Vector2d psi0 = Eigen::Vector2d::Zero();
  double gamma0 = 0.0;
  double omega0 = 0.0;
};

/// Client averages of the variance and sporadicity terms that appear in the
/// omega entries and the stationarity gap.
struct NoiseTerms {
  double variance = 0.0;        // mean(sigma0^2 p (1 - B/D) / B)
  double sporadicity = 0.0;     // mean((1 - p) delta0^2)
  double tracking = 0.0;        // mean(p (sigma0^2 (1 - B/D) / B + 5 (1 - p) delta0^2))
  double tracking_grad = 0.0;   // mean(p (2 sigma1^2 (1 - B/D) / B + 5 (1 - p) delta1^2))
};

NoiseTerms noise_terms(const ProblemConstants& pc, const VectorXd& p);

PsiSystem psi_system(const Constants& c, const ProblemConstants& pc, const ExpectedMixing& em,
                     const VectorXd& p, const VectorXd& eta);

/// Largest eigenvalue of a nonnegative 2x2 matrix, closed form.
double spectral_radius_psi(const Eigen::Matrix2d& Psi);
inline double spectral_radius_psi(const PsiSystem& s) { return spectral_radius_psi(s.Psi); }

/// Learning-rate ceiling that keeps rho(Psi) < 1. Throws InfeasibleError
/// when either rho-tilde has reached one.
double lr_ceiling(const Constants& c, int m);

struct ParticipationConstraints {
  double gamma1 = 1.0;
  double gamma2 = 2.0;
  double gamma3 = 2.0;
  VectorXd p_min;
  std::vector<int> B_min;
  double r_prime_B = 0.0;
  double p_hat_threshold = 0.0;  // max(r_A, r_B, r'_B)
  double eta_bound = 0.0;
  double q = 0.0;
};

ParticipationConstraints participation_constraints(const Constants& c, const ProblemConstants& pc,
                                                   const ExpectedMixing& em, const MixingPair& pair,
                                                   double rho_Psi, double gamma2 = 2.0,
                                                   double gamma3 = 2.0);

/// Everything the convergence analysis says about one configuration.
struct TheoryReport {
  int m = 0;
  Constants constants;
  VectorXd phi;
  VectorXd pi;
  double eta_ceiling = 0.0;  // consensus ceiling
  double rho_Psi_at_ceiling = std::numeric_limits<double>::quiet_NaN();
  ParticipationConstraints participation;
  double eta_max = 0.0;      // min of both learning-rate bounds
  VectorXd eta;              // rates the report was evaluated at
  PsiSystem psi;             // at eta
  double rho_Psi = std::numeric_limits<double>::quiet_NaN();
  NoiseTerms noise;
  double gap_variance = 0.0;  // learning-rate independent gap term
  double gap_eta = 0.0;       // term scaling with max(eta)^2
  double best_loss_seen = std::numeric_limits<double>::quiet_NaN();

  bool eta_ok = false;
  bool p_ok = false;
  bool B_ok = false;
  bool p_hat_ok = false;
  bool heterogeneity_ok = false;
  bool all_satisfied() const { return eta_ok && p_ok && B_ok && p_hat_ok && heterogeneity_ok; }
};

struct TheoryOptions {
  double gamma2 = 2.0;
  double gamma3 = 2.0;
  /// Fraction of the consensus ceiling at which rho(Psi) feeds Gamma_1.
  double ceiling_fraction = 0.99;
};

/// Runs the full pipeline. `eta` empty means evaluate at eta_max for every
/// client. Throws InfeasibleError when a rho-tilde is at least one.
TheoryReport theory_report(const ProblemConstants& pc, const MixingPair& pair,
                           const SporadicityProfile& profile, const GraphMetrics& metrics,
                           const VectorXd& eta = {}, TheoryOptions opts = {});

/// Infinite and NaN values become null.
nlohmann::json to_json(const TheoryReport& r);
nlohmann::json to_json(const Constants& c);

/// One logged iteration.
struct TraceRow {
  std::int64_t k = 0;
  double loss = 0.0;
  double grad_sq_norm = 0.0;
  double x_err = 0.0;
  double y_err = 0.0;
  double tau_in = 0.0;
  double tau_proc = 0.0;
  double tau_out = 0.0;
  double tau_total_cum = 0.0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct MetricsTrace {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<TraceRow> rows;
  /// Mean of |grad F(x_bar)|^2 over every iteration 0..K-1, logged or not.
  double grad_sq_mean = std::numeric_limits<double>::quiet_NaN();
  double best_loss = std::numeric_limits<double>::infinity();
};

inline constexpr std::array<const char*, 10> kTraceColumns = {
    "k", "loss", "grad_sq_norm", "x_err", "y_err", "tau_in", "tau_proc", "tau_out", "tau_total_cum",
    "accuracy"};

/// Header plus one row per record, %.17g, NaN written as "nan".
void write_trace_csv(std::ostream& os, const MetricsTrace& trace);
MetricsTrace read_trace_csv(std::istream& is);

}  // namespace spodgt
