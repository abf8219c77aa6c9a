#include "spodgt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace spodgt {

namespace {

double max_eta(const VectorXd& eta) { return eta.size() ? eta.maxCoeff() : 0.0; }

nlohmann::json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::json vec(const VectorXd& v) {
  auto out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(num(v(i)));
  return out;
}

double min_edge_probability(const MixingPair& pair, const SporadicityProfile& profile) {
  double lo = 1.0;
  for (Index i = 0; i < pair.A.rows(); ++i)
    for (Index j = 0; j < pair.A.cols(); ++j)
      if (i != j && pair.A(i, j) > 0.0) lo = std::min(lo, profile.p_hat(i, j));
  return lo;
}

}  // namespace

Averages weighted_averages(const MatrixXd& X, const MatrixXd& Y, const MatrixXd& G_masked,
                           const VectorXd& phi) {
  if (X.rows() != phi.size() || Y.rows() != X.rows() || G_masked.rows() != X.rows() ||
      Y.cols() != X.cols() || G_masked.cols() != X.cols()) {
    throw PreconditionError("weighted_averages: dimension mismatch");
  }
  return {phi.transpose() * X, Y.colwise().mean(), G_masked.colwise().mean()};
}

ConsensusError consensus_errors(const MatrixXd& X, const MatrixXd& Y, const VectorXd& phi,
                                const VectorXd& pi) {
  const Index m = X.rows();
  if (phi.size() != m || pi.size() != m || Y.rows() != m) {
    throw PreconditionError("consensus_errors: dimension mismatch");
  }
  const RowVectorXd x_bar = phi.transpose() * X;
  const RowVectorXd y_sum = Y.colwise().sum();  // m * y_bar
  ConsensusError e;
  e.x_err = phi.dot((X.rowwise() - x_bar).rowwise().squaredNorm());
  const MatrixXd scaled = pi.cwiseInverse().asDiagonal() * Y;
  e.y_err = pi.dot((scaled.rowwise() - y_sum).rowwise().squaredNorm());
  return e;
}

DelayRecord delay_step(const EventDraw& draw, const SporadicityProfile& profile, const Digraph& g) {
  const int m = g.size();
  DelayRecord d;
  for (int i = 0; i < m; ++i) d.tau_proc += draw.v(i) / profile.p(i);
  d.tau_proc /= m;
  for (int i = 0; i < m; ++i) {
    const auto& in = g.in_neighbors(i);
    if (!in.empty()) {
      double acc = 0.0;
      for (int j : in) acc += draw.v_hat(i, j) / profile.p_hat(i, j);
      d.tau_in += acc / double(in.size());
    }
    const auto& out = g.out_neighbors(i);
    if (!out.empty()) {
      double acc = 0.0;
      for (int j : out) acc += draw.v_hat(j, i) / profile.p_hat(j, i);
      d.tau_out += acc / double(out.size());
    }
  }
  d.tau_in /= m;
  d.tau_out /= m;
  d.tau_total = d.tau_in + d.tau_proc + d.tau_out;
  return d;
}

int kgt_interval(const VectorXd& p) {
  if (p.size() == 0 || (p.array() <= 0.0).any()) throw PreconditionError("kgt_interval: p must be positive");
  // Guard against 2.0000000000000004 rounding up to 3.
  const double mean_inv = p.cwiseInverse().mean();
  return static_cast<int>(std::ceil(mean_inv - 1e-12));
}

NoiseTerms noise_terms(const ProblemConstants& pc, const VectorXd& p) {
  const ArrayXd var = (1.0 - pc.B.array() / pc.D.array()) / pc.B.array();
  const ArrayXd s0 = pc.sigma0.array().square() * var;
  const ArrayXd s1 = pc.sigma1.array().square() * var;
  const ArrayXd d0 = pc.delta0.array().square();
  const ArrayXd d1 = pc.delta1.array().square();
  const ArrayXd pa = p.array();
  NoiseTerms t;
  t.variance = (s0 * pa).mean();
  t.sporadicity = ((1.0 - pa) * d0).mean();
  t.tracking = (pa * (s0 + 5.0 * (1.0 - pa) * d0)).mean();
  t.tracking_grad = (pa * (2.0 * s1 + 5.0 * (1.0 - pa) * d1)).mean();
  return t;
}

PsiSystem psi_system(const Constants& c, const ProblemConstants& pc, const ExpectedMixing& em,
                     const VectorXd& p, const VectorXd& eta) {
  const Index m_i = pc.size();
  if (p.size() != m_i || eta.size() != m_i || em.phi.size() != m_i) {
    throw PreconditionError("psi_system: client count mismatch");
  }
  const double m = double(m_i);
  const double e = max_eta(eta);
  const double e2 = e * e;
  const NoiseTerms t = noise_terms(pc, p);
  const double drift = t.variance + 3.0 * t.sporadicity;

  PsiSystem s;
  const double psi11 = (1.0 + c.rho_tilde_A) / 2.0 + m * c.kappa1 * c.kappa6 * c.kappa3 * e2;
  const double psi12 = c.kappa6 * c.kappa3 * e2;
  const double gamma1 = m * m * c.kappa2 * c.kappa6 * c.kappa3 * e2;
  const double omega1 = m * m * drift * c.kappa6 * c.kappa3 * e2;
  const double k74 = c.kappa7 * c.kappa4;
  const double k75 = c.kappa7 * c.kappa5;
  s.Psi(0, 0) = psi11;
  s.Psi(0, 1) = psi12;
  s.Psi(1, 0) = k74 * (1.0 + psi11) + k75 * c.kappa3 * c.kappa1 * e2 + m * k75 * c.rho0_A;
  s.Psi(1, 1) = (1.0 + c.rho_tilde_B) / 2.0 + k74 * psi12 + m * k75 * c.kappa3 * e2;
  s.gamma(0) = gamma1;
  s.gamma(1) = k74 * gamma1 + 3.0 * m * c.kappa7 * t.tracking_grad + m * k75 * c.kappa3 * c.kappa2 * e2;
  s.omega(0) = omega1;
  s.omega(1) = k74 * omega1 + 2.0 * m * c.kappa7 * t.tracking + m * drift * k75 * c.kappa3 * e2;

  s.psi0(0) = 0.5 * (1.0 + 3.0 * c.rho0_B) * c.kappa8 * e;
  s.psi0(1) = 3.0 * em.phi.maxCoeff() * c.rho_tilde_B / (2.0 * m) * e;

  const ArrayXd var = (1.0 - pc.B.array() / pc.D.array()) / pc.B.array();
  const ArrayXd pa = p.array();
  const ArrayXd inner = m * em.pi.array() - 2.0 * pc.sigma1.array().square() * pa * var -
                        3.0 * (1.0 - pa) * pc.delta1.array().square() - 3.0 * c.rho0_B * c.kappa2;
  s.gamma0 = 0.5 * m * (em.phi.array() * eta.array() * inner).mean();
  const ArrayXd noise0 = pc.sigma0.array().square() * pa * var + 3.0 * (1.0 - pa) * pc.delta0.array().square();
  s.omega0 = 0.5 * m * (1.0 + 3.0 * c.rho0_B) * (em.phi.array() * eta.array() * noise0).mean();
  return s;
}

double spectral_radius_psi(const Eigen::Matrix2d& P) {
  const double a = P(0, 0), b = P(0, 1), c = P(1, 0), d = P(1, 1);
  return 0.5 * (a + d + std::sqrt((a - d) * (a - d) + 4.0 * b * c));
}

double lr_ceiling(const Constants& c, int m_i) {
  if (!(c.rho_tilde_A < 1.0) || !(c.rho_tilde_B < 1.0)) {
    std::ostringstream msg;
    msg << "learning-rate ceiling undefined: rho_tilde_A=" << c.rho_tilde_A
        << ", rho_tilde_B=" << c.rho_tilde_B
        << " (need both < 1; raise link probabilities toward r_A=" << c.r_A << ", r_B=" << c.r_B << ")";
    throw InfeasibleError(msg.str());
  }
  const double m = double(m_i);
  const double ra = c.rho_tilde_A, rb = c.rho_tilde_B;
  const double spread_A = (1.0 - ra) / std::sqrt(1.0 + ra);
  const double spread_B = (1.0 - rb) / std::sqrt(1.0 + rb);
  const double t1 = spread_A * spread_B / (4.0 * std::sqrt(m + 1.0)) /
                    std::sqrt(2.0 * c.kappa4 + m * c.kappa5 * c.rho0_A);
  const double t2 = std::sqrt(1.0 - ra) / std::sqrt(c.kappa5);
  const double t3 = spread_B / (2.0 * std::sqrt(m * (m + 1.0))) / std::sqrt(c.kappa5);
  return std::min({t1, t2, t3}) / (2.0 * std::sqrt(c.kappa3));
}

ParticipationConstraints participation_constraints(const Constants& c, const ProblemConstants& pc,
                                                   const ExpectedMixing& em, const MixingPair& pair,
                                                   double rho_Psi, double gamma2, double gamma3) {
  if (!(rho_Psi < 1.0)) throw PreconditionError("participation_constraints: rho_Psi must be < 1");
  if (!(gamma2 > 1.0) || !(gamma3 > 1.0)) {
    throw PreconditionError("participation_constraints: Gamma_2 and Gamma_3 must exceed 1");
  }
  const Index m_i = pc.size();
  const double m = double(m_i);
  const ArrayXd phipi = em.phi.array() * em.pi.array();

  ParticipationConstraints out;
  out.gamma2 = gamma2;
  out.gamma3 = gamma3;
  out.gamma1 = 1.0 + 8.0 * gamma3 / m * (phipi.maxCoeff() / phipi.minCoeff()) *
                         (gamma2 * c.kappa7 * c.rho_tilde_B / (1.0 - rho_Psi));
  out.p_min = VectorXd::Zero(m_i);
  out.B_min.assign(static_cast<std::size_t>(m_i), 1);
  for (Index i = 0; i < m_i; ++i) {
    const double d1 = pc.delta1(i) * pc.delta1(i);
    if (d1 > 0.0) out.p_min(i) = std::max(0.0, 1.0 - m * em.pi(i) / (9.0 * out.gamma1 * d1));
    const double s1 = pc.sigma1(i) * pc.sigma1(i);
    if (s1 > 0.0) {
      const double D = pc.D(i);
      const double b = std::ceil(D / (1.0 + m * em.pi(i) * D / (6.0 * out.gamma1 * s1)) - 1e-9);
      out.B_min[static_cast<std::size_t>(i)] = std::max(1, static_cast<int>(b));
    }
  }
  out.r_prime_B = prime_threshold_B(c, em, pair, out.gamma1);
  out.p_hat_threshold = m_i > 1 ? std::max({c.r_A, c.r_B, out.r_prime_B}) : 0.0;
  out.eta_bound = std::sqrt((1.0 - 1.0 / gamma3) * c.kappa10 * (1.0 - rho_Psi) / (out.gamma1 * c.kappa9));
  out.q = m * m / 2.0 * (1.0 - 1.0 / out.gamma1) * (1.0 - 1.0 / gamma2) / gamma3 * phipi.minCoeff();
  return out;
}

TheoryReport theory_report(const ProblemConstants& pc, const MixingPair& pair,
                           const SporadicityProfile& profile, const GraphMetrics& metrics,
                           const VectorXd& eta, TheoryOptions opts) {
  const int m = pc.size();
  TheoryReport r;
  r.m = m;
  const ExpectedMixing em = expected_mixing(pair, profile, metrics);
  r.constants = constant_tables(pc, em, profile, pair, metrics);
  r.phi = em.phi;
  r.pi = em.pi;
  r.eta_ceiling = lr_ceiling(r.constants, m);

  const VectorXd at_ceiling = VectorXd::Constant(m, opts.ceiling_fraction * r.eta_ceiling);
  r.rho_Psi_at_ceiling = spectral_radius_psi(psi_system(r.constants, pc, em, profile.p, at_ceiling));
  if (!(r.rho_Psi_at_ceiling < 1.0)) {
    throw InfeasibleError("rho(Psi) = " + std::to_string(r.rho_Psi_at_ceiling) +
                          " at the learning-rate ceiling");
  }
  r.participation =
      participation_constraints(r.constants, pc, em, pair, r.rho_Psi_at_ceiling, opts.gamma2, opts.gamma3);
  r.constants.r_prime_B = r.participation.r_prime_B;
  r.eta_max = std::min(r.eta_ceiling, r.participation.eta_bound);

  r.eta = eta.size() ? eta : VectorXd::Constant(m, opts.ceiling_fraction * r.eta_max);
  if (r.eta.size() != m) throw PreconditionError("theory_report: eta has the wrong length");
  r.psi = psi_system(r.constants, pc, em, profile.p, r.eta);
  r.rho_Psi = spectral_radius_psi(r.psi);

  r.noise = noise_terms(pc, profile.p);
  const auto& c = r.constants;
  const double q = r.participation.q;
  const double phi_max = em.phi.maxCoeff();
  const double e = r.eta.maxCoeff();
  r.gap_variance = phi_max / q *
                   (m * (1.0 + 3.0 * c.rho0_B) / 2.0 + 3.0 * c.kappa7 * c.rho_tilde_B / (1.0 - r.rho_Psi)) *
                   (r.noise.variance + 5.0 * r.noise.sporadicity);
  r.gap_eta = 3.0 * m * phi_max / (2.0 * q) * c.kappa9 * c.kappa3 * c.kappa7 * c.rho_tilde_B *
              (r.noise.variance + 3.0 * r.noise.sporadicity) * e * e;
  // 0 * inf: no noise means no gap, whatever the coefficient.
  if (r.noise.variance + 5.0 * r.noise.sporadicity == 0.0) r.gap_variance = 0.0;
  if (r.noise.variance + 3.0 * r.noise.sporadicity == 0.0) r.gap_eta = 0.0;

  r.eta_ok = e < r.eta_max;
  r.p_ok = (profile.p.array() >= r.participation.p_min.array()).all();
  r.B_ok = true;
  for (int i = 0; i < m; ++i)
    if (pc.B(i) < r.participation.B_min[static_cast<std::size_t>(i)]) r.B_ok = false;
  r.p_hat_ok = m == 1 || min_edge_probability(pair, profile) >= r.participation.p_hat_threshold;
  r.heterogeneity_ok = (r.eta.mean() / r.eta.array() >= 1.0 / opts.gamma3).all();
  return r;
}

nlohmann::json to_json(const Constants& c) {
  return {{"kappa1", num(c.kappa1)},     {"kappa2", num(c.kappa2)},   {"kappa3", num(c.kappa3)},
          {"kappa4", num(c.kappa4)},     {"kappa5", num(c.kappa5)},   {"kappa6", num(c.kappa6)},
          {"kappa7", num(c.kappa7)},     {"kappa8", num(c.kappa8)},   {"kappa9", num(c.kappa9)},
          {"kappa10", num(c.kappa10)},   {"rho_A", num(c.rho_A)},     {"rho_B", num(c.rho_B)},
          {"rho0_A", num(c.rho0_A)},     {"rho0_B", num(c.rho0_B)},   {"rho_tilde_A", num(c.rho_tilde_A)},
          {"rho_tilde_B", num(c.rho_tilde_B)}, {"tau_A", num(c.tau_A)}, {"tau_B", num(c.tau_B)},
          {"r_A", num(c.r_A)},           {"r_B", num(c.r_B)},         {"r_prime_B", num(c.r_prime_B)}};
}

nlohmann::json to_json(const TheoryReport& r) {
  const auto& pc = r.participation;
  nlohmann::json psi = {
      {"Psi", {{num(r.psi.Psi(0, 0)), num(r.psi.Psi(0, 1))}, {num(r.psi.Psi(1, 0)), num(r.psi.Psi(1, 1))}}},
      {"gamma", {num(r.psi.gamma(0)), num(r.psi.gamma(1))}},
      {"omega", {num(r.psi.omega(0)), num(r.psi.omega(1))}},
      {"psi0", {num(r.psi.psi0(0)), num(r.psi.psi0(1))}},
      {"gamma0", num(r.psi.gamma0)},
      {"omega0", num(r.psi.omega0)}};
  return {{"m", r.m},
          {"constants", to_json(r.constants)},
          {"phi", vec(r.phi)},
          {"pi", vec(r.pi)},
          {"eta_ceiling", num(r.eta_ceiling)},
          {"rho_Psi_at_ceiling", num(r.rho_Psi_at_ceiling)},
          {"eta_bound", num(pc.eta_bound)},
          {"eta_max", num(r.eta_max)},
          {"eta", vec(r.eta)},
          {"psi_system", psi},
          {"rho_Psi", num(r.rho_Psi)},
          {"q", num(pc.q)},
          {"gamma_caps", {num(pc.gamma1), num(pc.gamma2), num(pc.gamma3)}},
          {"p_min", vec(pc.p_min)},
          {"B_min", pc.B_min},
          {"p_hat_threshold", num(pc.p_hat_threshold)},
          {"noise", {{"variance", num(r.noise.variance)}, {"sporadicity", num(r.noise.sporadicity)}}},
          {"gap_variance", num(r.gap_variance)},
          {"gap_eta", num(r.gap_eta)},
          {"best_loss_seen", num(r.best_loss_seen)},
          {"satisfied",
           {{"eta", r.eta_ok},
            {"p", r.p_ok},
            {"B", r.B_ok},
            {"p_hat", r.p_hat_ok},
            {"heterogeneity", r.heterogeneity_ok},
            {"all", r.all_satisfied()}}}};
}

void write_trace_csv(std::ostream& os, const MetricsTrace& trace) {
  for (std::size_t c = 0; c < kTraceColumns.size(); ++c) os << (c ? "," : "") << kTraceColumns[c];
  os << '\n';
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << ',' << buf;
  };
  for (const auto& r : trace.rows) {
    os << r.k;
    for (double v : {r.loss, r.grad_sq_norm, r.x_err, r.y_err, r.tau_in, r.tau_proc, r.tau_out,
                     r.tau_total_cum, r.accuracy})
      put(v);
    os << '\n';
  }
}

MetricsTrace read_trace_csv(std::istream& is) {
  MetricsTrace t;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("trace: empty input");
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != kTraceColumns.size()) {
      throw ConfigError("trace line " + std::to_string(lineno) + ": expected " +
                        std::to_string(kTraceColumns.size()) + " columns");
    }
    TraceRow r;
    r.k = std::stoll(cells[0]);
    double* fields[] = {&r.loss,    &r.grad_sq_norm, &r.x_err,         &r.y_err,   &r.tau_in,
                        &r.tau_proc, &r.tau_out,     &r.tau_total_cum, &r.accuracy};
    for (std::size_t c = 1; c < cells.size(); ++c) *fields[c - 1] = std::strtod(cells[c].c_str(), nullptr);
    t.rows.push_back(r);
  }
  return t;
}

}  // namespace spodgt
