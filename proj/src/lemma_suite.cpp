#include "spodgt/lemma_suite.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <random>
#include <thread>

namespace spodgt {

namespace {

double sq_phi(const MatrixXd& M, const VectorXd& w) { return (w.asDiagonal() * M.rowwise().squaredNorm()).sum(); }

// Consensus distance of the rows of M to a given row, weighted.
double dev_phi(const MatrixXd& M, const RowVectorXd& center, const VectorXd& w) {
  return sq_phi(M.rowwise() - center, w);
}

// Each check contributes one (lhs, rhs) sample per trial.
constexpr int kChecks = 17;
constexpr double kRoundoff = 1e-15;
const char* const kNames[kChecks] = {
    "graderror_minibatch",     "graderror_model_spread",  "graderror_sporadicity",
    "descent_avg_tracker",     "descent_tracker_norm",    "descent_tracker_spread",
    "expected_contraction_A",  "expected_contraction_B",  "sporadic_contraction_A",
    "sporadic_contraction_B",  "tracking_mixing_noise",   "tracking_average_move",
    "tracking_gradient_change", "gradient_consensus",     "model_consensus",
    "tracker_consensus",       "loss_descent",
};

struct Context {
  const LemmaInstance* inst = nullptr;
  Constants c;
  ProblemConstants pc;
  ExpectedMixing em;
  NoiseTerms noise;
  PsiSystem psi;
  double eta_max = 0.0;
  double S1 = 0.0;            // mean(sigma1^2 p (1-B/D)/B)
  double D1 = 0.0;            // mean((1-p) delta1^2)
  double max_var1_phi = 0.0;  // max sigma1^2 p (1-B/D) / (B phi)
  double max_pL2_phi = 0.0;   // max p L^2 / phi
  RowVectorXd x_bar;
  VectorXd grad;
  double grad2 = 0.0;
  double x_err = 0.0;
  double loss = 0.0;
  AlgoConfig config;
};

using Sample = std::array<std::pair<double, double>, kChecks>;

Sample one_trial(const Context& cx, const RngStreams& st) {
  const LemmaInstance& in = *cx.inst;
  const int m = in.graph.size();
  const VectorXd& phi = cx.em.phi;
  const VectorXd& pi = cx.em.pi;
  const double c3e2 = cx.c.kappa3 * cx.eta_max * cx.eta_max;

  const EventSchedule sched{Schedule::bernoulli(), Schedule::bernoulli()};
  const EventDraw d0 = sample_events(sched, in.profile, in.graph, 0, st);
  const EventDraw d1 = sample_events(sched, in.profile, in.graph, 1, st);

  AlgoState s;
  s.X = in.X;
  s.G_prev_masked = MatrixXd::Zero(m, in.X.cols());
  for (int i = 0; i < m; ++i) {
    if (d0.v(i) == 0.0) continue;
    s.G_prev_masked.row(i) =
        minibatch_gradient(in.oracle, i, in.X.row(i).transpose(), in.batch[std::size_t(i)], st, 0).value.transpose();
  }
  s.Y = in.Y_base + s.G_prev_masked;
  const AlgoState nx = step(s, in.pair, d0, d1, in.oracle, cx.config, st);
  const auto [Ak, Bk] = realize_matrices(in.pair, d0);

  // Sporadic averages of true gradients.
  RowVectorXd gv_X = RowVectorXd::Zero(in.X.cols());
  RowVectorXd gv_bar = RowVectorXd::Zero(in.X.cols());
  for (int i = 0; i < m; ++i) {
    if (d0.v(i) == 0.0) continue;
    gv_X += in.oracle.local_gradient(i, in.X.row(i).transpose()).transpose();
    gv_bar += in.oracle.local_gradient(i, cx.x_bar.transpose()).transpose();
  }
  gv_X /= m;
  gv_bar /= m;
  const RowVectorXd y_bar = s.Y.colwise().mean();
  const RowVectorXd gradT = cx.grad.transpose();

  const ConsensusError e0 = consensus_errors(s.X, s.Y, phi, pi);
  const ConsensusError e1 = consensus_errors(nx.X, nx.Y, phi, pi);
  const double y_pinv = (s.Y.rowwise().squaredNorm().array() / pi.array()).sum();
  const double ybar2 = y_bar.squaredNorm();
  const RowVectorXd x_bar1 = phi.transpose() * nx.X;
  const double move2 = (x_bar1 - cx.x_bar).squaredNorm();
  const double x_err1 = e1.x_err;

  const MatrixXd piY = pi.cwiseInverse().asDiagonal() * (Bk * s.Y);
  const MatrixXd piY_hat = pi.cwiseInverse().asDiagonal() * (cx.em.B_hat * s.Y);
  const MatrixXd etaBY = in.eta.asDiagonal() * (Bk * s.Y);
  const RowVectorXd etaBY_avg = phi.transpose() * etaBY;

  const double s0 = cx.noise.variance, d0n = cx.noise.sporadicity;
  const double r0A = cx.c.rho0_A, r0B = cx.c.rho0_B, rA = cx.c.rho_A, rB = cx.c.rho_B;
  const double G2 = cx.grad2, xe = cx.x_err;

  Sample out;
  out[0] = {(y_bar - gv_X).squaredNorm(), s0 + 2.0 * cx.pc.L_bar * cx.pc.L_bar / m * cx.max_var1_phi * xe + 2.0 * cx.S1 * G2};
  out[1] = {(gv_X - gv_bar).squaredNorm(), cx.max_pL2_phi / m * xe};
  out[2] = {(gv_bar - gradT).squaredNorm(), d0n + cx.D1 * G2};
  out[3] = {ybar2, s0 + 3.0 * d0n + cx.c.kappa1 / m * xe + cx.c.kappa2 * G2};
  out[4] = {y_pinv, e0.y_err + double(m) * m * ybar2};
  out[5] = {dev_phi(etaBY, etaBY_avg, phi), c3e2 * y_pinv};
  out[6] = {dev_phi(cx.em.A_hat * s.X, cx.x_bar, phi), rA * xe};
  out[7] = {dev_phi(piY_hat, double(m) * y_bar, pi), rB * e0.y_err};
  out[8] = {dev_phi(Ak * s.X, cx.x_bar, phi), (rA + r0A) * xe};
  out[9] = {dev_phi(piY, double(m) * y_bar, pi), (rB + r0B) * e0.y_err + double(m) * m * r0B * ybar2};
  out[10] = {sq_phi((Ak - cx.em.A_hat) * s.X, phi), r0A * xe};
  out[11] = {move2, r0A * xe + c3e2 * y_pinv};
  out[12] = {(nx.G_prev_masked - s.G_prev_masked).squaredNorm(),
             2.0 * m * cx.noise.tracking + cx.c.kappa4 * (x_err1 + xe) + 3.0 * m * cx.noise.tracking_grad * G2 +
                 m * cx.c.kappa5 * move2};
  out[13] = {dev_phi(piY, double(m) * gradT, pi),
             3.0 * (rB + r0B) * e0.y_err + double(m) * m * (1.0 + 3.0 * r0B) * (s0 + 3.0 * d0n) +
                 m * (1.0 + 3.0 * r0B) * cx.c.kappa1 * xe +
                 double(m) * m * (2.0 * cx.S1 + 3.0 * cx.D1 + 3.0 * r0B * cx.c.kappa2) * G2};
  const auto& P = cx.psi;
  out[14] = {x_err1, P.Psi(0, 0) * xe + P.Psi(0, 1) * e0.y_err + P.gamma(0) * G2 + P.omega(0)};
  out[15] = {e1.y_err, P.Psi(1, 0) * xe + P.Psi(1, 1) * e0.y_err + P.gamma(1) * G2 + P.omega(1)};
  out[16] = {in.oracle.global_loss(x_bar1.transpose()) - cx.loss,
             -P.gamma0 * G2 + P.psi0(0) * xe + P.psi0(1) * e0.y_err + P.omega0};
  return out;
}

}  // namespace

bool LemmaSuiteResult::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const LemmaCheck& c) { return c.pass; });
}

LemmaInstance default_lemma_instance(LemmaInstanceOptions opts) {
  Digraph graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}, {2, 0}});
  MixingPair pair = build_mixing(graph);
  const GraphMetrics gm = metrics(graph);

  SyntheticOptions so;
  so.m = 4;
  so.n = opts.n;
  so.per_client_size = opts.per_client_size;
  so.seed = opts.seed;
  LossOracle oracle = make_synthetic(so);
  std::vector<int> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(std::max(1, oracle.data().client_size(i) / 2));

  std::mt19937_64 rng(opts.seed ^ 0x5bd1e995ULL);
  std::uniform_real_distribution<double> up(0.5, 1.0);
  VectorXd p(4);
  for (int i = 0; i < 4; ++i) p(i) = up(rng);

  const auto [r_A, r_B] = min_comm_probability(pair, gm);
  const double lo = std::max(r_A, r_B);
  const double ph = std::isnan(opts.p_hat) ? 0.5 * (1.0 + lo) : opts.p_hat;
  SporadicityProfile profile = SporadicityProfile::uniform(graph, 1.0, ph);
  profile.p = p;

  const RngStreams streams(opts.seed);
  const ProblemConstants pc = estimate_constants(oracle, batch, streams);
  const ExpectedMixing em = expected_mixing(pair, profile, gm);
  const Constants c = constant_tables(pc, em, profile, pair, gm);
  const double rate = std::isnan(opts.eta) ? opts.eta_fraction * lr_ceiling(c, 4) : opts.eta;
  VectorXd eta = VectorXd::Constant(4, rate);

  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd X = MatrixXd::NullaryExpr(4, opts.n, [&] { return normal(rng); });
  MatrixXd Y_base = MatrixXd::NullaryExpr(4, opts.n, [&] { return normal(rng); });
  Y_base.rowwise() -= Y_base.colwise().mean();
  return {std::move(graph), std::move(pair), std::move(profile), std::move(oracle),
          std::move(batch), std::move(eta), std::move(X), std::move(Y_base)};
}

LemmaSuiteResult lemma_bound_suite(const LemmaInstance& inst, int trials, const RngStreams& streams,
                                   const ConstantTamper& tamper, int jobs) {
  if (trials < 2) throw PreconditionError("lemma_bound_suite: need at least two trials");
  const int m = inst.graph.size();
  const GraphMetrics gm = metrics(inst.graph);

  Context cx;
  cx.inst = &inst;
  cx.pc = estimate_constants(inst.oracle, inst.batch, streams);
  cx.em = expected_mixing(inst.pair, inst.profile, gm);
  cx.c = constant_tables(cx.pc, cx.em, inst.profile, inst.pair, gm);
  if (tamper) tamper(cx.c);
  const VectorXd& p = inst.profile.p;
  cx.noise = noise_terms(cx.pc, p);
  cx.psi = psi_system(cx.c, cx.pc, cx.em, p, inst.eta);
  cx.eta_max = inst.eta.maxCoeff();
  const VectorXd f = (1.0 - cx.pc.B.array() / cx.pc.D.array()) / cx.pc.B.array();
  const ArrayXd s1 = cx.pc.sigma1.array().square();
  cx.S1 = (s1 * p.array() * f.array()).mean();
  cx.D1 = ((1.0 - p.array()) * cx.pc.delta1.array().square()).mean();
  cx.max_var1_phi = (s1 * p.array() * f.array() / cx.em.phi.array()).maxCoeff();
  cx.max_pL2_phi = (p.array() * cx.pc.L.array().square() / cx.em.phi.array()).maxCoeff();
  cx.x_bar = cx.em.phi.transpose() * inst.X;
  cx.grad = inst.oracle.global_gradient(cx.x_bar.transpose());
  cx.grad2 = cx.grad.squaredNorm();
  cx.x_err = dev_phi(inst.X, cx.x_bar, cx.em.phi);
  cx.loss = inst.oracle.global_loss(cx.x_bar.transpose());
  cx.config = AlgoConfig::make({Variant::spod_gt, 1}, inst.eta, inst.batch, 1);
  cx.config.validate(m);

  std::vector<Sample> samples(static_cast<std::size_t>(trials));
  auto work = [&](int begin, int end) {
    for (int t = begin; t < end; ++t)
      samples[std::size_t(t)] = one_trial(cx, streams.derive(std::uint64_t(t) + 1));
  };
  const int nj = std::clamp(jobs, 1, trials);
  {
    std::vector<std::jthread> pool;
    for (int j = 0; j < nj; ++j) pool.emplace_back(work, trials * j / nj, trials * (j + 1) / nj);
  }

  LemmaSuiteResult r;
  r.trials = trials;
  for (int c = 0; c < kChecks; ++c) {
    double sl = 0, sr = 0;
    for (const Sample& s : samples) {
      sl += s[std::size_t(c)].first;
      sr += s[std::size_t(c)].second;
    }
    const double T = trials;
    const double mean_d = (sl - sr) / T;
    double ss = 0;
    bool constant = true;  // deterministic checks get exactly zero spread
    const double d_first = samples[0][std::size_t(c)].first - samples[0][std::size_t(c)].second;
    for (const Sample& s : samples) {
      const double d = s[std::size_t(c)].first - s[std::size_t(c)].second;
      constant = constant && d == d_first;
      ss += (d - mean_d) * (d - mean_d);
    }
    if (constant) ss = 0.0;
    const double var_d = ss / (T - 1.0);
    LemmaCheck ch;
    ch.name = kNames[c];
    ch.lhs = sl / T;
    ch.rhs = sr / T;
    ch.sigma = std::sqrt(var_d / T);
    // LHS <= RHS (1 + 3 sigma / RHS + 1e-6), written so a negative RHS is
    // handled, plus a roundoff floor for states where both sides vanish.
    ch.pass = std::isfinite(mean_d) && mean_d <= 3.0 * ch.sigma + 1e-6 * std::abs(ch.rhs) + kRoundoff;
    r.checks.push_back(ch);
  }
  return r;
}

MatrixMeanCheck expected_matrix_check(const MixingPair& pair, const SporadicityProfile& profile,
                                      const Digraph& g, int trials, const RngStreams& streams,
                                      double z_limit) {
  if (trials < 1) throw PreconditionError("expected_matrix_check: need trials >= 1");
  const int m = g.size();
  const EventSchedule sched{Schedule::bernoulli(), Schedule::bernoulli()};
  MatrixXd sumA = MatrixXd::Zero(m, m), sumB = MatrixXd::Zero(m, m);
  for (int t = 0; t < trials; ++t) {
    const auto [A, B] = realize_matrices(pair, sample_events(sched, profile, g, t, streams));
    sumA += A;
    sumB += B;
  }
  const auto [A_hat, B_hat] = expected_matrices(pair, profile);

  // Off-diagonal entries are scaled Bernoulli draws; a diagonal entry is one
  // minus a sum of independent ones along its row (A) or column (B).
  auto z_max = [&](const MatrixXd& sum, const MatrixXd& E, const MatrixXd& W, bool rows) {
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        double var = 0.0;
        if (i != j) {
          const double ph = profile.p_hat(i, j);
          var = W(i, j) * W(i, j) * ph * (1.0 - ph);
        } else {
          for (int k = 0; k < m; ++k) {
            if (k == i) continue;
            const int a = rows ? i : k, b = rows ? k : i;
            const double ph = profile.p_hat(a, b);
            var += W(a, b) * W(a, b) * ph * (1.0 - ph);
          }
        }
        const double diff = std::abs(sum(i, j) / trials - E(i, j));
        const double se = std::sqrt(var / trials);
        if (se > 0.0) z = std::max(z, diff / se);
        else if (diff > 1e-12) z = std::numeric_limits<double>::infinity();
      }
    }
    return z;
  };
  MatrixMeanCheck r;
  r.trials = trials;
  r.z_limit = z_limit;
  r.max_z_A = z_max(sumA, A_hat, pair.A, true);
  r.max_z_B = z_max(sumB, B_hat, pair.B, false);
  r.pass = r.max_z_A <= z_limit && r.max_z_B <= z_limit;
  return r;
}

nlohmann::json to_json(const LemmaSuiteResult& r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const LemmaCheck& c : r.checks) {
    checks.push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"sigma", c.sigma}, {"pass", c.pass}});
  }
  return {{"trials", r.trials}, {"all_pass", r.all_pass()}, {"checks", checks}};
}

nlohmann::json to_json(const MatrixMeanCheck& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"trials", r.trials}, {"max_z_A", num(r.max_z_A)}, {"max_z_B", num(r.max_z_B)},
          {"z_limit", r.z_limit}, {"pass", r.pass}};
}

}  // namespace spodgt
