// Acceptance criteria 1-12, one PASS/FAIL line each. Exit status is nonzero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "spodgt/runner.hpp"
#include "test_support.hpp"

using namespace spodgt;
using spodgt::testing::near_one_profile;
using spodgt::testing::random_constants;
using spodgt::testing::random_strong_digraph;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = s < budget_s;
  const bool ok = v.pass && in_time;
  failures += !ok;
  std::printf("criterion %2d %-28s %s  %s; %.2f s of %.0f s%s\n", id, name, ok ? "PASS" : "FAIL", v.detail.c_str(), s,
              budget_s, in_time ? "" : " (over budget)");
  std::fflush(stdout);
}

std::string str(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string precise(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Quadratic problem on an m-node RGG.
RunConfig quadratic_config(int m, std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.graph.m = m;
  c.graph.radius = 0.5;
  c.problem.kind = LossKind::quadratic;
  c.problem.n = 3;
  c.problem.per_client_size = 20;
  c.profile.kind = ProfileSpec::Kind::ones;
  c.batch.kind = BatchSpec::Kind::full;
  return c;
}

Verdict stochasticity() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> msize(2, 10);
  const EventSchedule sched{Schedule::bernoulli(), Schedule::bernoulli()};
  double worst = 0.0;
  for (int g = 0; g < 10; ++g) {
    const Digraph graph = generate_rgg(msize(rng), 0.6, 1000 + g);
    const MixingPair pair = build_mixing(graph);
    const SporadicityProfile prof = sample_profile_beta(graph, 0.5, 0.5, 2000 + g);
    const RngStreams streams(3000 + g);
    for (int k = 0; k < 1000; ++k) {
      const auto [A, B] = realize_matrices(pair, sample_events(sched, prof, graph, k, streams));
      worst = std::max(worst, (A.rowwise().sum().array() - 1.0).abs().maxCoeff());
      worst = std::max(worst, (B.colwise().sum().array() - 1.0).abs().maxCoeff());
    }
  }
  return {worst <= 1e-12, "max |row/col sum - 1| = " + str(worst) + " over 10 graphs x 1000 draws"};
}

Verdict tracking() {
  RunConfig c;
  c.seed = 21;
  c.graph.m = 10;
  c.problem.per_client_size = 30;
  c.eta.value = 0.05;
  c.iterations = 500;
  const Experiment ex = build_experiment(c);
  AlgoConfig ac = AlgoConfig::make(parse_variant("spod_gt"), ex.eta, ex.batch, c.iterations);
  ac.track_average = false;
  double worst = 0.0;
  int steps = 0;
  RunHooks hooks;
  hooks.on_step = [&](const AlgoState& s, const EventDraw&) {
    const RowVectorXd diff = s.Y.colwise().mean() - s.G_prev_masked.colwise().mean();
    worst = std::max(worst, diff.cwiseAbs().maxCoeff());
    ++steps;
  };
  run(ac, ex.scenario, repeat_streams(c.seed, 0), hooks);
  // The initial state satisfies Y = Lambda_v G by construction.
  return {worst <= 1e-10 && steps == 500,
          "max |ybar - gbar_v|_inf = " + str(worst) + " over " + std::to_string(steps) + " iterations"};
}

Verdict perron() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> msize(2, 12);
  double worst_match = 0.0, worst_res = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Digraph g = random_strong_digraph(msize(rng), 0.2, rng);
    const MixingPair pair = build_mixing(g);
    const SporadicityProfile prof = spodgt::testing::random_profile(g, rng, 0.05);
    const auto [A_hat, B_hat] = expected_matrices(pair, prof);
    const auto [phi, pi] = perron_vectors(A_hat, B_hat);
    auto dense = [](const MatrixXd& M) {  // right eigenvector for the eigenvalue nearest one
      Eigen::EigenSolver<MatrixXd> es(M);
      Index best = 0;
      for (Index i = 1; i < M.rows(); ++i)
        if (std::abs(es.eigenvalues()(i) - 1.0) < std::abs(es.eigenvalues()(best) - 1.0)) best = i;
      VectorXd v = es.eigenvectors().col(best).real();
      return VectorXd(v / v.sum());
    };
    worst_match = std::max(worst_match, (dense(A_hat.transpose()) - phi).cwiseAbs().maxCoeff());
    worst_match = std::max(worst_match, (dense(B_hat) - pi).cwiseAbs().maxCoeff());
    worst_res = std::max(worst_res, (A_hat.transpose() * phi - phi).cwiseAbs().maxCoeff());
    worst_res = std::max(worst_res, (B_hat * pi - pi).cwiseAbs().maxCoeff());
    worst_res = std::max({worst_res, std::abs(phi.sum() - 1.0), std::abs(pi.sum() - 1.0)});
  }
  return {worst_match <= 1e-9 && worst_res <= 1e-10,
          "max |power - dense| = " + str(worst_match) + ", max residual = " + str(worst_res)};
}

Verdict closed_form_radii() {
  const int m = 5;
  const Digraph g = Digraph::complete(m);
  const MixingPair pair = build_mixing(g);
  const GraphMetrics gm = metrics(g);
  auto radii = [&](double q) {
    const SporadicityProfile prof = SporadicityProfile::uniform(g, 1.0, q);
    const auto [A_hat, B_hat] = expected_matrices(pair, prof);
    const auto [phi, pi] = perron_vectors(A_hat, B_hat);
    return contraction_radii(pair, prof, phi, pi, gm);
  };
  const auto [a1, b1] = radii(1.0);
  const double q = 0.7;
  const auto [aq, bq] = radii(q);
  const double want = 1.0 - q * q;
  const bool ok = a1 == 0.0 && b1 == 0.0 && aq == want && bq == want;
  return {ok, "m=5: p_hat=1 gives (" + str(a1) + ", " + str(b1) + ") want 0; p_hat=0.7 gives (" + str(aq) + ", " +
                  str(bq) + ") want " + str(want)};
}

Verdict sporadic_contraction() {
  const LemmaInstance inst = default_lemma_instance();
  const GraphMetrics gm = metrics(inst.graph);
  const auto [rA, rB] = min_comm_probability(inst.pair, gm);
  double min_ph = 1.0;
  for (const auto& e : inst.graph.edges()) min_ph = std::min(min_ph, inst.profile.p_hat(e.to, e.from));
  const LemmaSuiteResult r = lemma_bound_suite(inst, 20000, RngStreams(55));
  bool ok = min_ph >= std::max(rA, rB);
  std::string detail = "min p_hat - max(r_A, r_B) = " + str(min_ph - std::max(rA, rB));
  for (const auto& ch : r.checks) {
    if (ch.name != "sporadic_contraction_A" && ch.name != "sporadic_contraction_B") continue;
    ok = ok && ch.pass;
    detail += "; " + ch.name.substr(21) + ": " + str(ch.lhs) + " <= " + str(ch.rhs) + " (se " + str(ch.sigma) + ")";
  }
  return {ok, detail};
}

Verdict proposition1() {
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> msize(2, 8);
  int below = 0, above = 0, configs = 0, resampled = 0;
  double worst = 0.0;
  while (configs < 100) {
    const int m = msize(rng);
    const Digraph g = random_strong_digraph(m, 0.3, rng);
    const MixingPair pair = build_mixing(g);
    const GraphMetrics gm = metrics(g);
    const SporadicityProfile prof = near_one_profile(g, rng, 0.3);
    const ProblemConstants pc = random_constants(m, rng);
    const ExpectedMixing em = expected_mixing(pair, prof, gm);
    const Constants c = constant_tables(pc, em, prof, pair, gm);
    double ceil = 0.0;
    try {
      ceil = lr_ceiling(c, m);
    } catch (const InfeasibleError&) {
      ++resampled;
      continue;
    }
    ++configs;
    const auto rho = [&](double eta) {
      return spectral_radius_psi(psi_system(c, pc, em, prof.p, VectorXd::Constant(m, eta)));
    };
    const double r99 = rho(0.99 * ceil);
    worst = std::max(worst, r99);
    below += r99 < 1.0;
    above += rho(50.0 * ceil) >= 1.0;
  }
  return {below == 100 && above >= 1,
          std::to_string(below) + "/100 contract at 0.99x (min 1 - rho " + str(1.0 - worst) + "), " + std::to_string(above) +
              " reach rho >= 1 at 50x; " + std::to_string(resampled) + " infeasible draws resampled"};
}

Verdict zero_gap() {
  RunConfig c = quadratic_config(10, 77);
  c.iterations = 10000;
  c.log_stride = 10000;
  c.variants = {"spod_gt"};
  Experiment ex = build_experiment(c);
  // 0.99 of the consensus ceiling alone, without the participation bound.
  const ProblemConstants pc = estimate_constants(ex.scenario.oracle, ex.batch, RngStreams(c.seed));
  const TheoryReport rep = theory_report(pc, ex.scenario.pair, ex.scenario.profile, ex.metrics);
  ex.eta.setConstant(0.99 * rep.eta_ceiling);
  AlgoConfig ac = AlgoConfig::make(parse_variant("spod_gt"), ex.eta, ex.batch, c.iterations);
  ac.log_stride = c.log_stride;
  ac.track_average = false;
  const MetricsTrace t = run(ac, ex.scenario, repeat_streams(c.seed, 0));
  const TraceRow& last = t.rows.back();
  const bool ok = last.grad_sq_norm < 1e-8 && last.x_err < 1e-8 && last.y_err < 1e-8;
  return {ok, "eta = " + str(ex.eta(0)) + ": |grad F|^2 = " + str(last.grad_sq_norm) + ", x_err = " + str(last.x_err) +
                  ", y_err = " + str(last.y_err) + " after 1e4 iterations"};
}

Verdict shrinking_gap() {
  RunConfig c = quadratic_config(6, 88);
  c.eta.kind = EtaSpec::Kind::ceiling;
  c.eta.fraction = 0.99;
  const Experiment ex = build_experiment(c);
  std::vector<int> sizes;
  for (int i = 0; i < ex.scenario.graph.size(); ++i) sizes.push_back(ex.scenario.oracle.data().client_size(i));
  // eta at the smallest K equals the admissible rate, so every K stays inside it.
  const double c_eta = ex.eta(0) * std::sqrt(101.0);
  double prev = std::numeric_limits<double>::infinity();
  bool ok = true;
  std::string detail;
  for (std::int64_t K : {100, 1000, 10000}) {
    const CorollarySchedule s = corollary_schedule(c_eta, 0.5, 1.0, K, sizes);
    Scenario sc = ex.scenario;
    sc.profile.p.setConstant(s.p);
    AlgoConfig ac = AlgoConfig::make(parse_variant("spod_gt"), VectorXd::Constant(sc.graph.size(), s.eta), s.batch, K);
    ac.log_stride = int(K);
    const MetricsTrace t = run(ac, sc, repeat_streams(c.seed, 0));
    ok = ok && t.grad_sq_mean < prev;
    prev = t.grad_sq_mean;
    detail += (detail.empty() ? "" : ", ") + std::string("K=") + std::to_string(K) + ": " + precise(t.grad_sq_mean);
  }
  return {ok, "eta(K=100) = " + str(c_eta / std::sqrt(101.0)) + ", time-averaged |grad F|^2 " + detail};
}

std::string trace_csv(const MetricsTrace& t) {
  std::ostringstream os;
  write_trace_csv(os, t);
  return os.str();
}

Verdict variant_reduction() {
  RunConfig c;
  c.seed = 9;
  c.graph.m = 8;
  c.problem.per_client_size = 20;
  c.eta.value = 0.05;
  c.iterations = 300;
  c.log_stride = 1;
  const Experiment ex = build_experiment(c);
  auto run_variant = [&](const char* name, const SporadicityProfile& prof) {
    Scenario sc = ex.scenario;
    sc.profile = prof;
    AlgoConfig ac = AlgoConfig::make(parse_variant(name), ex.eta, ex.batch, c.iterations);
    ac.log_stride = 1;
    MetricsTrace t = run(ac, sc, repeat_streams(c.seed, 0));
    t.variant.clear();
    return trace_csv(t);
  };
  SporadicityProfile p_one = ex.scenario.profile;
  p_one.p.setOnes();
  SporadicityProfile link_one = ex.scenario.profile;
  for (const auto& e : ex.scenario.graph.edges()) link_one.p_hat(e.to, e.from) = 1.0;
  const bool a = run_variant("g_pushpull", p_one) == run_variant("spod_gt", p_one);
  const bool b = run_variant("sporadic_k_gt", link_one) == run_variant("spod_gt", link_one);
  return {a && b, std::string("g_pushpull vs spod_gt(p=1) ") + (a ? "identical" : "differ") +
                      ", sporadic_k_gt vs spod_gt(p_hat=1) " + (b ? "identical" : "differ")};
}

Verdict delay_advantage() {
  RunConfig c;
  c.seed = 10;
  c.graph.m = 10;
  c.graph.radius = 0.5;
  c.problem.kind = LossKind::logistic_l2;
  c.problem.n = 5;
  c.problem.per_client_size = 50;
  c.problem.classes = 4;
  c.profile.kind = ProfileSpec::Kind::beta;
  c.profile.alpha = 0.5;
  c.profile.beta = 0.5;
  c.eta.value = 0.05;
  c.batch.kind = BatchSpec::Kind::fraction;
  c.batch.value = 0.2;
  c.iterations = 2500;
  c.log_stride = 1;
  c.repeats = 5;
  c.variants = {"spod_gt", "ab_pushpull"};
  const ResultsTable t = cmd_run(c, 4);
  int wins = 0;
  std::string detail;
  for (int r = 0; r < 5; ++r) {
    const MetricsTrace& sp = t.traces[0][std::size_t(r)];
    const MetricsTrace& ab = t.traces[1][std::size_t(r)];
    if (ab.rows.back().tau_total_cum < 5000.0) return {false, "ab_pushpull run too short to reach delay 5000"};
    const double target = value_at_delay(ab, &TraceRow::loss, 5000.0);
    const double reach = delay_to_reach(sp, target);
    wins += reach <= 5000.0;
    detail += (detail.empty() ? "" : " ") + str(reach);
  }
  return {wins >= 4, std::to_string(wins) + "/5 repeats; spod_gt delay to ab_pushpull's loss at 5000: " + detail};
}

Verdict lemma_suite() {
  const CheckOutcome out = cmd_check(RunConfig{}, 20000, 2);
  int passed = 0;
  for (const auto& ch : out.lemmas.checks) passed += ch.pass;
  return {out.pass(), std::to_string(passed) + "/" + std::to_string(out.lemmas.checks.size()) +
                          " lemma inequalities, matrix check max z " +
                          str(std::max(out.matrices.max_z_A, out.matrices.max_z_B))};
}

Verdict delay_identities() {
  const Digraph g = generate_rgg(7, 0.6, 4);
  const SporadicityProfile ones = SporadicityProfile::ones(g);
  const EventDraw d = sample_events({Schedule::always(), Schedule::always()}, ones, g, 0, RngStreams(1));
  const DelayRecord rec = delay_step(d, ones, g);
  RunConfig c;
  c.graph.m = 7;
  c.graph.radius = 0.6;
  c.profile.kind = ProfileSpec::Kind::ones;
  c.problem.per_client_size = 10;
  c.iterations = 50;
  c.log_stride = 1;
  c.variants = {"ab_pushpull"};
  const ResultsTable t = cmd_run(c, 1);
  bool cum = true;
  for (const auto& row : t.traces[0][0].rows) cum = cum && row.tau_total_cum == 3.0 * double(row.k);
  VectorXd p(2);
  p << 0.5, 0.25;
  const int K = kgt_interval(p);
  return {rec.tau_total == 3.0 && cum && K == 3,
          "tau_total = " + str(rec.tau_total) + ", cumulative = 3k " + (cum ? "at every row" : "violated") +
              ", kgt_interval([0.5, 0.25]) = " + std::to_string(K)};
}

}  // namespace

int main() {
  criterion(1, "stochasticity invariant", 5, stochasticity);
  criterion(2, "tracking conservation", 10, tracking);
  criterion(3, "Perron correctness", 10, perron);
  criterion(4, "closed-form radii", 1, closed_form_radii);
  criterion(5, "sporadic contraction", 60, sporadic_contraction);
  criterion(6, "learning-rate ceiling", 10, proposition1);
  criterion(7, "zero-gap convergence", 30, zero_gap);
  criterion(8, "shrinking-gap schedule", 120, shrinking_gap);
  criterion(9, "variant reduction", 10, variant_reduction);
  criterion(10, "delay advantage", 300, delay_advantage);
  criterion(11, "lemma suite", 180, lemma_suite);
  criterion(12, "delay identities", 1, delay_identities);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
