#include "spodgt/optim.hpp"

#include <cmath>
#include <random>
#include <string>

namespace spodgt {

VariantSpec parse_variant(const std::string& name) {
  if (name == "spod_gt") return {Variant::spod_gt, 1};
  if (name == "ab_pushpull") return {Variant::ab_pushpull, 1};
  if (name == "g_pushpull") return {Variant::g_pushpull, 1};
  if (name == "sporadic_k_gt" || name == "sporadic_kgt") return {Variant::sporadic_k_gt, 1};
  if (name == "k_gt" || name == "kgt") return {Variant::k_gt, 0};
  if (name.starts_with("k_gt(") && name.ends_with(")")) {
    const std::string inner = name.substr(5, name.size() - 6);
    std::size_t used = 0;
    int K = 0;
    try {
      K = std::stoi(inner, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != inner.size() || K < 1) throw ConfigError("variant: bad interval in '" + name + "'");
    return {Variant::k_gt, K};
  }
  throw ConfigError("variant: unknown name '" + name + "'");
}

std::string to_string(const VariantSpec& v) {
  switch (v.kind) {
    case Variant::spod_gt: return "spod_gt";
    case Variant::ab_pushpull: return "ab_pushpull";
    case Variant::g_pushpull: return "g_pushpull";
    case Variant::sporadic_k_gt: return "sporadic_k_gt";
    case Variant::k_gt: return v.K > 0 ? "k_gt(" + std::to_string(v.K) + ")" : "k_gt";
  }
  return "?";
}

EventSchedule schedule_for(const VariantSpec& v) {
  switch (v.kind) {
    case Variant::spod_gt: return {Schedule::bernoulli(), Schedule::bernoulli()};
    case Variant::ab_pushpull: return {Schedule::always(), Schedule::always()};
    case Variant::g_pushpull: return {Schedule::always(), Schedule::bernoulli()};
    case Variant::sporadic_k_gt: return {Schedule::bernoulli(), Schedule::always()};
    case Variant::k_gt:
      if (v.K < 1) throw ConfigError("variant: k_gt needs an interval K >= 1");
      return {Schedule::always(), Schedule::periodic(v.K, 0)};
  }
  return {};
}

SporadicityProfile effective_profile(const EventSchedule& schedule, const SporadicityProfile& profile) {
  auto level = [](const Schedule& s) { return s.kind == Schedule::Kind::periodic ? 1.0 / s.period : 1.0; };
  SporadicityProfile out = profile;
  if (schedule.compute.kind != Schedule::Kind::bernoulli) out.p.setConstant(level(schedule.compute));
  if (schedule.communicate.kind != Schedule::Kind::bernoulli) {
    const double q = level(schedule.communicate);
    for (Index i = 0; i < out.p_hat.rows(); ++i)
      for (Index j = 0; j < out.p_hat.cols(); ++j)
        if (i != j && out.p_hat(i, j) > 0.0) out.p_hat(i, j) = q;
  }
  return out;
}

AlgoConfig AlgoConfig::make(VariantSpec variant, VectorXd eta, std::vector<int> batch, std::int64_t max_iter) {
  AlgoConfig c;
  c.variant = variant;
  c.eta = std::move(eta);
  c.batch = std::move(batch);
  c.max_iter = max_iter;
  c.schedule = schedule_for(variant);
  return c;
}

void AlgoConfig::validate(int m) const {
  if (eta.size() != m) throw ConfigError("eta: expected " + std::to_string(m) + " entries");
  if (!(eta.array() > 0.0).all() || !eta.allFinite()) throw ConfigError("eta: every rate must be positive");
  if (static_cast<int>(batch.size()) != m) throw ConfigError("batch: expected " + std::to_string(m) + " entries");
  for (int b : batch)
    if (b < 1) throw ConfigError("batch: sizes must be >= 1");
  if (max_iter < 0) throw ConfigError("max_iter: must be >= 0");
  if (log_stride < 1) throw ConfigError("log_stride: must be >= 1");
}

InitSpec::Kind parse_init_kind(const std::string& name) {
  if (name == "zeros") return InitSpec::Kind::zeros;
  if (name == "shared_gaussian") return InitSpec::Kind::shared_gaussian;
  if (name == "per_client_gaussian") return InitSpec::Kind::per_client_gaussian;
  throw ConfigError("init: unknown kind '" + name + "'");
}

MatrixXd initial_models(const InitSpec& spec, int m, int n) {
  MatrixXd X = MatrixXd::Zero(m, n);
  if (spec.kind == InitSpec::Kind::zeros) return X;
  const RngStreams streams(spec.seed);
  std::normal_distribution<double> normal(0.0, spec.scale);
  auto fill_row = [&](int row, std::uint64_t index) {
    auto eng = streams.engine(StreamKind::init, index, 0);
    for (int c = 0; c < n; ++c) X(row, c) = normal(eng);
    normal.reset();
  };
  if (spec.kind == InitSpec::Kind::shared_gaussian) {
    fill_row(0, 0);
    for (int i = 1; i < m; ++i) X.row(i) = X.row(0);
  } else {
    for (int i = 0; i < m; ++i) fill_row(i, std::uint64_t(i));
  }
  return X;
}

namespace {

// Lambda_v G at X for counter k, zero rows for inactive clients.
MatrixXd sporadic_gradients(const LossOracle& oracle, const MatrixXd& X, const VectorXd& v,
                            const std::vector<int>& batch, const RngStreams& streams, std::int64_t k) {
  MatrixXd G = MatrixXd::Zero(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i) {
    if (v(i) == 0.0) continue;
    const int ii = static_cast<int>(i);
    G.row(i) = minibatch_gradient(oracle, ii, X.row(i).transpose(), batch[std::size_t(i)], streams, k)
                   .value.transpose();
  }
  return G;
}

}  // namespace

AlgoState init_state(const LossOracle& oracle, const InitSpec& x0, const EventDraw& draw0,
                     const std::vector<int>& batch, const RngStreams& streams) {
  const int m = oracle.clients();
  if (draw0.v.size() != m || static_cast<int>(batch.size()) != m) {
    throw PreconditionError("init_state: client count mismatch");
  }
  AlgoState s;
  s.X = initial_models(x0, m, oracle.dim());
  s.G_prev_masked = sporadic_gradients(oracle, s.X, draw0.v, batch, streams, 0);
  s.Y = s.G_prev_masked;
  s.k = 0;
  return s;
}

AlgoState step(const AlgoState& state, const MixingPair& pair, const EventDraw& draw_k,
               const EventDraw& draw_k1, const LossOracle& oracle, const AlgoConfig& config,
               const RngStreams& streams) {
  const auto [A, B] = realize_matrices(pair, draw_k);
  VectorXd eta = config.eta;
  if (config.eta_scale) eta *= config.eta_scale(state.k);

  AlgoState next;
  next.k = state.k + 1;
  const MatrixXd BY = B * state.Y;
  next.X = A * state.X - eta.asDiagonal() * BY;
  MatrixXd G = sporadic_gradients(oracle, next.X, draw_k1.v, config.batch, streams, next.k);
  next.Y = BY + G - state.G_prev_masked;
  next.G_prev_masked = std::move(G);
  return next;
}

MetricsTrace run(const AlgoConfig& config, const Scenario& scenario, const RngStreams& streams,
                 const RunHooks& hooks) {
  const int m = scenario.graph.size();
  config.validate(m);
  if (scenario.oracle.clients() != m) throw PreconditionError("run: oracle and graph disagree on m");

  const SporadicityProfile eff = effective_profile(config.schedule, scenario.profile);
  const auto [A_hat, B_hat] = expected_matrices(scenario.pair, eff);
  const auto [phi, pi] = perron_vectors(A_hat, B_hat);

  MetricsTrace trace;
  trace.variant = to_string(config.variant);
  trace.seed = streams.master_seed();

  EventDraw draw = sample_events(config.schedule, scenario.profile, scenario.graph, 0, streams);
  AlgoState state = init_state(scenario.oracle, scenario.init, draw, config.batch, streams);

  const bool classifier = scenario.oracle.kind() != LossKind::quadratic;
  double tau_cum = 0.0;
  double grad_acc = 0.0;
  auto observe = [&](const AlgoState& s, const EventDraw& d, bool log, bool count) {
    const DelayRecord delay = delay_step(d, scenario.profile, scenario.graph);
    if (log || count) {
      const VectorXd x_bar = (phi.transpose() * s.X).transpose();
      const double g2 = scenario.oracle.global_gradient(x_bar).squaredNorm();
      if (count) grad_acc += g2;
      if (log) {
        TraceRow r;
        r.k = s.k;
        r.loss = scenario.oracle.global_loss(x_bar);
        r.grad_sq_norm = g2;
        const ConsensusError e = consensus_errors(s.X, s.Y, phi, pi);
        r.x_err = e.x_err;
        r.y_err = e.y_err;
        r.tau_in = delay.tau_in;
        r.tau_proc = delay.tau_proc;
        r.tau_out = delay.tau_out;
        r.tau_total_cum = tau_cum;
        if (classifier && config.track_accuracy) r.accuracy = scenario.oracle.accuracy(x_bar);
        if (!std::isfinite(r.loss)) throw DivergenceError("non-finite loss at iteration " + std::to_string(s.k), s.k);
        trace.best_loss = std::min(trace.best_loss, r.loss);
        trace.rows.push_back(r);
      }
    }
    tau_cum += delay.tau_total;
  };

  for (std::int64_t k = 0; k < config.max_iter; ++k) {
    observe(state, draw, k % config.log_stride == 0, config.track_average);
    EventDraw next_draw = sample_events(config.schedule, scenario.profile, scenario.graph, k + 1, streams);
    state = step(state, scenario.pair, draw, next_draw, scenario.oracle, config, streams);
    if (!state.X.allFinite() || !state.Y.allFinite()) {
      throw DivergenceError("state became non-finite at iteration " + std::to_string(state.k) +
                                " (learning rate likely above the stability ceiling)",
                            state.k);
    }
    if (hooks.on_step) hooks.on_step(state, draw);
    draw = std::move(next_draw);
  }
  // The final state is always logged but sits outside the 0..K-1 average.
  observe(state, draw, true, false);
  if (config.track_average && config.max_iter > 0) trace.grad_sq_mean = grad_acc / double(config.max_iter);
  return trace;
}

CorollarySchedule corollary_schedule(double c_eta, double c_p, double c_batch, std::int64_t K,
                                     const std::vector<int>& dataset_sizes) {
  if (K < 0 || !(c_eta > 0.0) || c_p < 0.0 || !(c_batch > 0.0)) {
    throw PreconditionError("corollary_schedule: need K >= 0, c_eta > 0, c_p >= 0, c_batch > 0");
  }
  const double root = std::sqrt(double(K) + 1.0);
  CorollarySchedule s;
  s.eta = c_eta / root;
  s.p = 1.0 - c_p / root;
  if (!(s.p > 0.0)) throw PreconditionError("corollary_schedule: c_p too large for K, p would be <= 0");
  for (int D : dataset_sizes) {
    const double b = D / (1.0 + D / (c_batch * root));
    s.batch.push_back(std::clamp(static_cast<int>(std::ceil(b - 1e-9)), 1, D));
  }
  return s;
}

}  // namespace spodgt
