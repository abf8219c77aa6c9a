#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spodgt/common.hpp"
#include "spodgt/diagnostics.hpp"
#include "spodgt/digraph.hpp"
#include "spodgt/mixing.hpp"
#include "spodgt/problems.hpp"
#include "spodgt/sporadic.hpp"

namespace spodgt {

enum class Variant { spod_gt, ab_pushpull, g_pushpull, k_gt, sporadic_k_gt };

/// A variant plus the aggregation interval used by k_gt.
struct VariantSpec {
  Variant kind = Variant::spod_gt;
  int K = 1;
  friend bool operator==(const VariantSpec&, const VariantSpec&) = default;
};

/// Accepts "spod_gt", "ab_pushpull", "g_pushpull", "k_gt", "k_gt(3)" and
/// "sporadic_k_gt". Plain "k_gt" leaves K = 0, meaning "derive from p".
VariantSpec parse_variant(const std::string& name);
std::string to_string(const VariantSpec& v);

/// Which events each variant draws at random.
EventSchedule schedule_for(const VariantSpec& v);

/// Activation probabilities the variant sees on average: always-on events
/// count as 1, a K-periodic event as 1/K.
SporadicityProfile effective_profile(const EventSchedule& schedule, const SporadicityProfile& profile);

struct AlgoState {
  MatrixXd X;
  MatrixXd Y;
  MatrixXd G_prev_masked;  // Lambda_v^(k) G^(k)
  std::int64_t k = 0;
};

struct AlgoConfig {
  VariantSpec variant;
  VectorXd eta;              // per-client learning rates
  std::vector<int> batch;    // per-client batch sizes
  std::int64_t max_iter = 1000;
  EventSchedule schedule;    // normally schedule_for(variant)
  /// Optional multiplier on eta at iteration k.
  std::function<double(std::int64_t)> eta_scale;
  int log_stride = 10;
  /// Evaluate |grad F|^2 every iteration for MetricsTrace::grad_sq_mean.
  bool track_average = true;
  /// Also log accuracy (classifiers only).
  bool track_accuracy = true;

  /// Config with the variant's schedules filled in.
  static AlgoConfig make(VariantSpec variant, VectorXd eta, std::vector<int> batch, std::int64_t max_iter);
  /// Throws ConfigError on wrong lengths or nonpositive values.
  void validate(int m) const;
};

struct InitSpec {
  enum class Kind { zeros, shared_gaussian, per_client_gaussian };
  Kind kind = Kind::zeros;
  std::uint64_t seed = 0;
  double scale = 1.0;
};

InitSpec::Kind parse_init_kind(const std::string& name);

MatrixXd initial_models(const InitSpec& spec, int m, int n);

/// X from the spec; y_i = g_i = minibatch gradient for clients with v_i = 1,
/// zero otherwise.
AlgoState init_state(const LossOracle& oracle, const InitSpec& x0, const EventDraw& draw0,
                     const std::vector<int>& batch, const RngStreams& streams);

/// One iteration in matrix form:
///   X+ = A(k) X - diag(eta) B(k) Y
///   Y+ = B(k) Y + Lambda_v(k+1) G(k+1) - Lambda_v(k) G(k)
/// with G(k+1) sampled at X+ only for clients active at k+1.
AlgoState step(const AlgoState& state, const MixingPair& pair, const EventDraw& draw_k,
               const EventDraw& draw_k1, const LossOracle& oracle, const AlgoConfig& config,
               const RngStreams& streams);

struct RunHooks {
  /// Called after every step with the new state and the draw that produced it.
  std::function<void(const AlgoState&, const EventDraw&)> on_step;
};

/// Everything a run needs besides the config.
struct Scenario {
  Digraph graph;
  MixingPair pair;
  SporadicityProfile profile;  // resource probabilities, drive the delay charges
  LossOracle oracle;
  InitSpec init;
};

/// Executes config.max_iter steps and logs every log_stride-th iteration plus
/// the last. Averages use the Perron vectors of the variant's effective
/// expected matrices. Throws DivergenceError on a non-finite state.
MetricsTrace run(const AlgoConfig& config, const Scenario& scenario, const RngStreams& streams,
                 const RunHooks& hooks = {});

/// Learning rate, compute probability and batch sizes shrinking the gap as K grows.
struct CorollarySchedule {
  double eta = 0.0;
  double p = 1.0;
  std::vector<int> batch;
};

CorollarySchedule corollary_schedule(double c_eta, double c_p, double c_batch, std::int64_t K,
                                     const std::vector<int>& dataset_sizes);

}  // namespace spodgt
