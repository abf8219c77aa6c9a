#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spodgt/lemma_suite.hpp"
#include "spodgt/optim.hpp"

namespace spodgt {

struct GraphSpec {
  int m = 10;
  double radius = 0.5;
  std::optional<std::uint64_t> seed;  // derived from the master seed if absent
  std::string file;                   // edge list; overrides m/radius
};

struct ProblemSpec {
  LossKind kind = LossKind::logistic_l2;
  int n = 5;
  int per_client_size = 50;
  int classes = 10;
  int labels_per_client = 0;  // 0 keeps the iid split
  double lambda = 1e-3;
  double separation = 5.0;
  double L_max = 1.0;
  double center_spread = 1.0;
  double sample_noise = 0.5;
  std::optional<std::uint64_t> seed;
};

struct ProfileSpec {
  enum class Kind { ones, uniform, beta, file };
  Kind kind = Kind::beta;
  double p = 1.0, p_hat = 1.0;                    // uniform
  double alpha = 0.5, beta = 0.5, floor = 0.05;   // beta
  std::string file;
  std::optional<std::uint64_t> seed;
};

struct EtaSpec {
  enum class Kind { constant, ceiling, per_client };
  Kind kind = Kind::constant;
  double value = 0.05;
  double fraction = 0.99;  // of the theory's eta_max
  std::vector<double> values;
};

struct BatchSpec {
  enum class Kind { full, fraction, size, per_client };
  Kind kind = Kind::fraction;
  double value = 0.5;
  std::vector<int> values;
};

struct SweepSpec {
  std::string axis;  // labels_per_client, radius, m or eta
  std::vector<double> values;
};

struct CheckSpec {
  bool default_instance = true;
  int trials = 20000;
};

/// Whole experiment description. Every random choice flows from `seed`
/// unless a section pins its own.
struct RunConfig {
  std::uint64_t seed = 0;
  GraphSpec graph;
  ProblemSpec problem;
  ProfileSpec profile;
  std::vector<std::string> variants{"spod_gt"};
  std::int64_t iterations = 1000;
  EtaSpec eta;
  BatchSpec batch;
  InitSpec::Kind init_kind = InitSpec::Kind::zeros;
  double init_scale = 1.0;
  int repeats = 1;
  int log_stride = 10;
  std::string out_dir = "out";
  SweepSpec sweep;
  CheckSpec check;

  /// Strict: unknown fields and wrong types raise ConfigError naming the path.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

RunConfig load_config(const std::string& path);

/// Graph, data, profile and initial state shared by every variant and repeat.
struct Experiment {
  Scenario scenario;
  GraphMetrics metrics;
  std::vector<int> batch;
  VectorXd eta;
};

Experiment build_experiment(const RunConfig& cfg);

/// k_gt without an explicit interval takes kgt_interval(p).
VariantSpec resolve_variant(const std::string& name, const SporadicityProfile& profile);

/// Streams of repeat r. Repeats share graph, data, profile and initial
/// models; only event and batch draws differ.
RngStreams repeat_streams(std::uint64_t seed, int repeat);

struct AggregateRow {
  std::string variant;
  double delay = 0.0;
  double loss_mean = 0.0, loss_sd = 0.0;
  double grad_sq_norm_mean = 0.0, grad_sq_norm_sd = 0.0;
  double accuracy_mean = 0.0, accuracy_sd = 0.0;
};

struct ResultsTable {
  std::vector<std::string> variants;
  std::vector<std::vector<MetricsTrace>> traces;  // [variant][repeat]
  std::vector<AggregateRow> aggregate;
};

/// Linear interpolation of a trace column at a cumulative delay; the last
/// row holds beyond the end of the trace.
double value_at_delay(const MetricsTrace& trace, double TraceRow::*column, double delay);

/// First cumulative delay at which the loss falls to `target` or below,
/// interpolated between logged rows; +inf if never.
double delay_to_reach(const MetricsTrace& trace, double target);

/// Mean and sample standard deviation over repeats on a `points`-point grid
/// from 0 to the shortest final delay among the repeats.
std::vector<AggregateRow> aggregate_traces(const std::string& variant, const std::vector<MetricsTrace>& traces,
                                           int points = 200);

/// Runs every (variant, repeat) pair on at most `jobs` threads. Divergence
/// is rethrown with the variant and repeat in the message.
ResultsTable cmd_run(const RunConfig& cfg, int jobs = 1);

/// `<variant>_r<repeat>.csv` per trace plus `aggregate.csv`; "k_gt(3)"
/// becomes "k_gt_3" in file names.
void write_results(const ResultsTable& table, const std::string& dir);

/// Optimal loss for quadratics, else the best loss of a full-gradient
/// centralized reference run.
double reference_loss(const LossOracle& oracle, int iterations = 2000);

/// TheoryReport of the configured problem at the configured learning rate.
/// Throws InfeasibleError naming the offending threshold.
nlohmann::json cmd_theory(const RunConfig& cfg);

struct CheckOutcome {
  LemmaSuiteResult lemmas;
  MatrixMeanCheck matrices;
  bool pass() const { return lemmas.all_pass() && matrices.pass; }
  nlohmann::json to_json() const;
};

/// Lemma inequalities plus the expected-matrix check. Needs m <= 8 and, for
/// a configured instance, a quadratic problem.
CheckOutcome cmd_check(const RunConfig& cfg, int trials, int jobs = 1, const ConstantTamper& tamper = {});

/// Config with the sweep axis set to `value`.
RunConfig at_sweep_point(const RunConfig& cfg, double value);

struct SweepPoint {
  double value = 0.0;
  ResultsTable table;
};

std::vector<SweepPoint> cmd_sweep(const RunConfig& cfg, int jobs = 1);

/// One subdirectory per point (same files as cmd_run) plus sweep_summary.csv.
void write_sweep(const RunConfig& cfg, const std::vector<SweepPoint>& points, const std::string& dir);

}  // namespace spodgt
