#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "spodgt/optim.hpp"

namespace spodgt {

/// A fixed state of a small quadratic instance. The trackers are
/// Y = Y_base + Lambda_v G with zero column sums in Y_base, so the tracking
/// identity holds in every trial.
struct LemmaInstance {
  Digraph graph;
  MixingPair pair;
  SporadicityProfile profile;
  LossOracle oracle;
  std::vector<int> batch;
  VectorXd eta;
  MatrixXd X;
  MatrixXd Y_base;
};

struct LemmaInstanceOptions {
  std::uint64_t seed = 7;
  int n = 3;
  int per_client_size = 12;
  /// Learning rate as a fraction of the consensus ceiling.
  double eta_fraction = 0.5;
  /// Explicit learning rate; overrides eta_fraction, needed when the
  /// ceiling is infeasible.
  double eta = std::numeric_limits<double>::quiet_NaN();
  /// Link probability; NaN picks halfway between max(r_A, r_B) and one.
  double p_hat = std::numeric_limits<double>::quiet_NaN();
};

/// Four clients on a directed ring with one two-way chord, p in [0.5, 1],
/// batches of roughly half the local data.
LemmaInstance default_lemma_instance(LemmaInstanceOptions opts = {});

struct LemmaCheck {
  std::string name;
  double lhs = 0.0;    // Monte-Carlo mean of the left side
  double rhs = 0.0;    // Monte-Carlo mean of the right side
  double sigma = 0.0;  // standard error of lhs - rhs
  bool pass = false;
};

struct LemmaSuiteResult {
  int trials = 0;
  std::vector<LemmaCheck> checks;
  bool all_pass() const;
};

/// Test hook: edits the constants before any right-hand side is evaluated.
using ConstantTamper = std::function<void(Constants&)>;

/// Estimates both sides of every lemma inequality over `trials` independent
/// draws of (v(k), batches(k), v_hat(k), v(k+1), batches(k+1)). A check
/// passes iff mean(lhs - rhs) <= 3 se(lhs - rhs) + 1e-6 |mean rhs| + 1e-15.
/// Trials run on up to `jobs` threads; the reduction is by trial index.
LemmaSuiteResult lemma_bound_suite(const LemmaInstance& inst, int trials, const RngStreams& streams,
                                   const ConstantTamper& tamper = {}, int jobs = 1);

/// Entrywise Monte-Carlo mean of the realized mixing matrices against the
/// expected ones, in units of the exact Bernoulli standard error.
struct MatrixMeanCheck {
  int trials = 0;
  double max_z_A = 0.0;
  double max_z_B = 0.0;
  double z_limit = 5.0;
  bool pass = false;
};

MatrixMeanCheck expected_matrix_check(const MixingPair& pair, const SporadicityProfile& profile,
                                      const Digraph& g, int trials, const RngStreams& streams,
                                      double z_limit = 5.0);

nlohmann::json to_json(const LemmaSuiteResult& r);
nlohmann::json to_json(const MatrixMeanCheck& r);

}  // namespace spodgt
