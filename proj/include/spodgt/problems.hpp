#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spodgt/common.hpp"
#include "spodgt/mixing.hpp"
#include "spodgt/sporadic.hpp"

namespace spodgt {

enum class LossKind { quadratic, logistic_l2, hinge_l2 };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

/// Samples plus their assignment to clients. For quadratic problems each
/// feature row is a sample center and labels are all zero.
struct Dataset {
  MatrixXd features;
  std::vector<int> labels;
  std::vector<std::vector<int>> partition;
  int num_classes = 1;

  int total_size() const { return static_cast<int>(features.rows()); }
  int clients() const { return static_cast<int>(partition.size()); }
  int client_size(int i) const { return static_cast<int>(partition[static_cast<std::size_t>(i)].size()); }
  /// Throws PreconditionError unless the partition is a disjoint cover with nonempty cells.
  void validate() const;
};

struct GradientSample {
  VectorXd value;
  std::vector<int> batch_indices;
};

/// Immutable loss over a shared dataset; cheap to copy.
///
/// quadratic:    f_s(x) = 1/2 (x - c_s)^T Q_i (x - c_s)
/// logistic_l2:  softmax cross-entropy + lambda/2 |x|^2, x = row-major C x (d+1)
/// hinge_l2:     one-vs-rest 1/2 max(0, 1 - t w_c^T f)^2 + lambda/2 |x|^2
class LossOracle {
 public:
  static LossOracle quadratic(Dataset data, std::vector<MatrixXd> Q);
  static LossOracle classifier(LossKind kind, Dataset data, double lambda);

  LossKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int clients() const { return data_->clients(); }
  double lambda() const { return lambda_; }
  const Dataset& data() const { return *data_; }
  const MatrixXd& curvature(int i) const { return Q_.at(static_cast<std::size_t>(i)); }

  /// Same loss parameters over a different dataset (e.g. a new partition).
  LossOracle with_data(Dataset data) const;

  double sample_loss(int i, int s, const VectorXd& x) const;
  /// Adds the gradient of sample s (owned by client i) into `out`.
  void add_sample_gradient(int i, int s, const VectorXd& x, VectorXd& out) const;
  VectorXd sample_gradient(int i, int s, const VectorXd& x) const;

  double local_loss(int i, const VectorXd& x) const;
  VectorXd local_gradient(int i, const VectorXd& x) const;
  double global_loss(const VectorXd& x) const;
  VectorXd global_gradient(const VectorXd& x) const;

  /// Smoothness constant L_i (exact for quadratics, analytic bound otherwise).
  double smoothness(int i) const;
  /// Fraction of all samples classified correctly; NaN for quadratics.
  double accuracy(const VectorXd& x) const;
  /// Closed-form minimizer, quadratics only.
  std::optional<VectorXd> minimizer() const;

 private:
  LossOracle() = default;
  void class_scores(int s, const VectorXd& x, VectorXd& scores) const;

  LossKind kind_ = LossKind::quadratic;
  int dim_ = 0;
  double lambda_ = 0.0;
  std::shared_ptr<const Dataset> data_;
  std::vector<MatrixXd> Q_;
  std::vector<VectorXd> mean_center_;
};

struct SyntheticOptions {
  LossKind kind = LossKind::quadratic;
  int m = 4;
  /// Model dimension for quadratics, feature dimension for classifiers.
  int n = 3;
  int per_client_size = 50;
  std::uint64_t seed = 0;
  int classes = 10;
  /// Distance between class means in units of the within-class deviation.
  double separation = 5.0;
  double lambda = 1e-3;
  /// Quadratic curvature spectrum lies in [0.1, L_max].
  double L_max = 1.0;
  /// Spread of the client means and of samples around them (quadratics).
  double center_spread = 1.0;
  double sample_noise = 0.5;
};

LossOracle make_synthetic(const SyntheticOptions& opts);

/// Client i owns the classes perm[(i*L + t) mod C], t < L, for a seeded class
/// permutation; each class is split evenly among its owners.
Dataset partition_by_labels(const Dataset& data, int labels_per_client, int m, std::uint64_t seed);

/// Uniform sample of B_i distinct local samples from stream (batch, i, k).
/// B_i = D_i returns local_gradient exactly.
GradientSample minibatch_gradient(const LossOracle& oracle, int i, const VectorXd& x, int batch,
                                  const RngStreams& streams, std::int64_t k);

/// (1/(D-1)) sum_s |grad f_s(x) - grad F_i(x)|^2, so that the variance of a
/// without-replacement mean of B samples is (1 - B/D)/B times this value.
double sample_dispersion(const LossOracle& oracle, int i, const VectorXd& x);

struct EstimateOptions {
  int probe_points = 60;
  double probe_scale = 1.0;
  double inflation = 1.2;
};

/// L, sigma and delta per client. Quadratics are analytic; otherwise sigma
/// and delta come from a nonnegative least-squares fit over random probes,
/// raised until every probe is covered, then scaled by `inflation`.
ProblemConstants estimate_constants(const LossOracle& oracle, const std::vector<int>& batch,
                                    const RngStreams& streams, EstimateOptions opts = {});

/// Random probe model vectors (rows), N(0, scale^2).
MatrixXd probe_points(int count, int dim, double scale, const RngStreams& streams, std::uint64_t tag);

/// Feature columns then a label column, one header line.
void write_dataset_csv(std::ostream& os, const Dataset& data);
Dataset read_dataset_csv(std::istream& is);
nlohmann::json partition_to_json(const Dataset& data);
/// Installs the partition stored in `j` into `data`.
void partition_from_json(const nlohmann::json& j, Dataset& data);

}  // namespace spodgt
