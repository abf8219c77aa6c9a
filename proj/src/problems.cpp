#include "spodgt/problems.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace spodgt {

LossKind parse_loss_kind(const std::string& name) {
  if (name == "quadratic") return LossKind::quadratic;
  if (name == "logistic" || name == "logistic_l2") return LossKind::logistic_l2;
  if (name == "hinge" || name == "hinge_l2") return LossKind::hinge_l2;
  throw ConfigError("problem.kind: unknown loss '" + name + "'");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::quadratic:
      return "quadratic";
    case LossKind::logistic_l2:
      return "logistic_l2";
    case LossKind::hinge_l2:
      return "hinge_l2";
  }
  return "unknown";
}

void Dataset::validate() const {
  const int total = total_size();
  if (static_cast<int>(labels.size()) != total) throw PreconditionError("dataset: label count mismatch");
  std::vector<int> seen(static_cast<std::size_t>(total), 0);
  for (std::size_t i = 0; i < partition.size(); ++i) {
    if (partition[i].empty()) throw PreconditionError("dataset: client " + std::to_string(i) + " has no samples");
    for (int s : partition[i]) {
      if (s < 0 || s >= total) throw PreconditionError("dataset: sample index out of range");
      if (seen[static_cast<std::size_t>(s)]++) throw PreconditionError("dataset: partition cells overlap");
    }
  }
  for (int c : seen)
    if (c != 1) throw PreconditionError("dataset: partition does not cover every sample");
}

namespace {

MatrixXd gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> standard_normal(0.0, 1.0);
  MatrixXd out(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) out(i, j) = standard_normal(rng);
  return out;
}

MatrixXd random_orthonormal(int rows, int cols, std::mt19937_64& rng) {
  Eigen::HouseholderQR<MatrixXd> qr(gaussian(rows, cols, rng));
  return qr.householderQ() * MatrixXd::Identity(rows, cols);
}

std::vector<VectorXd> mean_centers(const Dataset& data) {
  std::vector<VectorXd> out;
  for (const auto& cell : data.partition) {
    VectorXd c = VectorXd::Zero(data.features.cols());
    for (int s : cell) c += data.features.row(s).transpose();
    out.push_back(c / double(cell.size()));
  }
  return out;
}

// Augmented feature matrix [f, 1] of one client.
MatrixXd client_design(const Dataset& data, int i) {
  const auto& cell = data.partition[static_cast<std::size_t>(i)];
  const Index d = data.features.cols();
  MatrixXd F(static_cast<Index>(cell.size()), d + 1);
  for (std::size_t r = 0; r < cell.size(); ++r) {
    F.row(static_cast<Index>(r)).head(d) = data.features.row(cell[r]);
    F(static_cast<Index>(r), d) = 1.0;
  }
  return F;
}

struct NnlsFit {
  double a = 0.0;  // intercept
  double b = 0.0;  // slope
};

// min sum (a + b t_k - y_k)^2 subject to a, b >= 0.
NnlsFit nnls2(const std::vector<double>& t, const std::vector<double>& y) {
  const double n = double(t.size());
  auto objective = [&](double a, double b) {
    double s = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) s += std::pow(a + b * t[k] - y[k], 2);
    return s;
  };
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    st += t[k];
    sy += y[k];
    stt += t[k] * t[k];
    sty += t[k] * y[k];
  }
  std::vector<NnlsFit> candidates{{0.0, 0.0}, {std::max(0.0, sy / n), 0.0}};
  if (stt > 0.0) candidates.push_back({0.0, std::max(0.0, sty / stt)});
  const double det = n * stt - st * st;
  if (std::abs(det) > 1e-300) {
    const double a = (stt * sy - st * sty) / det;
    const double b = (n * sty - st * sy) / det;
    if (a >= 0.0 && b >= 0.0) candidates.push_back({a, b});
  }
  NnlsFit best = candidates.front();
  double best_obj = objective(best.a, best.b);
  for (const auto& c : candidates) {
    const double o = objective(c.a, c.b);
    if (o < best_obj) {
      best = c;
      best_obj = o;
    }
  }
  return best;
}

// Fits (a, b), raises the intercept until y_k <= a + b t_k for every probe,
// then scales both square roots by `inflation`.
std::pair<double, double> covering_bound(const std::vector<double>& t, const std::vector<double>& y,
                                         double inflation) {
  const NnlsFit fit = nnls2(t, y);
  double a = fit.a;
  for (std::size_t k = 0; k < t.size(); ++k) a = std::max(a, y[k] - fit.b * t[k]);
  return {inflation * std::sqrt(a), inflation * std::sqrt(fit.b)};
}

}  // namespace

LossOracle LossOracle::quadratic(Dataset data, std::vector<MatrixXd> Q) {
  data.validate();
  if (static_cast<int>(Q.size()) != data.clients()) throw PreconditionError("quadratic: one Q per client required");
  const Index n = data.features.cols();
  for (const auto& q : Q) {
    if (q.rows() != n || q.cols() != n) throw PreconditionError("quadratic: Q has the wrong shape");
    if (!q.isApprox(q.transpose(), 1e-12)) throw PreconditionError("quadratic: Q must be symmetric");
    if (Eigen::SelfAdjointEigenSolver<MatrixXd>(q).eigenvalues().minCoeff() < -1e-12) {
      throw PreconditionError("quadratic: Q must be positive semidefinite");
    }
  }
  LossOracle o;
  o.kind_ = LossKind::quadratic;
  o.dim_ = static_cast<int>(n);
  o.mean_center_ = mean_centers(data);
  o.data_ = std::make_shared<const Dataset>(std::move(data));
  o.Q_ = std::move(Q);
  return o;
}

LossOracle LossOracle::classifier(LossKind kind, Dataset data, double lambda) {
  if (kind == LossKind::quadratic) throw PreconditionError("classifier: kind must be logistic_l2 or hinge_l2");
  if (!(lambda >= 0.0)) throw PreconditionError("classifier: lambda must be >= 0");
  data.validate();
  LossOracle o;
  o.kind_ = kind;
  o.lambda_ = lambda;
  o.dim_ = data.num_classes * static_cast<int>(data.features.cols() + 1);
  o.data_ = std::make_shared<const Dataset>(std::move(data));
  return o;
}

LossOracle LossOracle::with_data(Dataset data) const {
  if (kind_ == LossKind::quadratic) {
    if (data.clients() != clients()) throw PreconditionError("with_data: client count changed");
    return quadratic(std::move(data), Q_);
  }
  return classifier(kind_, std::move(data), lambda_);
}

void LossOracle::class_scores(int s, const VectorXd& x, VectorXd& scores) const {
  const Index d = data_->features.cols();
  const int C = data_->num_classes;
  scores.resize(C);
  for (int c = 0; c < C; ++c) {
    const auto w = x.segment(c * (d + 1), d + 1);
    scores(c) = w.head(d).dot(data_->features.row(s).transpose()) + w(d);
  }
}

double LossOracle::sample_loss(int i, int s, const VectorXd& x) const {
  if (kind_ == LossKind::quadratic) {
    const VectorXd r = x - data_->features.row(s).transpose();
    return 0.5 * r.dot(Q_[static_cast<std::size_t>(i)] * r);
  }
  VectorXd scores;
  class_scores(s, x, scores);
  const int y = data_->labels[static_cast<std::size_t>(s)];
  double loss = 0.5 * lambda_ * x.squaredNorm();
  if (kind_ == LossKind::logistic_l2) {
    const double mx = scores.maxCoeff();
    loss += mx + std::log((scores.array() - mx).exp().sum()) - scores(y);
  } else {
    for (Index c = 0; c < scores.size(); ++c) {
      const double t = c == y ? 1.0 : -1.0;
      const double margin = 1.0 - t * scores(c);
      if (margin > 0.0) loss += 0.5 * margin * margin;
    }
  }
  return loss;
}

void LossOracle::add_sample_gradient(int i, int s, const VectorXd& x, VectorXd& out) const {
  if (kind_ == LossKind::quadratic) {
    out.noalias() += Q_[static_cast<std::size_t>(i)] * (x - data_->features.row(s).transpose());
    return;
  }
  VectorXd scores;
  class_scores(s, x, scores);
  const int y = data_->labels[static_cast<std::size_t>(s)];
  const Index d = data_->features.cols();
  VectorXd coef(scores.size());
  if (kind_ == LossKind::logistic_l2) {
    const double mx = scores.maxCoeff();
    coef = (scores.array() - mx).exp();
    coef /= coef.sum();
    coef(y) -= 1.0;
  } else {
    for (Index c = 0; c < scores.size(); ++c) {
      const double t = c == y ? 1.0 : -1.0;
      const double margin = 1.0 - t * scores(c);
      coef(c) = margin > 0.0 ? -t * margin : 0.0;
    }
  }
  for (Index c = 0; c < scores.size(); ++c) {
    if (coef(c) == 0.0) continue;
    out.segment(c * (d + 1), d) += coef(c) * data_->features.row(s).transpose();
    out(c * (d + 1) + d) += coef(c);
  }
  out += lambda_ * x;
}

VectorXd LossOracle::sample_gradient(int i, int s, const VectorXd& x) const {
  VectorXd g = VectorXd::Zero(dim_);
  add_sample_gradient(i, s, x, g);
  return g;
}

double LossOracle::local_loss(int i, const VectorXd& x) const {
  const auto& cell = data_->partition.at(static_cast<std::size_t>(i));
  double sum = 0.0;
  for (int s : cell) sum += sample_loss(i, s, x);
  return sum / double(cell.size());
}

VectorXd LossOracle::local_gradient(int i, const VectorXd& x) const {
  if (x.size() != dim_) throw PreconditionError("local_gradient: x has the wrong dimension");
  if (kind_ == LossKind::quadratic) {
    return Q_[static_cast<std::size_t>(i)] * (x - mean_center_[static_cast<std::size_t>(i)]);
  }
  const auto& cell = data_->partition.at(static_cast<std::size_t>(i));
  VectorXd g = VectorXd::Zero(dim_);
  for (int s : cell) add_sample_gradient(i, s, x, g);
  return g / double(cell.size());
}

double LossOracle::global_loss(const VectorXd& x) const {
  double sum = 0.0;
  for (int i = 0; i < clients(); ++i) sum += local_loss(i, x);
  return sum / clients();
}

VectorXd LossOracle::global_gradient(const VectorXd& x) const {
  VectorXd g = VectorXd::Zero(dim_);
  for (int i = 0; i < clients(); ++i) g += local_gradient(i, x);
  return g / clients();
}

double LossOracle::smoothness(int i) const {
  if (kind_ == LossKind::quadratic) {
    return Eigen::SelfAdjointEigenSolver<MatrixXd>(Q_.at(static_cast<std::size_t>(i))).eigenvalues().maxCoeff();
  }
  const MatrixXd F = client_design(*data_, i);
  const MatrixXd gram = F.transpose() * F / double(F.rows());
  const double top = Eigen::SelfAdjointEigenSolver<MatrixXd>(gram).eigenvalues().maxCoeff();
  // Softmax cross-entropy has logit Hessian <= I/2; the squared hinge has <= I.
  return (kind_ == LossKind::logistic_l2 ? 0.5 : 1.0) * top + lambda_;
}

double LossOracle::accuracy(const VectorXd& x) const {
  if (kind_ == LossKind::quadratic) return std::numeric_limits<double>::quiet_NaN();
  int correct = 0;
  VectorXd scores;
  for (int s = 0; s < data_->total_size(); ++s) {
    class_scores(s, x, scores);
    Index best = 0;
    scores.maxCoeff(&best);
    if (best == data_->labels[static_cast<std::size_t>(s)]) ++correct;
  }
  return double(correct) / data_->total_size();
}

std::optional<VectorXd> LossOracle::minimizer() const {
  if (kind_ != LossKind::quadratic) return std::nullopt;
  MatrixXd Qbar = MatrixXd::Zero(dim_, dim_);
  VectorXd bbar = VectorXd::Zero(dim_);
  for (int i = 0; i < clients(); ++i) {
    Qbar += Q_[static_cast<std::size_t>(i)];
    bbar += Q_[static_cast<std::size_t>(i)] * mean_center_[static_cast<std::size_t>(i)];
  }
  return VectorXd(Qbar.ldlt().solve(bbar));
}

LossOracle make_synthetic(const SyntheticOptions& opts) {
  if (opts.m < 1 || opts.n < 1 || opts.per_client_size < 1) throw PreconditionError("make_synthetic: sizes must be >= 1");
  std::mt19937_64 rng(splitmix64(opts.seed ^ 0xa0761d6478bd642fULL));
  const int total = opts.m * opts.per_client_size;
  Dataset data;
  data.partition.resize(static_cast<std::size_t>(opts.m));

  if (opts.kind == LossKind::quadratic) {
    data.num_classes = 1;
    data.features.resize(total, opts.n);
    data.labels.assign(static_cast<std::size_t>(total), 0);
    std::vector<MatrixXd> Q;
    std::uniform_real_distribution<double> eig(0.1, std::max(0.1, opts.L_max));
    for (int i = 0; i < opts.m; ++i) {
      const MatrixXd U = random_orthonormal(opts.n, opts.n, rng);
      VectorXd lam(opts.n);
      for (int k = 0; k < opts.n; ++k) lam(k) = eig(rng);
      lam(0) = opts.L_max;  // pin the top of the spectrum
      MatrixXd q = U * lam.asDiagonal() * U.transpose();
      Q.push_back(0.5 * (q + q.transpose()));
      const VectorXd mu = opts.center_spread * gaussian(opts.n, 1, rng);
      for (int r = 0; r < opts.per_client_size; ++r) {
        const int s = i * opts.per_client_size + r;
        data.features.row(s) = (mu + opts.sample_noise * gaussian(opts.n, 1, rng)).transpose();
        data.partition[static_cast<std::size_t>(i)].push_back(s);
      }
    }
    return LossOracle::quadratic(std::move(data), std::move(Q));
  }

  const int C = std::max(2, opts.classes);
  data.num_classes = C;
  MatrixXd means;
  if (opts.n >= C) {
    means = random_orthonormal(opts.n, C, rng);
  } else {
    means = gaussian(opts.n, C, rng);
    means = means.array().rowwise() / means.colwise().norm().array();
  }
  means *= opts.separation / std::sqrt(2.0);
  data.features.resize(total, opts.n);
  data.labels.resize(static_cast<std::size_t>(total));
  for (int s = 0; s < total; ++s) {
    const int y = s % C;
    data.labels[static_cast<std::size_t>(s)] = y;
    data.features.row(s) = (means.col(y) + gaussian(opts.n, 1, rng)).transpose();
  }
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int s = 0; s < total; ++s)
    data.partition[static_cast<std::size_t>(s / opts.per_client_size)].push_back(order[static_cast<std::size_t>(s)]);
  for (auto& cell : data.partition) std::sort(cell.begin(), cell.end());
  return LossOracle::classifier(opts.kind, std::move(data), opts.lambda);
}

Dataset partition_by_labels(const Dataset& data, int labels_per_client, int m, std::uint64_t seed) {
  const int C = data.num_classes;
  if (m < 1) throw ConfigError("graph.m: must be >= 1");
  if (labels_per_client < 1 || labels_per_client > C) {
    throw ConfigError("problem.labels_per_client: must lie in [1, " + std::to_string(C) + "]");
  }
  if (m * labels_per_client < C) {
    throw ConfigError("problem.labels_per_client: " + std::to_string(m) + " clients x " +
                      std::to_string(labels_per_client) + " labels cannot cover " + std::to_string(C) +
                      " classes");
  }
  std::mt19937_64 rng(splitmix64(seed ^ 0xe7037ed1a0b428dbULL));
  std::vector<int> perm(static_cast<std::size_t>(C));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::vector<int>> owners(static_cast<std::size_t>(C));
  for (int i = 0; i < m; ++i)
    for (int t = 0; t < labels_per_client; ++t) {
      const int c = perm[static_cast<std::size_t>((i * labels_per_client + t) % C)];
      auto& o = owners[static_cast<std::size_t>(c)];
      if (o.empty() || o.back() != i) o.push_back(i);
    }

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(C));
  for (int s = 0; s < data.total_size(); ++s) by_class[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(s)])].push_back(s);

  Dataset out = data;
  out.partition.assign(static_cast<std::size_t>(m), {});
  for (int c = 0; c < C; ++c) {
    auto& samples = by_class[static_cast<std::size_t>(c)];
    const auto& own = owners[static_cast<std::size_t>(c)];
    if (samples.size() < own.size()) {
      throw ConfigError("problem.labels_per_client: class " + std::to_string(c) + " has " +
                        std::to_string(samples.size()) + " samples for " + std::to_string(own.size()) +
                        " owners");
    }
    std::shuffle(samples.begin(), samples.end(), rng);
    const std::size_t k = own.size();
    for (std::size_t r = 0; r < samples.size(); ++r) {
      out.partition[static_cast<std::size_t>(own[r * k / samples.size()])].push_back(samples[r]);
    }
  }
  for (auto& cell : out.partition) std::sort(cell.begin(), cell.end());
  for (int i = 0; i < m; ++i)
    if (out.partition[static_cast<std::size_t>(i)].empty()) {
      throw ConfigError("problem.labels_per_client: client " + std::to_string(i) + " received no samples");
    }
  return out;
}

GradientSample minibatch_gradient(const LossOracle& oracle, int i, const VectorXd& x, int batch,
                                  const RngStreams& streams, std::int64_t k) {
  const auto& cell = oracle.data().partition.at(static_cast<std::size_t>(i));
  const int D = static_cast<int>(cell.size());
  if (batch < 1 || batch > D) {
    throw PreconditionError("minibatch_gradient: batch " + std::to_string(batch) + " outside [1, " +
                            std::to_string(D) + "]");
  }
  GradientSample out;
  if (batch == D) {
    out.value = oracle.local_gradient(i, x);
    out.batch_indices = cell;
    return out;
  }
  auto rng = streams.engine(StreamKind::batch, std::uint64_t(i), std::uint64_t(k));
  std::vector<int> pool = cell;
  for (int r = 0; r < batch; ++r) {
    std::uniform_int_distribution<int> pick(r, D - 1);
    std::swap(pool[static_cast<std::size_t>(r)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(batch));
  out.value = VectorXd::Zero(oracle.dim());
  for (int s : pool) oracle.add_sample_gradient(i, s, x, out.value);
  out.value /= double(batch);
  out.batch_indices = std::move(pool);
  return out;
}

double sample_dispersion(const LossOracle& oracle, int i, const VectorXd& x) {
  const auto& cell = oracle.data().partition.at(static_cast<std::size_t>(i));
  if (cell.size() < 2) return 0.0;
  const VectorXd mean = oracle.local_gradient(i, x);
  double sum = 0.0;
  for (int s : cell) sum += (oracle.sample_gradient(i, s, x) - mean).squaredNorm();
  return sum / double(cell.size() - 1);
}

MatrixXd probe_points(int count, int dim, double scale, const RngStreams& streams, std::uint64_t tag) {
  auto rng = streams.engine(StreamKind::trial, tag, 0);
  return scale * gaussian(count, dim, rng);
}

ProblemConstants estimate_constants(const LossOracle& oracle, const std::vector<int>& batch,
                                    const RngStreams& streams, EstimateOptions opts) {
  const int m = oracle.clients();
  if (static_cast<int>(batch.size()) != m) throw PreconditionError("estimate_constants: one batch size per client");
  ProblemConstants pc;
  pc.L = VectorXd(m);
  pc.sigma0 = VectorXd(m);
  pc.sigma1 = VectorXd(m);
  pc.delta0 = VectorXd(m);
  pc.delta1 = VectorXd(m);
  pc.D = VectorXd(m);
  pc.B = VectorXd(m);
  for (int i = 0; i < m; ++i) {
    pc.L(i) = oracle.smoothness(i);
    pc.D(i) = oracle.data().client_size(i);
    pc.B(i) = batch[static_cast<std::size_t>(i)];
    if (pc.B(i) < 1 || pc.B(i) > pc.D(i)) throw PreconditionError("estimate_constants: batch outside [1, D_i]");
  }
  pc.L_bar = pc.L.mean();

  if (oracle.kind() == LossKind::quadratic) {
    const int n = oracle.dim();
    MatrixXd Qbar = MatrixXd::Zero(n, n);
    VectorXd bbar = VectorXd::Zero(n);
    std::vector<VectorXd> centers;
    for (int i = 0; i < m; ++i) {
      VectorXd c = VectorXd::Zero(n);
      for (int s : oracle.data().partition[static_cast<std::size_t>(i)]) c += oracle.data().features.row(s).transpose();
      c /= pc.D(i);
      centers.push_back(c);
      Qbar += oracle.curvature(i) / m;
      bbar += oracle.curvature(i) * c / m;
    }
    const auto Qbar_ldlt = Qbar.ldlt();
    for (int i = 0; i < m; ++i) {
      const MatrixXd& Q = oracle.curvature(i);
      // Per-sample gradient deviations Q (c_s - c_bar) do not depend on x.
      double S2 = 0.0;
      const auto& cell = oracle.data().partition[static_cast<std::size_t>(i)];
      for (int s : cell) S2 += (Q * (oracle.data().features.row(s).transpose() - centers[static_cast<std::size_t>(i)])).squaredNorm();
      S2 = cell.size() > 1 ? S2 / double(cell.size() - 1) : 0.0;
      pc.sigma0(i) = std::sqrt(S2);
      pc.sigma1(i) = 0.0;
      // grad F_i = M grad F + r with M = Q Qbar^-1 and r = Q (Qbar^-1 bbar - c_i).
      const MatrixXd M = Q * Qbar_ldlt.solve(MatrixXd::Identity(n, n));
      const VectorXd r = Q * (Qbar_ldlt.solve(bbar) - centers[static_cast<std::size_t>(i)]);
      const double Mnorm2 = std::pow(Eigen::JacobiSVD<MatrixXd>(M).singularValues()(0), 2);
      if (r.norm() <= 1e-12 * (1.0 + bbar.norm())) {
        pc.delta1(i) = std::sqrt(Mnorm2);
        pc.delta0(i) = 0.0;
      } else {
        pc.delta1(i) = std::sqrt(2.0 * Mnorm2);
        pc.delta0(i) = std::sqrt(2.0) * r.norm();
      }
    }
    return pc;
  }

  const MatrixXd probes = probe_points(opts.probe_points, oracle.dim(), opts.probe_scale, streams, 0x9e37);
  std::vector<double> global_sq(static_cast<std::size_t>(probes.rows()));
  std::vector<std::vector<double>> local_sq(static_cast<std::size_t>(m)), disp(static_cast<std::size_t>(m));
  for (Index k = 0; k < probes.rows(); ++k) {
    const VectorXd x = probes.row(k).transpose();
    VectorXd g = VectorXd::Zero(oracle.dim());
    std::vector<VectorXd> locals;
    for (int i = 0; i < m; ++i) {
      locals.push_back(oracle.local_gradient(i, x));
      g += locals.back();
    }
    g /= m;
    global_sq[static_cast<std::size_t>(k)] = g.squaredNorm();
    for (int i = 0; i < m; ++i) {
      local_sq[static_cast<std::size_t>(i)].push_back(locals[static_cast<std::size_t>(i)].squaredNorm());
      disp[static_cast<std::size_t>(i)].push_back(sample_dispersion(oracle, i, x));
    }
  }
  for (int i = 0; i < m; ++i) {
    std::tie(pc.sigma0(i), pc.sigma1(i)) = covering_bound(global_sq, disp[static_cast<std::size_t>(i)], opts.inflation);
    std::tie(pc.delta0(i), pc.delta1(i)) = covering_bound(global_sq, local_sq[static_cast<std::size_t>(i)], opts.inflation);
  }
  return pc;
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
  const Index d = data.features.cols();
  for (Index c = 0; c < d; ++c) os << 'f' << c << ',';
  os << "label\n";
  os << std::setprecision(17);
  for (int s = 0; s < data.total_size(); ++s) {
    for (Index c = 0; c < d; ++c) os << data.features(s, c) << ',';
    os << data.labels[static_cast<std::size_t>(s)] << '\n';
  }
}

Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("dataset csv: missing header");
  const auto columns = static_cast<Index>(std::count(line.begin(), line.end(), ',') + 1);
  if (columns < 2) throw ConfigError("dataset csv: need at least one feature and a label column");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("dataset csv line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (static_cast<Index>(row.size()) != columns) {
      throw ConfigError("dataset csv line " + std::to_string(lineno) + ": expected " + std::to_string(columns) + " columns");
    }
    labels.push_back(static_cast<int>(row.back()));
    row.pop_back();
    rows.push_back(std::move(row));
  }
  Dataset data;
  data.features.resize(static_cast<Index>(rows.size()), columns - 1);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Index c = 0; c + 1 < columns; ++c) data.features(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  data.labels = std::move(labels);
  data.num_classes = data.labels.empty() ? 1 : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  std::vector<int> all(static_cast<std::size_t>(data.total_size()));
  std::iota(all.begin(), all.end(), 0);
  data.partition = {all};
  return data;
}

nlohmann::json partition_to_json(const Dataset& data) {
  return {{"num_classes", data.num_classes}, {"partition", data.partition}};
}

void partition_from_json(const nlohmann::json& j, Dataset& data) {
  if (!j.contains("partition")) throw ConfigError("partition: missing 'partition' array");
  data.partition = j["partition"].get<std::vector<std::vector<int>>>();
  if (j.contains("num_classes")) data.num_classes = j["num_classes"].get<int>();
  try {
    data.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("partition: ") + e.what());
  }
}

}  // namespace spodgt
