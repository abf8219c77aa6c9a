#include "spodgt/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <thread>

namespace spodgt {

using nlohmann::json;

namespace {

// Walks one JSON object, remembers which keys were read and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  int get_int(const std::string& key, int def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ConfigError(at(key) + ": expected an integer");
    return v->get<int>();
  }

  std::int64_t get_int64(const std::string& key, std::int64_t def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ConfigError(at(key) + ": expected an integer");
    return v->get<std::int64_t>();
  }

  std::optional<std::uint64_t> get_seed(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_number_unsigned()) throw ConfigError(at(key) + ": expected a nonnegative integer");
    return v->get<std::uint64_t>();
  }

  double get_double(const std::string& key, double def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(at(key) + ": expected a number");
    return v->get<double>();
  }

  std::string get_string(const std::string& key, const std::string& def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(at(key) + ": expected a string");
    return v->get<std::string>();
  }

  template <typename T>
  std::vector<T> get_array(const std::string& key, const std::vector<T>& def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_array()) throw ConfigError(at(key) + ": expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      const std::string p = at(key) + "[" + std::to_string(i) + "]";
      if constexpr (std::is_same_v<T, std::string>) {
        if (!e.is_string()) throw ConfigError(p + ": expected a string");
      } else if constexpr (std::is_integral_v<T>) {
        if (!e.is_number_integer()) throw ConfigError(p + ": expected an integer");
      } else {
        if (!e.is_number()) throw ConfigError(p + ": expected a number");
      }
      out.push_back(e.get<T>());
    }
    return out;
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    return Reader(j_.at(key), at(key));
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  /// Every key must have been consumed.
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError(at(k) + ": unknown field");
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
    return &j_.at(key);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag * 0x9e3779b97f4a7c15ULL));
}

enum SeedTag : std::uint64_t { kGraph = 1, kData = 2, kProfile = 3, kInit = 4, kPartition = 5, kCheckState = 6 };

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

std::string init_name(InitSpec::Kind k) {
  switch (k) {
    case InitSpec::Kind::zeros: return "zeros";
    case InitSpec::Kind::shared_gaussian: return "shared_gaussian";
    case InitSpec::Kind::per_client_gaussian: return "per_client_gaussian";
  }
  return "zeros";
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// "k_gt(3)" -> "k_gt_3", safe in file names.
std::string file_stem(std::string name) {
  std::replace(name.begin(), name.end(), '(', '_');
  std::erase(name, ')');
  return name;
}

std::string short_fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Reader r(j, "");
  c.seed = r.get_seed("seed").value_or(0);

  if (r.has("graph")) {
    Reader g = r.child("graph");
    c.graph.m = g.get_int("m", c.graph.m);
    c.graph.radius = g.get_double("radius", c.graph.radius);
    c.graph.seed = g.get_seed("seed");
    c.graph.file = g.get_string("file", "");
    require(c.graph.m >= 1, "graph.m: must be >= 1");
    require(c.graph.radius > 0.0, "graph.radius: must be positive");
    g.finish();
  }

  if (r.has("problem")) {
    Reader p = r.child("problem");
    try {
      c.problem.kind = parse_loss_kind(p.get_string("kind", to_string(c.problem.kind)));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("problem.kind: ") + e.what());
    }
    c.problem.n = p.get_int("n", c.problem.n);
    c.problem.per_client_size = p.get_int("per_client_size", c.problem.per_client_size);
    c.problem.classes = p.get_int("classes", c.problem.classes);
    c.problem.labels_per_client = p.get_int("labels_per_client", c.problem.labels_per_client);
    c.problem.lambda = p.get_double("lambda", c.problem.lambda);
    c.problem.separation = p.get_double("separation", c.problem.separation);
    c.problem.L_max = p.get_double("L_max", c.problem.L_max);
    c.problem.center_spread = p.get_double("center_spread", c.problem.center_spread);
    c.problem.sample_noise = p.get_double("sample_noise", c.problem.sample_noise);
    c.problem.seed = p.get_seed("seed");
    require(c.problem.n >= 1, "problem.n: must be >= 1");
    require(c.problem.per_client_size >= 1, "problem.per_client_size: must be >= 1");
    require(c.problem.classes >= 2, "problem.classes: must be >= 2");
    require(c.problem.labels_per_client >= 0, "problem.labels_per_client: must be >= 0");
    require(c.problem.labels_per_client == 0 || c.problem.kind != LossKind::quadratic,
            "problem.labels_per_client: only classification problems have labels");
    require(c.problem.lambda >= 0.0, "problem.lambda: must be >= 0");
    require(c.problem.L_max > 0.0, "problem.L_max: must be positive");
    p.finish();
  }

  if (r.has("profile")) {
    Reader p = r.child("profile");
    const std::string kind = p.get_string("kind", "beta");
    if (kind == "ones") c.profile.kind = ProfileSpec::Kind::ones;
    else if (kind == "uniform") c.profile.kind = ProfileSpec::Kind::uniform;
    else if (kind == "beta") c.profile.kind = ProfileSpec::Kind::beta;
    else if (kind == "file") c.profile.kind = ProfileSpec::Kind::file;
    else throw ConfigError("profile.kind: expected ones, uniform, beta or file, got '" + kind + "'");
    c.profile.p = p.get_double("p", c.profile.p);
    c.profile.p_hat = p.get_double("p_hat", c.profile.p_hat);
    c.profile.alpha = p.get_double("alpha", c.profile.alpha);
    c.profile.beta = p.get_double("beta", c.profile.beta);
    c.profile.floor = p.get_double("floor", c.profile.floor);
    c.profile.file = p.get_string("file", "");
    c.profile.seed = p.get_seed("seed");
    require(c.profile.p > 0.0 && c.profile.p <= 1.0, "profile.p: must lie in (0, 1]");
    require(c.profile.p_hat > 0.0 && c.profile.p_hat <= 1.0, "profile.p_hat: must lie in (0, 1]");
    require(c.profile.alpha > 0.0, "profile.alpha: must be positive");
    require(c.profile.beta > 0.0, "profile.beta: must be positive");
    require(c.profile.floor > 0.0 && c.profile.floor <= 1.0, "profile.floor: must lie in (0, 1]");
    require(c.profile.kind != ProfileSpec::Kind::file || !c.profile.file.empty(), "profile.file: required for kind file");
    p.finish();
  }

  c.variants = r.get_array<std::string>("variants", c.variants);
  require(!c.variants.empty(), "variants: at least one variant required");
  for (std::size_t i = 0; i < c.variants.size(); ++i) {
    try {
      parse_variant(c.variants[i]);
    } catch (const ConfigError& e) {
      throw ConfigError("variants[" + std::to_string(i) + "]: " + e.what());
    }
  }
  c.iterations = r.get_int64("iterations", c.iterations);
  require(c.iterations >= 0, "iterations: must be >= 0");

  if (r.has("eta")) {
    Reader e = r.child("eta");
    const std::string kind = e.get_string("kind", "constant");
    if (kind == "constant") c.eta.kind = EtaSpec::Kind::constant;
    else if (kind == "ceiling") c.eta.kind = EtaSpec::Kind::ceiling;
    else if (kind == "per_client") c.eta.kind = EtaSpec::Kind::per_client;
    else throw ConfigError("eta.kind: expected constant, ceiling or per_client, got '" + kind + "'");
    c.eta.value = e.get_double("value", c.eta.value);
    c.eta.fraction = e.get_double("fraction", c.eta.fraction);
    c.eta.values = e.get_array<double>("values", {});
    require(c.eta.value > 0.0, "eta.value: must be positive");
    require(c.eta.fraction > 0.0, "eta.fraction: must be positive");
    for (double v : c.eta.values) require(v > 0.0, "eta.values: every rate must be positive");
    require(c.eta.kind != EtaSpec::Kind::per_client || !c.eta.values.empty(), "eta.values: required for kind per_client");
    e.finish();
  }

  if (r.has("batch")) {
    Reader b = r.child("batch");
    const std::string kind = b.get_string("kind", "fraction");
    if (kind == "full") c.batch.kind = BatchSpec::Kind::full;
    else if (kind == "fraction") c.batch.kind = BatchSpec::Kind::fraction;
    else if (kind == "size") c.batch.kind = BatchSpec::Kind::size;
    else if (kind == "per_client") c.batch.kind = BatchSpec::Kind::per_client;
    else throw ConfigError("batch.kind: expected full, fraction, size or per_client, got '" + kind + "'");
    c.batch.value = b.get_double("value", c.batch.value);
    c.batch.values = b.get_array<int>("values", {});
    require(c.batch.value > 0.0, "batch.value: must be positive");
    require(c.batch.kind != BatchSpec::Kind::fraction || c.batch.value <= 1.0, "batch.value: a fraction must be <= 1");
    for (int v : c.batch.values) require(v >= 1, "batch.values: sizes must be >= 1");
    require(c.batch.kind != BatchSpec::Kind::per_client || !c.batch.values.empty(), "batch.values: required for kind per_client");
    b.finish();
  }

  if (r.has("init")) {
    Reader in = r.child("init");
    try {
      c.init_kind = parse_init_kind(in.get_string("kind", "zeros"));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("init.kind: ") + e.what());
    }
    c.init_scale = in.get_double("scale", c.init_scale);
    require(c.init_scale >= 0.0, "init.scale: must be >= 0");
    in.finish();
  }

  c.repeats = r.get_int("repeats", c.repeats);
  require(c.repeats >= 1, "repeats: must be >= 1");
  c.log_stride = r.get_int("log_stride", c.log_stride);
  require(c.log_stride >= 1, "log_stride: must be >= 1");
  c.out_dir = r.get_string("out_dir", c.out_dir);

  if (r.has("sweep")) {
    Reader s = r.child("sweep");
    c.sweep.axis = s.get_string("axis", "");
    c.sweep.values = s.get_array<double>("values", {});
    static const std::set<std::string> axes{"labels_per_client", "radius", "m", "eta"};
    require(axes.contains(c.sweep.axis), "sweep.axis: expected labels_per_client, radius, m or eta");
    require(!c.sweep.values.empty(), "sweep.values: at least one value required");
    s.finish();
  }

  if (r.has("check")) {
    Reader s = r.child("check");
    const std::string inst = s.get_string("instance", "default");
    require(inst == "default" || inst == "config", "check.instance: expected default or config");
    c.check.default_instance = inst == "default";
    c.check.trials = s.get_int("trials", c.check.trials);
    require(c.check.trials >= 2, "check.trials: must be >= 2");
    s.finish();
  }
  r.finish();
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["graph"] = {{"m", graph.m}, {"radius", graph.radius}};
  if (graph.seed) j["graph"]["seed"] = *graph.seed;
  if (!graph.file.empty()) j["graph"]["file"] = graph.file;
  j["problem"] = {{"kind", to_string(problem.kind)}, {"n", problem.n}, {"per_client_size", problem.per_client_size},
                  {"classes", problem.classes}, {"labels_per_client", problem.labels_per_client},
                  {"lambda", problem.lambda}, {"separation", problem.separation}, {"L_max", problem.L_max},
                  {"center_spread", problem.center_spread}, {"sample_noise", problem.sample_noise}};
  if (problem.seed) j["problem"]["seed"] = *problem.seed;
  static const char* pk[] = {"ones", "uniform", "beta", "file"};
  j["profile"] = {{"kind", pk[int(profile.kind)]}, {"p", profile.p}, {"p_hat", profile.p_hat},
                  {"alpha", profile.alpha}, {"beta", profile.beta}, {"floor", profile.floor}};
  if (!profile.file.empty()) j["profile"]["file"] = profile.file;
  if (profile.seed) j["profile"]["seed"] = *profile.seed;
  j["variants"] = variants;
  j["iterations"] = iterations;
  static const char* ek[] = {"constant", "ceiling", "per_client"};
  j["eta"] = {{"kind", ek[int(eta.kind)]}, {"value", eta.value}, {"fraction", eta.fraction}};
  if (!eta.values.empty()) j["eta"]["values"] = eta.values;
  static const char* bk[] = {"full", "fraction", "size", "per_client"};
  j["batch"] = {{"kind", bk[int(batch.kind)]}, {"value", batch.value}};
  if (!batch.values.empty()) j["batch"]["values"] = batch.values;
  j["init"] = {{"kind", init_name(init_kind)}, {"scale", init_scale}};
  j["repeats"] = repeats;
  j["log_stride"] = log_stride;
  j["out_dir"] = out_dir;
  if (!sweep.axis.empty()) j["sweep"] = {{"axis", sweep.axis}, {"values", sweep.values}};
  j["check"] = {{"instance", check.default_instance ? "default" : "config"}, {"trials", check.trials}};
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return RunConfig::from_json(j);
}

namespace {

Digraph build_graph(const RunConfig& c) {
  if (!c.graph.file.empty()) {
    try {
      return load_edge_list(c.graph.file);
    } catch (const std::exception& e) {
      throw ConfigError("graph.file: " + std::string(e.what()));
    }
  }
  return generate_rgg(c.graph.m, c.graph.radius, c.graph.seed.value_or(derived_seed(c.seed, kGraph)));
}

LossOracle build_oracle(const RunConfig& c, int m) {
  SyntheticOptions so;
  so.kind = c.problem.kind;
  so.m = m;
  so.n = c.problem.n;
  so.per_client_size = c.problem.per_client_size;
  so.seed = c.problem.seed.value_or(derived_seed(c.seed, kData));
  so.classes = c.problem.classes;
  so.separation = c.problem.separation;
  so.lambda = c.problem.lambda;
  so.L_max = c.problem.L_max;
  so.center_spread = c.problem.center_spread;
  so.sample_noise = c.problem.sample_noise;
  LossOracle oracle = make_synthetic(so);
  if (c.problem.labels_per_client > 0) {
    require(c.problem.labels_per_client <= c.problem.classes, "problem.labels_per_client: exceeds problem.classes");
    oracle = oracle.with_data(
        partition_by_labels(oracle.data(), c.problem.labels_per_client, m, derived_seed(so.seed, kPartition)));
  }
  return oracle;
}

SporadicityProfile build_profile(const RunConfig& c, const Digraph& g) {
  switch (c.profile.kind) {
    case ProfileSpec::Kind::ones: return SporadicityProfile::ones(g);
    case ProfileSpec::Kind::uniform: return SporadicityProfile::uniform(g, c.profile.p, c.profile.p_hat);
    case ProfileSpec::Kind::beta:
      return sample_profile_beta(g, c.profile.alpha, c.profile.beta,
                                 c.profile.seed.value_or(derived_seed(c.seed, kProfile)), c.profile.floor);
    case ProfileSpec::Kind::file: {
      std::ifstream in(c.profile.file);
      if (!in) throw ConfigError("profile.file: cannot open '" + c.profile.file + "'");
      try {
        return profile_from_json(json::parse(in), g);
      } catch (const json::exception& e) {
        throw ConfigError("profile.file: " + std::string(e.what()));
      }
    }
  }
  return SporadicityProfile::ones(g);
}

std::vector<int> build_batch(const RunConfig& c, const LossOracle& oracle) {
  const int m = oracle.clients();
  std::vector<int> b;
  for (int i = 0; i < m; ++i) {
    const int D = oracle.data().client_size(i);
    switch (c.batch.kind) {
      case BatchSpec::Kind::full: b.push_back(D); break;
      case BatchSpec::Kind::fraction:
        b.push_back(std::clamp(static_cast<int>(std::ceil(c.batch.value * D - 1e-9)), 1, D));
        break;
      case BatchSpec::Kind::size: b.push_back(std::clamp(static_cast<int>(c.batch.value), 1, D)); break;
      case BatchSpec::Kind::per_client:
        require(static_cast<int>(c.batch.values.size()) == m,
                "batch.values: expected " + std::to_string(m) + " entries");
        require(c.batch.values[std::size_t(i)] <= D, "batch.values[" + std::to_string(i) + "]: exceeds the local data size");
        b.push_back(c.batch.values[std::size_t(i)]);
        break;
    }
  }
  return b;
}

// Theory pipeline for the configured problem, at eta (empty = eta_max).
TheoryReport theory_for(const RunConfig& c, const Experiment& ex, const VectorXd& eta) {
  const ProblemConstants pc =
      estimate_constants(ex.scenario.oracle, ex.batch, RngStreams(derived_seed(c.seed, kData)));
  return theory_report(pc, ex.scenario.pair, ex.scenario.profile, ex.metrics, eta);
}

VectorXd build_eta(const RunConfig& c, const Experiment& ex) {
  const int m = ex.scenario.graph.size();
  switch (c.eta.kind) {
    case EtaSpec::Kind::constant: return VectorXd::Constant(m, c.eta.value);
    case EtaSpec::Kind::per_client:
      require(static_cast<int>(c.eta.values.size()) == m, "eta.values: expected " + std::to_string(m) + " entries");
      return Eigen::Map<const VectorXd>(c.eta.values.data(), m);
    case EtaSpec::Kind::ceiling: {
      try {
        return VectorXd::Constant(m, c.eta.fraction * theory_for(c, ex, {}).eta_max);
      } catch (const InfeasibleError& e) {
        throw ConfigError(std::string("eta.kind: no ceiling for this configuration: ") + e.what());
      }
    }
  }
  return VectorXd::Constant(m, c.eta.value);
}

}  // namespace

Experiment build_experiment(const RunConfig& cfg) {
  Digraph graph = build_graph(cfg);
  const int m = graph.size();
  MixingPair pair = build_mixing(graph);
  SporadicityProfile profile = build_profile(cfg, graph);
  LossOracle oracle = build_oracle(cfg, m);
  const InitSpec init{cfg.init_kind, derived_seed(cfg.seed, kInit), cfg.init_scale};
  std::vector<int> batch = build_batch(cfg, oracle);
  const GraphMetrics gm = metrics(graph);
  Experiment ex{Scenario{std::move(graph), std::move(pair), std::move(profile), std::move(oracle), init}, gm,
                std::move(batch), VectorXd()};
  ex.eta = build_eta(cfg, ex);
  return ex;
}

VariantSpec resolve_variant(const std::string& name, const SporadicityProfile& profile) {
  VariantSpec v = parse_variant(name);
  if (v.kind == Variant::k_gt && v.K == 0) v.K = kgt_interval(profile.p);
  return v;
}

RngStreams repeat_streams(std::uint64_t seed, int repeat) { return RngStreams(seed).derive(std::uint64_t(repeat)); }

double value_at_delay(const MetricsTrace& trace, double TraceRow::*column, double delay) {
  const auto& rows = trace.rows;
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (delay <= rows.front().tau_total_cum) return rows.front().*column;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].tau_total_cum >= delay) {
      const double t0 = rows[i - 1].tau_total_cum, t1 = rows[i].tau_total_cum;
      const double w = t1 > t0 ? (delay - t0) / (t1 - t0) : 1.0;
      return (1.0 - w) * rows[i - 1].*column + w * rows[i].*column;
    }
  }
  return rows.back().*column;
}

double delay_to_reach(const MetricsTrace& trace, double target) {
  const auto& rows = trace.rows;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].loss > target) continue;
    if (i == 0) return rows[0].tau_total_cum;
    const double l0 = rows[i - 1].loss, l1 = rows[i].loss;
    const double w = l0 > l1 ? (l0 - target) / (l0 - l1) : 1.0;
    return rows[i - 1].tau_total_cum + w * (rows[i].tau_total_cum - rows[i - 1].tau_total_cum);
  }
  return std::numeric_limits<double>::infinity();
}

std::vector<AggregateRow> aggregate_traces(const std::string& variant, const std::vector<MetricsTrace>& traces,
                                           int points) {
  if (traces.empty() || points < 2) throw PreconditionError("aggregate_traces: need traces and >= 2 points");
  double horizon = std::numeric_limits<double>::infinity();
  for (const auto& t : traces) horizon = std::min(horizon, t.rows.empty() ? 0.0 : t.rows.back().tau_total_cum);

  auto stats = [&](double TraceRow::*col, double d) {
    std::vector<double> v;
    for (const auto& t : traces) v.push_back(value_at_delay(t, col, d));
    double mean = 0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };

  std::vector<AggregateRow> out;
  for (int g = 0; g < points; ++g) {
    AggregateRow a;
    a.variant = variant;
    a.delay = horizon * g / double(points - 1);
    std::tie(a.loss_mean, a.loss_sd) = stats(&TraceRow::loss, a.delay);
    std::tie(a.grad_sq_norm_mean, a.grad_sq_norm_sd) = stats(&TraceRow::grad_sq_norm, a.delay);
    std::tie(a.accuracy_mean, a.accuracy_sd) = stats(&TraceRow::accuracy, a.delay);
    out.push_back(a);
  }
  return out;
}

ResultsTable cmd_run(const RunConfig& cfg, int jobs) {
  const Experiment ex = build_experiment(cfg);
  ResultsTable table;
  table.variants = cfg.variants;
  const std::size_t V = cfg.variants.size(), R = std::size_t(cfg.repeats);
  table.traces.assign(V, std::vector<MetricsTrace>(R));

  std::vector<AlgoConfig> configs;
  for (const auto& name : cfg.variants) {
    AlgoConfig ac = AlgoConfig::make(resolve_variant(name, ex.scenario.profile), ex.eta, ex.batch, cfg.iterations);
    ac.log_stride = cfg.log_stride;
    ac.validate(ex.scenario.graph.size());
    configs.push_back(std::move(ac));
  }

  std::vector<std::exception_ptr> errors(V * R);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < V * R; t = next++) {
      const std::size_t v = t / R, r = t % R;
      try {
        table.traces[v][r] = run(configs[v], ex.scenario, repeat_streams(cfg.seed, int(r)));
      } catch (const DivergenceError& e) {
        errors[t] = std::make_exception_ptr(DivergenceError(
            "variant " + to_string(configs[v].variant) + ", repeat " + std::to_string(r) + ": " + e.what(),
            e.iteration()));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n = std::clamp<std::size_t>(std::size_t(std::max(jobs, 1)), 1, V * R);
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t v = 0; v < V; ++v) {
    auto rows = aggregate_traces(to_string(configs[v].variant), table.traces[v]);
    table.aggregate.insert(table.aggregate.end(), rows.begin(), rows.end());
  }
  return table;
}

void write_results(const ResultsTable& table, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t v = 0; v < table.traces.size(); ++v) {
    for (std::size_t r = 0; r < table.traces[v].size(); ++r) {
      const MetricsTrace& t = table.traces[v][r];
      std::ofstream os(std::filesystem::path(dir) / (file_stem(t.variant) + "_r" + std::to_string(r) + ".csv"));
      write_trace_csv(os, t);
    }
  }
  std::ofstream os(std::filesystem::path(dir) / "aggregate.csv");
  os << "variant,delay,loss_mean,loss_sd,grad_sq_norm_mean,grad_sq_norm_sd,accuracy_mean,accuracy_sd\n";
  for (const auto& a : table.aggregate) {
    os << a.variant << ',' << fmt(a.delay) << ',' << fmt(a.loss_mean) << ',' << fmt(a.loss_sd) << ','
       << fmt(a.grad_sq_norm_mean) << ',' << fmt(a.grad_sq_norm_sd) << ',' << fmt(a.accuracy_mean) << ','
       << fmt(a.accuracy_sd) << '\n';
  }
}

double reference_loss(const LossOracle& oracle, int iterations) {
  if (auto x = oracle.minimizer()) return oracle.global_loss(*x);
  double L = 0.0;
  for (int i = 0; i < oracle.clients(); ++i) L = std::max(L, oracle.smoothness(i));
  VectorXd x = VectorXd::Zero(oracle.dim());
  double best = oracle.global_loss(x);
  for (int k = 0; k < iterations; ++k) {
    x -= oracle.global_gradient(x) / L;
    best = std::min(best, oracle.global_loss(x));
  }
  return best;
}

json cmd_theory(const RunConfig& cfg) {
  const Experiment ex = build_experiment(cfg);
  TheoryReport rep = theory_for(cfg, ex, ex.eta);
  rep.best_loss_seen = reference_loss(ex.scenario.oracle);
  return to_json(rep);
}

json CheckOutcome::to_json() const {
  return {{"lemmas", spodgt::to_json(lemmas)}, {"expected_matrices", spodgt::to_json(matrices)}, {"pass", pass()}};
}

CheckOutcome cmd_check(const RunConfig& cfg, int trials, int jobs, const ConstantTamper& tamper) {
  auto instance = [&]() -> LemmaInstance {
    if (cfg.check.default_instance) return default_lemma_instance();
    require(cfg.problem.kind == LossKind::quadratic, "problem.kind: check needs a quadratic problem (exact constants)");
    const Experiment ex = build_experiment(cfg);
    const int m = ex.scenario.graph.size();
    require(m <= 8, "graph.m: check supports at most 8 clients");
    const int n = ex.scenario.oracle.dim();
    std::mt19937_64 rng(derived_seed(cfg.seed, kCheckState));
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd X = MatrixXd::NullaryExpr(m, n, [&] { return normal(rng); });
    MatrixXd Yb = MatrixXd::NullaryExpr(m, n, [&] { return normal(rng); });
    Yb.rowwise() -= Yb.colwise().mean();
    return {ex.scenario.graph, ex.scenario.pair, ex.scenario.profile, ex.scenario.oracle,
            ex.batch, ex.eta, std::move(X), std::move(Yb)};
  };
  const LemmaInstance inst = instance();
  const RngStreams streams(cfg.seed);
  CheckOutcome out;
  out.lemmas = lemma_bound_suite(inst, trials, streams.derive(1), tamper, jobs);
  out.matrices = expected_matrix_check(inst.pair, inst.profile, inst.graph, trials, streams.derive(2));
  return out;
}

RunConfig at_sweep_point(const RunConfig& cfg, double value) {
  RunConfig c = cfg;
  const std::string& axis = cfg.sweep.axis;
  if (axis == "labels_per_client") {
    require(value >= 1 && value == std::floor(value), "sweep.values: labels_per_client needs positive integers");
    require(c.problem.kind != LossKind::quadratic, "sweep.axis: labels_per_client needs a classification problem");
    c.problem.labels_per_client = static_cast<int>(value);
  } else if (axis == "radius") {
    require(value > 0.0, "sweep.values: radius must be positive");
    require(c.graph.file.empty(), "sweep.axis: radius cannot vary a graph loaded from file");
    c.graph.radius = value;
  } else if (axis == "m") {
    require(value >= 1 && value == std::floor(value), "sweep.values: m needs positive integers");
    require(c.graph.file.empty(), "sweep.axis: m cannot vary a graph loaded from file");
    c.graph.m = static_cast<int>(value);
  } else if (axis == "eta") {
    require(value > 0.0, "sweep.values: eta must be positive");
    c.eta.kind = EtaSpec::Kind::constant;
    c.eta.value = value;
  } else {
    throw ConfigError("sweep.axis: expected labels_per_client, radius, m or eta");
  }
  return c;
}

std::vector<SweepPoint> cmd_sweep(const RunConfig& cfg, int jobs) {
  if (cfg.sweep.axis.empty()) throw ConfigError("sweep: section required for the sweep command");
  std::vector<SweepPoint> out;
  for (double v : cfg.sweep.values) out.push_back({v, cmd_run(at_sweep_point(cfg, v), jobs)});
  return out;
}

void write_sweep(const RunConfig& cfg, const std::vector<SweepPoint>& points, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream os(std::filesystem::path(dir) / "sweep_summary.csv");
  os << "axis,value,variant,delay,loss_mean,loss_sd,grad_sq_norm_mean,grad_sq_norm_sd,accuracy_mean,accuracy_sd\n";
  for (const SweepPoint& p : points) {
    write_results(p.table, (std::filesystem::path(dir) / (cfg.sweep.axis + "_" + short_fmt(p.value))).string());
    // Last grid point of each variant.
    for (std::size_t i = 0; i < p.table.aggregate.size(); ++i) {
      const AggregateRow& a = p.table.aggregate[i];
      if (i + 1 < p.table.aggregate.size() && p.table.aggregate[i + 1].variant == a.variant) continue;
      os << cfg.sweep.axis << ',' << fmt(p.value) << ',' << a.variant << ',' << fmt(a.delay) << ','
         << fmt(a.loss_mean) << ',' << fmt(a.loss_sd) << ',' << fmt(a.grad_sq_norm_mean) << ','
         << fmt(a.grad_sq_norm_sd) << ',' << fmt(a.accuracy_mean) << ',' << fmt(a.accuracy_sd) << '\n';
    }
  }
}

}  // namespace spodgt
