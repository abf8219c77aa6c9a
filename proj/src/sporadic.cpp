#include "spodgt/sporadic.hpp"

#include <algorithm>
#include <string>

namespace spodgt {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t RngStreams::key(StreamKind kind, std::uint64_t index, std::uint64_t counter) const {
  std::uint64_t h = splitmix64(master_);
  h = splitmix64(h ^ static_cast<std::uint64_t>(kind));
  h = splitmix64(h ^ index);
  return splitmix64(h ^ counter);
}

double RngStreams::uniform(StreamKind kind, std::uint64_t index, std::uint64_t counter) const {
  return static_cast<double>(key(kind, index, counter) >> 11) * 0x1.0p-53;
}

RngStreams RngStreams::derive(std::uint64_t tag) const {
  return RngStreams(splitmix64(splitmix64(master_) ^ splitmix64(tag + 0x632be59bd9b4e019ULL)));
}

Schedule Schedule::periodic(int period, int phase) {
  if (period < 1) throw PreconditionError("periodic schedule: period must be >= 1");
  if (phase < 0 || phase >= period) throw PreconditionError("periodic schedule: phase must lie in [0, period)");
  return {Kind::periodic, period, phase};
}

namespace {

bool fires(const Schedule& s, double probability, std::int64_t k, double u) {
  switch (s.kind) {
    case Schedule::Kind::always:
      return true;
    case Schedule::Kind::periodic:
      return k % s.period == s.phase;
    case Schedule::Kind::bernoulli:
      return u < probability;
  }
  return true;
}

}  // namespace

EventDraw sample_events(const EventSchedule& schedule, const SporadicityProfile& profile,
                        const Digraph& g, std::int64_t k, const RngStreams& streams) {
  if (k < 0) throw PreconditionError("sample_events: k must be >= 0");
  const int m = g.size();
  const auto counter = static_cast<std::uint64_t>(k);
  EventDraw draw{VectorXd::Zero(m), MatrixXd::Zero(m, m)};
  const bool draw_compute = schedule.compute.kind == Schedule::Kind::bernoulli;
  const bool draw_link = schedule.communicate.kind == Schedule::Kind::bernoulli;
  for (int i = 0; i < m; ++i) {
    const double u = draw_compute ? streams.uniform(StreamKind::compute, std::uint64_t(i), counter) : 0.0;
    draw.v(i) = fires(schedule.compute, profile.p(i), k, u) ? 1.0 : 0.0;
  }
  for (const auto& e : g.edges()) {
    const auto index = std::uint64_t(e.to) * std::uint64_t(m) + std::uint64_t(e.from);
    const double u = draw_link ? streams.uniform(StreamKind::link, index, counter) : 0.0;
    draw.v_hat(e.to, e.from) = fires(schedule.communicate, profile.p_hat(e.to, e.from), k, u) ? 1.0 : 0.0;
  }
  return draw;
}

std::pair<MatrixXd, MatrixXd> realize_matrices(const MixingPair& pair, const EventDraw& draw) {
  const Index m = pair.A.rows();
  if (draw.v_hat.rows() != m || draw.v_hat.cols() != m) {
    throw PreconditionError("realize_matrices: draw does not match the mixing pair");
  }
  MatrixXd A = MatrixXd::Zero(m, m);
  MatrixXd B = MatrixXd::Zero(m, m);
  VectorXd row_mass = VectorXd::Zero(m);
  VectorXd col_mass = VectorXd::Zero(m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < m; ++i) {
      if (i == j || draw.v_hat(i, j) == 0.0) continue;
      A(i, j) = pair.A(i, j);
      B(i, j) = pair.B(i, j);
      row_mass(i) += A(i, j);
      col_mass(j) += B(i, j);
    }
  for (Index i = 0; i < m; ++i) {
    A(i, i) = 1.0 - row_mass(i);
    B(i, i) = 1.0 - col_mass(i);
  }
  return {std::move(A), std::move(B)};
}

SporadicityProfile sample_profile_beta(const Digraph& g, double alpha, double beta, std::uint64_t seed,
                                       double floor) {
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw PreconditionError("sample_profile_beta: alpha and beta must be positive");
  }
  if (!(floor > 0.0) || floor > 1.0) throw PreconditionError("sample_profile_beta: floor must lie in (0, 1]");
  std::mt19937_64 rng(splitmix64(seed ^ 0x5bd1e995ULL));
  std::gamma_distribution<double> ga(alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  auto draw = [&] {
    const double x = ga(rng);
    const double y = gb(rng);
    const double s = x + y;
    const double b = s > 0.0 ? x / s : 0.5;
    return std::clamp(b, floor, 1.0);
  };
  SporadicityProfile prof = SporadicityProfile::ones(g);
  for (int i = 0; i < g.size(); ++i) prof.p(i) = draw();
  for (const auto& e : g.edges()) prof.p_hat(e.to, e.from) = draw();
  return prof;
}

nlohmann::json profile_to_json(const SporadicityProfile& profile) {
  nlohmann::json j;
  j["p"] = std::vector<double>(profile.p.data(), profile.p.data() + profile.p.size());
  auto links = nlohmann::json::array();
  for (Index i = 0; i < profile.p_hat.rows(); ++i)
    for (Index jj = 0; jj < profile.p_hat.cols(); ++jj)
      if (i != jj && profile.p_hat(i, jj) > 0.0) links.push_back({i, jj, profile.p_hat(i, jj)});
  j["p_hat"] = links;
  return j;
}

SporadicityProfile profile_from_json(const nlohmann::json& j, const Digraph& g) {
  SporadicityProfile prof = SporadicityProfile::ones(g);
  const int m = g.size();
  if (!j.contains("p") || !j["p"].is_array() || static_cast<int>(j["p"].size()) != m) {
    throw ConfigError("profile.p: expected an array of " + std::to_string(m) + " probabilities");
  }
  for (int i = 0; i < m; ++i) {
    const double v = j["p"][i].get<double>();
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError("profile.p[" + std::to_string(i) + "]: must lie in (0, 1]");
    prof.p(i) = v;
  }
  if (j.contains("p_hat")) {
    for (const auto& t : j["p_hat"]) {
      if (!t.is_array() || t.size() != 3) throw ConfigError("profile.p_hat: entries must be [i, j, value]");
      const int a = t[0].get<int>();
      const int b = t[1].get<int>();
      const double v = t[2].get<double>();
      if (a < 0 || a >= m || b < 0 || b >= m || a == b || !g.has_edge(b, a)) {
        throw ConfigError("profile.p_hat: (" + std::to_string(a) + ", " + std::to_string(b) +
                          ") is not an edge of the graph");
      }
      if (!(v > 0.0 && v <= 1.0)) throw ConfigError("profile.p_hat: probabilities must lie in (0, 1]");
      prof.p_hat(a, b) = v;
    }
  }
  return prof;
}

}  // namespace spodgt
