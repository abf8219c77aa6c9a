#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include <json.hpp>

#include "spodgt/common.hpp"
#include "spodgt/digraph.hpp"
#include "spodgt/mixing.hpp"

namespace spodgt {

/// Independent random stream families.
enum class StreamKind : std::uint64_t {
  compute = 1,
  link = 2,
  batch = 3,
  init = 4,
  data = 5,
  profile = 6,
  trial = 7,
};

/// Counter-based random streams. A draw is a pure function of
/// (master_seed, kind, index, counter), so iteration k of any stream can be
/// addressed without replaying earlier ones.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t master_seed = 0) : master_(master_seed) {}

  std::uint64_t master_seed() const { return master_; }

  /// 64-bit key: splitmix64 chained over the four coordinates.
  std::uint64_t key(StreamKind kind, std::uint64_t index, std::uint64_t counter) const;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform(StreamKind kind, std::uint64_t index, std::uint64_t counter) const;

  /// Engine seeded from the key, for draws that need more than one number.
  std::mt19937_64 engine(StreamKind kind, std::uint64_t index, std::uint64_t counter) const {
    return std::mt19937_64(key(kind, index, counter));
  }

  /// Child family with an independent master seed.
  RngStreams derive(std::uint64_t tag) const;

 private:
  std::uint64_t master_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// When an event fires.
struct Schedule {
  enum class Kind { bernoulli, periodic, always };
  Kind kind = Kind::always;
  int period = 1;
  int phase = 0;

  static Schedule bernoulli() { return {Kind::bernoulli, 1, 0}; }
  static Schedule always() { return {Kind::always, 1, 0}; }
  static Schedule periodic(int period, int phase = 0);

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct EventSchedule {
  Schedule compute = Schedule::bernoulli();
  Schedule communicate = Schedule::bernoulli();
};

/// One iteration's realized participation: `v(i)` for gradient computation,
/// `v_hat(i, j)` for the link j -> i (zero off the edge set and on the diagonal).
struct EventDraw {
  VectorXd v;
  MatrixXd v_hat;
};

/// Bernoulli events fire iff U < probability, U drawn from the compute
/// stream (index i) or the link stream (index i*m + j) at counter k.
EventDraw sample_events(const EventSchedule& schedule, const SporadicityProfile& profile,
                        const Digraph& g, std::int64_t k, const RngStreams& streams);

/// Realized mixing matrices: off-diagonal weights masked by v_hat, diagonal
/// takes the residual mass (row-wise for A, column-wise for B).
std::pair<MatrixXd, MatrixXd> realize_matrices(const MixingPair& pair, const EventDraw& draw);

/// Every probability i.i.d. Beta(alpha, beta), clamped into [floor, 1].
SporadicityProfile sample_profile_beta(const Digraph& g, double alpha, double beta, std::uint64_t seed,
                                       double floor = 0.05);

nlohmann::json profile_to_json(const SporadicityProfile& profile);
/// Inverse of profile_to_json; edges missing from the file get probability 1.
SporadicityProfile profile_from_json(const nlohmann::json& j, const Digraph& g);

}  // namespace spodgt
