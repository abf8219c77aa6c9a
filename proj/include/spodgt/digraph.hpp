#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "spodgt/common.hpp"

namespace spodgt {

/// A directed link `from -> to`. Node `to` receives what `from` sends, so
/// `from` is an in-neighbor of `to`.
struct Edge {
  int from = 0;
  int to = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Client communication graph. Nodes are 0..m-1 and every node carries an
/// implicit self-loop; the stored edge list never contains self-loops.
class Digraph {
 public:
  Digraph() = default;
  /// Throws PreconditionError on out-of-range endpoints. Self-loops in the
  /// input are dropped, duplicates merged.
  Digraph(int m, std::vector<Edge> edges);

  static Digraph complete(int m);
  /// 0 -> 1 -> ... -> m-1 -> 0.
  static Digraph cycle(int m);

  int size() const { return m_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }

  bool has_edge(int from, int to) const;
  /// Nodes j with an edge j -> i, ascending.
  const std::vector<int>& in_neighbors(int i) const { return in_[static_cast<std::size_t>(i)]; }
  /// Nodes j with an edge i -> j, ascending.
  const std::vector<int>& out_neighbors(int i) const { return out_[static_cast<std::size_t>(i)]; }

  friend bool operator==(const Digraph& a, const Digraph& b) {
    return a.m_ == b.m_ && a.edges_ == b.edges_;
  }

 private:
  int m_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> in_;
  std::vector<std::vector<int>> out_;
};

struct GraphMetrics {
  int diameter = 1;      // D(G)
  int edge_utility = 1;  // K(G)
};

/// Random geometric graph on the unit square, every undirected link turned
/// into two directed edges. Attempt `a` places nodes with seed `seed + a`
/// until the result is strongly connected.
Digraph generate_rgg(int m, double radius, std::uint64_t seed, int max_attempts = 1000);

bool is_strongly_connected(const Digraph& g);

/// Diameter and maximal edge utility. For every ordered pair (s, t) the
/// lexicographically smallest shortest path is routed (a BFS walk that always
/// takes the lowest-index neighbor still on a shortest path); the edge
/// utility is the largest number of routed paths sharing one edge.
GraphMetrics metrics(const Digraph& g);

/// The routed path used by `metrics`, as a node sequence from s to t.
std::vector<int> routed_path(const Digraph& g, int s, int t);

/// Edge-list text format: first line `m`, then one `from to` line per
/// directed edge, self-loops omitted.
void write_edge_list(std::ostream& os, const Digraph& g);
Digraph read_edge_list(std::istream& is);
Digraph load_edge_list(const std::string& path);
void save_edge_list(const std::string& path, const Digraph& g);

}  // namespace spodgt
