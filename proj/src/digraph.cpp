#include "spodgt/digraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <random>
#include <sstream>

namespace spodgt {

Digraph::Digraph(int m, std::vector<Edge> edges) : m_(m) {
  if (m < 1) throw PreconditionError("Digraph: m must be >= 1, got " + std::to_string(m));
  std::erase_if(edges, [](const Edge& e) { return e.from == e.to; });
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= m || e.to < 0 || e.to >= m) {
      throw PreconditionError("Digraph: edge (" + std::to_string(e.from) + ", " +
                              std::to_string(e.to) + ") out of range for m=" + std::to_string(m));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);

  in_.assign(static_cast<std::size_t>(m), {});
  out_.assign(static_cast<std::size_t>(m), {});
  for (const auto& e : edges_) {
    out_[static_cast<std::size_t>(e.from)].push_back(e.to);
    in_[static_cast<std::size_t>(e.to)].push_back(e.from);
  }
  for (auto& v : in_) std::sort(v.begin(), v.end());
}

Digraph Digraph::complete(int m) {
  std::vector<Edge> edges;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (i != j) edges.push_back({i, j});
  return Digraph(m, std::move(edges));
}

Digraph Digraph::cycle(int m) {
  std::vector<Edge> edges;
  for (int i = 0; i < m; ++i) edges.push_back({i, (i + 1) % m});
  return Digraph(m, std::move(edges));
}

bool Digraph::has_edge(int from, int to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

namespace {

std::vector<int> bfs_distances(const Digraph& g, int source, bool reverse) {
  std::vector<int> dist(static_cast<std::size_t>(g.size()), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(source)] = 0;
  q.push(source);
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    const auto& next = reverse ? g.in_neighbors(u) : g.out_neighbors(u);
    for (int v : next) {
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

}  // namespace

bool is_strongly_connected(const Digraph& g) {
  if (g.size() <= 1) return true;
  auto reached = [](const std::vector<int>& d) {
    return std::all_of(d.begin(), d.end(), [](int x) { return x >= 0; });
  };
  return reached(bfs_distances(g, 0, false)) && reached(bfs_distances(g, 0, true));
}

Digraph generate_rgg(int m, double radius, std::uint64_t seed, int max_attempts) {
  if (m < 1) throw PreconditionError("generate_rgg: m must be >= 1");
  if (!(radius > 0.0)) throw PreconditionError("generate_rgg: radius must be positive");
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(attempt));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::pair<double, double>> pos(static_cast<std::size_t>(m));
    for (auto& p : pos) {
      p.first = unit(rng);
      p.second = unit(rng);
    }
    std::vector<Edge> edges;
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        const auto& a = pos[static_cast<std::size_t>(i)];
        const auto& b = pos[static_cast<std::size_t>(j)];
        if (std::hypot(a.first - b.first, a.second - b.second) <= radius) {
          edges.push_back({i, j});
          edges.push_back({j, i});
        }
      }
    }
    Digraph g(m, std::move(edges));
    if (is_strongly_connected(g)) return g;
  }
  std::ostringstream msg;
  msg << "generate_rgg: no strongly connected graph for m=" << m << " radius=" << radius
      << " after " << max_attempts << " attempts";
  throw GenerationError(msg.str());
}

std::vector<int> routed_path(const Digraph& g, int s, int t) {
  // Distances to t along reversed edges; walk greedily from s.
  auto to_t = bfs_distances(g, t, true);
  if (to_t[static_cast<std::size_t>(s)] < 0) throw PreconditionError("routed_path: t unreachable from s");
  std::vector<int> path{s};
  int u = s;
  while (u != t) {
    const int want = to_t[static_cast<std::size_t>(u)] - 1;
    for (int v : g.out_neighbors(u)) {
      if (to_t[static_cast<std::size_t>(v)] == want) {
        u = v;
        break;
      }
    }
    path.push_back(u);
  }
  return path;
}

GraphMetrics metrics(const Digraph& g) {
  const int m = g.size();
  if (m == 1) return {1, 1};
  if (!is_strongly_connected(g)) throw PreconditionError("metrics: graph is not strongly connected");

  GraphMetrics out{0, 0};
  for (int s = 0; s < m; ++s) {
    auto d = bfs_distances(g, s, false);
    out.diameter = std::max(out.diameter, *std::max_element(d.begin(), d.end()));
  }

  std::map<Edge, int> usage;
  for (int t = 0; t < m; ++t) {
    auto to_t = bfs_distances(g, t, true);
    for (int s = 0; s < m; ++s) {
      if (s == t) continue;
      int u = s;
      while (u != t) {
        const int want = to_t[static_cast<std::size_t>(u)] - 1;
        int next = -1;
        for (int v : g.out_neighbors(u)) {
          if (to_t[static_cast<std::size_t>(v)] == want) {
            next = v;
            break;
          }
        }
        ++usage[Edge{u, next}];
        u = next;
      }
    }
  }
  for (const auto& [e, count] : usage) out.edge_utility = std::max(out.edge_utility, count);
  return out;
}

void write_edge_list(std::ostream& os, const Digraph& g) {
  os << g.size() << '\n';
  for (const auto& e : g.edges()) os << e.from << ' ' << e.to << '\n';
}

Digraph read_edge_list(std::istream& is) {
  int m = 0;
  if (!(is >> m)) throw ConfigError("graph file: missing node count on first line");
  std::vector<Edge> edges;
  int a = 0;
  int b = 0;
  while (is >> a >> b) edges.push_back({a, b});
  if (!is.eof()) throw ConfigError("graph file: malformed edge line");
  return Digraph(m, std::move(edges));
}

Digraph load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("graph file: cannot open '" + path + "'");
  return read_edge_list(in);
}

void save_edge_list(const std::string& path, const Digraph& g) {
  std::ofstream out(path);
  if (!out) throw ConfigError("graph file: cannot write '" + path + "'");
  write_edge_list(out, g);
}

}  // namespace spodgt
