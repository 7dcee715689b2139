#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "edei/config.hpp"
#include "edei/core.hpp"

namespace edei {

enum class NodeStatus : std::uint8_t { Normal = 0, Incident = 1, Scrapped = 2 };

struct GridPos {
  int x = 0;
  int y = 0;
  bool operator==(const GridPos&) const = default;
};

inline double grid_distance(GridPos a, GridPos b) {
  return std::hypot(static_cast<double>(a.x - b.x), static_cast<double>(a.y - b.y));
}

/// Mutable per-node record. The status field encodes membership in exactly
/// one of the normal / incident / scrapped sets.
struct Node {
  NodeId id;
  std::int64_t assets = 0;
  AssetCategory category = AssetCategory::General;
  NodeStatus status = NodeStatus::Normal;

  bool operator==(const Node&) const = default;
};

struct Edge {
  NodeId a;
  NodeId b;
  double distance = 1.0;
};

/// Physical layout: undirected weighted edges between grid-placed nodes.
/// All-pairs shortest paths are computed once at construction.
class OperationGraph {
 public:
  OperationGraph() = default;

  OperationGraph(int width, int height, std::vector<GridPos> positions, std::vector<Node> nodes,
                 std::vector<Edge> edges)
      : width_(width), height_(height), positions_(std::move(positions)), nodes_(std::move(nodes)),
        edges_(std::move(edges)) {
    const std::size_t n = nodes_.size();
    if (positions_.size() != n) throw ValidationError("operation graph: position count differs from node count");
    for (std::size_t i = 0; i < n; ++i) {
      if (nodes_[i].id.index != i) throw ValidationError("operation graph: node ids must be dense and ordered");
      const auto p = positions_[i];
      if (p.x < 0 || p.x >= width_ || p.y < 0 || p.y >= height_)
        throw ValidationError("operation graph: node " + std::to_string(i) + " lies outside the grid");
    }
    adjacency_.assign(n, {});
    for (const auto& e : edges_) {
      if (e.a.index >= n || e.b.index >= n) throw ValidationError("operation graph: edge references a missing node");
      if (e.a == e.b || !(e.distance > 0.0)) throw ValidationError("operation graph: edge distance must be positive");
      adjacency_[e.a.index].push_back({e.b, e.distance});
      adjacency_[e.b.index].push_back({e.a, e.distance});
    }
    for (auto& adj : adjacency_)
      std::sort(adj.begin(), adj.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    compute_all_pairs();
  }

  std::size_t size() const { return nodes_.size(); }
  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  GridPos position(NodeId id) const { return positions_.at(id.index); }
  const std::vector<GridPos>& positions() const { return positions_; }
  const std::vector<std::pair<NodeId, double>>& neighbors(NodeId id) const { return adjacency_.at(id.index); }

  /// Shortest-path length; kUnreachable for disconnected pairs.
  double distance(NodeId a, NodeId b) const {
    check(a);
    check(b);
    return dist_[a.index * size() + b.index];
  }

  /// Nodes visited after `from` on a shortest path to `to` (ends with `to`).
  /// Empty when from == to or `to` is unreachable.
  std::vector<NodeId> path(NodeId from, NodeId to) const {
    check(from);
    check(to);
    std::vector<NodeId> out;
    if (from == to || dist_[from.index * size() + to.index] == kUnreachable) return out;
    const std::int32_t* parent = &parent_[from.index * size()];
    for (std::int32_t v = static_cast<std::int32_t>(to.index); v != static_cast<std::int32_t>(from.index); v = parent[v])
      out.push_back(NodeId(static_cast<std::uint32_t>(v)));
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  void check(NodeId id) const {
    if (id.index >= size()) throw std::out_of_range("node id " + std::to_string(id.index) + " out of range");
  }

  // Dijkstra from every source. Ties between equal-length routes go to the
  // lower predecessor id so paths are deterministic.
  void compute_all_pairs() {
    const std::size_t n = size();
    dist_.assign(n * n, kUnreachable);
    parent_.assign(n * n, -1);
    using Item = std::pair<double, std::uint32_t>;
    for (std::size_t s = 0; s < n; ++s) {
      double* d = &dist_[s * n];
      std::int32_t* par = &parent_[s * n];
      std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
      d[s] = 0.0;
      par[s] = static_cast<std::int32_t>(s);
      pq.push({0.0, static_cast<std::uint32_t>(s)});
      while (!pq.empty()) {
        auto [du, u] = pq.top();
        pq.pop();
        if (du > d[u]) continue;
        for (const auto& [v, w] : adjacency_[u]) {
          const double nd = du + w;
          if (nd < d[v.index] - 1e-12) {
            d[v.index] = nd;
            par[v.index] = static_cast<std::int32_t>(u);
            pq.push({nd, v.index});
          } else if (std::abs(nd - d[v.index]) <= 1e-12 && static_cast<std::int32_t>(u) < par[v.index]) {
            par[v.index] = static_cast<std::int32_t>(u);
          }
        }
      }
    }
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<GridPos> positions_;
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::pair<NodeId, double>>> adjacency_;
  std::vector<double> dist_;
  std::vector<std::int32_t> parent_;
};

inline double shortest_distance(const OperationGraph& g, NodeId a, NodeId b) { return g.distance(a, b); }

struct SpreadEdge {
  NodeId from;
  NodeId to;
  double base_rate = 0.0;
};

/// Directed hazard-propagation graph over the operation graph's node ids.
class SpreadGraph {
 public:
  SpreadGraph() = default;

  SpreadGraph(std::size_t node_count, std::vector<SpreadEdge> edges) : n_(node_count), edges_(std::move(edges)) {
    incoming_.assign(n_, {});
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      const auto& e = edges_[k];
      if (e.from.index >= n_ || e.to.index >= n_) throw ValidationError("spread graph: edge references a missing node");
      if (e.from == e.to) throw ValidationError("spread graph: self loop");
      if (!(e.base_rate >= 0.0 && e.base_rate <= 1.0)) throw ValidationError("spread graph: base rate outside [0,1]");
      incoming_[e.to.index].push_back(k);
    }
  }

  std::size_t size() const { return n_; }
  const std::vector<SpreadEdge>& edges() const { return edges_; }
  /// Edge indices ending at `to`, in insertion order.
  const std::vector<std::size_t>& incoming(NodeId to) const { return incoming_.at(to.index); }

 private:
  std::size_t n_ = 0;
  std::vector<SpreadEdge> edges_;
  std::vector<std::vector<std::size_t>> incoming_;
};

struct Graphs {
  OperationGraph operation;
  SpreadGraph spread;
};

/// Spread edges when the scenario does not list them: each node reaches its
/// k nearest grid neighbours, plus a long-range "pipeline" edge to any other
/// node with probability p_extra.
inline std::vector<SpreadEdge> generate_spread_edges(const ScenarioConfig& c) {
  const std::size_t n = c.nodes.size();
  const auto& s = c.spread;
  Rng rng(s.seed);
  std::vector<SpreadEdge> out;
  std::vector<char> linked(n * n, 0);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    const GridPos pi{c.nodes[i].x, c.nodes[i].y};
    for (std::size_t j = 0; j < n; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return grid_distance(pi, {c.nodes[a].x, c.nodes[a].y}) < grid_distance(pi, {c.nodes[b].x, c.nodes[b].y});
    });
    int taken = 0;
    for (std::size_t j : order) {
      if (taken >= s.k_nearest) break;
      if (j == i) continue;
      out.push_back({NodeId(i), NodeId(j), rng.uniform(s.neighbor_rate_min, s.neighbor_rate_max)});
      linked[i * n + j] = 1;
      ++taken;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double draw = rng.uniform();
      if (linked[i * n + j] || draw >= s.p_extra) continue;
      out.push_back({NodeId(i), NodeId(j), rng.uniform(s.pipeline_rate_min, s.pipeline_rate_max)});
      linked[i * n + j] = 1;
    }
  }
  return out;
}

/// Builds the operation and spread graphs described by a scenario.
inline Graphs build_graphs(const ScenarioConfig& c) {
  validate(c);
  const std::size_t n = c.nodes.size();
  std::vector<GridPos> positions;
  std::vector<Node> nodes;
  positions.reserve(n);
  nodes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    positions.push_back({c.nodes[i].x, c.nodes[i].y});
    nodes.push_back({NodeId(i), c.nodes[i].assets, c.nodes[i].category, NodeStatus::Normal});
  }
  std::vector<Edge> edges;
  edges.reserve(c.edges.size());
  for (const auto& e : c.edges) {
    const GridPos pa = positions[e.a], pb = positions[e.b];
    const double d = e.distance ? *e.distance : static_cast<double>(std::abs(pa.x - pb.x) + std::abs(pa.y - pb.y));
    edges.push_back({NodeId(e.a), NodeId(e.b), d});
  }
  std::vector<SpreadEdge> spread;
  if (c.spread.edges) {
    for (const auto& e : *c.spread.edges) spread.push_back({NodeId(e.from), NodeId(e.to), e.base_rate});
  } else {
    spread = generate_spread_edges(c);
  }
  return {OperationGraph(c.width, c.height, std::move(positions), std::move(nodes), std::move(edges)),
          SpreadGraph(n, std::move(spread))};
}

/// Canonical text form used for determinism comparisons.
inline std::string serialize(const Graphs& g) {
  std::ostringstream os;
  os.precision(17);
  os << "grid " << g.operation.width() << ' ' << g.operation.height() << '\n';
  for (std::size_t i = 0; i < g.operation.size(); ++i) {
    const auto& nd = g.operation.nodes()[i];
    const auto p = g.operation.positions()[i];
    os << "node " << i << ' ' << p.x << ' ' << p.y << ' ' << nd.assets << ' ' << static_cast<int>(nd.category) << ' '
       << static_cast<int>(nd.status) << '\n';
  }
  for (const auto& e : g.operation.edges()) os << "edge " << e.a.index << ' ' << e.b.index << ' ' << e.distance << '\n';
  for (const auto& e : g.spread.edges())
    os << "spread " << e.from.index << ' ' << e.to.index << ' ' << e.base_rate << '\n';
  return os.str();
}

/// Relocates every asset at `from` onto `to`. Total assets are conserved.
inline void move_assets(std::vector<Node>& nodes, NodeId from, NodeId to) {
  if (from.index >= nodes.size() || to.index >= nodes.size()) throw ActionRejected("move_assets: unknown node");
  if (from == to) throw ActionRejected("move_assets: source and destination are the same node");
  Node& src = nodes[from.index];
  Node& dst = nodes[to.index];
  if (src.assets <= 0) throw ActionRejected("move_assets: no assets at node " + std::to_string(from.index));
  if (dst.status == NodeStatus::Scrapped)
    throw ActionRejected("move_assets: destination node " + std::to_string(to.index) + " is scrapped");
  dst.assets += src.assets;
  src.assets = 0;
}

}  // namespace edei
