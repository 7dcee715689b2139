#include <gtest/gtest.h>

#include <numeric>

#include "fixtures.hpp"

using namespace edei;
using edei::testing::random_config;

namespace {

std::vector<double> floyd_warshall(const OperationGraph& g) {
  const std::size_t n = g.size();
  std::vector<double> d(n * n, kUnreachable);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0.0;
  for (const auto& e : g.edges()) {
    d[e.a.index * n + e.b.index] = std::min(d[e.a.index * n + e.b.index], e.distance);
    d[e.b.index * n + e.a.index] = std::min(d[e.b.index * n + e.a.index], e.distance);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (d[i * n + k] + d[k * n + j] < d[i * n + j]) d[i * n + j] = d[i * n + k] + d[k * n + j];
  return d;
}

ScenarioConfig line3(double d12, double d23) {
  ScenarioConfig c;
  c.name = "line";
  c.width = 10;
  c.height = 1;
  c.nodes = {{0, 0, 1}, {3, 0, 1}, {7, 0, 1}};
  c.edges = {{0, 1, d12}, {1, 2, d23}};
  c.spread.edges = std::vector<SpreadEdgeSpec>{};
  c.agent_starts = {0};
  c.t_max = 5;
  return c;
}

}  // namespace

TEST(Graph, Fig2TopologyBuildsAsListed) {
  Graphs g = build_graphs(edei::testing::fig2_config());
  ASSERT_EQ(g.operation.size(), 4u);
  ASSERT_EQ(g.spread.size(), 4u);
  ASSERT_EQ(g.spread.edges().size(), 4u);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (const auto& e : g.spread.edges()) pairs.push_back({e.from.index, e.to.index});
  std::vector<std::pair<std::uint32_t, std::uint32_t>> want{{0, 2}, {0, 3}, {1, 2}, {1, 3}};
  EXPECT_EQ(pairs, want);
  EXPECT_EQ(g.spread.incoming(NodeId(2)).size(), 2u);
  EXPECT_TRUE(g.spread.incoming(NodeId(0)).empty());
}

TEST(Graph, SingleNodeHasNoEdges) {
  ScenarioConfig c;
  c.name = "one";
  c.width = c.height = 1;
  c.nodes = {{0, 0, 5}};
  c.agent_starts = {0};
  c.t_max = 1;
  Graphs g = build_graphs(c);
  EXPECT_EQ(g.operation.size(), 1u);
  EXPECT_TRUE(g.operation.edges().empty());
  EXPECT_TRUE(g.spread.edges().empty());
  EXPECT_EQ(g.operation.distance(NodeId(0), NodeId(0)), 0.0);
}

TEST(Graph, BuildIsDeterministic) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto c = random_config(seed, 20);
    c.spread.edges.reset();
    EXPECT_EQ(serialize(build_graphs(c)), serialize(build_graphs(c)));
  }
}

TEST(Graph, DistanceIdentityAndForcedPath) {
  Graphs g = build_graphs(line3(3, 4));
  EXPECT_EQ(shortest_distance(g.operation, NodeId(1), NodeId(1)), 0.0);
  EXPECT_DOUBLE_EQ(shortest_distance(g.operation, NodeId(0), NodeId(2)), 7.0);
  EXPECT_EQ(g.operation.path(NodeId(0), NodeId(2)), (std::vector<NodeId>{NodeId(1), NodeId(2)}));
}

TEST(Graph, ManhattanDefaultLength) {
  auto c = line3(3, 4);
  c.edges[0].distance.reset();
  Graphs g = build_graphs(c);
  EXPECT_DOUBLE_EQ(g.operation.distance(NodeId(0), NodeId(1)), 3.0);
}

TEST(Graph, DisconnectedPairIsUnreachable) {
  auto c = line3(3, 4);
  c.edges.pop_back();
  Graphs g = build_graphs(c);
  EXPECT_EQ(g.operation.distance(NodeId(0), NodeId(2)), kUnreachable);
  EXPECT_TRUE(g.operation.path(NodeId(0), NodeId(2)).empty());
}

TEST(Graph, DistancesMatchFloydWarshall) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Graphs g = build_graphs(random_config(seed, 10));
    const auto fw = floyd_warshall(g.operation);
    const std::size_t n = g.operation.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double d = g.operation.distance(NodeId(i), NodeId(j));
        EXPECT_NEAR(d, fw[i * n + j], 1e-9) << "seed " << seed << " pair " << i << "," << j;
        EXPECT_EQ(d, g.operation.distance(NodeId(j), NodeId(i)));
        if (i != j) EXPECT_GT(d, 0.0);
      }
  }
}

TEST(Graph, PathsFollowEdgesAndHaveShortestLength) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Graphs g = build_graphs(random_config(seed, 12));
    const auto& op = g.operation;
    auto edge_len = [&](NodeId a, NodeId b) {
      double best = kUnreachable;
      for (const auto& [v, w] : op.neighbors(a))
        if (v == b) best = std::min(best, w);
      return best;
    };
    for (std::size_t i = 0; i < op.size(); ++i)
      for (std::size_t j = 0; j < op.size(); ++j) {
        const auto path = op.path(NodeId(i), NodeId(j));
        if (i == j) {
          EXPECT_TRUE(path.empty());
          continue;
        }
        ASSERT_FALSE(path.empty());
        EXPECT_EQ(path.back(), NodeId(j));
        double len = 0.0;
        NodeId at(i);
        for (NodeId next : path) {
          const double w = edge_len(at, next);
          ASSERT_NE(w, kUnreachable);
          len += w;
          at = next;
        }
        EXPECT_NEAR(len, op.distance(NodeId(i), NodeId(j)), 1e-9);
      }
  }
}

TEST(Graph, GeneratedSpreadEdgesRespectRanges) {
  auto c = random_config(7, 30);
  c.spread.edges.reset();
  Graphs g = build_graphs(c);
  std::vector<int> out_degree(30, 0);
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (const auto& e : g.spread.edges()) {
    EXPECT_NE(e.from, e.to);
    EXPECT_TRUE(seen.insert({e.from.index, e.to.index}).second);
    const bool neighbor = e.base_rate >= c.spread.neighbor_rate_min && e.base_rate <= c.spread.neighbor_rate_max;
    const bool pipeline = e.base_rate >= c.spread.pipeline_rate_min && e.base_rate <= c.spread.pipeline_rate_max;
    EXPECT_TRUE(neighbor || pipeline);
    ++out_degree[e.from.index];
  }
  for (int d : out_degree) EXPECT_GE(d, c.spread.k_nearest);
}

TEST(Graph, ValidationNamesTheField) {
  auto c = random_config(1, 6);
  c.edges.push_back({0, 99, std::nullopt});
  c.assignments[0].value = -1;
  try {
    build_graphs(c);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("edges[" + std::to_string(c.edges.size() - 1) + "]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("assignments[0].value"), std::string::npos) << msg;
  }
}

TEST(Graph, ValidationRejectsBadGeometry) {
  auto c = line3(3, 4);
  c.nodes[1].x = 50;
  EXPECT_THROW(build_graphs(c), ValidationError);
  c = line3(3, 4);
  c.nodes[2] = c.nodes[1];
  EXPECT_THROW(build_graphs(c), ValidationError);
  c = line3(3, 4);
  c.edges[0].distance = 0.0;
  EXPECT_THROW(build_graphs(c), ValidationError);
  c = line3(3, 4);
  c.spread.edges = std::vector<SpreadEdgeSpec>{{0, 1, 1.5}};
  EXPECT_THROW(build_graphs(c), ValidationError);
}

TEST(MoveAssets, MovesEverything) {
  std::vector<Node> nodes{{NodeId(0), 100}, {NodeId(1), 0}};
  move_assets(nodes, NodeId(0), NodeId(1));
  EXPECT_EQ(nodes[0].assets, 0);
  EXPECT_EQ(nodes[1].assets, 100);
}

TEST(MoveAssets, RejectsWithoutChange) {
  std::vector<Node> nodes{{NodeId(0), 0}, {NodeId(1), 5}, {NodeId(2), 0, AssetCategory::General, NodeStatus::Scrapped}};
  const auto before = nodes;
  try {
    move_assets(nodes, NodeId(0), NodeId(1));
    FAIL();
  } catch (const ActionRejected& e) {
    EXPECT_NE(std::string(e.what()).find("no assets"), std::string::npos);
  }
  EXPECT_THROW(move_assets(nodes, NodeId(1), NodeId(2)), ActionRejected);
  EXPECT_THROW(move_assets(nodes, NodeId(1), NodeId(1)), ActionRejected);
  EXPECT_EQ(nodes, before);
}

TEST(MoveAssets, RandomSequenceConservesTotal) {
  Rng rng(3);
  std::vector<Node> nodes;
  for (std::uint32_t i = 0; i < 8; ++i) nodes.push_back({NodeId(i), static_cast<std::int64_t>(rng.below(50))});
  nodes[7].status = NodeStatus::Scrapped;
  nodes[7].assets = 0;
  auto total = [&] {
    return std::accumulate(nodes.begin(), nodes.end(), std::int64_t{0}, [](auto s, const Node& n) { return s + n.assets; });
  };
  const auto start = total();
  int moved = 0;
  for (int k = 0; k < 50; ++k) {
    const NodeId a(rng.below(8)), b(rng.below(8));
    try {
      move_assets(nodes, a, b);
      ++moved;
    } catch (const ActionRejected&) {
    }
    EXPECT_EQ(total(), start);
  }
  EXPECT_GT(moved, 0);
}
