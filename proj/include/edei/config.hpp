#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "edei/core.hpp"

namespace edei {

enum class AssetCategory : std::uint8_t { General = 0, Flammable = 1, Support = 2 };

inline constexpr int kAssetCategoryCount = 3;

struct NodeSpec {
  int x = 0;
  int y = 0;
  std::int64_t assets = 0;
  AssetCategory category = AssetCategory::General;

  bool operator==(const NodeSpec&) const = default;
};

/// Undirected operation edge. Without an explicit distance the edge length is
/// the Manhattan distance between the endpoint grid cells.
struct EdgeSpec {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::optional<double> distance;

  bool operator==(const EdgeSpec&) const = default;
};

struct SpreadEdgeSpec {
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  double base_rate = 0.0;

  bool operator==(const SpreadEdgeSpec&) const = default;
};

/// Hazard parameters plus the spread-graph generator used when no explicit
/// edge list is given.
struct SpreadSpec {
  double tau = 1.0;
  double growth_rate = 0.2;
  double seed_fraction = 0.1;         // f_seed = seed_fraction * tau
  double suppression_fraction = 0.25; // per agent per step, times tau
  int k_nearest = 4;
  double p_extra = 0.05;
  double neighbor_rate_min = 0.05;
  double neighbor_rate_max = 0.15;
  double pipeline_rate_min = 0.005;
  double pipeline_rate_max = 0.02;
  std::uint64_t seed = 0;
  std::optional<std::vector<SpreadEdgeSpec>> edges;

  bool operator==(const SpreadSpec&) const = default;
};

struct AssignmentSpec {
  std::uint32_t node = 0;
  int deadline = 0;
  std::int64_t value = 0;

  bool operator==(const AssignmentSpec&) const = default;
};

/// Constants only the evaluation metrics need.
struct MetricConstants {
  double delta_t = 2.0;  // time per primary assignment
  int k_line = 1;        // flow-line segments
  int n_a = 0;           // checked baggage count

  bool operator==(const MetricConstants&) const = default;
};

struct ScenarioConfig {
  std::string name;
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;
  SpreadSpec spread;
  std::vector<AssignmentSpec> assignments;
  std::vector<std::uint32_t> agent_starts;
  std::vector<std::uint32_t> initial_incidents;
  int t_max = 0;
  int completion_time = 2;
  double sensing_radius = 3.0;
  MetricConstants metrics;

  std::size_t agent_count() const { return agent_starts.size(); }

  bool operator==(const ScenarioConfig&) const = default;
};

/// Checks every structural constraint; throws ValidationError naming each
/// offending field.
inline void validate(const ScenarioConfig& c) {
  std::vector<std::string> problems;
  auto fail = [&](std::string field, const std::string& why) {
    problems.push_back(std::move(field) + ": " + why);
  };
  const auto n = static_cast<std::uint32_t>(c.nodes.size());

  if (c.name.empty()) fail("name", "must not be empty");
  if (c.width <= 0) fail("width", "must be positive");
  if (c.height <= 0) fail("height", "must be positive");
  if (c.nodes.empty()) fail("nodes", "at least one node required");
  if (c.t_max <= 0) fail("t_max", "must be positive");
  if (c.completion_time <= 0) fail("completion_time", "must be positive");
  if (!(c.sensing_radius >= 0.0)) fail("sensing_radius", "must be non-negative");

  std::set<std::pair<int, int>> cells;
  for (std::size_t i = 0; i < c.nodes.size(); ++i) {
    const auto& nd = c.nodes[i];
    const std::string f = "nodes[" + std::to_string(i) + "]";
    if (nd.x < 0 || nd.x >= c.width || nd.y < 0 || nd.y >= c.height)
      fail(f, "position outside grid");
    if (nd.assets < 0) fail(f + ".assets", "must be non-negative");
    if (static_cast<int>(nd.category) >= kAssetCategoryCount) fail(f + ".category", "unknown category");
    if (!cells.insert({nd.x, nd.y}).second) fail(f, "duplicate grid position");
  }

  std::set<std::pair<std::uint32_t, std::uint32_t>> seen_edges;
  for (std::size_t i = 0; i < c.edges.size(); ++i) {
    const auto& e = c.edges[i];
    const std::string f = "edges[" + std::to_string(i) + "]";
    if (e.a >= n || e.b >= n) {
      fail(f, "references a missing node");
      continue;
    }
    if (e.a == e.b) fail(f, "self loop");
    if (e.distance && !(*e.distance > 0.0 && std::isfinite(*e.distance)))
      fail(f + ".distance", "must be positive and finite");
    if (!seen_edges.insert({std::min(e.a, e.b), std::max(e.a, e.b)}).second) fail(f, "duplicate edge");
  }

  const auto& s = c.spread;
  if (!(s.tau > 0.0)) fail("spread.tau", "must be positive");
  if (!(s.growth_rate > 0.0)) fail("spread.growth_rate", "must be positive");
  if (!(s.seed_fraction > 0.0 && s.seed_fraction < 1.0)) fail("spread.seed_fraction", "must be in (0,1)");
  if (!(s.suppression_fraction >= 0.0)) fail("spread.suppression_fraction", "must be non-negative");
  if (s.k_nearest < 0) fail("spread.k_nearest", "must be non-negative");
  if (!(s.p_extra >= 0.0 && s.p_extra <= 1.0)) fail("spread.p_extra", "must be in [0,1]");
  auto check_range = [&](const char* lo_name, double lo, double hi) {
    if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi)) fail(std::string("spread.") + lo_name, "rate range must satisfy 0 <= min <= max <= 1");
  };
  check_range("neighbor_rate_min", s.neighbor_rate_min, s.neighbor_rate_max);
  check_range("pipeline_rate_min", s.pipeline_rate_min, s.pipeline_rate_max);
  if (s.edges) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (std::size_t i = 0; i < s.edges->size(); ++i) {
      const auto& e = (*s.edges)[i];
      const std::string f = "spread.edges[" + std::to_string(i) + "]";
      if (e.from >= n || e.to >= n) fail(f, "references a missing node");
      if (e.from == e.to) fail(f, "self loop");
      if (!(e.base_rate >= 0.0 && e.base_rate <= 1.0)) fail(f + ".base_rate", "must be in [0,1]");
      if (!seen.insert({e.from, e.to}).second) fail(f, "duplicate edge");
    }
  }

  std::set<std::uint32_t> assignment_nodes;
  for (std::size_t i = 0; i < c.assignments.size(); ++i) {
    const auto& a = c.assignments[i];
    const std::string f = "assignments[" + std::to_string(i) + "]";
    if (a.node >= n) fail(f + ".node", "references a missing node");
    if (a.deadline < 0) fail(f + ".deadline", "must be non-negative");
    if (a.value < 0) fail(f + ".value", "must be non-negative");
    if (!assignment_nodes.insert(a.node).second) fail(f + ".node", "node already has an assignment");
  }

  if (c.agent_starts.empty()) fail("agent_starts", "at least one agent required");
  for (std::size_t i = 0; i < c.agent_starts.size(); ++i)
    if (c.agent_starts[i] >= n) fail("agent_starts[" + std::to_string(i) + "]", "references a missing node");

  std::set<std::uint32_t> incident_nodes;
  for (std::size_t i = 0; i < c.initial_incidents.size(); ++i) {
    const std::string f = "initial_incidents[" + std::to_string(i) + "]";
    if (c.initial_incidents[i] >= n) fail(f, "references a missing node");
    if (!incident_nodes.insert(c.initial_incidents[i]).second) fail(f, "duplicate node");
  }

  if (!(c.metrics.delta_t > 0.0)) fail("metrics.delta_t", "must be positive");
  if (c.metrics.k_line < 1) fail("metrics.k_line", "must be at least 1");
  if (c.metrics.n_a < 0) fail("metrics.n_a", "must be non-negative");

  if (!problems.empty()) {
    std::string msg = "invalid scenario '" + c.name + "':";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
}

}  // namespace edei
