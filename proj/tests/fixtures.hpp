#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "edei/edei.hpp"

namespace edei::testing {

// Four nodes in a row with spread edges v1->v3, v1->v4, v2->v3, v2->v4.
// With v1 and v2 burning at kFig2Severity the edge probabilities are
// 0.7, 0.8, 0.7 and 0.9.
inline constexpr double kFig2Severity = 0.95;

inline ScenarioConfig fig2_config() {
  ScenarioConfig c;
  c.name = "fig2";
  c.width = 4;
  c.height = 1;
  for (int i = 0; i < 4; ++i) c.nodes.push_back({i, 0, 10 * (i + 1), AssetCategory::General});
  c.edges = {{0, 1, std::nullopt}, {1, 2, std::nullopt}, {2, 3, std::nullopt}};
  c.spread.edges = std::vector<SpreadEdgeSpec>{{0, 2, 0.7 / kFig2Severity},
                                               {0, 3, 0.8 / kFig2Severity},
                                               {1, 2, 0.7 / kFig2Severity},
                                               {1, 3, 0.9 / kFig2Severity}};
  c.agent_starts = {0};
  c.t_max = 10;
  return c;
}

/// Nodes v1 and v2 burning at kFig2Severity, v3 and v4 normal.
inline Hazard fig2_hazard(const Graphs& g) {
  Hazard h = make_hazard(HazardParams{}, g.operation.nodes());
  ignite(h, NodeId(0));
  ignite(h, NodeId(1));
  h.severity[0] = h.severity[1] = kFig2Severity;
  return h;
}

/// Connected random layout: a random spanning tree plus extra edges.
inline ScenarioConfig random_config(std::uint64_t seed, std::size_t n, std::size_t agents = 2) {
  Rng rng(seed);
  ScenarioConfig c;
  c.name = "random" + std::to_string(seed);
  c.seed = seed;
  c.width = 2 * static_cast<int>(n);
  c.height = 2 * static_cast<int>(n);
  std::vector<std::pair<int, int>> cells;
  for (int x = 0; x < c.width; ++x)
    for (int y = 0; y < c.height; ++y) cells.push_back({x, y});
  for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cat = static_cast<AssetCategory>(rng.below(kAssetCategoryCount));
    c.nodes.push_back({cells[i].first, cells[i].second, static_cast<std::int64_t>(rng.below(100)), cat});
  }
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  auto link = [&](std::uint32_t a, std::uint32_t b, std::optional<double> d) {
    if (a == b || !seen.insert({std::min(a, b), std::max(a, b)}).second) return;
    c.edges.push_back({a, b, d});
  };
  for (std::uint32_t i = 1; i < n; ++i) link(i, static_cast<std::uint32_t>(rng.below(i)), std::nullopt);
  for (std::size_t k = 0; k < n; ++k)
    link(static_cast<std::uint32_t>(rng.below(n)), static_cast<std::uint32_t>(rng.below(n)), 1.0 + rng.below(5));
  c.spread.seed = derive_seed(seed, 1);
  std::vector<std::uint32_t> pool(n);
  for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
  const std::size_t jobs = n / 2;
  for (std::size_t k = 0; k < jobs; ++k)
    c.assignments.push_back({pool[k], 5 + static_cast<int>(rng.below(40)), c.nodes[pool[k]].assets});
  for (std::size_t a = 0; a < agents; ++a) c.agent_starts.push_back(pool[(jobs + a) % n]);
  c.initial_incidents = {pool[n - 1]};
  c.t_max = 60;
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("edei_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace edei::testing
