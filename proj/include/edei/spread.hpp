#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "edei/config.hpp"
#include "edei/core.hpp"
#include "edei/graph.hpp"

namespace edei {

struct HazardParams {
  double tau = 1.0;
  double growth_rate = 0.2;
  double seed_severity = 0.1;
  double suppression_per_agent = 0.25;

  static HazardParams from(const SpreadSpec& s) {
    return {s.tau, s.growth_rate, s.seed_fraction * s.tau, s.suppression_fraction * s.tau};
  }
};

/// Node records together with their incident severities f_i(t).
///
/// Invariants: 0 <= severity[i] <= tau; severity is 0 for Normal nodes and
/// tau for Scrapped nodes; Scrapped nodes hold no assets.
struct Hazard {
  HazardParams params;
  std::vector<Node> nodes;
  std::vector<double> severity;

  std::size_t size() const { return nodes.size(); }
  NodeStatus status(NodeId i) const { return nodes[i.index].status; }
  bool incident(NodeId i) const { return nodes[i.index].status == NodeStatus::Incident; }

  std::vector<NodeId> incident_nodes() const {
    std::vector<NodeId> out;
    for (const auto& nd : nodes)
      if (nd.status == NodeStatus::Incident) out.push_back(nd.id);
    return out;
  }

  bool operator==(const Hazard& o) const { return nodes == o.nodes && severity == o.severity; }
};

inline Hazard make_hazard(const HazardParams& params, const std::vector<Node>& nodes) {
  return {params, nodes, std::vector<double>(nodes.size(), 0.0)};
}

/// Marks a Normal node as burning at the seed severity. Returns false if the
/// node was not Normal.
inline bool ignite(Hazard& h, NodeId i) {
  Node& nd = h.nodes.at(i.index);
  if (nd.status != NodeStatus::Normal) return false;
  nd.status = NodeStatus::Incident;
  h.severity[i.index] = h.params.seed_severity;
  return true;
}

struct SeverityUpdate {
  std::vector<NodeId> scrapped;
  std::vector<NodeId> recovered;
};

/// Advances severities one step. Unsuppressed incidents grow by (1+beta) and
/// are scrapped on reaching tau; suppressed incidents lose `suppression[i]`
/// and return to Normal at zero.
inline SeverityUpdate severity_step(Hazard& h, std::span<const double> suppression) {
  if (suppression.size() != h.size()) throw ShapeError("severity_step: suppression vector has wrong length");
  for (double s : suppression)
    if (s < 0.0) throw ActionRejected("severity_step: negative suppression");

  const double tau = h.params.tau;
  SeverityUpdate out;
  for (std::size_t i = 0; i < h.size(); ++i) {
    Node& nd = h.nodes[i];
    if (nd.status != NodeStatus::Incident) continue;
    double& f = h.severity[i];
    if (suppression[i] > 0.0) {
      f = std::max(0.0, f - suppression[i]);
      if (f <= 1e-12 * tau) {
        f = 0.0;
        nd.status = NodeStatus::Normal;
        out.recovered.push_back(nd.id);
      }
    } else {
      f = std::min(tau, f * (1.0 + h.params.growth_rate));
      if (f >= tau) {
        f = tau;
        nd.status = NodeStatus::Scrapped;
        nd.assets = 0;
        out.scrapped.push_back(nd.id);
      }
    }
  }
  return out;
}

/// g_j(f_i): spread probability along one edge at source severity f.
inline double spread_probability(double severity, double base_rate, double tau) {
  return std::clamp(base_rate * severity / tau, 0.0, 1.0);
}

/// P_j = 1 - prod(1 - g_ij): chance that at least one independent source ignites j.
inline double superpose(std::span<const double> incoming) {
  double survive = 1.0;
  for (double g : incoming) survive *= 1.0 - g;
  return 1.0 - survive;
}

/// Dense n x n matrix: severities on the diagonal, g_ij off the diagonal.
struct SpreadMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
};

/// Only Incident sources spread; scrapped nodes have burnt out.
inline SpreadMatrix build_spread_matrix(const SpreadGraph& g, const Hazard& h) {
  const std::size_t n = h.size();
  SpreadMatrix m{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) m(i, i) = h.severity[i];
  for (const auto& e : g.edges()) {
    if (!h.incident(e.from)) continue;
    m(e.from.index, e.to.index) = spread_probability(h.severity[e.from.index], e.base_rate, h.params.tau);
  }
  return m;
}

/// Superposed ignition probability of node j under the current hazard.
inline double ignition_probability(const SpreadGraph& g, const Hazard& h, NodeId j) {
  double survive = 1.0;
  for (std::size_t k : g.incoming(j)) {
    const auto& e = g.edges()[k];
    if (!h.incident(e.from)) continue;
    survive *= 1.0 - spread_probability(h.severity[e.from.index], e.base_rate, h.params.tau);
  }
  return 1.0 - survive;
}

/// Samples one step of spreading. Every Normal node ignites independently with
/// its superposed probability; ignitions take effect after all draws.
inline std::vector<NodeId> spread_step(const SpreadGraph& g, Hazard& h, Rng& rng) {
  std::vector<NodeId> ignited;
  for (std::size_t j = 0; j < h.size(); ++j) {
    const NodeId id(j);
    if (h.status(id) != NodeStatus::Normal) continue;
    const double p = ignition_probability(g, h, id);
    if (p > 0.0 && rng.uniform() < p) ignited.push_back(id);
  }
  for (NodeId id : ignited) ignite(h, id);
  return ignited;
}

}  // namespace edei
