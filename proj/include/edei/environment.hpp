#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "edei/assignments.hpp"
#include "edei/config.hpp"
#include "edei/core.hpp"
#include "edei/graph.hpp"
#include "edei/spread.hpp"

namespace edei {

struct Prediction {
  NodeId node;
  double probability = 0.0;
  bool operator==(const Prediction&) const = default;
};

/// Nodes expected to be burning next step, sorted by node id.
using PredictionSet = std::vector<Prediction>;

inline std::optional<double> find_prediction(const PredictionSet& set, NodeId node) {
  auto it = std::lower_bound(set.begin(), set.end(), node, [](const Prediction& p, NodeId n) { return p.node < n; });
  if (it == set.end() || it->node != node) return std::nullopt;
  return it->probability;
}

/// What one agent believes about the team's situation. After
/// perceive_and_share every agent holds an identical copy.
struct SharedView {
  std::vector<char> known_incident;  // per node
  std::vector<char> completed;       // per assignment (queue order)
  PredictionSet prediction;
  std::vector<NodeId> targets;       // broadcast target per agent

  bool operator==(const SharedView&) const = default;
};

struct AgentState {
  NodeId position;
  NodeId target;
  std::vector<NodeId> path;  // remaining hops after next_hop
  NodeId next_hop;
  int cells_left = 0;        // cells still to travel towards next_hop
  int completions = 0;
  bool served_assignment = false;
  bool switched_duty = false;

  bool at_target() const { return cells_left == 0 && position == target; }
  bool operator==(const AgentState&) const = default;
};

struct WorldState {
  int t = 0;
  Hazard hazard;
  AssignmentLog log;
  std::vector<int> completed_by;  // per assignment, -1 if not done
  std::vector<AgentState> agents;
  std::vector<SharedView> views;
  PredictionSet prediction;       // shared forecast for the next step
  Rng rng;                        // spread sampling
  Rng tie_rng;                    // urgency tie-breaks
  double remaining_value = 0.0;   // W_r after the previous step

  bool operator==(const WorldState& o) const {
    return t == o.t && hazard == o.hazard && log == o.log && completed_by == o.completed_by && agents == o.agents &&
           views == o.views && prediction == o.prediction && rng == o.rng && tie_rng == o.tie_rng &&
           remaining_value == o.remaining_value;
  }
};

/// Static, validated scenario data shared by every episode.
struct Scene {
  ScenarioConfig config;
  OperationGraph graph;
  SpreadGraph spread;
  HazardParams hazard;
  double asset_scale = 1.0;
  std::vector<NodeId> support_nodes;

  explicit Scene(ScenarioConfig c) : config(std::move(c)) {
    Graphs g = build_graphs(config);
    graph = std::move(g.operation);
    spread = std::move(g.spread);
    hazard = HazardParams::from(config.spread);
    for (const auto& nd : graph.nodes()) {
      asset_scale = std::max(asset_scale, static_cast<double>(nd.assets));
      if (nd.category == AssetCategory::Support) support_nodes.push_back(nd.id);
    }
  }

  std::size_t node_count() const { return graph.size(); }
  std::size_t agent_count() const { return config.agent_count(); }
};

/// Hook through which a forecasting model publishes the next-step incident set.
class IncidentForecaster {
 public:
  virtual ~IncidentForecaster() = default;
  virtual void reset(const Scene& scene, const WorldState& state) = 0;
  virtual PredictionSet forecast(const Scene& scene, const WorldState& state) = 0;
};

using JointAction = std::vector<NodeId>;

inline std::vector<char> known_incidents(const WorldState& s) {
  return s.views.empty() ? std::vector<char>(s.hazard.size(), 0) : s.views.front().known_incident;
}

/// Targets an agent may choose: pending assignment nodes plus known incident
/// nodes, or just its own position when there is nothing to do.
inline std::vector<NodeId> valid_actions(const Scene& scene, const WorldState& s, std::size_t agent) {
  const std::size_t n = scene.node_count();
  const auto& view = s.views.at(agent);
  std::vector<char> mark(n, 0);
  for (NodeId p : s.log.pending_nodes()) mark[p.index] = 1;
  for (std::size_t i = 0; i < n; ++i)
    if (view.known_incident[i]) mark[i] = 1;
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < n; ++i)
    if (mark[i]) out.push_back(NodeId(i));
  if (out.empty()) out.push_back(s.agents.at(agent).position);
  return out;
}

inline std::vector<char> action_mask(const Scene& scene, const WorldState& s, std::size_t agent) {
  std::vector<char> mask(scene.node_count(), 0);
  for (NodeId id : valid_actions(scene, s, agent)) mask[id.index] = 1;
  return mask;
}

/// Local sensing within the sensing radius followed by a broadcast merge:
/// incident sightings, completions, targets and the forecast end up identical
/// in every agent's view.
inline void perceive_and_share(const Scene& scene, WorldState& s, IncidentForecaster* forecaster) {
  const std::size_t n = scene.node_count();
  const double radius = scene.config.sensing_radius;
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    SharedView& v = s.views[a];
    const GridPos here = scene.graph.position(s.agents[a].position);
    for (std::size_t i = 0; i < n; ++i) {
      const bool burning = s.hazard.incident(NodeId(i));
      if (v.known_incident[i] && !burning) v.known_incident[i] = 0;
      if (burning && grid_distance(here, scene.graph.position(NodeId(i))) <= radius + 1e-9) v.known_incident[i] = 1;
    }
    for (std::size_t j = 0; j < s.log.size(); ++j)
      if (s.completed_by[j] == static_cast<int>(a)) v.completed[j] = 1;
  }

  SharedView merged = s.views.front();
  for (const auto& v : s.views) {
    for (std::size_t i = 0; i < n; ++i) merged.known_incident[i] |= v.known_incident[i];
    for (std::size_t j = 0; j < merged.completed.size(); ++j) merged.completed[j] |= v.completed[j];
  }
  merged.targets.clear();
  for (const auto& ag : s.agents) merged.targets.push_back(ag.target);
  for (auto& v : s.views) v = merged;

  PredictionSet forecast;
  if (forecaster) forecast = forecaster->forecast(scene, s);
  for (auto& v : s.views) v.prediction = forecast;
  s.prediction = std::move(forecast);
}

inline int steps_remaining(const Assignment& a, int t) { return std::max(1, a.deadline - t); }

struct SuccessTerms {
  double predicted_burning = 0.0;  // case 1
  double predicted_pending = 0.0;  // case 2
  double pending = 0.0;            // case 3
  double completed = 0.0;          // case 4
  double total() const { return predicted_burning + predicted_pending + pending + completed; }
};

/// Completion reward W_succ, split by case.
inline SuccessTerms reward_success_terms(const Scene& scene, const WorldState& s) {
  SuccessTerms out;
  const double tau = s.hazard.params.tau;
  for (const auto& a : s.log.items()) {
    const double w = static_cast<double>(a.value);
    if (a.status == AssignmentStatus::Done) {
      out.completed += w;
      continue;
    }
    if (is_terminal(a.status)) continue;
    const double f = s.hazard.severity[a.node.index];
    const auto g = find_prediction(s.prediction, a.node);
    const NodeStatus st = s.hazard.status(a.node);
    if (g && st == NodeStatus::Incident && f > 0.0 && f < tau) {
      out.predicted_burning += *g * f * w;
    } else if (g && st == NodeStatus::Normal && *g > 0.0) {
      out.predicted_pending += ignition_probability(scene.spread, s.hazard, a.node) * w;
    } else if (!g && st == NodeStatus::Normal) {
      out.pending += w / static_cast<double>(steps_remaining(a, s.t));
    }
  }
  return out;
}

inline double reward_success(const Scene& scene, const WorldState& s) { return reward_success_terms(scene, s).total(); }

/// Picks the node closest to the (0,0) corner of the rank-pair grid built from
/// two orderings of the same node set. Ties go to the larger asset count, then
/// to a uniform draw.
inline NodeId most_urgent(std::span<const NodeId> first, std::span<const NodeId> second,
                          const std::function<std::int64_t(NodeId)>& assets, Rng& rng) {
  if (first.empty() || first.size() != second.size()) throw ShapeError("most_urgent: orderings must be non-empty and equal length");
  std::vector<std::pair<NodeId, std::size_t>> rank2;
  rank2.reserve(second.size());
  for (std::size_t r = 0; r < second.size(); ++r) rank2.push_back({second[r], r});
  std::sort(rank2.begin(), rank2.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::size_t best_d2 = SIZE_MAX;
  std::vector<NodeId> best;
  for (std::size_t r1 = 0; r1 < first.size(); ++r1) {
    auto it = std::lower_bound(rank2.begin(), rank2.end(), first[r1], [](const auto& p, NodeId id) { return p.first < id; });
    if (it == rank2.end() || it->first != first[r1]) throw ShapeError("most_urgent: orderings cover different nodes");
    const std::size_t d2 = r1 * r1 + it->second * it->second;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = {first[r1]};
    } else if (d2 == best_d2) {
      best.push_back(first[r1]);
    }
  }
  if (best.size() > 1) {
    std::int64_t top = INT64_MIN;
    for (NodeId id : best) top = std::max(top, assets(id));
    std::erase_if(best, [&](NodeId id) { return assets(id) != top; });
  }
  if (best.size() == 1) return best.front();
  std::sort(best.begin(), best.end());
  return best[rng.below(best.size())];
}

struct UrgencyRanking {
  std::vector<NodeId> by_deadline;  // ascending deadline
  std::vector<NodeId> by_severity;  // descending severity
  std::vector<NodeId> by_distance;  // ascending distance from the agent
  NodeId deadline_severity;
  NodeId deadline_distance;
  NodeId distance_severity;
};

inline double clamped_distance(const Scene& scene, NodeId a, NodeId b) {
  return std::max(1.0, scene.graph.distance(a, b));
}

/// The three urgency orderings of the pending set and the most urgent node of
/// each pairing. Empty when nothing is pending.
inline std::optional<UrgencyRanking> urgency_rankings(const Scene& scene, const WorldState& s, std::size_t agent, Rng& rng) {
  std::vector<NodeId> pending = s.log.pending_nodes();
  if (pending.empty()) return std::nullopt;
  const NodeId here = s.agents.at(agent).position;
  auto deadline = [&](NodeId id) { return s.log[*s.log.find(id)].deadline; };
  auto severity = [&](NodeId id) { return s.hazard.severity[id.index]; };
  auto distance = [&](NodeId id) { return scene.graph.distance(here, id); };

  UrgencyRanking r;
  r.by_deadline = pending;
  std::stable_sort(r.by_deadline.begin(), r.by_deadline.end(), [&](NodeId a, NodeId b) {
    return deadline(a) != deadline(b) ? deadline(a) < deadline(b) : a < b;
  });
  r.by_severity = pending;
  std::stable_sort(r.by_severity.begin(), r.by_severity.end(), [&](NodeId a, NodeId b) {
    return severity(a) != severity(b) ? severity(a) > severity(b) : a < b;
  });
  r.by_distance = pending;
  std::stable_sort(r.by_distance.begin(), r.by_distance.end(), [&](NodeId a, NodeId b) {
    return distance(a) != distance(b) ? distance(a) < distance(b) : a < b;
  });
  auto assets = [&](NodeId id) { return s.hazard.nodes[id.index].assets; };
  r.deadline_severity = most_urgent(r.by_deadline, r.by_severity, assets, rng);
  r.deadline_distance = most_urgent(r.by_deadline, r.by_distance, assets, rng);
  r.distance_severity = most_urgent(r.by_distance, r.by_severity, assets, rng);
  return r;
}

struct SpreadTerms {
  double deadline_severity = 0.0;
  double deadline_distance = 0.0;
  double distance_severity = 0.0;
  double total() const { return deadline_severity + deadline_distance + distance_severity; }
};

inline SpreadTerms spread_terms(const Scene& scene, const WorldState& s, std::size_t agent, const UrgencyRanking& r) {
  const NodeId here = s.agents.at(agent).position;
  auto inv_et = [&](NodeId id) { return 1.0 / steps_remaining(s.log[*s.log.find(id)], s.t); };
  auto f = [&](NodeId id) { return s.hazard.severity[id.index]; };
  auto w = [&](NodeId id) { return static_cast<double>(s.hazard.nodes[id.index].assets); };
  auto inv_d = [&](NodeId id) { return 1.0 / clamped_distance(scene, here, id); };
  SpreadTerms t;
  t.deadline_severity = inv_et(r.deadline_severity) * f(r.deadline_severity) * w(r.deadline_severity);
  t.deadline_distance = inv_et(r.deadline_distance) * inv_d(r.deadline_distance) * w(r.deadline_distance);
  t.distance_severity = f(r.distance_severity) * inv_d(r.distance_severity) * w(r.distance_severity);
  return t;
}

/// Spread-urgency penalty W_is for one agent.
inline double reward_spread(const Scene& scene, const WorldState& s, std::size_t agent, Rng& rng) {
  auto r = urgency_rankings(scene, s, agent, rng);
  if (!r) return 0.0;
  return spread_terms(scene, s, agent, *r).total();
}

/// Surviving asset value W_r: nodes neither scrapped nor past a failed deadline.
inline double reward_remaining(const Scene&, const WorldState& s) {
  double total = 0.0;
  for (const auto& nd : s.hazard.nodes) {
    if (nd.status == NodeStatus::Scrapped) continue;
    if (auto i = s.log.find(nd.id); i && s.log[*i].status == AssignmentStatus::Failed) continue;
    total += static_cast<double>(nd.assets);
  }
  return total;
}

struct RewardWeights {
  double success = 0.01;
  double spread = 0.01;
  double remaining = 0.001;
};

struct RewardBreakdown {
  double success = 0.0;
  double spread = 0.0;        // averaged over agents
  double remaining = 0.0;
  double remaining_prev = 0.0;
  double team = 0.0;
};

/// r = a_s * W_succ - a_i * W_is + a_r * (W_r - W_r_prev); one value for every agent.
inline double team_reward(const RewardBreakdown& b, const RewardWeights& w) {
  return w.success * b.success - w.spread * b.spread + w.remaining * (b.remaining - b.remaining_prev);
}

// Observation layout, per node in id order: severity, forecast probability,
// pending value, steps to deadline, assets; then own position, teammate
// positions, teammate targets. All entries lie in [0,1].
inline constexpr std::size_t kNodeChannels = 5;
inline constexpr std::size_t kObservationChannels = kNodeChannels + 3;

inline void write_node_channels(const Scene& scene, const WorldState& s, std::span<double> out) {
  const std::size_t n = scene.node_count();
  const auto& view = s.views.front();
  const double tau = s.hazard.params.tau;
  const double horizon = static_cast<double>(scene.config.t_max);
  for (std::size_t i = 0; i < n; ++i) {
    const NodeId id(i);
    if (view.known_incident[i]) out[i] = s.hazard.severity[i] / tau;
    if (auto g = find_prediction(view.prediction, id)) out[n + i] = *g;
    if (auto j = s.log.find(id); j && s.log.pending(*j)) {
      const auto& a = s.log[*j];
      out[2 * n + i] = static_cast<double>(a.value) / scene.asset_scale;
      out[3 * n + i] = std::clamp(static_cast<double>(a.deadline - s.t), 0.0, horizon) / horizon;
    }
    out[4 * n + i] = static_cast<double>(s.hazard.nodes[i].assets) / scene.asset_scale;
  }
}

inline std::size_t observation_size(const Scene& scene) { return kObservationChannels * scene.node_count(); }
inline std::size_t state_size(const Scene& scene) { return (kNodeChannels + 2 * scene.agent_count()) * scene.node_count(); }

/// Local observation of one agent (its own view plus broadcasts).
inline std::vector<double> observe(const Scene& scene, const WorldState& s, std::size_t agent) {
  const std::size_t n = scene.node_count();
  const std::size_t others = s.agents.size() - 1;
  std::vector<double> obs(observation_size(scene), 0.0);
  write_node_channels(scene, s, obs);
  obs[kNodeChannels * n + s.agents[agent].position.index] = 1.0;
  if (others > 0) {
    const double share = 1.0 / static_cast<double>(others);
    const auto& targets = s.views[agent].targets;
    for (std::size_t b = 0; b < s.agents.size(); ++b) {
      if (b == agent) continue;
      obs[(kNodeChannels + 1) * n + s.agents[b].position.index] += share;
      obs[(kNodeChannels + 2) * n + targets[b].index] += share;
    }
  }
  return obs;
}

/// Joint state for the centralized critics: node channels, then every agent's
/// position one-hot, then every agent's target one-hot.
inline std::vector<double> global_state(const Scene& scene, const WorldState& s) {
  const std::size_t n = scene.node_count();
  std::vector<double> out(state_size(scene), 0.0);
  write_node_channels(scene, s, out);
  const std::size_t m = s.agents.size();
  for (std::size_t a = 0; a < m; ++a) {
    out[(kNodeChannels + a) * n + s.agents[a].position.index] = 1.0;
    out[(kNodeChannels + m + a) * n + s.agents[a].target.index] = 1.0;
  }
  return out;
}

struct TraceRow {
  int t = 0;
  std::size_t incidents = 0;
  std::size_t done = 0;
  std::size_t failed = 0;
  double w_succ = 0.0;
  double w_is = 0.0;
  double w_r = 0.0;
  double reward = 0.0;
};

struct StepInfo {
  RewardBreakdown reward;
  std::vector<NodeId> ignited;
  std::vector<NodeId> scrapped;
  std::vector<NodeId> recovered;
  std::vector<std::size_t> completed;  // assignment indices
  std::vector<std::size_t> failed;
  long gamma = 0;                      // |forecast used this step| - |incidents now|
  bool resolved = false;               // ended early with nothing left to do
  double settled_reward = 0.0;         // per-step reward of the resolved state
  int steps_to_horizon = 0;            // t_max - t after this step
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

inline std::string trace_csv_header() { return "t,incidents,done,failed,w_succ,w_is,w_r,r\n"; }

inline std::string format_trace_row(const TraceRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%zu,%zu,%zu,%.6f,%.6f,%.6f,%.6f\n", r.t, r.incidents, r.done, r.failed, r.w_succ, r.w_is,
                r.w_r, r.reward);
  return buf;
}

/// Canonical text dump of a world state, for determinism checks.
inline std::string serialize(const WorldState& s) {
  std::ostringstream os;
  os.precision(17);
  os << "t " << s.t << '\n';
  for (std::size_t i = 0; i < s.hazard.size(); ++i) {
    const auto& nd = s.hazard.nodes[i];
    os << "node " << i << ' ' << nd.assets << ' ' << static_cast<int>(nd.status) << ' ' << s.hazard.severity[i] << '\n';
  }
  for (std::size_t j = 0; j < s.log.size(); ++j) {
    const auto& a = s.log[j];
    os << "assignment " << a.node.index << ' ' << a.deadline << ' ' << a.value << ' ' << static_cast<int>(a.status) << ' '
       << a.work_done << ' ' << a.completed_at << ' ' << s.completed_by[j] << '\n';
  }
  for (const auto& a : s.agents) {
    os << "agent " << a.position.index << ' ' << a.target.index << ' ' << a.next_hop.index << ' ' << a.cells_left << ' '
       << a.completions << ' ' << a.served_assignment << ' ' << a.switched_duty << " path";
    for (NodeId p : a.path) os << ' ' << p.index;
    os << '\n';
  }
  for (const auto& v : s.views) {
    os << "view";
    for (char k : v.known_incident) os << int(k);
    os << ' ';
    for (char c : v.completed) os << int(c);
    for (NodeId t : v.targets) os << ' ' << t.index;
    os << '\n';
  }
  for (const auto& p : s.prediction) os << "forecast " << p.node.index << ' ' << p.probability << '\n';
  os << "remaining " << s.remaining_value << '\n';
  os << "rng " << s.rng.serialize() << '\n';
  os << "tie_rng " << s.tie_rng.serialize() << '\n';
  return os.str();
}

/// The partially observable Markov game: one instance is single-threaded and
/// each step() is an all-or-nothing transaction.
class Environment {
 public:
  explicit Environment(ScenarioConfig config, RewardWeights weights = {})
      : scene_(std::make_shared<const Scene>(std::move(config))), weights_(weights) {}
  explicit Environment(std::shared_ptr<const Scene> scene, RewardWeights weights = {})
      : scene_(std::move(scene)), weights_(weights) {}

  void set_forecaster(std::shared_ptr<IncidentForecaster> f) { forecaster_ = std::move(f); }
  const std::shared_ptr<IncidentForecaster>& forecaster() const { return forecaster_; }

  const Scene& scene() const { return *scene_; }
  const std::shared_ptr<const Scene>& scene_ptr() const { return scene_; }
  const WorldState& state() const { return state_; }
  WorldState& mutable_state() { return state_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  const RewardWeights& weights() const { return weights_; }
  bool done() const { return done_; }

  const WorldState& reset(std::uint64_t seed) {
    const Scene& sc = *scene_;
    const auto& cfg = sc.config;
    WorldState s;
    s.t = 0;
    s.hazard = make_hazard(sc.hazard, sc.graph.nodes());
    for (auto i : cfg.initial_incidents) ignite(s.hazard, NodeId(i));
    std::vector<Assignment> queue;
    for (const auto& a : cfg.assignments) queue.push_back({NodeId(a.node), a.deadline, a.value});
    s.log = AssignmentLog(std::move(queue));
    s.completed_by.assign(s.log.size(), -1);
    for (auto start : cfg.agent_starts) {
      AgentState ag;
      ag.position = ag.target = ag.next_hop = NodeId(start);
      s.agents.push_back(ag);
    }
    SharedView v;
    v.known_incident.assign(sc.node_count(), 0);
    v.completed.assign(s.log.size(), 0);
    for (const auto& ag : s.agents) v.targets.push_back(ag.target);
    s.views.assign(s.agents.size(), v);
    s.rng = Rng(derive_seed(seed, 1));
    s.tie_rng = Rng(derive_seed(seed, 2));
    state_ = std::move(s);
    if (forecaster_) forecaster_->reset(sc, state_);
    perceive_and_share(sc, state_, forecaster_.get());
    state_.remaining_value = reward_remaining(sc, state_);
    trace_.clear();
    done_ = false;
    return state_;
  }

  StepResult step(const JointAction& actions) {
    const Scene& sc = *scene_;
    WorldState& s = state_;
    if (done_) throw ActionRejected("step: episode has finished; call reset()");
    if (actions.size() != s.agents.size())
      throw ActionRejected("step: expected " + std::to_string(s.agents.size()) + " actions, got " + std::to_string(actions.size()));
    for (std::size_t a = 0; a < actions.size(); ++a) {
      const auto valid = valid_actions(sc, s, a);
      if (!std::binary_search(valid.begin(), valid.end(), actions[a]))
        throw ActionRejected("step: agent " + std::to_string(a) + " chose invalid target " + std::to_string(actions[a].index));
    }

    StepResult result;
    StepInfo& info = result.info;
    const std::size_t n = sc.node_count();
    const long forecast_size = static_cast<long>(s.prediction.size());

    // (1) targets and routes
    for (std::size_t a = 0; a < actions.size(); ++a) {
      AgentState& ag = s.agents[a];
      const NodeId target = actions[a];
      if (s.views[a].known_incident[target.index]) {
        if (ag.served_assignment) ag.switched_duty = true;
      } else if (s.log.find(target)) {
        ag.served_assignment = true;
      }
      ag.target = target;
      const NodeId from = ag.cells_left > 0 ? ag.next_hop : ag.position;
      ag.path = sc.graph.path(from, target);
    }

    // (2) one cell of movement
    for (auto& ag : s.agents) {
      if (ag.cells_left == 0 && !ag.path.empty()) {
        ag.next_hop = ag.path.front();
        ag.path.erase(ag.path.begin());
        ag.cells_left = std::max(1, static_cast<int>(std::ceil(sc.graph.distance(ag.position, ag.next_hop) - 1e-9)));
      }
      if (ag.cells_left > 0 && --ag.cells_left == 0) ag.position = ag.next_hop;
    }

    // (3) work at arrived targets; n co-located agents do n units per step
    std::vector<double> suppression(n, 0.0);
    std::vector<int> work(s.log.size(), 0);
    std::vector<int> first_worker(s.log.size(), -1);
    for (std::size_t a = 0; a < s.agents.size(); ++a) {
      const AgentState& ag = s.agents[a];
      if (!ag.at_target()) continue;
      const NodeId here = ag.position;
      if (s.hazard.incident(here)) {
        suppression[here.index] += sc.hazard.suppression_per_agent;
      } else if (auto j = s.log.find(here); j && s.log.pending(*j) && s.hazard.status(here) == NodeStatus::Normal) {
        ++work[*j];
        if (first_worker[*j] < 0) first_worker[*j] = static_cast<int>(a);
      }
    }
    for (std::size_t j = 0; j < work.size(); ++j) {
      if (!s.log.add_work(j, work[j], sc.config.completion_time, s.t)) continue;
      s.completed_by[j] = first_worker[j];
      ++s.agents[first_worker[j]].completions;
      info.completed.push_back(j);
      const NodeId node = s.log[j].node;
      if (find_prediction(s.prediction, node)) salvage(node);
    }

    // (4) severity, (5) spread
    SeverityUpdate sev = severity_step(s.hazard, suppression);
    info.scrapped = sev.scrapped;
    info.recovered = sev.recovered;
    info.ignited = spread_step(sc.spread, s.hazard, s.rng);

    // (6) failures; work due this step has had its chance above
    info.failed = tick_deadlines(s.log, s.t + 1);
    auto lost = fail_on_incident(s.log, info.scrapped, s.t);
    info.failed.insert(info.failed.end(), lost.begin(), lost.end());

    // (7) perception and communication
    perceive_and_share(sc, s, forecaster_.get());

    // (8) reward
    RewardBreakdown& rb = info.reward;
    rb.success = reward_success(sc, s);
    double spread_sum = 0.0;
    for (std::size_t a = 0; a < s.agents.size(); ++a) spread_sum += reward_spread(sc, s, a, s.tie_rng);
    rb.spread = spread_sum / static_cast<double>(s.agents.size());
    rb.remaining_prev = s.remaining_value;
    rb.remaining = reward_remaining(sc, s);
    rb.team = team_reward(rb, weights_);
    s.remaining_value = rb.remaining;
    const long burning = static_cast<long>(s.hazard.incident_nodes().size());
    info.gamma = forecast_size - burning;

    trace_.push_back({s.t, static_cast<std::size_t>(burning), s.log.count(AssignmentStatus::Done),
                      s.log.count(AssignmentStatus::Failed), rb.success, rb.spread, rb.remaining, rb.team});

    // (9) clock
    ++s.t;
    const bool resolved = s.log.pending_count() == 0 && burning == 0;
    done_ = s.t >= sc.config.t_max || resolved;
    if (resolved && s.t < sc.config.t_max) {
      // Nothing changes any more: no pending work, no incidents, no spread.
      RewardBreakdown still = rb;
      still.spread = 0.0;
      still.remaining_prev = still.remaining;
      info.resolved = true;
      info.settled_reward = team_reward(still, weights_);
      info.steps_to_horizon = sc.config.t_max - s.t;
    }
    result.reward = rb.team;
    result.done = done_;
    return result;
  }

 private:
  // Carries the assets of a threatened node to the nearest intact support node.
  void salvage(NodeId node) {
    const Scene& sc = *scene_;
    auto& nodes = state_.hazard.nodes;
    std::optional<NodeId> best;
    double best_d = kUnreachable;
    for (NodeId sup : sc.support_nodes) {
      if (sup == node || nodes[sup.index].status != NodeStatus::Normal) continue;
      const double d = sc.graph.distance(node, sup);
      if (d < best_d) {
        best_d = d;
        best = sup;
      }
    }
    if (best && nodes[node.index].assets > 0) move_assets(nodes, node, *best);
  }

  std::shared_ptr<const Scene> scene_;
  RewardWeights weights_;
  std::shared_ptr<IncidentForecaster> forecaster_;
  WorldState state_;
  std::vector<TraceRow> trace_;
  bool done_ = false;
};

}  // namespace edei
