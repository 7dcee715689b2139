#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "edei/core.hpp"
#include "edei/environment.hpp"

namespace edei {

struct EpisodeRecord {
  std::size_t episode = 0;
  std::string scenario;
  std::string policy;
  std::uint64_t seed = 0;
  std::vector<int> completions;           // n_{a_i} per agent
  int switched = 0;                       // agents that left assignment duty for an incident
  std::vector<std::size_t> incident_trace;  // |V^f| after every step
  double reward = 0.0;                    // episode return
  std::size_t n_o = 0;                    // primary assignments
  std::size_t n_v = 0;                    // nodes
  int t_max = 0;
  double delta_t = 1.0;
  int k_line = 1;
  int n_a = 0;

  std::size_t agents() const { return completions.size(); }
  long total_completions() const { return std::accumulate(completions.begin(), completions.end(), 0L); }
};

inline EpisodeRecord record_episode(const Environment& env, double episode_return) {
  const auto& sc = env.scene();
  const auto& s = env.state();
  EpisodeRecord r;
  r.scenario = sc.config.name;
  for (const auto& a : s.agents) {
    r.completions.push_back(a.completions);
    if (a.switched_duty) ++r.switched;
  }
  for (const auto& row : env.trace()) r.incident_trace.push_back(row.incidents);
  r.reward = episode_return;
  r.n_o = s.log.size();
  r.n_v = sc.node_count();
  r.t_max = sc.config.t_max;
  r.delta_t = sc.config.metrics.delta_t;
  r.k_line = sc.config.metrics.k_line;
  r.n_a = sc.config.metrics.n_a;
  return r;
}

/// Completed assignments over n_O.
inline std::optional<double> rate_s(const EpisodeRecord& r) {
  if (r.n_o == 0) return std::nullopt;
  return static_cast<double>(r.total_completions()) / static_cast<double>(r.n_o);
}

/// Completed assignments over n_O * (n + k).
inline std::optional<double> rate_s_paper(const EpisodeRecord& r) {
  const double denom = static_cast<double>(r.n_o) * static_cast<double>(r.agents() + static_cast<std::size_t>(r.switched));
  if (denom <= 0.0) return std::nullopt;
  return static_cast<double>(r.total_completions()) / denom;
}

/// Incident node-steps over n_V * t_max.
inline std::optional<double> rate_f(const EpisodeRecord& r) {
  const double denom = static_cast<double>(r.n_v) * static_cast<double>(r.t_max);
  if (denom <= 0.0) return std::nullopt;
  double sum = 0.0;
  for (auto c : r.incident_trace) sum += static_cast<double>(c);
  return sum / denom;
}

inline std::optional<double> tp(const EpisodeRecord& r) {
  const double denom = (static_cast<double>(r.n_o) + r.k_line - 1) * r.delta_t;
  if (denom <= 0.0) return std::nullopt;
  return static_cast<double>(r.total_completions()) / denom;
}

inline std::optional<double> te(const EpisodeRecord& r) {
  const double denom =
      static_cast<double>(r.n_o) * static_cast<double>(r.agents() + static_cast<std::size_t>(r.switched)) * 2.0;
  if (denom <= 0.0) return std::nullopt;
  return static_cast<double>(r.total_completions()) / denom;
}

inline std::optional<double> it(const EpisodeRecord& r) {
  if (r.n_a <= 0) return std::nullopt;
  return static_cast<double>(r.total_completions()) / (static_cast<double>(r.n_a) * 2.0);
}

struct MetricRow {
  std::size_t episode = 0;
  std::string scenario;
  std::string policy;
  std::uint64_t seed = 0;
  std::optional<double> rate_s;
  std::optional<double> rate_s_paper;
  std::optional<double> rate_f;
  std::optional<double> tp;
  std::optional<double> te;
  std::optional<double> it;
  double reward = 0.0;
};

inline MetricRow metric_row(const EpisodeRecord& r) {
  return {r.episode, r.scenario, r.policy, r.seed, rate_s(r), rate_s_paper(r), rate_f(r), tp(r), te(r), it(r), r.reward};
}

struct Aggregate {
  std::size_t count = 0;
  std::optional<double> rate_s;
  std::optional<double> rate_s_paper;
  std::optional<double> rate_f;
  std::optional<double> tp;
  std::optional<double> te;
  std::optional<double> it;
  double reward = 0.0;
};

/// Per-metric means; undefined entries are left out of their metric's mean.
inline Aggregate aggregate(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw ValidationError("aggregate: no records");
  auto mean = [&](auto field) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
      if (auto v = r.*field) {
        sum += *v;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  Aggregate a;
  a.count = rows.size();
  a.rate_s = mean(&MetricRow::rate_s);
  a.rate_s_paper = mean(&MetricRow::rate_s_paper);
  a.rate_f = mean(&MetricRow::rate_f);
  a.tp = mean(&MetricRow::tp);
  a.te = mean(&MetricRow::te);
  a.it = mean(&MetricRow::it);
  double sum = 0.0;
  for (const auto& r : rows) sum += r.reward;
  a.reward = sum / static_cast<double>(rows.size());
  return a;
}

inline std::string metrics_csv_header() { return "episode,scenario,policy,seed,rate_s,rate_s_paper,rate_f,tp,te,it,reward\n"; }

inline std::string format_metric(std::optional<double> v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

/// One CSV line; undefined metrics are written as empty fields.
inline std::string format_metric_row(const MetricRow& r) {
  std::string line = std::to_string(r.episode) + "," + r.scenario + "," + r.policy + "," + std::to_string(r.seed);
  for (const auto& v : {r.rate_s, r.rate_s_paper, r.rate_f, r.tp, r.te, r.it}) line += "," + format_metric(v);
  line += "," + format_metric(r.reward) + "\n";
  return line;
}

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = metrics_csv_header();
  for (const auto& r : rows) out += format_metric_row(r);
  return out;
}

}  // namespace edei
