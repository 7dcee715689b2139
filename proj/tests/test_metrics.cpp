#include <gtest/gtest.h>

#include "edei/metrics.hpp"

using namespace edei;

namespace {

EpisodeRecord random_record(Rng& rng) {
  EpisodeRecord r;
  const std::size_t agents = 1 + rng.below(5);
  r.n_o = rng.below(30);
  r.n_v = 1 + rng.below(50);
  r.t_max = 1 + static_cast<int>(rng.below(200));
  r.delta_t = 0.5 + rng.below(6);
  r.k_line = 1 + static_cast<int>(rng.below(4));
  r.n_a = static_cast<int>(rng.below(40));
  r.switched = static_cast<int>(rng.below(agents + 1));
  long left = static_cast<long>(r.n_o);
  for (std::size_t a = 0; a < agents; ++a) {
    const long c = left > 0 ? static_cast<long>(rng.below(static_cast<std::size_t>(left) + 1)) : 0;
    r.completions.push_back(static_cast<int>(c));
    left -= c;
  }
  const std::size_t steps = rng.below(static_cast<std::size_t>(r.t_max) + 1);
  for (std::size_t t = 0; t < steps; ++t) r.incident_trace.push_back(rng.below(r.n_v + 1));
  r.reward = rng.uniform(-5, 5);
  return r;
}

}  // namespace

TEST(Metrics, TrivialCases) {
  EpisodeRecord r;
  r.completions = {2, 1};
  r.n_o = 3;
  r.n_v = 4;
  r.t_max = 5;
  EXPECT_EQ(*rate_s(r), 1.0);
  EXPECT_EQ(*rate_f(r), 0.0);
  r.completions = {0, 0};
  EXPECT_EQ(*rate_s(r), 0.0);
  r.incident_trace.assign(5, 4);
  EXPECT_EQ(*rate_f(r), 1.0);
  r.n_o = 0;
  EXPECT_FALSE(rate_s(r));
  EXPECT_FALSE(it(r));
}

TEST(Metrics, HandComputedExample) {
  EpisodeRecord r;
  r.completions = {3, 2, 1};
  r.switched = 1;
  r.n_o = 8;
  r.n_v = 10;
  r.t_max = 4;
  r.incident_trace = {1, 2, 3, 0};
  r.delta_t = 2.0;
  r.k_line = 3;
  r.n_a = 12;
  EXPECT_EQ(*rate_s(r), 6.0 / 8.0);
  EXPECT_EQ(*rate_s_paper(r), 6.0 / (8.0 * 4.0));
  EXPECT_EQ(*rate_f(r), 6.0 / 40.0);
  EXPECT_EQ(*tp(r), 6.0 / (10.0 * 2.0));
  EXPECT_EQ(*te(r), 6.0 / (8.0 * 4.0 * 2.0));
  EXPECT_EQ(*it(r), 6.0 / 24.0);
}

TEST(Metrics, RandomRecordsMatchBruteForce) {
  Rng rng(17);
  for (int k = 0; k < 500; ++k) {
    const EpisodeRecord r = random_record(rng);
    double done = 0.0;
    for (std::size_t a = 0; a < r.completions.size(); ++a)
      for (int c = 0; c < r.completions[a]; ++c) done += 1.0;
    double burning = 0.0;
    for (std::size_t t = 0; t < r.incident_trace.size(); ++t)
      for (std::size_t v = 0; v < r.incident_trace[t]; ++v) burning += 1.0;
    const double n = static_cast<double>(r.completions.size()), kk = r.switched;
    if (r.n_o > 0) {
      EXPECT_EQ(*rate_s(r), done / r.n_o);
      EXPECT_EQ(*rate_s_paper(r), done / (r.n_o * (n + kk)));
      EXPECT_EQ(*te(r), done / (r.n_o * (n + kk) * 2.0));
    } else {
      EXPECT_FALSE(rate_s(r));
    }
    EXPECT_EQ(*rate_f(r), burning / (static_cast<double>(r.n_v) * r.t_max));
    const double lines = static_cast<double>(r.n_o) + r.k_line - 1;
    if (lines > 0)
      EXPECT_EQ(*tp(r), done / (lines * r.delta_t));
    else
      EXPECT_FALSE(tp(r));
    if (r.n_a > 0)
      EXPECT_EQ(*it(r), done / (r.n_a * 2.0));
    else
      EXPECT_FALSE(it(r));
  }
}

TEST(Metrics, AggregateSkipsUndefined) {
  MetricRow a, b;
  a.rate_s = 0.5;
  a.reward = 1.0;
  b.reward = 3.0;
  b.it = 0.25;
  const Aggregate g = aggregate({a, b});
  EXPECT_EQ(g.count, 2u);
  EXPECT_EQ(*g.rate_s, 0.5);
  EXPECT_EQ(*g.it, 0.25);
  EXPECT_FALSE(g.tp);
  EXPECT_EQ(g.reward, 2.0);
  EXPECT_THROW(aggregate({}), ValidationError);
}

TEST(Metrics, CsvLayout) {
  MetricRow r;
  r.episode = 3;
  r.scenario = "storage";
  r.policy = "greedy";
  r.seed = 9;
  r.rate_s = 1.0;
  r.reward = -0.5;
  EXPECT_EQ(metrics_csv({r}), metrics_csv_header() + "3,storage,greedy,9,1.000000,,,,,,-0.500000\n");
}
