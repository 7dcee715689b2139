#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

#include "fd_oracle.hpp"
#include "fixtures.hpp"
#include "invariants.hpp"
#include "learning_checks.hpp"

using namespace edei;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string num(double v, const char* f = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Check spread_superposition() {
  Check c;
  const double a[] = {0.7, 0.7}, b[] = {0.8, 0.9};
  c.expect(std::abs(superpose(a) - 0.91) < 1e-12, "superpose(0.7,0.7) = " + num(superpose(a), "%.15f"));
  c.expect(std::abs(superpose(b) - 0.98) < 1e-12, "superpose(0.8,0.9) = " + num(superpose(b), "%.15f"));
  Graphs g = build_graphs(edei::testing::fig2_config());
  const Hazard h = edei::testing::fig2_hazard(g);
  const SpreadMatrix m = build_spread_matrix(g.spread, h);
  const double want[4][4] = {{0.95, 0, 0.7, 0.8}, {0, 0.95, 0.7, 0.9}, {0, 0, 0, 0}, {0, 0, 0, 0}};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      c.expect(std::abs(m(i, j) - want[i][j]) < 1e-12, "A(" + std::to_string(i) + "," + std::to_string(j) + ") = " + num(m(i, j)));
  c.expect(std::abs(ignition_probability(g.spread, h, NodeId(2)) - 0.91) < 1e-12, "P(v3)");
  c.expect(std::abs(ignition_probability(g.spread, h, NodeId(3)) - 0.98) < 1e-12, "P(v4)");
  return c;
}

Check spread_monte_carlo() {
  Check c;
  Graphs g = build_graphs(edei::testing::fig2_config());
  const Hazard start = edei::testing::fig2_hazard(g);
  Rng rng(2024);
  int v3 = 0;
  const int trials = 10000;
  for (int k = 0; k < trials; ++k) {
    Hazard h = start;
    spread_step(g.spread, h, rng);
    v3 += h.incident(NodeId(2));
  }
  const double f = v3 / static_cast<double>(trials);
  c.expect(f >= 0.89 && f <= 0.93, "out of [0.89, 0.93]");
  c.note("v3 frequency " + num(f));
  return c;
}

Check urgency_example() {
  Check c;
  auto ids = [](std::initializer_list<int> v) {
    std::vector<NodeId> out;
    for (int i : v) out.push_back(NodeId(i - 1));
    return out;
  };
  const auto by_et = ids({1, 2, 3, 4}), by_f = ids({2, 4, 3, 1}), by_d = ids({3, 1, 2, 4});
  std::map<std::uint32_t, std::int64_t> assets{{0, 10}, {1, 50}, {2, 30}, {3, 10}};
  auto w = [&](NodeId id) { return assets.at(id.index); };
  Rng rng(1);
  c.expect(most_urgent(by_et, by_f, w, rng) == NodeId(1), "(ET, F) should pick o2");
  c.expect(most_urgent(by_et, by_d, w, rng) == NodeId(0), "(ET, D) should pick o1");
  c.expect(most_urgent(by_d, by_f, w, rng) == NodeId(1), "(D, F) should pick o2");
  return c;
}

Check gradients() {
  Check c;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const double e[] = {edei::testing::gru_fd_error(seed), edei::testing::conv_fd_error(seed), edei::testing::actor_fd_error(seed),
                        edei::testing::critic_fd_error(seed)};
    const char* names[] = {"gru", "conv", "actor", "critic"};
    for (int k = 0; k < 4; ++k) {
      worst = std::max(worst, e[k]);
      c.expect(e[k] < 1e-4, std::string(names[k]) + " seed " + std::to_string(seed) + " rel err " + num(e[k], "%.2e"));
    }
  }
  c.note("max rel err " + num(worst, "%.2e"));
  return c;
}

Check environment_invariants() {
  Check c;
  for (const auto& name : scenario_names()) {
    const auto errors = edei::testing::random_walk_violations(generate(name, {}), 1000, 1);
    c.expect(errors.empty(), name + ": " + (errors.empty() ? "" : errors.front()));
  }
  return c;
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = edei::cli::run(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

Check determinism() {
  Check c;
  const auto dir = edei::testing::scratch_dir("acceptance_determinism");
  for (const char* run : {"a", "b"}) {
    const std::string d = (dir / run).string();
    c.expect(cli({"eval", "--scenario", "storage", "--policy", "greedy", "--episodes", "3", "--seed", "5", "--out", d + "/eval"}) == 0,
             "eval failed");
    c.expect(cli({"train", "--scenario", "storage", "--reduced", "--policy", "pmaddpg", "--episodes", "20", "--seed", "5", "--out",
                  d + "/train"}) == 0,
             "train failed");
  }
  if (!c.ok) return c;
  for (const char* f : {"eval/eval.csv", "train/train.csv", "train/checkpoint.edei"})
    c.expect(read_text_file(dir / "a" / f) == read_text_file(dir / "b" / f), std::string(f) + " differs");
  return c;
}

Check predictor_accuracy() {
  Check c;
  Rng data_rng(21);
  const auto train = synthetic_threshold_dataset(300, 8, 4, 0.5, data_rng);
  const auto held_out = synthetic_threshold_dataset(100, 8, 4, 0.5, data_rng);
  IncidentPredictor model({}, 5);
  Rng rng(6);
  train_predictor(model, train, 15, rng);
  const double acc = evaluate_predictor(model, held_out).accuracy;
  c.expect(acc > 0.9, "accuracy not above 0.9");
  c.note("held-out accuracy " + num(acc));
  return c;
}

Check learning_sanity() {
  Check c;
  const auto [first, last] = edei::testing::overfit_critic(1, 200);
  c.expect(last < 0.1 * first, "critic loss did not drop below 10%");
  c.note("critic loss " + num(first) + " -> " + num(last, "%.6f"));
  int right = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) right += edei::testing::bandit_choice(seed) == 1;
  c.expect(right / 10.0 > 0.9 - 1e-12, "bandit preferred the better arm only " + std::to_string(right) + "/10");
  c.note("bandit " + std::to_string(right) + "/10");
  return c;
}

Check learned_beats_baselines() {
  Check c;
  GeneratorOptions o;
  o.reduced = true;
  auto scene = std::make_shared<const Scene>(generate("storage", o));
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    MaddpgConfig cfg;
    cfg.episodes = 2000;
    cfg.seed = seed;
    cfg.use_predictor = true;
    MaddpgTrainer tr(scene, cfg);
    const auto t0 = std::chrono::steady_clock::now();
    tr.train();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto learned = tr.policy();
    GreedyPolicy greedy;
    RandomPolicy random;
    const auto l = aggregate(edei::cli::rows_of(evaluate(scene, *learned, 20, seed), scene->config.name));
    const auto g = aggregate(edei::cli::rows_of(evaluate(scene, greedy, 20, seed), scene->config.name));
    const auto r = aggregate(edei::cli::rows_of(evaluate(scene, random, 20, seed), scene->config.name));
    const bool ok = l.reward > r.reward && *l.rate_s >= *g.rate_s - 0.05;
    wins += ok;
    std::fprintf(stderr, "  seed %llu (%.0fs): pmaddpg rate_s %.3f reward %.2f | greedy %.3f %.2f | random %.3f %.2f%s\n",
                 static_cast<unsigned long long>(seed), secs, *l.rate_s, l.reward, *g.rate_s, g.reward, *r.rate_s, r.reward,
                 ok ? "" : "  (miss)");
    c.note("seed " + std::to_string(seed) + " rate_s " + num(*l.rate_s, "%.3f") + " vs greedy " + num(*g.rate_s, "%.3f"));
  }
  c.expect(wins >= 2, "only " + std::to_string(wins) + "/3 seeds met the bar");
  return c;
}

Check metrics_oracle() {
  Check c;
  Rng rng(17);
  for (int k = 0; k < 1000; ++k) {
    EpisodeRecord r;
    const std::size_t agents = 1 + rng.below(5);
    r.n_o = 1 + rng.below(30);
    r.n_v = 1 + rng.below(50);
    r.t_max = 1 + static_cast<int>(rng.below(200));
    r.delta_t = 0.5 + rng.below(6);
    r.k_line = 1 + static_cast<int>(rng.below(4));
    r.n_a = 1 + static_cast<int>(rng.below(40));
    r.switched = static_cast<int>(rng.below(agents + 1));
    double done = 0.0, burning = 0.0;
    for (std::size_t a = 0; a < agents; ++a) {
      r.completions.push_back(static_cast<int>(rng.below(r.n_o / agents + 1)));
      for (int j = 0; j < r.completions.back(); ++j) done += 1.0;
    }
    for (int t = 0; t < r.t_max; ++t) {
      r.incident_trace.push_back(rng.below(r.n_v + 1));
      for (std::size_t v = 0; v < r.incident_trace.back(); ++v) burning += 1.0;
    }
    const double team = static_cast<double>(agents + r.switched);
    const auto close = [](std::optional<double> got, double want) { return got && std::abs(*got - want) <= 1e-12 * std::max(1.0, want); };
    c.expect(close(rate_s(r), done / r.n_o), "rate_s");
    c.expect(close(rate_f(r), burning / (static_cast<double>(r.n_v) * r.t_max)), "rate_f");
    c.expect(close(tp(r), done / ((r.n_o + r.k_line - 1) * r.delta_t)), "tp");
    c.expect(close(te(r), done / (r.n_o * team * 2.0)), "te");
    c.expect(close(it(r), done / (r.n_a * 2.0)), "it");
    if (!c.ok) return c;
  }
  EpisodeRecord empty;
  c.expect(!rate_s(empty) && !it(empty), "undefined metrics must be empty");
  return c;
}

Check round_trips() {
  Check c;
  for (const auto& name : scenario_names()) {
    const ScenarioConfig cfg = generate(name, {});
    const std::string text = to_canonical_string(cfg);
    c.expect(to_canonical_string(parse_scenario(text)) == text, name + " scenario round trip");
  }
  auto throws_format = [](const std::function<void()>& f, const std::string& needle) {
    try {
      f();
    } catch (const FormatError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  c.expect(throws_format([] { parse_scenario("{"); }, "scenario"), "syntax error");
  c.expect(throws_format([] { parse_scenario(R"({"format": "edei-scenario/1", "name": 3})"); }, "'name' must be a string"),
           "type error names field");

  std::vector<NamedTensor> t;
  Rng rng(4);
  AgentNets nets = AgentNets::create(NetShape{16, 16, 4, 2, 8}, rng);
  append_store(t, "a/", nets.actor);
  append_store(t, "c/", nets.critic);
  const std::string bytes = encode_checkpoint(t);
  c.expect(encode_checkpoint(decode_checkpoint(bytes)) == bytes, "checkpoint round trip");
  c.expect(throws_format([&] { decode_checkpoint("XXXX" + bytes.substr(4)); }, "bad magic"), "bad magic");
  c.expect(throws_format([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 3)); }, "truncated"), "truncation");
  std::string v = bytes;
  v[4] = 9;
  c.expect(throws_format([&] { decode_checkpoint(v); }, "unsupported version"), "version");
  AgentNets other = AgentNets::create(NetShape{16, 16, 4, 2, 8}, rng);
  std::vector<nn::Matrix> before;
  for (const auto& p : other.critic.all()) before.push_back(p.value);
  c.expect(throws_format([&] { load_store(decode_checkpoint(bytes), "missing/", other.critic); }, "missing tensor"), "missing tensor");
  for (std::size_t k = 0; k < before.size(); ++k)
    c.expect(other.critic.all()[k].value == before[k], "failed load modified " + other.critic.all()[k].name);
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Check()>>> criteria{
      {"1 spread superposition and matrix", spread_superposition},
      {"2 spread Monte Carlo", spread_monte_carlo},
      {"3 urgency worked example", urgency_example},
      {"4 finite-difference gradients", gradients},
      {"5 environment invariants", environment_invariants},
      {"6 reproducible runs", determinism},
      {"7 predictor held-out accuracy", predictor_accuracy},
      {"8 learning sanity", learning_sanity},
      {"9 pmaddpg vs baselines", learned_beats_baselines},
      {"10 metrics vs brute force", metrics_oracle},
      {"11 round trips and named errors", round_trips},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      c = run();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("threw: ") + e.what();
    }
    failed += !c.ok;
    std::printf("%s %s%s%s\n", c.ok ? "PASS" : "FAIL", name, c.detail.empty() ? "" : " - ", c.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
