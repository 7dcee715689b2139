#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edei/checkpoint.hpp"
#include "edei/core.hpp"
#include "edei/marl.hpp"
#include "edei/metrics.hpp"
#include "edei/scenario_io.hpp"

namespace edei::cli {

namespace fs = std::filesystem;

struct Options {
  std::string command;
  std::string scenario = "storage";
  std::string policy;
  int agents = 0;
  int incidents = -1;
  std::uint64_t seed = 1;
  std::uint64_t scenario_seed = 1;
  int episodes = 0;
  int eval_episodes = 20;
  std::string out;
  std::string checkpoint;
  bool reduced = false;
  std::vector<std::string> inputs;  // plot: metric CSVs
  std::string manifest;             // rerun
};

// ---- scenarios and checkpoints -------------------------------------------

inline bool is_scenario_name(const std::string& s) {
  const auto& names = scenario_names();
  return std::find(names.begin(), names.end(), s) != names.end();
}

/// A scenario name is generated from the options; anything else is read as a
/// scenario file.
inline ScenarioConfig resolve_scenario(const Options& o) {
  if (is_scenario_name(o.scenario)) {
    GeneratorOptions g;
    g.seed = o.scenario_seed;
    g.agents = o.agents;
    g.incidents = o.incidents;
    g.reduced = o.reduced;
    return generate(o.scenario, g);
  }
  if (o.agents != 0 || o.incidents != -1 || o.reduced)
    throw ValidationError("--agents, --incidents and --reduced apply only to generated scenarios, not to '" + o.scenario + "'");
  return load_scenario(o.scenario);
}

inline std::string agent_prefix(std::size_t i, const char* net) { return "agent" + std::to_string(i) + "/" + net + "/"; }

inline std::vector<NamedTensor> trainer_tensors(const MaddpgTrainer& tr) {
  std::vector<NamedTensor> out;
  const auto& agents = *tr.agents_ptr();
  for (std::size_t i = 0; i < agents.size(); ++i) {
    append_store(out, agent_prefix(i, "actor"), agents[i].actor);
    append_store(out, agent_prefix(i, "critic"), agents[i].critic);
    append_store(out, agent_prefix(i, "actor_target"), agents[i].actor_target);
    append_store(out, agent_prefix(i, "critic_target"), agents[i].critic_target);
  }
  if (tr.predictor()) append_store(out, "", tr.predictor()->params());
  return out;
}

struct LoadedPolicy {
  std::shared_ptr<std::vector<AgentNets>> agents;
  std::shared_ptr<IncidentPredictor> predictor;
};

inline LoadedPolicy load_policy(const std::vector<NamedTensor>& tensors, const Scene& scene, bool with_predictor) {
  std::set<std::string> agent_ids;
  for (const auto& t : tensors)
    if (t.name.rfind("agent", 0) == 0) agent_ids.insert(t.name.substr(0, t.name.find('/')));
  if (agent_ids.size() != scene.agent_count())
    throw FormatError("checkpoint holds " + std::to_string(agent_ids.size()) + " agents, scenario has " +
                      std::to_string(scene.agent_count()));
  const MaddpgConfig defaults;
  const NetShape shape = net_shape(scene, defaults.hidden);
  Rng rng(0);
  LoadedPolicy p;
  p.agents = std::make_shared<std::vector<AgentNets>>();
  for (std::size_t i = 0; i < scene.agent_count(); ++i) {
    AgentNets a = AgentNets::create(shape, rng);
    load_store(tensors, agent_prefix(i, "actor"), a.actor);
    load_store(tensors, agent_prefix(i, "critic"), a.critic);
    load_store(tensors, agent_prefix(i, "actor_target"), a.actor_target);
    load_store(tensors, agent_prefix(i, "critic_target"), a.critic_target);
    p.agents->push_back(std::move(a));
  }
  if (with_predictor) {
    p.predictor = std::make_shared<IncidentPredictor>(defaults.predictor, 0);
    load_store(tensors, "", p.predictor->params());
  }
  return p;
}

// ---- manifest -------------------------------------------------------------

inline ojson options_json(const Options& o) {
  ojson j;
  j["command"] = o.command;
  j["scenario"] = o.scenario;
  j["policy"] = o.policy;
  j["agents"] = o.agents;
  j["incidents"] = o.incidents;
  j["seed"] = o.seed;
  j["scenario_seed"] = o.scenario_seed;
  j["episodes"] = o.episodes;
  j["eval_episodes"] = o.eval_episodes;
  j["checkpoint"] = o.checkpoint;
  j["reduced"] = o.reduced;
  j["inputs"] = o.inputs;
  return j;
}

inline ojson training_json(const MaddpgConfig& c) {
  ojson j;
  j["episodes"] = c.episodes;
  j["gamma"] = c.gamma;
  j["buffer_capacity"] = c.buffer_capacity;
  j["batch_size"] = c.batch_size;
  j["warmup"] = c.warmup;
  j["rho"] = c.rho;
  j["hidden"] = c.hidden;
  j["epsilon_start"] = c.epsilon_start;
  j["epsilon_end"] = c.epsilon_end;
  j["anneal_fraction"] = c.anneal_fraction;
  j["update_every"] = c.update_every;
  j["actor_lr"] = c.actor_adam.learning_rate;
  j["critic_lr"] = c.critic_adam.learning_rate;
  j["use_predictor"] = c.use_predictor;
  j["predictor_episodes"] = c.predictor_episodes;
  j["predictor_epochs"] = c.predictor_epochs;
  j["predictor_hidden"] = c.predictor.hidden;
  j["predictor_window"] = c.predictor.window;
  j["predictor_epsilon"] = c.predictor.epsilon;
  j["seed"] = c.seed;
  return j;
}

/// Everything needed to repeat a run; the output directory is left out so a
/// rerun elsewhere produces an identical manifest.
inline void write_manifest(const Options& o, const fs::path& dir, const std::vector<std::string>& outputs,
                           const std::optional<ScenarioConfig>& scenario, const std::optional<MaddpgConfig>& training) {
  ojson j;
  j["format"] = "edei-manifest/1";
  j["version"] = kVersion;
  j["options"] = options_json(o);
  ojson seeds;
  seeds["run"] = o.seed;
  seeds["scenario"] = o.scenario_seed;
  if (scenario) seeds["spread"] = scenario->spread.seed;
  j["seeds"] = seeds;
  if (training) j["training"] = training_json(*training);
  if (scenario) j["scenario"] = to_json(*scenario);
  j["outputs"] = outputs;
  write_text_file(dir / "manifest.json", j.dump(2) + "\n");
}

inline Options options_from_manifest(const fs::path& path) {
  ojson j;
  try {
    j = ojson::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "edei-manifest/1" || !j.contains("options"))
    throw FormatError(path.string() + ": not an edei run manifest");
  try {
    const auto& m = j["options"];
    Options o;
    o.command = m.at("command").get<std::string>();
    o.scenario = m.at("scenario").get<std::string>();
    o.policy = m.at("policy").get<std::string>();
    o.agents = m.at("agents").get<int>();
    o.incidents = m.at("incidents").get<int>();
    o.seed = m.at("seed").get<std::uint64_t>();
    o.scenario_seed = m.at("scenario_seed").get<std::uint64_t>();
    o.episodes = m.at("episodes").get<int>();
    o.eval_episodes = m.at("eval_episodes").get<int>();
    o.checkpoint = m.at("checkpoint").get<std::string>();
    o.reduced = m.at("reduced").get<bool>();
    o.inputs = m.at("inputs").get<std::vector<std::string>>();
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": manifest options: " + e.what());
  }
}

// ---- commands -------------------------------------------------------------

inline std::vector<MetricRow> rows_of(const std::vector<EpisodeRecord>& records, const std::string& scenario) {
  std::vector<MetricRow> rows;
  for (auto r : records) {
    r.scenario = scenario;
    rows.push_back(metric_row(r));
  }
  return rows;
}

inline void require_positive_episodes(int episodes) {
  if (episodes <= 0) throw ValidationError("episodes must be positive");
}

inline int cmd_gen(const Options& o, std::ostream& out) {
  const fs::path dir = o.out.empty() ? fs::path("scenarios") : fs::path(o.out);
  std::vector<std::string> written;
  if (o.scenario.empty() || o.scenario == "all") {
    for (const auto& cell : table_cells()) {
      GeneratorOptions g;
      g.seed = o.scenario_seed;
      g.agents = cell.agents;
      g.incidents = cell.incidents;
      g.reduced = o.reduced;
      const auto name = cell_file_name(cell);
      save_scenario(generate(cell.scenario, g), dir / name);
      written.push_back(name);
    }
  } else {
    const ScenarioConfig c = resolve_scenario(o);
    const auto name = c.name + ".json";
    save_scenario(c, dir / name);
    written.push_back(name);
  }
  write_manifest(o, dir, written, std::nullopt, std::nullopt);
  for (const auto& w : written) out << (dir / w).string() << "\n";
  return 0;
}

inline MaddpgConfig training_config(const Options& o) {
  if (o.policy != "maddpg" && o.policy != "pmaddpg")
    throw ValidationError("train: --policy must be maddpg or pmaddpg, got '" + o.policy + "'");
  MaddpgConfig c;
  c.episodes = o.episodes;
  c.seed = o.seed;
  c.use_predictor = o.policy == "pmaddpg";
  c.validate();
  return c;
}

struct TrainOutcome {
  std::vector<MetricRow> rows;
  std::vector<NamedTensor> tensors;
};

inline TrainOutcome train_policy(const std::shared_ptr<const Scene>& scene, const MaddpgConfig& cfg, std::ostream& log) {
  MaddpgTrainer tr(scene, cfg);
  const int every = std::max(1, cfg.episodes / 10);
  const auto records = tr.train([&](const EpisodeRecord& r) {
    if ((r.episode + 1) % static_cast<std::size_t>(every) == 0) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %s episode %zu/%d reward %.3f rate_s %s\n", tr.policy_name().c_str(), r.episode + 1,
                    cfg.episodes, r.reward, format_metric(rate_s(r)).c_str());
      log << buf;
    }
  });
  return {rows_of(records, scene->config.name), trainer_tensors(tr)};
}

inline int cmd_train(const Options& o, std::ostream& out) {
  const MaddpgConfig cfg = training_config(o);
  const ScenarioConfig config = resolve_scenario(o);
  auto scene = std::make_shared<const Scene>(config);
  const fs::path dir = o.out.empty() ? fs::path("runs") / (config.name + "-" + o.policy) : fs::path(o.out);
  const fs::path ckpt = o.checkpoint.empty() ? dir / "checkpoint.edei" : fs::path(o.checkpoint);
  auto result = train_policy(scene, cfg, out);
  write_text_file(dir / "train.csv", metrics_csv(result.rows));
  save_checkpoint(result.tensors, ckpt);
  write_manifest(o, dir, {"train.csv", ckpt.filename().string()}, config, cfg);
  out << "wrote " << (dir / "train.csv").string() << " and " << ckpt.string() << "\n";
  return 0;
}

inline std::unique_ptr<Policy> make_policy(const Options& o, const Scene& scene) {
  if (o.policy == "greedy") return std::make_unique<GreedyPolicy>();
  if (o.policy == "random") return std::make_unique<RandomPolicy>();
  if (o.policy == "maddpg" || o.policy == "pmaddpg") {
    if (o.checkpoint.empty()) throw ValidationError("eval: --policy " + o.policy + " needs --checkpoint");
    const auto loaded = load_policy(load_checkpoint(o.checkpoint), scene, o.policy == "pmaddpg");
    return std::make_unique<ActorPolicy>(o.policy, loaded.agents, loaded.predictor);
  }
  throw ValidationError("eval: --policy must be greedy, random, maddpg or pmaddpg, got '" + o.policy + "'");
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  require_positive_episodes(o.episodes);
  const ScenarioConfig config = resolve_scenario(o);
  auto scene = std::make_shared<const Scene>(config);
  auto policy = make_policy(o, *scene);
  const fs::path dir = o.out.empty() ? fs::path("runs") / (config.name + "-" + o.policy + "-eval") : fs::path(o.out);
  const auto rows = rows_of(evaluate(scene, *policy, o.episodes, o.seed), config.name);
  write_text_file(dir / "eval.csv", metrics_csv(rows));
  write_manifest(o, dir, {"eval.csv"}, config, std::nullopt);
  const Aggregate a = aggregate(rows);
  out << o.policy << " on " << config.name << ": rate_s " << format_metric(a.rate_s) << " rate_f " << format_metric(a.rate_f)
      << " reward " << format_metric(a.reward) << "\n";
  return 0;
}

inline std::string summary_header() { return "cell,policy,episodes,rate_s,rate_s_paper,rate_f,tp,te,it,reward\n"; }

inline std::string summary_line(const std::string& cell, const std::string& policy, const Aggregate& a) {
  std::string line = cell + "," + policy + "," + std::to_string(a.count);
  for (const auto& v : {a.rate_s, a.rate_s_paper, a.rate_f, a.tp, a.te, a.it}) line += "," + format_metric(v);
  return line + "," + format_metric(a.reward) + "\n";
}

/// Every experiment cell, each in its own directory with its own seeds.
inline int cmd_sweep(const Options& o, std::ostream& out) {
  require_positive_episodes(o.eval_episodes);
  std::vector<std::string> policies{"greedy", "maddpg", "pmaddpg"};
  if (!o.policy.empty()) policies = {o.policy};
  for (const auto& p : policies)
    if (p != "greedy" && p != "random" && p != "maddpg" && p != "pmaddpg") throw ValidationError("sweep: unknown policy '" + p + "'");
  const bool learning = std::any_of(policies.begin(), policies.end(), [](const auto& p) { return p == "maddpg" || p == "pmaddpg"; });
  if (learning) require_positive_episodes(o.episodes);
  const fs::path dir = o.out.empty() ? fs::path("runs") / "sweep" : fs::path(o.out);
  std::string summary = summary_header();
  std::vector<std::string> outputs{"summary.csv"};
  for (const auto& cell : table_cells()) {
    Options co = o;
    co.scenario = cell.scenario;
    co.agents = cell.agents;
    co.incidents = cell.incidents;
    const ScenarioConfig config = resolve_scenario(co);
    auto scene = std::make_shared<const Scene>(config);
    const std::string stem = fs::path(cell_file_name(cell)).stem().string();
    for (const auto& p : policies) {
      const fs::path cdir = dir / stem / p;
      std::unique_ptr<Policy> policy;
      if (p == "maddpg" || p == "pmaddpg") {
        co.policy = p;
        const MaddpgConfig cfg = training_config(co);
        out << stem << " " << p << ": training " << cfg.episodes << " episodes\n";
        auto result = train_policy(scene, cfg, out);
        write_text_file(cdir / "train.csv", metrics_csv(result.rows));
        save_checkpoint(result.tensors, cdir / "checkpoint.edei");
        const auto loaded = load_policy(result.tensors, *scene, p == "pmaddpg");
        policy = std::make_unique<ActorPolicy>(p, loaded.agents, loaded.predictor);
        outputs.push_back((fs::path(stem) / p / "train.csv").string());
        outputs.push_back((fs::path(stem) / p / "checkpoint.edei").string());
      } else {
        co.policy = p;
        policy = make_policy(co, *scene);
      }
      const auto rows = rows_of(evaluate(scene, *policy, o.eval_episodes, o.seed), config.name);
      write_text_file(cdir / "eval.csv", metrics_csv(rows));
      outputs.push_back((fs::path(stem) / p / "eval.csv").string());
      const Aggregate a = aggregate(rows);
      summary += summary_line(stem, p, a);
      out << stem << " " << p << ": rate_s " << format_metric(a.rate_s) << " reward " << format_metric(a.reward) << "\n";
    }
  }
  write_text_file(dir / "summary.csv", summary);
  write_manifest(o, dir, outputs, std::nullopt, std::nullopt);
  return 0;
}

// ---- plotting -------------------------------------------------------------

struct Series {
  std::vector<double> x;
  std::vector<double> y;
};

struct MetricTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw FormatError("metrics csv: missing column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline MetricTable read_metric_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  MetricTable t;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  t.columns = split_csv_line(line);
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.columns.size())
      throw FormatError(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(t.columns.size()) + " fields, got " +
                        std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline std::vector<std::pair<std::string, std::string>> panels_for(const std::string& scenario) {
  if (scenario.rfind("factory", 0) == 0) return {{"tp", "throughput TP"}, {"rate_f", "incident damage rate_f"}, {"reward", "reward r"}};
  if (scenario.rfind("airport", 0) == 0) return {{"te", "transport efficiency TE"}, {"it", "inventory carry IT"}, {"reward", "reward r"}};
  return {{"rate_s", "task completion rate_s"}, {"rate_f", "incident damage rate_f"}, {"reward", "reward r"}};
}

inline Series smooth(const Series& s, std::size_t window) {
  if (window <= 1) return s;
  Series out;
  double sum = 0.0;
  for (std::size_t i = 0; i < s.y.size(); ++i) {
    sum += s.y[i];
    if (i >= window) sum -= s.y[i - window];
    out.x.push_back(s.x[i]);
    out.y.push_back(sum / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// One row of line-chart panels, one line per policy.
inline std::string render_svg(const std::string& title, const std::vector<std::pair<std::string, std::string>>& panels,
                              const std::vector<std::map<std::string, Series>>& data) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double pw = 320, ph = 240, ml = 52, mr = 12, mt = 40, mb = 44;
  const double width = panels.size() * pw;
  const double height = ph + 30;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" + fmt(height) +
                  "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(width / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double x0 = p * pw + ml, x1 = (p + 1) * pw - mr, y0 = mt, y1 = ph - mb + mt;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& [_, ser] : data[p])
      for (std::size_t i = 0; i < ser.x.size(); ++i) {
        if (first) xmin = xmax = ser.x[i], ymin = ymax = ser.y[i], first = false;
        xmin = std::min(xmin, ser.x[i]), xmax = std::max(xmax, ser.x[i]);
        ymin = std::min(ymin, ser.y[i]), ymax = std::max(ymax, ser.y[i]);
      }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    auto sx = [&](double v) { return x0 + (v - xmin) / (xmax - xmin) * (x1 - x0); };
    auto sy = [&](double v) { return y1 - (v - ymin) / (ymax - ymin) * (y1 - y0); };
    s += "<g>\n<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y0) + "\" width=\"" + fmt(x1 - x0) + "\" height=\"" + fmt(y1 - y0) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";
    const char label = static_cast<char>('a' + p);
    s += "<text x=\"" + fmt((x0 + x1) / 2) + "\" y=\"" + fmt(y1 + 34) + "\" text-anchor=\"middle\">(" + std::string(1, label) + ") " +
         panels[p].second + "</text>\n";
    for (int k = 0; k <= 4; ++k) {
      const double yv = ymin + (ymax - ymin) * k / 4.0, xv = xmin + (xmax - xmin) * k / 4.0;
      s += "<text x=\"" + fmt(x0 - 4) + "\" y=\"" + fmt(sy(yv) + 4) + "\" text-anchor=\"end\">" + fmt_tick(yv) + "</text>\n";
      s += "<text x=\"" + fmt(sx(xv)) + "\" y=\"" + fmt(y1 + 14) + "\" text-anchor=\"middle\">" + fmt_tick(xv) + "</text>\n";
    }
    std::size_t c = 0;
    for (const auto& [policy, ser] : data[p]) {
      const char* color = colors[c % 6];
      if (!ser.x.empty()) {
        s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.2\" points=\"";
        for (std::size_t i = 0; i < ser.x.size(); ++i) s += (i ? " " : "") + fmt(sx(ser.x[i])) + "," + fmt(sy(ser.y[i]));
        s += "\"/>\n";
      }
      const double ly = y0 + 12 + 14 * static_cast<double>(c);
      s += "<line x1=\"" + fmt(x1 - 70) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" + fmt(x1 - 56) + "\" y2=\"" + fmt(ly - 4) +
           "\" stroke=\"" + color + "\"/>\n";
      s += "<text x=\"" + fmt(x1 - 52) + "\" y=\"" + fmt(ly) + "\">" + policy + "</text>\n";
      ++c;
    }
    s += "</g>\n";
  }
  return s + "</svg>\n";
}

/// Renders one SVG per scenario found in the input CSVs.
inline int cmd_plot(const Options& o, std::ostream& out) {
  if (o.inputs.empty()) throw ValidationError("plot: give at least one metrics CSV");
  // scenario -> policy -> column -> series
  std::map<std::string, std::map<std::string, std::map<std::string, Series>>> all;
  for (const auto& in : o.inputs) {
    const MetricTable t = read_metric_csv(in);
    const std::size_t ce = t.column("episode"), cs = t.column("scenario"), cp = t.column("policy");
    for (const auto& row : t.rows)
      for (const auto& col : {"rate_s", "rate_f", "tp", "te", "it", "reward"}) {
        const std::string& cell = row[t.column(col)];
        if (cell.empty()) continue;
        Series& ser = all[row[cs]][row[cp]][col];
        ser.x.push_back(std::stod(row[ce]));
        ser.y.push_back(std::stod(cell));
      }
  }
  const fs::path dir = o.out.empty() ? fs::path("plots") : fs::path(o.out);
  std::vector<std::string> outputs;
  for (const auto& [scenario, policies] : all) {
    const auto panels = panels_for(scenario);
    std::vector<std::map<std::string, Series>> data(panels.size());
    for (std::size_t p = 0; p < panels.size(); ++p)
      for (const auto& [policy, cols] : policies) {
        auto it = cols.find(panels[p].first);
        if (it == cols.end()) continue;
        data[p][policy] = smooth(it->second, std::max<std::size_t>(1, it->second.y.size() / 50));
      }
    const std::string name = scenario + ".svg";
    write_text_file(dir / name, render_svg(scenario, panels, data));
    outputs.push_back(name);
    out << (dir / name).string() << "\n";
  }
  write_manifest(o, dir, outputs, std::nullopt, std::nullopt);
  return 0;
}

// ---- entry point ----------------------------------------------------------

inline int dispatch(const Options& o, std::ostream& out);

inline int cmd_rerun(const Options& o, std::ostream& out) {
  if (o.manifest.empty()) throw ValidationError("rerun: --manifest is required");
  Options r = options_from_manifest(o.manifest);
  if (r.command == "rerun") throw FormatError("rerun: manifest records another rerun");
  r.out = o.out.empty() ? fs::path(o.manifest).parent_path().string() : o.out;
  return dispatch(r, out);
}

inline int dispatch(const Options& o, std::ostream& out) {
  if (o.command == "gen") return cmd_gen(o, out);
  if (o.command == "train") return cmd_train(o, out);
  if (o.command == "eval") return cmd_eval(o, out);
  if (o.command == "sweep") return cmd_sweep(o, out);
  if (o.command == "plot") return cmd_plot(o, out);
  if (o.command == "rerun") return cmd_rerun(o, out);
  throw ValidationError("unknown command '" + o.command + "'");
}

/// Parses `args` (without the program name) and runs the command.
/// Returns 0 on success, 1 on a runtime failure and 2 on a usage error.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Emergency-response multi-agent simulator", "edei"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool generated) {
    sub->add_option("--scenario", o.scenario, "storage, factory, airport or a scenario file");
    sub->add_option("--seed", o.seed, "run seed");
    sub->add_option("--out", o.out, "output directory");
    if (generated) {
      sub->add_option("--agents", o.agents, "agent count (generated scenarios)");
      sub->add_option("--incidents", o.incidents, "initial incidents (generated scenarios)");
      sub->add_option("--scenario-seed", o.scenario_seed, "generator seed");
      sub->add_flag("--reduced", o.reduced, "desk-scale scenario (<= 12 nodes, 2 agents, t_max 100)");
    }
  };

  auto* gen = app.add_subcommand("gen", "write scenario files (all nine experiment cells by default)");
  common(gen, true);
  o.scenario = "storage";

  auto* train = app.add_subcommand("train", "train maddpg or pmaddpg");
  common(train, true);
  train->add_option("--policy", o.policy, "maddpg or pmaddpg")->required();
  train->add_option("--episodes", o.episodes, "training episodes")->required();
  train->add_option("--checkpoint", o.checkpoint, "checkpoint path (default <out>/checkpoint.edei)");

  auto* eval = app.add_subcommand("eval", "evaluate a policy");
  common(eval, true);
  eval->add_option("--policy", o.policy, "greedy, random, maddpg or pmaddpg")->required();
  eval->add_option("--episodes", o.episodes, "evaluation episodes")->required();
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint for maddpg/pmaddpg");

  auto* sweep = app.add_subcommand("sweep", "train and evaluate every experiment cell");
  common(sweep, false);
  sweep->add_flag("--reduced", o.reduced, "desk-scale scenarios");
  sweep->add_option("--scenario-seed", o.scenario_seed, "generator seed");
  sweep->add_option("--policy", o.policy, "only this policy (default greedy, maddpg and pmaddpg)");
  sweep->add_option("--episodes", o.episodes, "training episodes per learned policy");
  sweep->add_option("--eval-episodes", o.eval_episodes, "evaluation episodes per cell");

  auto* plot = app.add_subcommand("plot", "render metric CSVs to SVG panels");
  plot->add_option("csv", o.inputs, "metric CSV files")->required();
  plot->add_option("--out", o.out, "output directory");

  auto* rerun = app.add_subcommand("rerun", "repeat a run from its manifest");
  rerun->add_option("--manifest", o.manifest, "manifest.json of an earlier run")->required();
  rerun->add_option("--out", o.out, "output directory (default: the manifest's directory)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  o.command = app.get_subcommands().front()->get_name();
  if (o.command == "gen") {
    if (gen->count("--scenario") == 0) o.scenario = "all";
    if (gen->count("--seed") && !gen->count("--scenario-seed")) o.scenario_seed = o.seed;
  }
  try {
    return dispatch(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace edei::cli
