#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "edei/config.hpp"
#include "edei/core.hpp"

namespace edei {

inline constexpr const char* kScenarioFormat = "edei-scenario/1";

// ---- generators -----------------------------------------------------------

struct GeneratorOptions {
  std::uint64_t seed = 1;
  int agents = 0;     // 0 = scenario default
  int incidents = -1; // -1 = scenario default
  bool reduced = false;
};

namespace gen {

struct Layout {
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;
  std::vector<std::uint32_t> assignable;  // nodes that may carry assignments
  std::vector<std::uint32_t> starts;      // candidate agent start nodes
};

inline void link(Layout& l, std::uint32_t a, std::uint32_t b) { l.edges.push_back({std::min(a, b), std::max(a, b), std::nullopt}); }

inline std::uint32_t add_node(Layout& l, int x, int y, std::int64_t w, AssetCategory c) {
  l.nodes.push_back({x, y, w, c});
  return static_cast<std::uint32_t>(l.nodes.size() - 1);
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

/// Deadlines spread evenly over [0.2 t_max, t_max] with +-5% jitter, handed to
/// the chosen nodes in random order.
inline std::vector<AssignmentSpec> make_assignments(const Layout& l, std::size_t count, int t_max, Rng& rng) {
  std::vector<std::uint32_t> pool = l.assignable;
  if (count > pool.size()) throw ValidationError("generator: more assignments than assignable nodes");
  shuffle(pool, rng);
  pool.resize(count);
  std::vector<AssignmentSpec> out;
  for (std::size_t k = 0; k < count; ++k) {
    const double base = 0.2 * t_max + 0.8 * t_max * static_cast<double>(k + 1) / static_cast<double>(count);
    const double jitter = rng.uniform(-0.05, 0.05) * t_max;
    const int deadline = std::clamp(static_cast<int>(std::lround(base + jitter)), 1, t_max);
    out.push_back({pool[k], deadline, l.nodes[pool[k]].assets});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.deadline != b.deadline ? a.deadline < b.deadline : a.node < b.node;
  });
  return out;
}

inline ScenarioConfig assemble(std::string name, int width, int height, int t_max, Layout l, std::size_t assignments,
                               int default_agents, int default_incidents, const GeneratorOptions& opt) {
  const int agents = opt.reduced ? 2 : (opt.agents > 0 ? opt.agents : default_agents);
  int incidents = opt.incidents >= 0 ? opt.incidents : default_incidents;
  if (opt.reduced) incidents = std::min(incidents, 2);
  if (agents < 1 || static_cast<std::size_t>(agents) > l.starts.size())
    throw ValidationError("generator: agents must be between 1 and " + std::to_string(l.starts.size()));

  ScenarioConfig c;
  c.name = opt.reduced ? name + "-reduced" : name;
  c.seed = opt.seed;
  c.width = width;
  c.height = height;
  c.t_max = t_max;
  c.nodes = l.nodes;
  c.edges = l.edges;
  c.spread.seed = derive_seed(opt.seed, 100);

  Rng rng(derive_seed(opt.seed, 101));
  c.assignments = make_assignments(l, assignments, t_max, rng);

  const std::size_t stride = l.starts.size() / static_cast<std::size_t>(agents);
  for (int a = 0; a < agents; ++a) c.agent_starts.push_back(l.starts[static_cast<std::size_t>(a) * stride]);

  std::vector<std::uint32_t> pool;
  for (std::uint32_t i = 0; i < c.nodes.size(); ++i)
    if (std::find(c.agent_starts.begin(), c.agent_starts.end(), i) == c.agent_starts.end()) pool.push_back(i);
  if (incidents < 0 || static_cast<std::size_t>(incidents) > pool.size())
    throw ValidationError("generator: incidents must be between 0 and " + std::to_string(pool.size()));
  shuffle(pool, rng);
  c.initial_incidents.assign(pool.begin(), pool.begin() + incidents);
  std::sort(c.initial_incidents.begin(), c.initial_incidents.end());
  return c;
}

}  // namespace gen

/// Unmanned storage: inbound, storage, outbound and support areas on a
/// 14 x 16 lattice inside a 24 x 36 grid.
inline ScenarioConfig generate_storage(const GeneratorOptions& opt = {}) {
  gen::Layout l;
  if (opt.reduced) {
    // 4 x 3 lattice: inbound row, storage row, outbound + support row.
    std::uint32_t id[3][4];
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 4; ++k) {
        AssetCategory cat = r == 1 ? AssetCategory::Flammable : AssetCategory::General;
        std::int64_t w = r == 1 ? 200 : 100;
        if (r == 2 && k == 3) cat = AssetCategory::Support;
        id[r][k] = gen::add_node(l, 2 * k, 2 * r, w, cat);
        if (r > 0) l.assignable.push_back(id[r][k]);
        if (r == 0) l.starts.push_back(id[r][k]);
      }
    l.assignable.erase(std::remove(l.assignable.begin(), l.assignable.end(), id[2][3]), l.assignable.end());
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 4; ++k) {
        if (k + 1 < 4) gen::link(l, id[r][k], id[r][k + 1]);
        if (r + 1 < 3) gen::link(l, id[r][k], id[r + 1][k]);
      }
    return gen::assemble("storage", 8, 6, 100, std::move(l), 6, 2, 2, opt);
  }

  constexpr int cols = 14, rows = 16;
  std::vector<std::vector<std::uint32_t>> id(rows, std::vector<std::uint32_t>(cols));
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < cols; ++k) {
      const int x = k * 24 / cols;
      const int y = r * 36 / rows;
      AssetCategory cat = AssetCategory::General;
      std::int64_t w = 100;
      const bool inbound = r < 2, outbound = r >= rows - 2;
      if (!inbound && !outbound) {
        if (k == 0) {
          cat = AssetCategory::Support;
        } else {
          cat = AssetCategory::Flammable;
          w = 200;
        }
      }
      id[r][k] = gen::add_node(l, x, y, w, cat);
      if (inbound) l.starts.push_back(id[r][k]);
      if (cat != AssetCategory::Support) l.assignable.push_back(id[r][k]);
    }
  }
  for (int r = 0; r < rows; ++r)
    for (int k = 0; k < cols; ++k) {
      if (k + 1 < cols) gen::link(l, id[r][k], id[r][k + 1]);
      if (r + 1 < rows) gen::link(l, id[r][k], id[r + 1][k]);
    }
  return gen::assemble("storage", 24, 36, 700, std::move(l), 85, 4, 8, opt);
}

/// Factory assembly line: parallel flow lines of stations with a support
/// row below; stations are linked along each line and at both line ends.
inline ScenarioConfig generate_factory(const GeneratorOptions& opt = {}) {
  gen::Layout l;
  const int lines = opt.reduced ? 2 : 4;
  const int stations = opt.reduced ? 5 : 8;
  const int supports = opt.reduced ? 2 : 8;
  const int width = opt.reduced ? 14 : 25;
  const int height = opt.reduced ? 10 : 32;
  const int line_gap = opt.reduced ? 3 : 7;
  std::vector<std::vector<std::uint32_t>> st(lines, std::vector<std::uint32_t>(stations));
  for (int ln = 0; ln < lines; ++ln)
    for (int k = 0; k < stations; ++k) {
      const AssetCategory cat = (k % 4 == 3) ? AssetCategory::Flammable : AssetCategory::General;
      st[ln][k] = gen::add_node(l, 1 + 3 * k, 2 + line_gap * ln, 100, cat);
      l.assignable.push_back(st[ln][k]);
    }
  std::vector<std::uint32_t> sup;
  for (int k = 0; k < supports; ++k) {
    sup.push_back(gen::add_node(l, 1 + 3 * k, height - 2, 100, AssetCategory::Support));
    l.starts.push_back(sup.back());
  }
  for (int ln = 0; ln < lines; ++ln) {
    for (int k = 0; k + 1 < stations; ++k) gen::link(l, st[ln][k], st[ln][k + 1]);
    if (ln + 1 < lines) {
      gen::link(l, st[ln][0], st[ln + 1][0]);
      gen::link(l, st[ln][stations - 1], st[ln + 1][stations - 1]);
    }
  }
  for (int k = 0; k < supports; ++k) {
    if (k + 1 < supports) gen::link(l, sup[k], sup[k + 1]);
    gen::link(l, sup[k], st[lines - 1][k]);
  }
  const std::size_t n_assign = opt.reduced ? 6 : static_cast<std::size_t>(lines * stations);
  ScenarioConfig c = gen::assemble("factory", width, height, opt.reduced ? 100 : 500, std::move(l), n_assign, 3, 6, opt);
  c.metrics.k_line = lines;
  c.metrics.delta_t = c.completion_time;
  return c;
}

/// Civil airport baggage handling: receiving, security, storage, punching and
/// haulage rows.
inline ScenarioConfig generate_airport(const GeneratorOptions& opt = {}) {
  gen::Layout l;
  struct Row {
    int y;
    std::vector<int> xs;
    std::int64_t w;
    AssetCategory cat;
    bool starts;
  };
  std::vector<Row> rows;
  if (opt.reduced) {
    rows = {{0, {0, 2, 4, 6}, 100, AssetCategory::General, true},
            {3, {0, 2, 4, 6}, 200, AssetCategory::Flammable, false},
            {6, {1, 5}, 100, AssetCategory::General, false},
            {8, {1, 5}, 100, AssetCategory::Support, false}};
  } else {
    rows = {{1, {1, 3, 5, 7, 9, 11}, 100, AssetCategory::General, true},
            {5, {1, 3, 5, 7, 9, 11}, 100, AssetCategory::General, false},
            {9, {1, 3, 5, 7, 9, 11}, 200, AssetCategory::Flammable, false},
            {12, {1, 3, 5, 7, 9, 11}, 200, AssetCategory::Flammable, false},
            {16, {2, 5, 8, 11}, 100, AssetCategory::General, false},
            {19, {3, 6, 9}, 100, AssetCategory::Support, false}};
  }
  std::vector<std::vector<std::uint32_t>> ids;
  for (const auto& r : rows) {
    std::vector<std::uint32_t> row;
    for (int x : r.xs) {
      row.push_back(gen::add_node(l, x, r.y, r.w, r.cat));
      if (r.cat != AssetCategory::Support) l.assignable.push_back(row.back());
      if (r.starts) l.starts.push_back(row.back());
    }
    ids.push_back(row);
  }
  for (std::size_t r = 0; r < ids.size(); ++r) {
    for (std::size_t k = 0; k + 1 < ids[r].size(); ++k) gen::link(l, ids[r][k], ids[r][k + 1]);
    if (r + 1 == ids.size()) continue;
    // each node links to the horizontally nearest node of the next row
    for (std::size_t k = 0; k < ids[r].size(); ++k) {
      const int x = rows[r].xs[k];
      std::size_t best = 0;
      for (std::size_t q = 1; q < rows[r + 1].xs.size(); ++q)
        if (std::abs(rows[r + 1].xs[q] - x) < std::abs(rows[r + 1].xs[best] - x)) best = q;
      gen::link(l, ids[r][k], ids[r + 1][best]);
    }
  }
  std::sort(l.edges.begin(), l.edges.end(), [](const EdgeSpec& a, const EdgeSpec& b) {
    return std::pair(a.a, a.b) < std::pair(b.a, b.b);
  });
  l.edges.erase(std::unique(l.edges.begin(), l.edges.end()), l.edges.end());
  const std::size_t n_assign = opt.reduced ? 6 : 20;
  ScenarioConfig c = gen::assemble("airport", opt.reduced ? 8 : 13, opt.reduced ? 10 : 21, opt.reduced ? 100 : 180,
                                   std::move(l), n_assign, 4, 8, opt);
  c.metrics.n_a = static_cast<int>(c.assignments.size());
  return c;
}

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"storage", "factory", "airport"};
  return names;
}

inline ScenarioConfig generate(const std::string& name, const GeneratorOptions& opt) {
  if (name == "storage") return generate_storage(opt);
  if (name == "factory") return generate_factory(opt);
  if (name == "airport") return generate_airport(opt);
  throw ValidationError("unknown scenario '" + name + "' (expected storage, factory or airport)");
}

struct TableCell {
  std::string scenario;
  int agents;
  int incidents;
};

/// The nine scenario x (agents, incidents) experiment cells.
inline std::vector<TableCell> table_cells() {
  std::vector<TableCell> out;
  for (const auto& s : scenario_names())
    for (int a : {2, 3, 4}) out.push_back({s, a, 2 * a});
  return out;
}

// ---- file format ----------------------------------------------------------

using ojson = nlohmann::ordered_json;

inline const char* category_name(AssetCategory c) {
  switch (c) {
    case AssetCategory::General: return "general";
    case AssetCategory::Flammable: return "flammable";
    case AssetCategory::Support: return "support";
  }
  return "general";
}

inline ojson to_json(const ScenarioConfig& c) {
  ojson j;
  j["format"] = kScenarioFormat;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["grid"] = {{"width", c.width}, {"height", c.height}};
  j["t_max"] = c.t_max;
  j["completion_time"] = c.completion_time;
  j["sensing_radius"] = c.sensing_radius;
  j["metrics"] = {{"delta_t", c.metrics.delta_t}, {"k_line", c.metrics.k_line}, {"n_a", c.metrics.n_a}};
  const auto& s = c.spread;
  ojson sp;
  sp["tau"] = s.tau;
  sp["growth_rate"] = s.growth_rate;
  sp["seed_fraction"] = s.seed_fraction;
  sp["suppression_fraction"] = s.suppression_fraction;
  sp["k_nearest"] = s.k_nearest;
  sp["p_extra"] = s.p_extra;
  sp["neighbor_rate"] = {s.neighbor_rate_min, s.neighbor_rate_max};
  sp["pipeline_rate"] = {s.pipeline_rate_min, s.pipeline_rate_max};
  sp["seed"] = s.seed;
  if (s.edges) {
    ojson edges = ojson::array();
    for (const auto& e : *s.edges) edges.push_back({e.from, e.to, e.base_rate});
    sp["edges"] = edges;
  }
  j["spread"] = sp;
  ojson nodes = ojson::array();
  for (const auto& n : c.nodes)
    nodes.push_back({{"x", n.x}, {"y", n.y}, {"assets", n.assets}, {"category", category_name(n.category)}});
  j["nodes"] = nodes;
  ojson edges = ojson::array();
  for (const auto& e : c.edges) {
    if (e.distance)
      edges.push_back({e.a, e.b, *e.distance});
    else
      edges.push_back({e.a, e.b});
  }
  j["edges"] = edges;
  ojson assignments = ojson::array();
  for (const auto& a : c.assignments) assignments.push_back({{"node", a.node}, {"deadline", a.deadline}, {"value", a.value}});
  j["assignments"] = assignments;
  j["agent_starts"] = c.agent_starts;
  j["initial_incidents"] = c.initial_incidents;
  return j;
}

namespace detail {

inline bool is_container(const ojson& v) { return v.is_object() || v.is_array(); }

// Objects expand one key per line; arrays holding containers put one entry per
// line; everything else is written compactly.
inline void write_canonical(const ojson& v, int indent, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  if (v.is_object() && !v.empty()) {
    out += "{\n";
    std::size_t k = 0;
    for (auto it = v.begin(); it != v.end(); ++it, ++k) {
      out += pad + ojson(it.key()).dump() + ": ";
      write_canonical(it.value(), indent + 2, out);
      out += k + 1 < v.size() ? ",\n" : "\n";
    }
    out += std::string(static_cast<std::size_t>(indent), ' ') + "}";
  } else if (v.is_array() && std::any_of(v.begin(), v.end(), is_container)) {
    out += "[\n";
    for (std::size_t k = 0; k < v.size(); ++k) out += pad + v[k].dump() + (k + 1 < v.size() ? ",\n" : "\n");
    out += std::string(static_cast<std::size_t>(indent), ' ') + "]";
  } else {
    out += v.dump();
  }
}

/// Strict field reader: every access names the full field path, and unknown
/// keys are rejected.
class Reader {
 public:
  Reader(const ojson& v, std::string path) : v_(v), path_(std::move(path)) {}

  const ojson& value() const { return v_; }
  const std::string& path() const { return path_; }

  void expect_object(std::initializer_list<const char*> allowed) const {
    if (!v_.is_object()) fail("must be an object");
    for (auto it = v_.begin(); it != v_.end(); ++it) {
      bool known = false;
      for (const char* a : allowed) known = known || it.key() == a;
      if (!known) throw FormatError("scenario: unknown field '" + child_path(it.key()) + "'");
    }
  }

  bool has(const char* key) const { return v_.contains(key); }

  Reader field(const char* key) const {
    if (!v_.is_object() || !v_.contains(key)) throw FormatError("scenario: missing field '" + child_path(key) + "'");
    return Reader(v_.at(key), child_path(key));
  }

  Reader at(std::size_t i) const {
    if (!v_.is_array() || i >= v_.size()) fail("index out of range");
    return Reader(v_.at(i), path_ + "[" + std::to_string(i) + "]");
  }

  std::size_t array_size() const {
    if (!v_.is_array()) fail("must be an array");
    return v_.size();
  }

  std::int64_t integer() const {
    if (!v_.is_number_integer()) fail("must be an integer");
    if (v_.is_number_unsigned() && v_.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) fail("is out of range");
    return v_.get<std::int64_t>();
  }

  int int32() const {
    const auto x = integer();
    if (x < INT32_MIN || x > INT32_MAX) fail("is out of range");
    return static_cast<int>(x);
  }

  std::uint32_t index() const {
    const auto x = integer();
    if (x < 0 || x > static_cast<std::int64_t>(UINT32_MAX)) fail("must be a non-negative index");
    return static_cast<std::uint32_t>(x);
  }

  std::uint64_t uint64() const {
    if (!v_.is_number_unsigned() && !(v_.is_number_integer() && v_.get<std::int64_t>() >= 0)) fail("must be a non-negative integer");
    return v_.get<std::uint64_t>();
  }

  double number() const {
    if (!v_.is_number()) fail("must be a number");
    return v_.get<double>();
  }

  std::string string() const {
    if (!v_.is_string()) fail("must be a string");
    return v_.get<std::string>();
  }

  [[noreturn]] void fail(const std::string& why) const { throw FormatError("scenario: field '" + path_ + "' " + why); }

 private:
  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const ojson& v_;
  std::string path_;
};

inline AssetCategory parse_category(const Reader& r) {
  const std::string s = r.string();
  if (s == "general") return AssetCategory::General;
  if (s == "flammable") return AssetCategory::Flammable;
  if (s == "support") return AssetCategory::Support;
  r.fail("must be one of general, flammable, support");
}

inline std::pair<double, double> parse_range(const Reader& r) {
  if (r.array_size() != 2) r.fail("must be a [min, max] pair");
  return {r.at(0).number(), r.at(1).number()};
}

}  // namespace detail

/// Canonical text form: fixed field order, one list entry per line.
inline std::string to_canonical_string(const ScenarioConfig& c) {
  std::string out;
  detail::write_canonical(to_json(c), 0, out);
  out += "\n";
  return out;
}

inline ScenarioConfig from_json(const ojson& j) {
  using detail::Reader;
  Reader root(j, "");
  root.expect_object({"format", "name", "seed", "grid", "t_max", "completion_time", "sensing_radius", "metrics", "spread",
                      "nodes", "edges", "assignments", "agent_starts", "initial_incidents"});
  const std::string format = root.field("format").string();
  if (format != kScenarioFormat)
    throw FormatError("scenario: field 'format' is '" + format + "', expected '" + kScenarioFormat + "'");

  ScenarioConfig c;
  c.name = root.field("name").string();
  c.seed = root.field("seed").uint64();
  const Reader grid = root.field("grid");
  grid.expect_object({"width", "height"});
  c.width = grid.field("width").int32();
  c.height = grid.field("height").int32();
  c.t_max = root.field("t_max").int32();
  c.completion_time = root.field("completion_time").int32();
  c.sensing_radius = root.field("sensing_radius").number();

  const Reader m = root.field("metrics");
  m.expect_object({"delta_t", "k_line", "n_a"});
  c.metrics.delta_t = m.field("delta_t").number();
  c.metrics.k_line = m.field("k_line").int32();
  c.metrics.n_a = m.field("n_a").int32();

  const Reader sp = root.field("spread");
  sp.expect_object({"tau", "growth_rate", "seed_fraction", "suppression_fraction", "k_nearest", "p_extra", "neighbor_rate",
                    "pipeline_rate", "seed", "edges"});
  auto& s = c.spread;
  s.tau = sp.field("tau").number();
  s.growth_rate = sp.field("growth_rate").number();
  s.seed_fraction = sp.field("seed_fraction").number();
  s.suppression_fraction = sp.field("suppression_fraction").number();
  s.k_nearest = sp.field("k_nearest").int32();
  s.p_extra = sp.field("p_extra").number();
  std::tie(s.neighbor_rate_min, s.neighbor_rate_max) = detail::parse_range(sp.field("neighbor_rate"));
  std::tie(s.pipeline_rate_min, s.pipeline_rate_max) = detail::parse_range(sp.field("pipeline_rate"));
  s.seed = sp.field("seed").uint64();
  if (sp.has("edges")) {
    const Reader edges = sp.field("edges");
    std::vector<SpreadEdgeSpec> list;
    for (std::size_t i = 0; i < edges.array_size(); ++i) {
      const Reader e = edges.at(i);
      if (e.array_size() != 3) e.fail("must be [from, to, base_rate]");
      list.push_back({e.at(0).index(), e.at(1).index(), e.at(2).number()});
    }
    s.edges = std::move(list);
  }

  const Reader nodes = root.field("nodes");
  for (std::size_t i = 0; i < nodes.array_size(); ++i) {
    const Reader n = nodes.at(i);
    n.expect_object({"x", "y", "assets", "category"});
    c.nodes.push_back({n.field("x").int32(), n.field("y").int32(), n.field("assets").integer(),
                       detail::parse_category(n.field("category"))});
  }
  const Reader edges = root.field("edges");
  for (std::size_t i = 0; i < edges.array_size(); ++i) {
    const Reader e = edges.at(i);
    const std::size_t k = e.array_size();
    if (k != 2 && k != 3) e.fail("must be [a, b] or [a, b, distance]");
    EdgeSpec spec{e.at(0).index(), e.at(1).index(), std::nullopt};
    if (k == 3) spec.distance = e.at(2).number();
    c.edges.push_back(spec);
  }
  const Reader assignments = root.field("assignments");
  for (std::size_t i = 0; i < assignments.array_size(); ++i) {
    const Reader a = assignments.at(i);
    a.expect_object({"node", "deadline", "value"});
    c.assignments.push_back({a.field("node").index(), a.field("deadline").int32(), a.field("value").integer()});
  }
  const Reader starts = root.field("agent_starts");
  for (std::size_t i = 0; i < starts.array_size(); ++i) c.agent_starts.push_back(starts.at(i).index());
  const Reader incidents = root.field("initial_incidents");
  for (std::size_t i = 0; i < incidents.array_size(); ++i) c.initial_incidents.push_back(incidents.at(i).index());

  validate(c);
  return c;
}

/// Parses scenario text; syntax errors carry the parser's line and column.
inline ScenarioConfig parse_scenario(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("scenario: ") + e.what());
  }
  return from_json(j);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it into place, so readers
/// never see a partial file.
inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out.flush()) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline void save_scenario(const ScenarioConfig& c, const std::filesystem::path& path) {
  validate(c);
  write_text_file(path, to_canonical_string(c));
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  try {
    return parse_scenario(read_text_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline std::string cell_file_name(const TableCell& cell) {
  return cell.scenario + "_a" + std::to_string(cell.agents) + "_i" + std::to_string(cell.incidents) + ".json";
}

}  // namespace edei
