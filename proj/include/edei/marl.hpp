#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edei/core.hpp"
#include "edei/environment.hpp"
#include "edei/metrics.hpp"
#include "edei/nn.hpp"
#include "edei/predictor.hpp"

namespace edei {

// ---- baseline policies ----------------------------------------------------

/// Known incidents first, best w / max(d, 1) (ties: nearer, then lower id);
/// otherwise the pending assignment with the earliest deadline (ties: nearer,
/// then lower id); otherwise stay.
inline NodeId greedy_choice(const Scene& scene, const WorldState& s, std::size_t agent) {
  const NodeId here = s.agents.at(agent).position;
  const auto& view = s.views.at(agent);
  std::optional<NodeId> best;
  double best_score = -1.0, best_d = kUnreachable;
  for (std::size_t i = 0; i < view.known_incident.size(); ++i) {
    if (!view.known_incident[i]) continue;
    const NodeId id(i);
    const double d = scene.graph.distance(here, id);
    const double score = static_cast<double>(s.hazard.nodes[i].assets) / std::max(1.0, d);
    if (!best || score > best_score || (score == best_score && d < best_d)) {
      best = id;
      best_score = score;
      best_d = d;
    }
  }
  if (best) return *best;

  int best_deadline = 0;
  for (const auto& a : s.log.items()) {
    if (is_terminal(a.status)) continue;
    const double d = scene.graph.distance(here, a.node);
    if (!best || a.deadline < best_deadline || (a.deadline == best_deadline && (d < best_d || (d == best_d && a.node < *best)))) {
      best = a.node;
      best_deadline = a.deadline;
      best_d = d;
    }
  }
  return best ? *best : here;
}

inline JointAction greedy_policy(const Scene& scene, const WorldState& s) {
  JointAction out;
  for (std::size_t a = 0; a < s.agents.size(); ++a) out.push_back(greedy_choice(scene, s, a));
  return out;
}

inline JointAction random_policy(const Scene& scene, const WorldState& s, Rng& rng) {
  JointAction out;
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    const auto valid = valid_actions(scene, s, a);
    out.push_back(valid[rng.below(valid.size())]);
  }
  return out;
}

// ---- replay ---------------------------------------------------------------

/// Compact form of everything observations and the joint state are built
/// from: the node channel block plus agent positions and targets.
struct Snapshot {
  std::vector<double> nodes;  // kNodeChannels * n
  std::vector<std::uint32_t> positions;
  std::vector<std::uint32_t> targets;

  bool operator==(const Snapshot&) const = default;
};

inline Snapshot snapshot(const Scene& scene, const WorldState& s) {
  Snapshot out;
  out.nodes.assign(kNodeChannels * scene.node_count(), 0.0);
  write_node_channels(scene, s, out.nodes);
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    out.positions.push_back(s.agents[a].position.index);
    out.targets.push_back(s.views[a].targets.at(a).index);
  }
  return out;
}

/// Same layout as observe().
inline void write_observation(const Snapshot& snap, std::size_t agent, std::span<double> out) {
  const std::size_t n = snap.nodes.size() / kNodeChannels;
  const std::size_t m = snap.positions.size();
  std::fill(out.begin(), out.end(), 0.0);
  std::copy(snap.nodes.begin(), snap.nodes.end(), out.begin());
  out[kNodeChannels * n + snap.positions[agent]] = 1.0;
  if (m > 1) {
    const double share = 1.0 / static_cast<double>(m - 1);
    for (std::size_t b = 0; b < m; ++b) {
      if (b == agent) continue;
      out[(kNodeChannels + 1) * n + snap.positions[b]] += share;
      out[(kNodeChannels + 2) * n + snap.targets[b]] += share;
    }
  }
}

/// Same layout as global_state().
inline void write_state(const Snapshot& snap, std::span<double> out) {
  const std::size_t n = snap.nodes.size() / kNodeChannels;
  const std::size_t m = snap.positions.size();
  std::fill(out.begin(), out.end(), 0.0);
  std::copy(snap.nodes.begin(), snap.nodes.end(), out.begin());
  for (std::size_t a = 0; a < m; ++a) {
    out[(kNodeChannels + a) * n + snap.positions[a]] = 1.0;
    out[(kNodeChannels + m + a) * n + snap.targets[a]] = 1.0;
  }
}

struct Transition {
  Snapshot state;
  std::vector<std::vector<char>> masks;  // valid slots per agent at s
  std::vector<std::uint32_t> actions;    // chosen slot per agent
  double reward = 0.0;
  Snapshot next_state;
  std::vector<std::vector<char>> next_masks;
  bool terminal = false;
  double terminal_value = 0.0;  // discounted tail of a resolved episode
  std::vector<char> completed;  // omega_t
  std::vector<char> incidents;  // V^f as known to the team
  PredictionSet prediction;     // T_t

  bool operator==(const Transition&) const = default;
};

/// Fixed-capacity ring buffer with uniform sampling without replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ValidationError("replay buffer: capacity must be positive");
  }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[head_] = std::move(t);
    }
    head_ = (head_ + 1) % capacity_;
    ++pushed_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t pushed() const { return pushed_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const {
    if (count > items_.size()) throw ValidationError("replay buffer: sample larger than buffer");
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      const std::size_t k = rng.below(items_.size());
      if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    }
    return out;
  }

  std::vector<const Transition*> sample(std::size_t count, Rng& rng) const {
    std::vector<const Transition*> out;
    for (std::size_t k : sample_indices(count, rng)) out.push_back(&items_[k]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;
  std::size_t pushed_ = 0;
};

// ---- networks -------------------------------------------------------------

struct NetShape {
  std::size_t obs = 0;
  std::size_t state = 0;
  std::size_t actions = 0;  // slots, one per node
  std::size_t agents = 0;
  std::size_t hidden = 64;

  std::size_t critic_input() const { return state + agents * actions; }
  bool operator==(const NetShape&) const = default;
};

inline NetShape net_shape(const Scene& scene, std::size_t hidden) {
  return {observation_size(scene), state_size(scene), scene.node_count(), scene.agent_count(), hidden};
}

/// Actor, critic and their lagged targets for one agent.
struct AgentNets {
  NetShape shape;
  nn::ParameterStore actor;
  nn::ParameterStore critic;
  nn::ParameterStore actor_target;
  nn::ParameterStore critic_target;
  nn::Mlp actor_net;
  nn::Mlp critic_net;
  nn::Adam actor_opt;
  nn::Adam critic_opt;

  static AgentNets create(const NetShape& shape, Rng& rng, nn::AdamConfig actor_cfg = {}, nn::AdamConfig critic_cfg = {}) {
    AgentNets a;
    a.shape = shape;
    a.actor_net = nn::Mlp::create(a.actor, "mlp", shape.obs, {shape.hidden, shape.hidden}, shape.actions, rng);
    a.critic_net = nn::Mlp::create(a.critic, "mlp", shape.critic_input(), {shape.hidden, shape.hidden}, 1, rng);
    a.actor_target = a.actor;
    a.critic_target = a.critic;
    a.actor_opt = nn::Adam(a.actor, actor_cfg);
    a.critic_opt = nn::Adam(a.critic, critic_cfg);
    return a;
  }

  void soft_update(double rho) {
    nn::soft_update(actor, actor_target, rho);
    nn::soft_update(critic, critic_target, rho);
  }
};

/// Masked greedy or epsilon-greedy slot choice. nullopt when nothing is valid.
inline std::optional<std::size_t> select_action(const AgentNets& nets, std::span<const double> obs, std::span<const char> mask,
                                                double epsilon, Rng& rng) {
  std::vector<std::size_t> valid;
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (mask[k]) valid.push_back(k);
  if (valid.empty()) return std::nullopt;
  if (valid.size() == 1) return valid.front();
  if (epsilon > 0.0 && rng.uniform() < epsilon) return valid[rng.below(valid.size())];
  nn::Matrix x(1, obs.size());
  std::copy(obs.begin(), obs.end(), x.data.begin());
  const nn::Matrix logits = nets.actor_net.eval(nets.actor, x);
  std::size_t best = valid.front();
  for (std::size_t k : valid)
    if (logits.data[k] > logits.data[best]) best = k;
  return best;
}

/// Minibatch laid out as matrices, one row per sample.
struct Batch {
  std::size_t size = 0;
  std::vector<nn::Matrix> obs;        // per agent, S x obs
  std::vector<nn::Matrix> next_obs;
  std::vector<nn::Matrix> masks;      // per agent, S x slots
  std::vector<nn::Matrix> next_masks;
  std::vector<nn::Matrix> actions;    // per agent one-hot, S x slots
  nn::Matrix state;                   // S x state
  nn::Matrix next_state;
  nn::Matrix reward;                  // S x 1
  std::vector<char> terminal;
  nn::Matrix terminal_value;          // S x 1
};

inline Batch make_batch(std::span<const Transition* const> samples, const NetShape& shape) {
  Batch b;
  const std::size_t S = samples.size();
  b.size = S;
  for (std::size_t a = 0; a < shape.agents; ++a) {
    b.obs.emplace_back(S, shape.obs);
    b.next_obs.emplace_back(S, shape.obs);
    b.masks.emplace_back(S, shape.actions);
    b.next_masks.emplace_back(S, shape.actions);
    b.actions.emplace_back(S, shape.actions);
  }
  b.state = nn::Matrix(S, shape.state);
  b.next_state = nn::Matrix(S, shape.state);
  b.reward = nn::Matrix(S, 1);
  b.terminal.assign(S, 0);
  b.terminal_value = nn::Matrix(S, 1);
  for (std::size_t i = 0; i < S; ++i) {
    const Transition& t = *samples[i];
    if (t.actions.size() != shape.agents || t.state.nodes.size() != kNodeChannels * shape.actions)
      throw ShapeError("make_batch: transition does not match network shape");
    for (std::size_t a = 0; a < shape.agents; ++a) {
      write_observation(t.state, a, std::span<double>(&b.obs[a].data[i * shape.obs], shape.obs));
      write_observation(t.next_state, a, std::span<double>(&b.next_obs[a].data[i * shape.obs], shape.obs));
      for (std::size_t k = 0; k < shape.actions; ++k) {
        b.masks[a](i, k) = t.masks[a][k] ? 1.0 : 0.0;
        b.next_masks[a](i, k) = t.next_masks[a][k] ? 1.0 : 0.0;
      }
      b.actions[a](i, t.actions[a]) = 1.0;
    }
    write_state(t.state, std::span<double>(&b.state.data[i * shape.state], shape.state));
    write_state(t.next_state, std::span<double>(&b.next_state.data[i * shape.state], shape.state));
    b.reward.data[i] = t.reward;
    b.terminal[i] = t.terminal ? 1 : 0;
    b.terminal_value.data[i] = t.terminal_value;
  }
  return b;
}

inline nn::Matrix concat_cols(const std::vector<const nn::Matrix*>& parts) {
  const std::size_t rows = parts.front()->rows;
  std::size_t cols = 0;
  for (auto* p : parts) cols += p->cols;
  nn::Matrix out(rows, cols);
  std::size_t off = 0;
  for (auto* p : parts) {
    for (std::size_t i = 0; i < rows; ++i) std::copy_n(&p->data[i * p->cols], p->cols, &out.data[i * cols + off]);
    off += p->cols;
  }
  return out;
}

/// Row-wise masked softmax without recording.
inline nn::Matrix masked_softmax_eval(const nn::Matrix& logits, const nn::Matrix& mask) {
  nn::Tape t;
  return nn::masked_softmax(t.constant(logits), mask).value();
}

/// Relaxed next-step actions of every agent's target actor.
inline std::vector<nn::Matrix> target_actions(const std::vector<AgentNets>& agents, const Batch& b) {
  std::vector<nn::Matrix> out;
  for (std::size_t a = 0; a < agents.size(); ++a)
    out.push_back(masked_softmax_eval(agents[a].actor_net.eval(agents[a].actor_target, b.next_obs[a]), b.next_masks[a]));
  return out;
}

/// y = r + gamma * Q'(s', u'_1..u'_N). Terminal samples use y = r plus the
/// stored tail value (zero unless the episode ended resolved).
inline nn::Matrix critic_target(const AgentNets& nets, const Batch& b, const std::vector<nn::Matrix>& next_actions, double gamma) {
  std::vector<const nn::Matrix*> parts{&b.next_state};
  for (const auto& u : next_actions) parts.push_back(&u);
  const nn::Matrix q = nets.critic_net.eval(nets.critic_target, concat_cols(parts));
  nn::Matrix y(b.size, 1);
  for (std::size_t i = 0; i < b.size; ++i) y.data[i] = b.reward.data[i] + (b.terminal[i] ? b.terminal_value.data[i] : gamma * q.data[i]);
  return y;
}

inline nn::Matrix critic_input(const Batch& b) {
  std::vector<const nn::Matrix*> parts{&b.state};
  for (const auto& u : b.actions) parts.push_back(&u);
  return concat_cols(parts);
}

/// One MSE step of the critic towards y. Returns the pre-step loss.
inline double update_critic(AgentNets& nets, const Batch& b, const nn::Matrix& y) {
  nets.critic.zero_grad();
  nn::Tape t;
  nn::Var q = nets.critic_net(t, nets.critic, t.constant(critic_input(b)));
  nn::Var loss = nn::mse(q, y);
  const double value = loss.value().data[0];
  t.backward(loss);
  nets.critic_opt.step(nets.critic);
  return value;
}

/// Builds -mean Q(s, u_1..softmax(mu_i(o_i))..u_N) on a tape. Other agents'
/// actions are the stored ones; the critic is held fixed.
inline nn::Var actor_objective(nn::Tape& t, AgentNets& nets, std::size_t agent, const Batch& b) {
  nn::Var logits = nets.actor_net(t, nets.actor, t.constant(b.obs[agent]));
  nn::Var relaxed = nn::masked_softmax(logits, b.masks[agent]);
  std::vector<nn::Var> parts{t.constant(b.state)};
  for (std::size_t a = 0; a < b.actions.size(); ++a) parts.push_back(a == agent ? relaxed : t.constant(b.actions[a]));
  nn::Var q = nets.critic_net(t, nets.critic, nn::concat_cols(parts), false);
  return nn::scale(nn::mean_all(q), -1.0);
}

/// One policy-gradient step for agent i. Returns the gradient norm.
inline double update_actor(AgentNets& nets, std::size_t agent, const Batch& b) {
  nets.actor.zero_grad();
  nn::Tape t;
  t.backward(actor_objective(t, nets, agent, b));
  double sq = 0.0;
  for (const auto& p : nets.actor.all())
    for (double g : p.grad.data) sq += g * g;
  nets.actor_opt.step(nets.actor);
  return std::sqrt(sq);
}

// ---- training -------------------------------------------------------------

/// Discounted sum of a constant reward r received for k more steps:
/// sum_{j=1..k} gamma^j r. An episode that ends because all work is resolved
/// would keep paying its settled reward until t_max; counting that tail keeps
/// early resolution from looking worse than stalling.
inline double settled_value(double r, int k, double gamma) {
  if (k <= 0) return 0.0;
  if (gamma >= 1.0) return r * k;
  return r * gamma * (1.0 - std::pow(gamma, k)) / (1.0 - gamma);
}

struct MaddpgConfig {
  int episodes = 2000;
  double gamma = 0.95;
  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 64;
  std::size_t warmup = 1000;
  double rho = 0.01;
  std::size_t hidden = 64;
  double epsilon_start = 0.3;
  double epsilon_end = 0.02;
  double anneal_fraction = 0.5;
  int update_every = 1;
  nn::AdamConfig actor_adam{};
  nn::AdamConfig critic_adam{};
  bool use_predictor = false;
  int predictor_episodes = 20;
  int predictor_epochs = 10;
  PredictorConfig predictor{};
  std::uint64_t seed = 0;

  void validate() const {
    std::vector<std::string> problems;
    if (episodes <= 0) problems.push_back("episodes must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) problems.push_back("gamma must be in [0,1]");
    if (buffer_capacity == 0) problems.push_back("buffer_capacity must be positive");
    if (batch_size == 0 || batch_size > buffer_capacity) problems.push_back("batch_size must be in [1, buffer_capacity]");
    if (!(rho >= 0.0 && rho <= 1.0)) problems.push_back("rho must be in [0,1]");
    if (hidden == 0) problems.push_back("hidden must be positive");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
      problems.push_back("epsilon bounds must be in [0,1]");
    if (!(anneal_fraction > 0.0 && anneal_fraction <= 1.0)) problems.push_back("anneal_fraction must be in (0,1]");
    if (update_every <= 0) problems.push_back("update_every must be positive");
    if (use_predictor && (predictor_episodes <= 0 || predictor_epochs <= 0))
      problems.push_back("predictor_episodes and predictor_epochs must be positive");
    if (problems.empty()) return;
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
};

inline double epsilon_at(const MaddpgConfig& c, int episode) {
  const double horizon = c.anneal_fraction * c.episodes;
  const double frac = std::min(1.0, static_cast<double>(episode) / std::max(1.0, horizon));
  return c.epsilon_start + (c.epsilon_end - c.epsilon_start) * frac;
}

inline std::uint64_t training_episode_seed(std::uint64_t seed, int episode) {
  return derive_seed(seed, 5000 + static_cast<std::uint64_t>(episode));
}
inline std::uint64_t eval_episode_seed(std::uint64_t seed, int episode) {
  return derive_seed(seed, 9000 + static_cast<std::uint64_t>(episode));
}

/// Decision rule shared by evaluation and training rollouts.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual JointAction act(const Scene& scene, const WorldState& s, Rng& rng) = 0;
  /// Forecaster the environment should run while this policy acts.
  virtual std::shared_ptr<IncidentForecaster> forecaster() const { return nullptr; }
};

class GreedyPolicy : public Policy {
 public:
  std::string name() const override { return "greedy"; }
  JointAction act(const Scene& scene, const WorldState& s, Rng&) override { return greedy_policy(scene, s); }
};

class RandomPolicy : public Policy {
 public:
  std::string name() const override { return "random"; }
  JointAction act(const Scene& scene, const WorldState& s, Rng& rng) override { return random_policy(scene, s, rng); }
};

/// Decentralised execution: each actor sees only its own observation.
class ActorPolicy : public Policy {
 public:
  ActorPolicy(std::string name, std::shared_ptr<const std::vector<AgentNets>> agents,
              std::shared_ptr<IncidentPredictor> predictor = nullptr)
      : name_(std::move(name)), agents_(std::move(agents)), predictor_(std::move(predictor)) {}

  std::string name() const override { return name_; }

  JointAction act(const Scene& scene, const WorldState& s, Rng& rng) override {
    JointAction out;
    for (std::size_t a = 0; a < s.agents.size(); ++a) {
      const auto obs = observe(scene, s, a);
      const auto mask = action_mask(scene, s, a);
      const auto slot = select_action((*agents_)[a], obs, mask, 0.0, rng);
      out.push_back(slot ? NodeId(*slot) : s.agents[a].position);
    }
    return out;
  }

  std::shared_ptr<IncidentForecaster> forecaster() const override {
    return predictor_ ? std::make_shared<GruForecaster>(predictor_) : nullptr;
  }

 private:
  std::string name_;
  std::shared_ptr<const std::vector<AgentNets>> agents_;
  std::shared_ptr<IncidentPredictor> predictor_;
};

/// Plays `episodes` evaluation episodes and returns one record per episode.
inline std::vector<EpisodeRecord> evaluate(const std::shared_ptr<const Scene>& scene, Policy& policy, int episodes,
                                           std::uint64_t seed) {
  if (episodes <= 0) throw ValidationError("episodes must be positive");
  Environment env(scene);
  env.set_forecaster(policy.forecaster());
  Rng rng(derive_seed(seed, 3));
  std::vector<EpisodeRecord> out;
  for (int e = 0; e < episodes; ++e) {
    env.reset(eval_episode_seed(seed, e));
    double ret = 0.0;
    while (!env.done()) ret += env.step(policy.act(*scene, env.state(), rng)).reward;
    EpisodeRecord r = record_episode(env, ret);
    r.episode = static_cast<std::size_t>(e);
    r.policy = policy.name();
    r.seed = seed;
    out.push_back(std::move(r));
  }
  return out;
}

struct TrainStats {
  std::size_t env_steps = 0;
  std::size_t updates = 0;
  double last_critic_loss = 0.0;
  double last_actor_grad = 0.0;
  std::optional<PredictorReport> predictor;
};

/// Centralised training of per-agent actors and critics (MADDPG), optionally
/// with the incident predictor feeding its forecast into every observation.
class MaddpgTrainer {
 public:
  MaddpgTrainer(std::shared_ptr<const Scene> scene, MaddpgConfig config)
      : scene_(std::move(scene)), cfg_(std::move(config)), env_(scene_), buffer_(validated(cfg_).buffer_capacity),
        explore_rng_(derive_seed(cfg_.seed, 11)), sample_rng_(derive_seed(cfg_.seed, 12)) {
    nn::retain_freed_memory();
    Rng init(derive_seed(cfg_.seed, 10));
    shape_ = net_shape(*scene_, cfg_.hidden);
    auto agents = std::make_shared<std::vector<AgentNets>>();
    for (std::size_t a = 0; a < shape_.agents; ++a)
      agents->push_back(AgentNets::create(shape_, init, cfg_.actor_adam, cfg_.critic_adam));
    agents_ = agents;
  }

  const MaddpgConfig& config() const { return cfg_; }
  const NetShape& shape() const { return shape_; }
  std::vector<AgentNets>& agents() { return *agents_; }
  const std::shared_ptr<std::vector<AgentNets>>& agents_ptr() const { return agents_; }
  const std::shared_ptr<IncidentPredictor>& predictor() const { return predictor_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const TrainStats& stats() const { return stats_; }
  std::string policy_name() const { return cfg_.use_predictor ? "pmaddpg" : "maddpg"; }

  /// Fits the incident predictor on rollouts of a mixed greedy/random policy,
  /// then freezes it as the environment's forecaster.
  void prepare_predictor() {
    if (!cfg_.use_predictor || predictor_) return;
    predictor_ = std::make_shared<IncidentPredictor>(cfg_.predictor, derive_seed(cfg_.seed, 13));
    RolloutPolicy mixed = [](const Scene& sc, const WorldState& s, Rng& rng) {
      JointAction act = greedy_policy(sc, s);
      for (std::size_t a = 0; a < act.size(); ++a) {
        if (rng.uniform() < 0.5) {
          const auto valid = valid_actions(sc, s, a);
          act[a] = valid[rng.below(valid.size())];
        }
      }
      return act;
    };
    const auto data = collect_rollouts(scene_, mixed, cfg_.predictor_episodes, cfg_.predictor.window, derive_seed(cfg_.seed, 14));
    Rng rng(derive_seed(cfg_.seed, 15));
    stats_.predictor = train_predictor(*predictor_, data, cfg_.predictor_epochs, rng);
    env_.set_forecaster(std::make_shared<GruForecaster>(predictor_));
  }

  /// Runs one training episode and returns its record.
  EpisodeRecord run_episode(int episode) {
    prepare_predictor();
    const double eps = epsilon_at(cfg_, episode);
    env_.reset(training_episode_seed(cfg_.seed, episode));
    const Scene& sc = *scene_;
    Snapshot snap = snapshot(sc, env_.state());
    auto masks = all_masks();
    std::vector<double> obs(shape_.obs);
    double ret = 0.0;
    while (!env_.done()) {
      const WorldState& s = env_.state();
      JointAction act;
      std::vector<std::uint32_t> slots;
      for (std::size_t a = 0; a < shape_.agents; ++a) {
        write_observation(snap, a, obs);
        const auto slot = select_action((*agents_)[a], obs, masks[a], eps, explore_rng_);
        const NodeId target = slot ? NodeId(*slot) : s.agents[a].position;
        act.push_back(target);
        slots.push_back(target.index);
      }
      Transition tr;
      tr.completed = s.views.front().completed;
      tr.incidents = s.views.front().known_incident;
      tr.prediction = s.prediction;
      const StepResult res = env_.step(act);
      ret += res.reward;
      Snapshot next = snapshot(sc, env_.state());
      auto next_masks = all_masks();
      tr.state = std::move(snap);
      tr.masks = std::move(masks);
      tr.actions = std::move(slots);
      tr.reward = res.reward;
      tr.next_state = next;
      tr.next_masks = next_masks;
      tr.terminal = res.done;
      if (res.info.resolved) tr.terminal_value = settled_value(res.info.settled_reward, res.info.steps_to_horizon, cfg_.gamma);
      buffer_.push(std::move(tr));
      ++stats_.env_steps;
      if (buffer_.size() >= std::max(cfg_.warmup, cfg_.batch_size) &&
          stats_.env_steps % static_cast<std::size_t>(cfg_.update_every) == 0)
        learn();
      snap = std::move(next);
      masks = std::move(next_masks);
    }
    EpisodeRecord r = record_episode(env_, ret);
    r.episode = static_cast<std::size_t>(episode);
    r.policy = policy_name();
    r.seed = cfg_.seed;
    return r;
  }

  /// One centralised update of every agent on a shared minibatch.
  void learn() {
    const auto samples = buffer_.sample(cfg_.batch_size, sample_rng_);
    const Batch b = make_batch(samples, shape_);
    const auto next_actions = target_actions(*agents_, b);
    for (std::size_t a = 0; a < shape_.agents; ++a) {
      AgentNets& nets = (*agents_)[a];
      const nn::Matrix y = critic_target(nets, b, next_actions, cfg_.gamma);
      stats_.last_critic_loss = update_critic(nets, b, y);
      stats_.last_actor_grad = update_actor(nets, a, b);
    }
    for (auto& nets : *agents_) nets.soft_update(cfg_.rho);
    ++stats_.updates;
  }

  std::vector<EpisodeRecord> train(const std::function<void(const EpisodeRecord&)>& on_episode = {}) {
    std::vector<EpisodeRecord> out;
    for (int e = 0; e < cfg_.episodes; ++e) {
      out.push_back(run_episode(e));
      if (on_episode) on_episode(out.back());
    }
    return out;
  }

  std::unique_ptr<ActorPolicy> policy() const { return std::make_unique<ActorPolicy>(policy_name(), agents_, predictor_); }

 private:
  static const MaddpgConfig& validated(const MaddpgConfig& c) {
    c.validate();
    return c;
  }

  std::vector<std::vector<char>> all_masks() const {
    std::vector<std::vector<char>> out;
    for (std::size_t a = 0; a < shape_.agents; ++a) out.push_back(action_mask(*scene_, env_.state(), a));
    return out;
  }

  std::shared_ptr<const Scene> scene_;
  MaddpgConfig cfg_;
  NetShape shape_;
  Environment env_;
  ReplayBuffer buffer_;
  Rng explore_rng_;
  Rng sample_rng_;
  std::shared_ptr<std::vector<AgentNets>> agents_;
  std::shared_ptr<IncidentPredictor> predictor_;
  TrainStats stats_;
};

}  // namespace edei
