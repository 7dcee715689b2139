#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "edei/core.hpp"
#include "edei/environment.hpp"
#include "edei/nn.hpp"

namespace edei {

inline constexpr std::size_t kFeatureColumns = 4;

/// F_xi = w_i * sum_{j burning} f_j / max(1, d_ij).
inline double vulnerability_feature(const OperationGraph& g, std::span<const std::int64_t> assets,
                                    std::span<const double> severity, std::span<const char> burning, NodeId i) {
  const double w = static_cast<double>(assets[i.index]);
  if (w == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < burning.size(); ++j) {
    if (!burning[j]) continue;
    const double d = g.distance(i, NodeId(j));
    if (d == kUnreachable) continue;
    sum += severity[j] / std::max(1.0, d);
  }
  return w * sum;
}

/// Vulnerability of node i as the team sees it (shared incident set).
inline double vulnerability_feature(const Scene& scene, const WorldState& s, NodeId i) {
  std::vector<std::int64_t> assets;
  assets.reserve(s.hazard.size());
  for (const auto& nd : s.hazard.nodes) assets.push_back(nd.assets);
  return vulnerability_feature(scene.graph, assets, s.hazard.severity, known_incidents(s), i);
}

/// n x 4 feature matrix; row i = [f_i/tau, f_c/2, w_i/w_max, F_xi/(w_max*tau)].
/// Severities are only visible for incidents in the shared view.
inline nn::Matrix extract_features(const Scene& scene, const WorldState& s) {
  const std::size_t n = scene.node_count();
  const auto burning = known_incidents(s);
  const double tau = s.hazard.params.tau;
  std::vector<std::int64_t> assets(n);
  std::vector<double> seen(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    assets[i] = s.hazard.nodes[i].assets;
    if (burning[i]) seen[i] = s.hazard.severity[i];
  }
  nn::Matrix x(n, kFeatureColumns);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = seen[i] / tau;
    x(i, 1) = static_cast<double>(s.hazard.nodes[i].category) / 2.0;
    x(i, 2) = static_cast<double>(assets[i]) / scene.asset_scale;
    x(i, 3) = vulnerability_feature(scene.graph, assets, seen, burning, NodeId(i)) / (scene.asset_scale * tau);
  }
  return x;
}

struct PredictorConfig {
  std::size_t hidden = 16;
  std::size_t window = 4;
  double epsilon = 0.05;
  nn::AdamConfig adam{};
  std::size_t batch_size = 16;
};

/// GRU over each node's feature history, a 1x3 convolution across the hidden
/// channels, and a linear read-out to one logit per node.
class IncidentPredictor {
 public:
  IncidentPredictor() = default;
  IncidentPredictor(const PredictorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.hidden == 0 || cfg.window == 0) throw ValidationError("predictor: hidden size and window must be positive");
    Rng rng(seed);
    gru_ = nn::GruCell::create(store_, "predictor/gru", kFeatureColumns, cfg.hidden, rng);
    kernel_ = store_.add("predictor/conv.k", 1, 3);
    conv_bias_ = store_.add("predictor/conv.b", 1, 1);
    store_[kernel_].value.data = {0.0, 1.0, 0.0};
    head_ = nn::Dense::create(store_, "predictor/head", cfg.hidden, 1, rng);
    optimizer_ = nn::Adam(store_, cfg.adam);
  }

  const PredictorConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }
  const nn::GruCell& gru() const { return gru_; }

  /// Logits (rows x 1) for a sequence of (rows x 4) feature matrices.
  nn::Var logits(nn::Tape& t, std::span<const nn::Matrix> sequence) {
    if (sequence.empty()) throw ShapeError("predictor: empty feature sequence");
    const std::size_t rows = sequence.front().rows;
    std::vector<nn::Var> xs;
    for (const auto& m : sequence) {
      if (m.rows != rows || m.cols != kFeatureColumns)
        throw ShapeError("predictor: feature matrix has shape " + nn::shape_str(m) + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(kFeatureColumns));
      xs.push_back(t.constant(m));
    }
    nn::Var h0 = t.constant(nn::Matrix(rows, cfg_.hidden));
    nn::Var h = nn::gru_forward(t, store_, gru_, xs, h0).last;
    nn::Var c = nn::tanh(nn::conv1x3(h, t.parameter(store_[kernel_]), t.parameter(store_[conv_bias_])));
    return head_(t, store_, c);
  }

  /// Per-node probabilities (n x 1) in (0,1).
  nn::Matrix predict(std::span<const nn::Matrix> sequence) {
    nn::Tape t;
    nn::Matrix z = logits(t, sequence).value();
    for (double& v : z.data) v = nn::logistic(v);
    return z;
  }

  /// One optimiser step on a stacked batch. Returns the pre-step loss.
  double train_step(std::span<const nn::Matrix> sequence, const nn::Matrix& labels) {
    store_.zero_grad();
    nn::Tape t;
    nn::Var loss = nn::bce_with_logits(logits(t, sequence), labels);
    const double value = loss.value().data[0];
    t.backward(loss);
    optimizer_.step(store_);
    return value;
  }

  void reset_optimizer() { optimizer_ = nn::Adam(store_, cfg_.adam); }

 private:
  PredictorConfig cfg_;
  nn::ParameterStore store_;
  nn::GruCell gru_;
  std::size_t kernel_ = 0;
  std::size_t conv_bias_ = 0;
  nn::Dense head_;
  nn::Adam optimizer_;
};

/// Nodes whose probability exceeds epsilon, in node order.
inline PredictionSet prediction_set(std::span<const double> probabilities, double epsilon) {
  PredictionSet out;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    if (!(p >= 0.0 && p <= 1.0)) throw ShapeError("prediction_set: probability outside [0,1]");
    if (p > epsilon) out.push_back({NodeId(i), p});
  }
  return out;
}

struct PredictorSample {
  std::vector<nn::Matrix> window;  // oldest first
  nn::Matrix labels;               // n x 1, 1 = burning at the next step
};

using PredictorDataset = std::vector<PredictorSample>;

struct PredictorReport {
  std::vector<double> epoch_loss;
  double accuracy = 0.0;
  double brier = 0.0;
  double positive_rate = 0.0;
};

struct Calibration {
  double accuracy = 0.0;
  double brier = 0.0;
  double positive_rate = 0.0;
};

inline Calibration evaluate_predictor(IncidentPredictor& model, const PredictorDataset& data) {
  if (data.empty()) throw ValidationError("predictor: empty dataset");
  Calibration c;
  std::size_t count = 0;
  for (const auto& s : data) {
    const nn::Matrix p = model.predict(s.window);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double y = s.labels.data[k];
      c.accuracy += ((p.data[k] > 0.5) == (y > 0.5)) ? 1.0 : 0.0;
      c.brier += (p.data[k] - y) * (p.data[k] - y);
      c.positive_rate += y;
      ++count;
    }
  }
  c.accuracy /= static_cast<double>(count);
  c.brier /= static_cast<double>(count);
  c.positive_rate /= static_cast<double>(count);
  return c;
}

/// Minibatch BCE training; rows of every sample in a batch are stacked so one
/// GRU pass covers the whole batch.
inline PredictorReport train_predictor(IncidentPredictor& model, const PredictorDataset& data, int epochs, Rng& rng) {
  if (data.empty()) throw ValidationError("predictor: empty dataset");
  if (epochs <= 0) throw ValidationError("predictor: epochs must be positive");
  const std::size_t steps = data.front().window.size();
  for (const auto& s : data)
    if (s.window.size() != steps) throw ShapeError("predictor: samples have different window lengths");

  PredictorReport report;
  std::vector<std::size_t> order(data.size());
  const std::size_t batch = std::max<std::size_t>(1, model.config().batch_size);
  for (int e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::size_t rows = 0;
      for (std::size_t k = start; k < end; ++k) rows += data[order[k]].labels.rows;
      std::vector<nn::Matrix> seq(steps, nn::Matrix(rows, kFeatureColumns));
      nn::Matrix labels(rows, 1);
      std::size_t off = 0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = data[order[k]];
        for (std::size_t t = 0; t < steps; ++t)
          std::copy(s.window[t].data.begin(), s.window[t].data.end(), seq[t].data.begin() + off * kFeatureColumns);
        std::copy(s.labels.data.begin(), s.labels.data.end(), labels.data.begin() + off);
        off += s.labels.rows;
      }
      total += model.train_step(seq, labels);
      ++batches;
    }
    report.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  const Calibration c = evaluate_predictor(model, data);
  report.accuracy = c.accuracy;
  report.brier = c.brier;
  report.positive_rate = c.positive_rate;
  return report;
}

/// Keeps the last `window` feature frames; short histories are padded by
/// repeating the oldest frame.
class FeatureHistory {
 public:
  explicit FeatureHistory(std::size_t window = 4) : window_(window) {}

  void clear() { frames_.clear(); }
  void push(nn::Matrix m) {
    frames_.push_back(std::move(m));
    while (frames_.size() > window_) frames_.pop_front();
  }
  std::vector<nn::Matrix> window() const {
    std::vector<nn::Matrix> out;
    if (frames_.empty()) return out;
    for (std::size_t k = frames_.size(); k < window_; ++k) out.push_back(frames_.front());
    out.insert(out.end(), frames_.begin(), frames_.end());
    return out;
  }

 private:
  std::size_t window_;
  std::deque<nn::Matrix> frames_;
};

/// Publishes the predictor's next-step incident set after every perception round.
class GruForecaster : public IncidentForecaster {
 public:
  explicit GruForecaster(std::shared_ptr<IncidentPredictor> model)
      : model_(std::move(model)), history_(model_->config().window) {}

  void reset(const Scene&, const WorldState&) override { history_.clear(); }

  PredictionSet forecast(const Scene& scene, const WorldState& s) override {
    history_.push(extract_features(scene, s));
    const nn::Matrix p = model_->predict(history_.window());
    return prediction_set(p.data, model_->config().epsilon);
  }

  const std::shared_ptr<IncidentPredictor>& model() const { return model_; }

 private:
  std::shared_ptr<IncidentPredictor> model_;
  FeatureHistory history_;
};

using RolloutPolicy = std::function<JointAction(const Scene&, const WorldState&, Rng&)>;

/// Runs episodes with `policy` and records (feature window, next-step
/// incident indicator) pairs at every step.
inline PredictorDataset collect_rollouts(const std::shared_ptr<const Scene>& scene, const RolloutPolicy& policy, int episodes,
                                         std::size_t window, std::uint64_t seed) {
  PredictorDataset data;
  Rng act_rng(derive_seed(seed, 7));
  Environment env(scene);
  const std::size_t n = scene->node_count();
  for (int e = 0; e < episodes; ++e) {
    env.reset(derive_seed(seed, 1000 + static_cast<std::uint64_t>(e)));
    FeatureHistory history(window);
    history.push(extract_features(*scene, env.state()));
    while (!env.done()) {
      auto frames = history.window();
      env.step(policy(*scene, env.state(), act_rng));
      nn::Matrix labels(n, 1);
      for (std::size_t i = 0; i < n; ++i) labels.data[i] = env.state().hazard.incident(NodeId(i)) ? 1.0 : 0.0;
      data.push_back({std::move(frames), std::move(labels)});
      history.push(extract_features(*scene, env.state()));
    }
  }
  return data;
}

/// Synthetic rule set: uniform random features, label = last-step F_xi > c.
inline PredictorDataset synthetic_threshold_dataset(std::size_t samples, std::size_t nodes, std::size_t window, double c,
                                                    Rng& rng) {
  PredictorDataset data;
  for (std::size_t s = 0; s < samples; ++s) {
    PredictorSample sample;
    for (std::size_t t = 0; t < window; ++t) {
      nn::Matrix m(nodes, kFeatureColumns);
      for (double& v : m.data) v = rng.uniform();
      sample.window.push_back(std::move(m));
    }
    sample.labels = nn::Matrix(nodes, 1);
    for (std::size_t i = 0; i < nodes; ++i) sample.labels.data[i] = sample.window.back()(i, 3) > c ? 1.0 : 0.0;
    data.push_back(std::move(sample));
  }
  return data;
}

}  // namespace edei
