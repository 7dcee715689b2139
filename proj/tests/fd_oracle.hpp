#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "edei/marl.hpp"
#include "edei/nn.hpp"

namespace edei::testing {

/// Largest relative difference between backprop gradients of `loss` with
/// respect to every parameter in `store` and central differences.
/// |a - n| / max(|a|, |n|, floor).
inline double fd_max_rel_error(nn::ParameterStore& store, const std::function<nn::Var(nn::Tape&)>& loss, double h = 1e-6,
                               double floor = 1e-6) {
  store.zero_grad();
  {
    nn::Tape t;
    t.backward(loss(t));
  }
  auto value = [&] {
    nn::Tape t;
    return loss(t).value().data[0];
  };
  double worst = 0.0;
  for (auto& p : store.all()) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double keep = p.value.data[k];
      p.value.data[k] = keep + h;
      const double up = value();
      p.value.data[k] = keep - h;
      const double down = value();
      p.value.data[k] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p.grad.data[k];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

inline nn::Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

/// Weighted sum so every output element carries a distinct gradient.
inline nn::Var probe_loss(nn::Var y, const nn::Matrix& weights) {
  nn::Tape& t = *y.tape;
  return nn::sum_all(nn::mul(y, t.constant(weights)));
}

/// GRU unrolled over a short random sequence; inputs are parameters too.
inline double gru_fd_error(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t rows = 1 + rng.below(3), in = 2 + rng.below(3), hid = 2 + rng.below(4), steps = 2 + rng.below(3);
  nn::ParameterStore store;
  auto cell = nn::GruCell::create(store, "gru", in, hid, rng);
  for (auto& p : store.all())
    for (double& v : p.value.data) v = rng.uniform(-0.8, 0.8);
  std::vector<std::size_t> xs;
  for (std::size_t s = 0; s < steps; ++s) {
    xs.push_back(store.add("x" + std::to_string(s), rows, in));
    store[xs.back()].value = random_matrix(rows, in, rng);
  }
  const std::size_t h0 = store.add("h0", rows, hid);
  store[h0].value = random_matrix(rows, hid, rng, -0.5, 0.5);
  const nn::Matrix w = random_matrix(rows, hid, rng);
  return fd_max_rel_error(store, [&](nn::Tape& t) {
    std::vector<nn::Var> seq;
    for (std::size_t i : xs) seq.push_back(t.parameter(store[i]));
    auto out = nn::gru_forward(t, store, cell, seq, t.parameter(store[h0]));
    return probe_loss(out.last, w);
  });
}

inline double conv_fd_error(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t rows = 1 + rng.below(4), cols = 1 + rng.below(7);
  nn::ParameterStore store;
  const std::size_t x = store.add("x", rows, cols), k = store.add("k", 1, 3), b = store.add("b", 1, 1);
  for (auto& p : store.all()) p.value = random_matrix(p.value.rows, p.value.cols, rng);
  const nn::Matrix w = random_matrix(rows, cols, rng);
  return fd_max_rel_error(store, [&](nn::Tape& t) {
    return probe_loss(nn::conv1x3(t.parameter(store[x]), t.parameter(store[k]), t.parameter(store[b])), w);
  });
}

/// Small random batch for actor and critic checks.
struct ToyBatch {
  NetShape shape;
  Batch batch;
};

inline ToyBatch toy_batch(std::uint64_t seed) {
  Rng rng(seed);
  ToyBatch tb;
  const std::size_t n = 3 + rng.below(3), m = 1 + rng.below(3), S = 2 + rng.below(4);
  tb.shape = {kObservationChannels * n, (kNodeChannels + 2 * m) * n, n, m, 3 + rng.below(4)};
  Batch& b = tb.batch;
  b.size = S;
  for (std::size_t a = 0; a < m; ++a) {
    b.obs.push_back(random_matrix(S, tb.shape.obs, rng, 0.0, 1.0));
    nn::Matrix mask(S, n), act(S, n);
    for (std::size_t i = 0; i < S; ++i) {
      const std::size_t pick = rng.below(n);
      for (std::size_t k = 0; k < n; ++k) mask(i, k) = (k == pick || rng.uniform() < 0.6) ? 1.0 : 0.0;
      act(i, pick) = 1.0;
    }
    b.masks.push_back(mask);
    b.actions.push_back(act);
  }
  b.state = random_matrix(S, tb.shape.state, rng, 0.0, 1.0);
  return tb;
}

/// Actor gradient through masked softmax and a frozen critic.
inline double actor_fd_error(std::uint64_t seed) {
  ToyBatch tb = toy_batch(seed);
  Rng rng(seed + 1);
  AgentNets nets = AgentNets::create(tb.shape, rng);
  const std::size_t agent = rng.below(tb.shape.agents);
  return fd_max_rel_error(nets.actor, [&](nn::Tape& t) { return actor_objective(t, nets, agent, tb.batch); });
}

/// Critic MSE gradient towards fixed random targets.
inline double critic_fd_error(std::uint64_t seed) {
  ToyBatch tb = toy_batch(seed);
  Rng rng(seed + 1);
  AgentNets nets = AgentNets::create(tb.shape, rng);
  const nn::Matrix y = random_matrix(tb.batch.size, 1, rng);
  const nn::Matrix input = critic_input(tb.batch);
  return fd_max_rel_error(nets.critic, [&](nn::Tape& t) { return nn::mse(nets.critic_net(t, nets.critic, t.constant(input)), y); });
}

}  // namespace edei::testing
