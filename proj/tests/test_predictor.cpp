#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace edei;

TEST(Features, VulnerabilityMatchesDirectSum) {
  Graphs g = build_graphs(edei::testing::random_config(4, 10));
  Rng rng(4);
  std::vector<std::int64_t> assets(10);
  std::vector<double> f(10);
  std::vector<char> burning(10);
  for (std::size_t i = 0; i < 10; ++i) {
    assets[i] = static_cast<std::int64_t>(rng.below(20));
    burning[i] = rng.uniform() < 0.4;
    f[i] = burning[i] ? rng.uniform(0.1, 0.9) : 0.0;
  }
  for (std::size_t i = 0; i < 10; ++i) {
    double want = 0.0;
    for (std::size_t j = 0; j < 10; ++j)
      if (burning[j]) want += f[j] / std::max(1.0, g.operation.distance(NodeId(i), NodeId(j)));
    want *= static_cast<double>(assets[i]);
    EXPECT_NEAR(vulnerability_feature(g.operation, assets, f, burning, NodeId(i)), want, 1e-12);
  }
}

TEST(Features, ShapeRangeAndVisibility) {
  auto cfg = edei::testing::random_config(6, 12);
  cfg.sensing_radius = 0.0;
  Environment env(cfg);
  env.reset(1);
  const auto& s = env.state();
  const nn::Matrix x = extract_features(env.scene(), s);
  ASSERT_EQ(x.rows, 12u);
  ASSERT_EQ(x.cols, kFeatureColumns);
  for (double v : x.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
  const auto known = known_incidents(s);
  for (std::size_t i = 0; i < 12; ++i)
    if (!known[i]) EXPECT_EQ(x(i, 0), 0.0);
}

TEST(PredictionSet, ThresholdAndValidation) {
  const double p[] = {0.01, 0.5, 0.05, 0.051};
  const auto set = prediction_set(p, 0.05);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set[0].node, NodeId(1));
  EXPECT_EQ(set[1].node, NodeId(3));
  const double bad[] = {1.5};
  EXPECT_THROW(prediction_set(bad, 0.05), ShapeError);
}

TEST(FeatureHistory, PadsWithOldestFrame) {
  FeatureHistory h(3);
  EXPECT_TRUE(h.window().empty());
  h.push(nn::Matrix(1, 1, 1.0));
  auto w = h.window();
  ASSERT_EQ(w.size(), 3u);
  for (const auto& m : w) EXPECT_EQ(m.data[0], 1.0);
  h.push(nn::Matrix(1, 1, 2.0));
  h.push(nn::Matrix(1, 1, 3.0));
  h.push(nn::Matrix(1, 1, 4.0));
  w = h.window();
  EXPECT_EQ(w[0].data[0], 2.0);
  EXPECT_EQ(w[2].data[0], 4.0);
}

TEST(Predictor, OutputsProbabilitiesAndRejectsBadShapes) {
  IncidentPredictor model({}, 3);
  std::vector<nn::Matrix> seq(4, nn::Matrix(6, kFeatureColumns, 0.3));
  const nn::Matrix p = model.predict(seq);
  ASSERT_EQ(p.rows, 6u);
  for (double v : p.data) EXPECT_TRUE(v > 0.0 && v < 1.0);
  seq[2] = nn::Matrix(5, kFeatureColumns);
  EXPECT_THROW(model.predict(seq), ShapeError);
  EXPECT_THROW(model.predict(std::vector<nn::Matrix>{}), ShapeError);
  EXPECT_THROW(IncidentPredictor(PredictorConfig{0}, 1), ValidationError);
}

TEST(Predictor, LearnsThresholdRule) {
  Rng data_rng(21);
  const auto train = synthetic_threshold_dataset(300, 8, 4, 0.5, data_rng);
  const auto held_out = synthetic_threshold_dataset(100, 8, 4, 0.5, data_rng);
  IncidentPredictor model({}, 5);
  Rng rng(6);
  const auto report = train_predictor(model, train, 15, rng);
  EXPECT_LT(report.epoch_loss.back(), report.epoch_loss.front());
  EXPECT_GT(evaluate_predictor(model, held_out).accuracy, 0.9);
}

TEST(Predictor, TrainingValidatesInput) {
  IncidentPredictor model({}, 1);
  Rng rng(1);
  EXPECT_THROW(train_predictor(model, {}, 1, rng), ValidationError);
  Rng d(2);
  auto data = synthetic_threshold_dataset(4, 3, 4, 0.5, d);
  EXPECT_THROW(train_predictor(model, data, 0, rng), ValidationError);
  data[1].window.pop_back();
  EXPECT_THROW(train_predictor(model, data, 1, rng), ShapeError);
}

TEST(Rollouts, LabelsAreNextStepIncidents) {
  auto scene = std::make_shared<const Scene>(edei::testing::random_config(9, 10));
  RolloutPolicy greedy = [](const Scene& sc, const WorldState& s, Rng&) { return greedy_policy(sc, s); };
  const auto data = collect_rollouts(scene, greedy, 2, 3, 11);
  ASSERT_FALSE(data.empty());
  for (const auto& s : data) {
    EXPECT_EQ(s.window.size(), 3u);
    EXPECT_EQ(s.labels.rows, 10u);
    for (double v : s.labels.data) EXPECT_TRUE(v == 0.0 || v == 1.0);
  }
  // replay the first episode and compare labels with the world
  Environment env(scene);
  env.reset(derive_seed(11, 1000));
  Rng rng(derive_seed(11, 7));
  std::size_t k = 0;
  while (!env.done()) {
    env.step(greedy(*scene, env.state(), rng));
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(data[k].labels.data[i], env.state().hazard.incident(NodeId(i)) ? 1.0 : 0.0);
    ++k;
  }
}

TEST(Forecaster, PublishesSharedSetAboveEpsilon) {
  auto model = std::make_shared<IncidentPredictor>(PredictorConfig{}, 2);
  Environment env(edei::testing::random_config(2, 10));
  env.set_forecaster(std::make_shared<GruForecaster>(model));
  env.reset(3);
  Rng rng(3);
  for (int k = 0; k < 5 && !env.done(); ++k) {
    const auto& s = env.state();
    for (const auto& p : s.prediction) EXPECT_GT(p.probability, model->config().epsilon);
    for (const auto& v : s.views) EXPECT_EQ(v.prediction, s.prediction);
    env.step(random_policy(env.scene(), s, rng));
  }
}
