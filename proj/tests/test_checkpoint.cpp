#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace edei;

namespace {

std::vector<NamedTensor> sample_tensors() {
  Rng rng(3);
  std::vector<NamedTensor> out;
  for (const auto& [name, r, c] : std::vector<std::tuple<std::string, std::size_t, std::size_t>>{{"a/w", 3, 4}, {"a/b", 1, 4}, {"gru/u", 2, 2}}) {
    nn::Matrix m(r, c);
    for (double& v : m.data) v = rng.uniform(-1e3, 1e3);
    out.push_back({name, m});
  }
  out[1].value.data[0] = -0.0;
  out[1].value.data[1] = 1e-310;
  return out;
}

std::string message_of(const std::string& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const auto tensors = sample_tensors();
  const std::string bytes = encode_checkpoint(tensors);
  EXPECT_EQ(bytes.substr(0, 4), "EDEI");
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back, tensors);
  EXPECT_TRUE(std::signbit(back[1].value.data[0]));
  EXPECT_EQ(encode_checkpoint(back), bytes);

  const auto dir = edei::testing::scratch_dir("checkpoint");
  save_checkpoint(tensors, dir / "c.edei");
  EXPECT_EQ(read_text_file(dir / "c.edei"), bytes);
  EXPECT_EQ(load_checkpoint(dir / "c.edei"), tensors);
}

TEST(Checkpoint, NamedErrors) {
  const std::string bytes = encode_checkpoint(sample_tensors());
  EXPECT_NE(message_of("EDEX" + bytes.substr(4)).find("bad magic"), std::string::npos);
  EXPECT_NE(message_of("ED").find("bad magic"), std::string::npos);
  std::string v = bytes;
  v[4] = 7;
  EXPECT_NE(message_of(v).find("unsupported version 7"), std::string::npos);
  for (std::size_t cut : {6ul, 10ul, 20ul, bytes.size() - 1})
    EXPECT_NE(message_of(bytes.substr(0, cut)).find("truncated"), std::string::npos) << cut;
  EXPECT_TRUE(decode_checkpoint(bytes.substr(0, 5)).empty());
}

TEST(Checkpoint, LoadStoreIsAllOrNothing) {
  Rng rng(1);
  nn::ParameterStore store;
  store.add("w", 3, 4);
  store.add("b", 1, 4);
  for (auto& p : store.all()) p.value = nn::Matrix(p.value.rows, p.value.cols, 5.0);

  std::vector<NamedTensor> partial{{"a/w", nn::Matrix(3, 4, 1.0)}};
  try {
    load_store(partial, "a/", store);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("missing tensor 'a/b'"), std::string::npos);
  }
  EXPECT_EQ(store[0].value.data[0], 5.0);

  std::vector<NamedTensor> wrong{{"a/w", nn::Matrix(3, 4, 1.0)}, {"a/b", nn::Matrix(1, 3, 1.0)}};
  try {
    load_store(wrong, "a/", store);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("'a/b' has shape"), std::string::npos);
  }
  EXPECT_EQ(store[0].value.data[0], 5.0);

  wrong[1].value = nn::Matrix(1, 4, 2.0);
  load_store(wrong, "a/", store);
  EXPECT_EQ(store[0].value.data[0], 1.0);
  EXPECT_EQ(store[1].value.data[3], 2.0);
}

TEST(Checkpoint, TrainedPolicyRoundTrip) {
  GeneratorOptions o;
  o.reduced = true;
  auto scene = std::make_shared<const Scene>(generate("airport", o));
  MaddpgConfig c;
  c.episodes = 1;
  c.warmup = 20;
  c.batch_size = 8;
  c.use_predictor = true;
  c.predictor_episodes = 1;
  c.predictor_epochs = 1;
  MaddpgTrainer tr(scene, c);
  tr.train();
  const auto tensors = edei::cli::trainer_tensors(tr);
  const std::string bytes = encode_checkpoint(tensors);
  const auto loaded = edei::cli::load_policy(decode_checkpoint(bytes), *scene, true);
  std::vector<NamedTensor> again;
  for (std::size_t i = 0; i < loaded.agents->size(); ++i) {
    const auto& a = (*loaded.agents)[i];
    append_store(again, edei::cli::agent_prefix(i, "actor"), a.actor);
    append_store(again, edei::cli::agent_prefix(i, "critic"), a.critic);
    append_store(again, edei::cli::agent_prefix(i, "actor_target"), a.actor_target);
    append_store(again, edei::cli::agent_prefix(i, "critic_target"), a.critic_target);
  }
  append_store(again, "", loaded.predictor->params());
  EXPECT_EQ(encode_checkpoint(again), bytes);

  GeneratorOptions three;
  three.agents = 3;
  const Scene other(generate("airport", three));
  EXPECT_THROW(edei::cli::load_policy(tensors, other, true), FormatError);
}
