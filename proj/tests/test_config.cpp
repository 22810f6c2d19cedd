#include <gtest/gtest.h>

#include "lnd/checkpoint.hpp"
#include "lnd/config.hpp"

namespace {

using lnd::ExperimentConfig;
using lnd::json;

TEST(Config, DefaultsSerializeAndReparseToTheSameBytes) {
  ExperimentConfig cfg;
  cfg.corpus = "data/expert.jsonl";
  json j1 = cfg.to_json();
  ExperimentConfig back = ExperimentConfig::from_json(j1);
  json j2 = back.to_json();
  EXPECT_EQ(j1.dump(), j2.dump());
}

TEST(Config, PartialDocumentsFillInDefaults) {
  json j = json::parse(R"({"method": "gail", "corpus": "c.jsonl"})");
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  EXPECT_EQ(cfg.method, "gail");
  EXPECT_EQ(cfg.corpus, "c.jsonl");
  EXPECT_EQ(cfg.env, "pointmass2d");
  EXPECT_EQ(cfg.dida.batch, 2048);
  EXPECT_EQ(cfg.anchor, "shuffle");
}

TEST(Config, SharedPpoBlockAppliesToBothTrainers) {
  json j = json::parse(R"({"ppo": {"gamma": 0.9, "epochs": 4}})");
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  EXPECT_DOUBLE_EQ(cfg.dida.ppo.gamma, 0.9);
  EXPECT_DOUBLE_EQ(cfg.gail.ppo.gamma, 0.9);
  EXPECT_EQ(cfg.dida.ppo.epochs, 4);
  EXPECT_EQ(cfg.gail.ppo.epochs, 4);
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"bogus": 1})")),
               lnd::ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(
                   json::parse(R"({"dida": {"lamda0": 0.5}})")),
               lnd::ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(
                   json::parse(R"({"gail": {"batchsize": 10}})")),
               lnd::ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(
                   json::parse(R"({"bc": {"epoch": 10}})")),
               lnd::ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(
                   json::parse(R"({"ppo": {"clip": 0.2}})")),
               lnd::ConfigError);
}

TEST(Config, BadValuesAreRejected) {
  EXPECT_THROW(ExperimentConfig::from_json(
                   json::parse(R"({"method": "dagger"})")),
               lnd::ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"env": "ant"})")),
               lnd::ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"seeds": []})")),
               lnd::ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(
                   json::parse(R"({"anchor": "mirror"})")),
               lnd::ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(
                   json::parse(R"({"dida": {"alpha_clip": [0.1]}})")),
               lnd::ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(
                   json::parse(R"({"dida": {"batch": "big"}})")),
               lnd::ConfigError);
}

TEST(Config, FileRoundTrip) {
  ExperimentConfig cfg;
  cfg.corpus = "x.jsonl";
  cfg.seeds = {3, 5};
  cfg.dida.iterations = 42;
  std::string path = testing::TempDir() + "/config.json";
  cfg.save(path);
  ExperimentConfig back = ExperimentConfig::load(path);
  EXPECT_EQ(back.seeds, cfg.seeds);
  EXPECT_EQ(back.dida.iterations, 42);
  EXPECT_EQ(back.to_json().dump(), cfg.to_json().dump());
  EXPECT_THROW(ExperimentConfig::load(testing::TempDir() + "/absent.json"),
               lnd::IoError);
}

TEST(RunPaths, LayoutFollowsSeedDirectories) {
  lnd::RunPaths p = lnd::run_paths("out/exp1", 7);
  EXPECT_EQ(p.root.string(), "out/exp1/7");
  EXPECT_EQ(p.config.string(), "out/exp1/7/config.json");
  EXPECT_EQ(p.metrics.string(), "out/exp1/7/metrics.jsonl");
  EXPECT_EQ(p.ckpt_dir.string(), "out/exp1/7/ckpt");
  EXPECT_EQ(p.eval_csv.string(), "out/exp1/7/eval.csv");
}

TEST(Checkpoint, NetsRoundTripBitExactly) {
  lnd::Rng rng(71);
  lnd::Checkpoint ck;
  ck.nets.emplace("encoder", lnd::DenseNet::random_init(
                                 {4, 8, 3}, lnd::Head::kLinear, rng));
  ck.nets.emplace("noise_disc", lnd::DenseNet::random_init(
                                    {3, 8, 1}, lnd::Head::kSigmoid, rng));
  ck.nets.emplace("policy", lnd::DenseNet::random_init(
                                {4, 8, 2}, lnd::Head::kGaussianPolicy, rng));
  ck.meta["seed"] = 7;
  ck.meta["method"] = "dida";

  std::string path = testing::TempDir() + "/ckpt.json";
  lnd::save_checkpoint(path, ck);
  lnd::Checkpoint back = lnd::load_checkpoint(path);
  ASSERT_EQ(back.nets.size(), 3u);
  for (const auto& [name, net] : ck.nets) {
    const lnd::DenseNet& b = back.require(name);
    EXPECT_EQ(b.dims(), net.dims());
    EXPECT_EQ(b.head(), net.head());
    EXPECT_EQ(b.params(), net.params());  // bit-exact doubles
  }
  EXPECT_EQ(back.meta.at("seed").get<int>(), 7);
  EXPECT_THROW(back.require("value"), lnd::InputError);
}

TEST(Checkpoint, RejectsForeignAndCorruptFiles) {
  std::string path = testing::TempDir() + "/not_ckpt.json";
  lnd::atomic_write_text(path, "{\"kind\": \"demo-corpus\"}\n");
  EXPECT_THROW(lnd::load_checkpoint(path), lnd::ParseError);

  std::string bad = testing::TempDir() + "/bad_ckpt.json";
  lnd::atomic_write_text(
      bad,
      "{\"kind\": \"model-checkpoint\", \"nets\": {\"e\": {\"dims\": [2, 1], "
      "\"head\": \"linear\", \"params\": [1.0]}}}\n");
  EXPECT_THROW(lnd::load_checkpoint(bad), lnd::ParseError);
}

}  // namespace
