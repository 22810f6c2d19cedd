#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "lnd/dida.hpp"
#include "lnd/io.hpp"
#include "lnd/rl.hpp"

namespace lnd {

// Strict-key JSON object reader: every key must be consumed, unknown keys are
// a config error. Catches typos like "lamda0" instead of silently using the
// default.
class StrictObject {
 public:
  StrictObject(json j, std::string ctx) : j_(std::move(j)), ctx_(std::move(ctx)) {
    if (!j_.is_object())
      throw ConfigError(ctx_ + ": expected a JSON object");
  }

  bool has(const char* key) { return j_.contains(key); }

  template <typename T>
  T get(const char* key, const T& fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(ctx_ + "." + key + ": " + e.what());
    }
  }

  json child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return json::object();
    return j_.at(key);
  }

  void finish() {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        throw ConfigError(ctx_ + ": unknown key '" + key + "'");
  }

 private:
  json j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

struct ExperimentConfig {
  std::string env = "pointmass2d";
  std::string method = "dida";  // dida | gail | bc
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "out/run";
  std::string corpus;           // noisy expert corpus (JSONL)
  std::string anchor = "shuffle";  // shuffle | random
  int eval_episodes = 100;
  DidaConfig dida;
  GailConfig gail;
  BcConfig bc;

  void validate() const {
    if (env != "pointmass2d")
      throw ConfigError("config: unknown env '" + env + "'");
    if (method != "dida" && method != "gail" && method != "bc")
      throw ConfigError("config: unknown method '" + method + "'");
    if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    if (eval_episodes <= 0)
      throw ConfigError("config: eval_episodes must be > 0");
    anchor_kind_from_name(anchor);
    dida.validate();
  }

  json to_json() const {
    json j;
    j["env"] = env;
    j["method"] = method;
    j["seeds"] = seeds;
    j["out_dir"] = out_dir;
    j["corpus"] = corpus;
    j["anchor"] = anchor;
    j["eval_episodes"] = eval_episodes;

    json d;
    d["embed_dim"] = dida.embed_dim;
    d["encoder_hidden"] = dida.encoder_hidden;
    d["noise_disc_hidden"] = dida.noise_disc_hidden;
    d["policy_disc_hidden"] = dida.policy_disc_hidden;
    d["policy_hidden"] = dida.policy_hidden;
    d["value_hidden"] = dida.value_hidden;
    d["batch"] = dida.batch;
    d["iterations"] = dida.iterations;
    d["noise_disc_updates"] = dida.noise_disc_updates;
    d["encoder_lr"] = dida.encoder_lr;
    d["disc_lr"] = dida.disc_lr;
    d["lambda0"] = dida.lambda0;
    d["sar_p"] = dida.sar_p;
    d["alpha_clip"] = std::vector<double>{dida.alpha_clip_lo, dida.alpha_clip_hi};
    d["confuse_clip"] =
        std::vector<double>{dida.confuse_clip_lo, dida.confuse_clip_hi};
    d["sar"] = dida.sar_enabled;
    d["das"] = dida.das_enabled;
    d["das_with_replacement"] = dida.das_with_replacement;
    d["eval_every"] = dida.eval_every;
    d["eval_episodes"] = dida.eval_episodes;
    j["dida"] = d;

    json g;
    g["policy_hidden"] = gail.policy_hidden;
    g["value_hidden"] = gail.value_hidden;
    g["disc_hidden"] = gail.disc_hidden;
    g["batch"] = gail.batch;
    g["iterations"] = gail.iterations;
    g["disc_updates"] = gail.disc_updates;
    g["disc_lr"] = gail.disc_lr;
    g["eval_every"] = gail.eval_every;
    g["eval_episodes"] = gail.eval_episodes;
    j["gail"] = g;

    json b;
    b["hidden"] = bc.hidden;
    b["lr"] = bc.lr;
    b["epochs"] = bc.epochs;
    b["minibatch"] = bc.minibatch;
    b["holdout"] = bc.holdout;
    j["bc"] = b;

    json p;
    p["gamma"] = dida.ppo.gamma;
    p["clip_ratio"] = dida.ppo.clip_ratio;
    p["epochs"] = dida.ppo.epochs;
    p["minibatch"] = dida.ppo.minibatch;
    p["policy_lr"] = dida.ppo.policy_lr;
    p["value_lr"] = dida.ppo.value_lr;
    p["value_coef"] = dida.ppo.value_coef;
    p["entropy_coef"] = dida.ppo.entropy_coef;
    p["kl_stop"] = dida.ppo.kl_stop;
    p["cumulative_returns"] = dida.ppo.cumulative_returns;
    j["ppo"] = p;
    return j;
  }

  static ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    StrictObject root(j, "config");
    c.env = root.get<std::string>("env", c.env);
    c.method = root.get<std::string>("method", c.method);
    c.seeds = root.get<std::vector<std::uint64_t>>("seeds", c.seeds);
    c.out_dir = root.get<std::string>("out_dir", c.out_dir);
    c.corpus = root.get<std::string>("corpus", c.corpus);
    c.anchor = root.get<std::string>("anchor", c.anchor);
    c.eval_episodes = root.get<int>("eval_episodes", c.eval_episodes);

    {
      StrictObject d(root.child("dida"), "config.dida");
      c.dida.embed_dim = d.get<int>("embed_dim", c.dida.embed_dim);
      c.dida.encoder_hidden =
          d.get<std::vector<int>>("encoder_hidden", c.dida.encoder_hidden);
      c.dida.noise_disc_hidden = d.get<std::vector<int>>(
          "noise_disc_hidden", c.dida.noise_disc_hidden);
      c.dida.policy_disc_hidden = d.get<std::vector<int>>(
          "policy_disc_hidden", c.dida.policy_disc_hidden);
      c.dida.policy_hidden =
          d.get<std::vector<int>>("policy_hidden", c.dida.policy_hidden);
      c.dida.value_hidden =
          d.get<std::vector<int>>("value_hidden", c.dida.value_hidden);
      c.dida.batch = d.get<int>("batch", c.dida.batch);
      c.dida.iterations = d.get<int>("iterations", c.dida.iterations);
      c.dida.noise_disc_updates =
          d.get<int>("noise_disc_updates", c.dida.noise_disc_updates);
      c.dida.encoder_lr = d.get<double>("encoder_lr", c.dida.encoder_lr);
      c.dida.disc_lr = d.get<double>("disc_lr", c.dida.disc_lr);
      c.dida.lambda0 = d.get<double>("lambda0", c.dida.lambda0);
      c.dida.sar_p = d.get<double>("sar_p", c.dida.sar_p);
      auto aclip = d.get<std::vector<double>>(
          "alpha_clip", {c.dida.alpha_clip_lo, c.dida.alpha_clip_hi});
      auto cclip = d.get<std::vector<double>>(
          "confuse_clip", {c.dida.confuse_clip_lo, c.dida.confuse_clip_hi});
      if (aclip.size() != 2 || cclip.size() != 2)
        throw ConfigError("config.dida: clip intervals need two entries");
      c.dida.alpha_clip_lo = aclip[0];
      c.dida.alpha_clip_hi = aclip[1];
      c.dida.confuse_clip_lo = cclip[0];
      c.dida.confuse_clip_hi = cclip[1];
      c.dida.sar_enabled = d.get<bool>("sar", c.dida.sar_enabled);
      c.dida.das_enabled = d.get<bool>("das", c.dida.das_enabled);
      c.dida.das_with_replacement =
          d.get<bool>("das_with_replacement", c.dida.das_with_replacement);
      c.dida.eval_every = d.get<int>("eval_every", c.dida.eval_every);
      c.dida.eval_episodes = d.get<int>("eval_episodes", c.dida.eval_episodes);
      d.finish();
    }
    {
      StrictObject g(root.child("gail"), "config.gail");
      c.gail.policy_hidden =
          g.get<std::vector<int>>("policy_hidden", c.gail.policy_hidden);
      c.gail.value_hidden =
          g.get<std::vector<int>>("value_hidden", c.gail.value_hidden);
      c.gail.disc_hidden =
          g.get<std::vector<int>>("disc_hidden", c.gail.disc_hidden);
      c.gail.batch = g.get<int>("batch", c.gail.batch);
      c.gail.iterations = g.get<int>("iterations", c.gail.iterations);
      c.gail.disc_updates = g.get<int>("disc_updates", c.gail.disc_updates);
      c.gail.disc_lr = g.get<double>("disc_lr", c.gail.disc_lr);
      c.gail.eval_every = g.get<int>("eval_every", c.gail.eval_every);
      c.gail.eval_episodes = g.get<int>("eval_episodes", c.gail.eval_episodes);
      g.finish();
    }
    {
      StrictObject b(root.child("bc"), "config.bc");
      c.bc.hidden = b.get<std::vector<int>>("hidden", c.bc.hidden);
      c.bc.lr = b.get<double>("lr", c.bc.lr);
      c.bc.epochs = b.get<int>("epochs", c.bc.epochs);
      c.bc.minibatch = b.get<int>("minibatch", c.bc.minibatch);
      c.bc.holdout = b.get<double>("holdout", c.bc.holdout);
      b.finish();
    }
    {
      StrictObject p(root.child("ppo"), "config.ppo");
      PpoConfig ppo;
      ppo.gamma = p.get<double>("gamma", ppo.gamma);
      ppo.clip_ratio = p.get<double>("clip_ratio", ppo.clip_ratio);
      ppo.epochs = p.get<int>("epochs", ppo.epochs);
      ppo.minibatch = p.get<int>("minibatch", ppo.minibatch);
      ppo.policy_lr = p.get<double>("policy_lr", ppo.policy_lr);
      ppo.value_lr = p.get<double>("value_lr", ppo.value_lr);
      ppo.value_coef = p.get<double>("value_coef", ppo.value_coef);
      ppo.entropy_coef = p.get<double>("entropy_coef", ppo.entropy_coef);
      ppo.kl_stop = p.get<double>("kl_stop", ppo.kl_stop);
      ppo.cumulative_returns =
          p.get<bool>("cumulative_returns", ppo.cumulative_returns);
      p.finish();
      c.dida.ppo = ppo;
      c.gail.ppo = ppo;
    }
    root.finish();
    c.validate();
    return c;
  }

  static ExperimentConfig load(const std::string& path) {
    json j;
    try {
      j = json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("config: ") + e.what());
    }
    return from_json(j);
  }

  void save(const std::string& path) const {
    atomic_write_text(path, to_json().dump(2) + "\n");
  }
};

// Per-seed run directory layout.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path config;
  std::filesystem::path metrics;
  std::filesystem::path ckpt_dir;
  std::filesystem::path eval_csv;
};

inline RunPaths run_paths(const std::string& out_dir, std::uint64_t seed) {
  RunPaths p;
  p.root = std::filesystem::path(out_dir) / std::to_string(seed);
  p.config = p.root / "config.json";
  p.metrics = p.root / "metrics.jsonl";
  p.ckpt_dir = p.root / "ckpt";
  p.eval_csv = p.root / "eval.csv";
  return p;
}

}  // namespace lnd
