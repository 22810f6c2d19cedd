// Command-line front end: corpus generation, corruption, training runs,
// checkpoint evaluation, and the diagnostic suite.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lnd/checkpoint.hpp"
#include "lnd/config.hpp"
#include "lnd/diagnostics.hpp"
#include "lnd/dida.hpp"

namespace {

using lnd::DemoBuffer;
using lnd::GaussianPolicy;
using lnd::json;
using lnd::LtiNoise;
using lnd::Rng;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- expert -----------------------------------------------------------------

struct ExpertArgs {
  std::string out;
  std::string ckpt;
  std::string metrics;
  int episodes = 50;
  std::uint64_t seed = 1;
  bool scripted = false;
  int iterations = 150;
  int batch = 2048;
  std::vector<int> hidden{64, 64};
  int eval_episodes = 20;
};

int run_expert(const ExpertArgs& a) {
  lnd::PointMass2D env;
  DemoBuffer corpus;
  if (a.scripted) {
    corpus = lnd::scripted_expert_corpus(env, a.episodes, a.seed);
  } else {
    lnd::PpoTrainConfig cfg;
    cfg.policy_hidden = a.hidden;
    cfg.value_hidden = a.hidden;
    cfg.batch = a.batch;
    cfg.iterations = a.iterations;
    std::ofstream mf;
    if (!a.metrics.empty()) {
      mf.open(a.metrics, std::ios::trunc);
      if (!mf) throw lnd::IoError("cannot open for write: " + a.metrics);
    }
    lnd::MetricsSink sink;
    if (mf.is_open())
      sink = [&mf](const json& j) { mf << j.dump() << "\n" << std::flush; };
    lnd::PpoTrainResult res = lnd::train_ppo_expert(env, cfg, a.seed, sink);

    // Demonstrations use the mean action: the corpus should show what the
    // expert intends, not its exploration noise.
    const GaussianPolicy& pol = res.policy;
    corpus = lnd::rollout_episodes(
        env,
        [&pol](const std::vector<double>& s, Rng&) {
          return pol.act_deterministic(s);
        },
        a.episodes, lnd::Rng::derive(a.seed, "demos").next_u64(),
        lnd::Source::kExpert);

    if (!a.ckpt.empty()) {
      lnd::Checkpoint ck;
      ck.nets.emplace("policy", pol.net());
      ck.nets.emplace("value", res.value);
      ck.meta["method"] = "ppo-expert";
      ck.meta["seed"] = a.seed;
      ck.meta["iterations"] = a.iterations;
      save_checkpoint(a.ckpt, ck);
      std::cout << "expert: checkpoint " << a.ckpt << "\n";
    }
  }
  save_buffer(a.out, corpus);
  std::vector<double> rets = episode_returns(corpus);
  double mean = 0.0;
  for (double r : rets) mean += r;
  mean /= static_cast<double>(rets.size());
  std::cout << "expert: wrote " << a.episodes << " episodes (" << corpus.size()
            << " records) to " << a.out << " mean_return=" << fmt("%.6f", mean)
            << "\n";
  return 0;
}

// --- corrupt ----------------------------------------------------------------

struct CorruptArgs {
  std::string in;
  std::string out;
  std::string noise_path;  // load an existing operator
  std::string kind;        // or sample a fresh one
  std::string save_noise;
  double mu = 0.0;
  double sigma = 0.1;
  std::uint64_t seed = 1;
};

int run_corrupt(const CorruptArgs& a) {
  if (a.noise_path.empty() == a.kind.empty())
    throw lnd::ConfigError("corrupt: pass exactly one of --noise / --kind");
  DemoBuffer clean = lnd::load_buffer(a.in);
  LtiNoise noise;
  std::string spec_path;
  if (!a.noise_path.empty()) {
    noise = lnd::load_noise(a.noise_path);
    spec_path = a.noise_path;
  } else {
    noise = lnd::sample_noise(lnd::noise_kind_from_name(a.kind),
                              clean.state_dim, a.seed, a.mu, a.sigma);
    spec_path = a.save_noise.empty() ? a.out + ".noise.json" : a.save_noise;
    save_noise(spec_path, noise);
  }
  DemoBuffer noisy = corrupt_buffer(noise, clean, spec_path);
  save_buffer(a.out, noisy);
  std::cout << "corrupt: " << noise_kind_name(noise.kind) << " dim="
            << noise.dim << " -> " << a.out << " (operator " << spec_path
            << ")\n";
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out_override;
  std::vector<std::uint64_t> seeds;
  bool no_das = false;
  bool no_sar = false;
  double sar_p = -1.0;
  std::string anchor_override;
};

void write_eval_csv(const std::filesystem::path& path,
                    const lnd::EvalResult& ev) {
  std::string text = "episode,return\n";
  char buf[64];
  for (std::size_t i = 0; i < ev.returns.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, ev.returns[i]);
    text += buf;
  }
  lnd::atomic_write_text(path, text);
}

int run_train(const TrainArgs& a) {
  lnd::ExperimentConfig cfg = lnd::ExperimentConfig::load(a.config);
  if (!a.out_override.empty()) cfg.out_dir = a.out_override;
  if (!a.seeds.empty()) cfg.seeds = a.seeds;
  if (a.no_das) cfg.dida.das_enabled = false;
  if (a.no_sar) cfg.dida.sar_enabled = false;
  if (a.sar_p > 0.0) cfg.dida.sar_p = a.sar_p;
  if (!a.anchor_override.empty()) cfg.anchor = a.anchor_override;
  cfg.validate();
  if (cfg.corpus.empty())
    throw lnd::ConfigError("train: config must name a corpus");

  DemoBuffer corpus = lnd::load_buffer(cfg.corpus);
  lnd::AnchorKind anchor_kind = lnd::anchor_kind_from_name(cfg.anchor);

  for (std::uint64_t seed : cfg.seeds) {
    lnd::PointMass2D env;
    lnd::RunPaths paths = lnd::run_paths(cfg.out_dir, seed);
    std::filesystem::create_directories(paths.ckpt_dir);
    cfg.save(paths.config.string());
    std::ofstream mf(paths.metrics, std::ios::trunc);
    if (!mf) throw lnd::IoError("cannot open for write: " + paths.metrics.string());
    lnd::MetricsSink sink = [&mf](const json& j) {
      mf << j.dump() << "\n" << std::flush;
    };

    lnd::Checkpoint ck;
    ck.meta["method"] = cfg.method;
    ck.meta["seed"] = seed;
    GaussianPolicy policy;

    if (cfg.method == "dida") {
      LtiNoise noise = lnd::sample_noise(lnd::NoiseKind::kIdentity,
                                         corpus.state_dim, 0);
      if (anchor_kind == lnd::AnchorKind::kRandom) {
        if (corpus.noise_spec.empty())
          throw lnd::ConfigError(
              "train: random anchor needs the corpus noise spec path");
        noise = lnd::load_noise(corpus.noise_spec);
      }
      DemoBuffer anchor = make_anchor(anchor_kind, corpus, env, noise, seed);
      lnd::DidaResult res =
          lnd::dida_train(env, corpus, anchor, cfg.dida, seed, sink);
      policy = res.models.policy;
      ck.nets.emplace("encoder", res.models.encoder);
      ck.nets.emplace("noise_disc", res.models.noise_disc);
      ck.nets.emplace("policy_disc", res.models.policy_disc);
      ck.nets.emplace("policy", res.models.policy.net());
      ck.nets.emplace("value", res.models.value);
      ck.meta["iterations"] = cfg.dida.iterations;
    } else if (cfg.method == "gail") {
      lnd::GailResult res = lnd::gail_train(env, corpus, cfg.gail, seed, sink);
      policy = res.policy;
      ck.nets.emplace("policy", res.policy.net());
      ck.nets.emplace("value", res.value);
      ck.nets.emplace("disc", res.disc);
      ck.meta["iterations"] = cfg.gail.iterations;
    } else {
      lnd::BcResult res = lnd::bc_train(corpus, cfg.bc, seed, sink);
      policy = res.policy;
      ck.nets.emplace("policy", res.policy.net());
      ck.meta["iterations"] = cfg.bc.epochs;
    }

    save_checkpoint((paths.ckpt_dir / "final.json").string(), ck);
    lnd::EvalResult ev =
        evaluate_policy(env, policy, cfg.eval_episodes,
                        lnd::Rng::derive(seed, "final-eval").next_u64());
    write_eval_csv(paths.eval_csv, ev);
    std::cout << "train method=" << cfg.method << " seed=" << seed
              << " eval_mean=" << fmt("%.6f", ev.mean)
              << " eval_std=" << fmt("%.6f", ev.stddev) << " dir="
              << paths.root.string() << "\n";
  }
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string out;
  int episodes = 100;
  std::uint64_t seed = 1;
  bool stochastic = false;
};

int run_eval(const EvalArgs& a) {
  lnd::Checkpoint ck = lnd::load_checkpoint(a.ckpt);
  GaussianPolicy policy(ck.require("policy"));
  lnd::PointMass2D env;
  lnd::EvalResult ev;
  if (a.stochastic) {
    DemoBuffer roll = lnd::rollout_episodes(
        env,
        [&policy](const std::vector<double>& s, Rng& rng) {
          return policy.act(s, rng);
        },
        a.episodes, a.seed, lnd::Source::kImitator);
    ev.returns = episode_returns(roll);
    for (double r : ev.returns) ev.mean += r;
    ev.mean /= static_cast<double>(ev.returns.size());
    double var = 0.0;
    for (double r : ev.returns) var += (r - ev.mean) * (r - ev.mean);
    ev.stddev = std::sqrt(var / static_cast<double>(ev.returns.size()));
  } else {
    ev = evaluate_policy(env, policy, a.episodes, a.seed);
  }
  if (!a.out.empty()) write_eval_csv(a.out, ev);
  std::printf("eval episodes=%d mean=%.6f std=%.6f\n", a.episodes, ev.mean,
              ev.stddev);
  return 0;
}

// --- diagnose ---------------------------------------------------------------

struct OccupancyArgs {
  int states = 8;
  int actions = 3;
  double gamma = 0.9;
  int trials = 100;
  std::uint64_t seed = 1;
  double tol = 1e-9;
};

int run_occupancy(const OccupancyArgs& a) {
  Rng rng(a.seed);
  double max_diff = 0.0, max_residual = 0.0;
  for (int t = 0; t < a.trials; ++t) {
    lnd::TabularMDP mdp =
        lnd::TabularMDP::random(a.states, a.actions, a.gamma, rng);
    lnd::Matrix pol(a.states, a.actions);
    for (int s = 0; s < a.states; ++s) {
      double sum = 0.0;
      for (int ac = 0; ac < a.actions; ++ac) {
        pol[s][ac] = rng.uniform() + 0.05;
        sum += pol[s][ac];
      }
      for (int ac = 0; ac < a.actions; ++ac) pol[s][ac] /= sum;
    }
    std::vector<int> perm = rng.permutation(a.states);
    lnd::RelabelCheck check = verify_relabeling_invariance(mdp, pol, perm);
    max_diff = std::max(max_diff, check.max_abs_diff);
    max_residual = std::max(
        max_residual,
        std::max(check.original.residual, check.relabeled.residual));
  }
  std::printf("occupancy: trials=%d max_abs_diff=%.3e max_residual=%.3e\n",
              a.trials, max_diff, max_residual);
  bool ok = max_diff <= a.tol;
  std::printf("%s occupancy invariance within %.1e\n", ok ? "[PASS]" : "[FAIL]",
              a.tol);
  return ok ? 0 : 1;
}

struct PaccArgs {
  std::string kind = "shuffle";
  std::string out;
  double mu = 0.0;
  double sigma = 0.1;
  int trials = 100;
  int batch = 512;
  int episodes = 10;
  int bins = 10;
  std::uint64_t seed = 1;
};

int run_pacc(const PaccArgs& a) {
  lnd::PointMass2D env;
  LtiNoise noise = lnd::sample_noise(lnd::noise_kind_from_name(a.kind), 4,
                                     lnd::Rng::derive(a.seed, "noise").next_u64(),
                                     a.mu, a.sigma);
  lnd::PaccInitConfig cfg;
  cfg.trials = a.trials;
  cfg.batch = a.batch;
  cfg.corpus_episodes = a.episodes;
  std::vector<double> accs = pacc_init_stat(env, noise, cfg, a.seed);
  if (!a.out.empty()) {
    std::string text = "trial,p_acc\n";
    char buf[64];
    for (std::size_t i = 0; i < accs.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, accs[i]);
      text += buf;
    }
    lnd::atomic_write_text(a.out, text);
  }
  std::vector<int> hist = lnd::histogram_unit(accs, a.bins);
  double width = 1.0 / a.bins;
  for (int b = 0; b < a.bins; ++b)
    if (hist[static_cast<std::size_t>(b)] > 0)
      std::printf("  [%.2f,%.2f%c %d\n", b * width, (b + 1) * width,
                  b + 1 == a.bins ? ']' : ')',
                  hist[static_cast<std::size_t>(b)]);
  int top1 = 0, top2 = 1;
  if (hist[1] > hist[0]) std::swap(top1, top2);
  for (int b = 2; b < a.bins; ++b) {
    if (hist[static_cast<std::size_t>(b)] > hist[static_cast<std::size_t>(top1)]) {
      top2 = top1;
      top1 = b;
    } else if (hist[static_cast<std::size_t>(b)] >
               hist[static_cast<std::size_t>(top2)]) {
      top2 = b;
    }
  }
  std::printf("pacc-init: trials=%d top_bins=[%.2f,%.2f) [%.2f,%.2f)\n",
              a.trials, top1 * width, (top1 + 1) * width, top2 * width,
              (top2 + 1) * width);
  return 0;
}

struct SweepArgs {
  std::string sigmas = "0.0,0.1,0.5,1.0";
  std::string out;
  int seeds = 3;
  int iterations = 50;
  int batch = 1024;
  int episodes = 20;
  int eval_episodes = 20;
  std::uint64_t seed = 1;
};

int run_sweep(const SweepArgs& a) {
  std::vector<double> sigmas;
  std::size_t pos = 0;
  while (pos < a.sigmas.size()) {
    std::size_t comma = a.sigmas.find(',', pos);
    std::string tok = a.sigmas.substr(pos, comma - pos);
    try {
      sigmas.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw lnd::ConfigError("gail-sweep: bad sigma '" + tok + "'");
    }
    pos = (comma == std::string::npos) ? a.sigmas.size() : comma + 1;
  }
  if (sigmas.empty()) throw lnd::ConfigError("gail-sweep: no sigmas");

  lnd::PointMass2D env;
  DemoBuffer expert = lnd::scripted_expert_corpus(
      env, a.episodes, lnd::Rng::derive(a.seed, "corpus").next_u64());
  lnd::GailConfig cfg;
  cfg.batch = a.batch;
  cfg.iterations = a.iterations;
  std::string csv = "sigma,seed_index,return\n";
  char buf[96];
  lnd::MetricsSink sink = [&csv, &buf](const json& j) {
    std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g\n",
                  j.at("sigma").get<double>(), j.at("seed_index").get<int>(),
                  j.at("eval_return").get<double>());
    csv += buf;
  };
  std::vector<lnd::SweepPoint> pts = gaussian_scale_sweep(
      env, expert, sigmas, a.seeds, cfg, a.seed, a.eval_episodes, sink);
  for (const lnd::SweepPoint& pt : pts)
    std::printf("sigma=%.3f mean_return=%.4f (n=%d)\n", pt.sigma, pt.mean,
                a.seeds);
  if (!a.out.empty()) lnd::atomic_write_text(a.out, csv);
  return 0;
}

struct ExportArgs {
  std::string ckpt;
  std::string out;
  std::vector<std::string> corpora;  // name=path
};

int run_export(const ExportArgs& a) {
  lnd::Checkpoint ck = lnd::load_checkpoint(a.ckpt);
  const lnd::DenseNet& encoder = ck.require("encoder");
  const lnd::DenseNet& noise_disc = ck.require("noise_disc");
  std::vector<DemoBuffer> buffers;
  buffers.reserve(a.corpora.size());
  std::vector<std::pair<std::string, const DemoBuffer*>> named;
  for (const std::string& spec : a.corpora) {
    std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
      throw lnd::ConfigError("export-embeddings: corpus must be name=path, got '" +
                             spec + "'");
    buffers.push_back(lnd::load_buffer(spec.substr(eq + 1)));
  }
  for (std::size_t i = 0; i < a.corpora.size(); ++i)
    named.emplace_back(a.corpora[i].substr(0, a.corpora[i].find('=')),
                       &buffers[i]);
  export_embeddings(encoder, noise_disc, named, a.out);
  std::cout << "export-embeddings: wrote " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imitation learning from noisy demonstrations on a 2d point mass"};
  app.require_subcommand(1);

  ExpertArgs ea;
  CLI::App* expert = app.add_subcommand(
      "expert", "Train (or script) an expert and write a demonstration corpus");
  expert->add_option("--out", ea.out, "Corpus JSONL path")->required();
  expert->add_option("--episodes", ea.episodes, "Demonstration episodes");
  expert->add_option("--seed", ea.seed, "Run seed");
  expert->add_flag("--scripted", ea.scripted,
                   "Use the scripted controller instead of training");
  expert->add_option("--iterations", ea.iterations, "Training iterations");
  expert->add_option("--batch", ea.batch, "On-policy batch size");
  expert->add_option("--hidden", ea.hidden, "Hidden layer sizes");
  expert->add_option("--ckpt", ea.ckpt, "Write the trained policy checkpoint");
  expert->add_option("--metrics", ea.metrics, "Write training metrics JSONL");

  CorruptArgs ca;
  CLI::App* corrupt = app.add_subcommand(
      "corrupt", "Push a corpus through a linear state-noise operator");
  corrupt->add_option("--in", ca.in, "Input corpus JSONL")->required();
  corrupt->add_option("--out", ca.out, "Output corpus JSONL")->required();
  corrupt->add_option("--noise", ca.noise_path, "Existing operator JSON");
  corrupt->add_option("--kind", ca.kind,
                      "gaussian|normal|doubly_stochastic|shuffle|identity|combined");
  corrupt->add_option("--mu", ca.mu, "Offset mean (gaussian)");
  corrupt->add_option("--sigma", ca.sigma, "Offset spread (gaussian)");
  corrupt->add_option("--seed", ca.seed, "Operator seed");
  corrupt->add_option("--save-noise", ca.save_noise,
                      "Where to write a freshly sampled operator");

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "Run a training experiment");
  train->add_option("--config", ta.config, "Experiment config JSON")->required();
  train->add_option("--out", ta.out_override, "Override the output directory");
  train->add_option("--seed", ta.seeds, "Override config seeds");
  train->add_flag("--no-das", ta.no_das, "Disable confusion-weighted selection");
  train->add_flag("--no-sar", ta.no_sar, "Disable the adaptive mixing rate");
  train->add_option("--sar-p", ta.sar_p, "Override the rate pivot");
  train->add_option("--anchor", ta.anchor_override, "shuffle|random");

  EvalArgs va;
  CLI::App* evalc = app.add_subcommand("eval", "Evaluate a policy checkpoint");
  evalc->add_option("--ckpt", va.ckpt, "Checkpoint JSON")->required();
  evalc->add_option("--episodes", va.episodes, "Evaluation episodes");
  evalc->add_option("--seed", va.seed, "Evaluation seed");
  evalc->add_option("--out", va.out, "Write per-episode returns CSV");
  evalc->add_flag("--stochastic", va.stochastic, "Sample actions instead of means");

  CLI::App* diag = app.add_subcommand("diagnose", "Diagnostic suite");
  diag->require_subcommand(1);

  OccupancyArgs oa;
  CLI::App* occ = diag->add_subcommand(
      "occupancy", "Relabeling invariance of the occupancy measure");
  occ->add_option("--states", oa.states, "States per random instance");
  occ->add_option("--actions", oa.actions, "Actions per random instance");
  occ->add_option("--gamma", oa.gamma, "Discount");
  occ->add_option("--trials", oa.trials, "Random instances");
  occ->add_option("--seed", oa.seed, "Seed");
  occ->add_option("--tol", oa.tol, "Pass tolerance on the max deviation");

  PaccArgs pa;
  CLI::App* pacc = diag->add_subcommand(
      "pacc-init", "Initial noise-discriminator accuracy across inits");
  pacc->add_option("--kind", pa.kind, "Noise kind for the fixture");
  pacc->add_option("--mu", pa.mu, "Offset mean (gaussian)");
  pacc->add_option("--sigma", pa.sigma, "Offset spread (gaussian)");
  pacc->add_option("--trials", pa.trials, "Independent initializations");
  pacc->add_option("--batch", pa.batch, "Triple-batch size");
  pacc->add_option("--episodes", pa.episodes, "Fixture corpus episodes");
  pacc->add_option("--bins", pa.bins, "Histogram bins");
  pacc->add_option("--seed", pa.seed, "Seed");
  pacc->add_option("--out", pa.out, "Write per-trial accuracies CSV");

  SweepArgs sa;
  CLI::App* sweep = diag->add_subcommand(
      "gail-sweep", "Adversarial baseline returns across offset-noise scales");
  sweep->add_option("--sigmas", sa.sigmas, "Comma-separated sigma list");
  sweep->add_option("--seeds", sa.seeds, "Seeds per sigma");
  sweep->add_option("--iterations", sa.iterations, "Training iterations");
  sweep->add_option("--batch", sa.batch, "On-policy batch size");
  sweep->add_option("--episodes", sa.episodes, "Scripted corpus episodes");
  sweep->add_option("--eval-episodes", sa.eval_episodes, "Evaluation episodes");
  sweep->add_option("--seed", sa.seed, "Seed");
  sweep->add_option("--out", sa.out, "Write per-run returns CSV");

  ExportArgs xa;
  CLI::App* expx = diag->add_subcommand(
      "export-embeddings", "Dump encoder embeddings and confusion weights");
  expx->add_option("--ckpt", xa.ckpt, "Checkpoint with encoder and noise_disc")
      ->required();
  expx->add_option("--corpus", xa.corpora, "Corpus as name=path (repeatable)")
      ->required();
  expx->add_option("--out", xa.out, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*expert) return run_expert(ea);
    if (*corrupt) return run_corrupt(ca);
    if (*train) return run_train(ta);
    if (*evalc) return run_eval(va);
    if (*occ) return run_occupancy(oa);
    if (*pacc) return run_pacc(pa);
    if (*sweep) return run_sweep(sa);
    if (*expx) return run_export(xa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
