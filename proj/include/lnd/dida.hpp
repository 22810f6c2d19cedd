#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "lnd/buffer.hpp"
#include "lnd/datasets.hpp"
#include "lnd/env.hpp"
#include "lnd/nn.hpp"
#include "lnd/noise.hpp"
#include "lnd/rl.hpp"

namespace lnd {

// ---------------------------------------------------------------------------
// Scalar schedules.

// Mixing rate driven by the noise discriminator's accuracy p_acc against the
// pivot p: below the pivot the rate grows linearly to 1, above it decays
// linearly to 0. Clipped away from both ends so the mix never fully
// degenerates.
inline double adaptive_rate(double p_acc, double p = 2.0 / 3.0,
                            double clip_lo = 0.01, double clip_hi = 0.99) {
  if (!(p > 0.0 && p < 1.0))
    throw ConfigError("adaptive_rate: pivot p must lie in (0, 1)");
  if (!(p_acc >= 0.0 && p_acc <= 1.0))
    throw InputError("adaptive_rate: p_acc must lie in [0, 1]");
  if (!(clip_lo >= 0.0 && clip_lo <= clip_hi && clip_hi <= 1.0))
    throw ConfigError("adaptive_rate: bad clip interval");
  double raw = p_acc > p ? (1.0 - p_acc) / (1.0 - p) : p_acc / p;
  return std::clamp(raw, clip_lo, clip_hi);
}

// Adversarial weight schedule over training progress q = iter/total:
// lambda0 * (2 / (1 + exp(-10 q)) - 1), i.e. 0 at the start and approaching
// lambda0 from below.
inline double domain_weight(int iter, int total_iters, double lambda0) {
  if (total_iters <= 0)
    throw ConfigError("domain_weight: total_iters must be positive");
  if (iter < 0 || iter > total_iters)
    throw InputError("domain_weight: iter out of [0, total_iters]");
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0))
    throw ConfigError("domain_weight: lambda0 must be finite and >= 0");
  double q = static_cast<double>(iter) / static_cast<double>(total_iters);
  return lambda0 * (2.0 / (1.0 + std::exp(-10.0 * q)) - 1.0);
}

// Confusion-weighted distribution over a batch: noise-discriminator outputs
// clipped into [clip_lo, clip_hi], then normalized to sum 1. High output on
// an imitator sample means the discriminator leans "noisy" there, so the
// sample is informative to mix in.
inline std::vector<double> confusion_distribution(
    const std::vector<double>& dn_out, double clip_lo = 0.1,
    double clip_hi = 0.9) {
  if (dn_out.empty()) throw InputError("confusion_distribution: empty batch");
  if (!(clip_lo > 0.0 && clip_lo <= clip_hi && clip_hi <= 1.0))
    throw ConfigError("confusion_distribution: bad clip interval");
  std::vector<double> p(dn_out.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < dn_out.size(); ++i) {
    if (!std::isfinite(dn_out[i]))
      throw InputError("confusion_distribution: non-finite input");
    p[i] = std::clamp(dn_out[i], clip_lo, clip_hi);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// ---------------------------------------------------------------------------
// Weighted index sampling for the mix step.

// k draws proportional to weights. Without replacement the weights are
// renormalized over the remaining pool after each draw; if the remaining
// mass degenerates to zero the next pick falls back to the highest remaining
// weight (lowest index on ties), which keeps the draw well-defined for
// one-hot weight vectors.
inline std::vector<int> weighted_sample(const std::vector<double>& weights,
                                        int k, Rng& rng,
                                        bool with_replacement = false) {
  int n = static_cast<int>(weights.size());
  if (n == 0) throw SamplingError("weighted_sample: empty weights");
  if (k < 0) throw SamplingError("weighted_sample: negative k");
  if (!with_replacement && k > n)
    throw SamplingError("weighted_sample: k exceeds pool without replacement");
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw SamplingError("weighted_sample: weights must be finite and >= 0");

  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int draw = 0; draw < k; ++draw) {
    double mass = 0.0;
    for (int i = 0; i < n; ++i)
      if (!taken[static_cast<std::size_t>(i)])
        mass += weights[static_cast<std::size_t>(i)];
    int pick = -1;
    if (mass > 1e-300) {
      double u = rng.uniform() * mass;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        acc += weights[static_cast<std::size_t>(i)];
        if (u < acc) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {  // u == mass after rounding: last untaken index
        for (int i = n - 1; i >= 0; --i)
          if (!taken[static_cast<std::size_t>(i)]) {
            pick = i;
            break;
          }
      }
    } else {
      double best = -1.0;
      for (int i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        if (weights[static_cast<std::size_t>(i)] > best) {
          best = weights[static_cast<std::size_t>(i)];
          pick = i;
        }
      }
    }
    out.push_back(pick);
    if (!with_replacement) taken[static_cast<std::size_t>(pick)] = 1;
  }
  return out;
}

// Plan for replacing round(alpha * n) anchor slots with imitator samples.
// Slots are uniformly random distinct positions; sources are drawn from the
// confusion distribution. Sources are drawn first, then slots.
struct DasMix {
  int k = 0;
  std::vector<int> slots;    // positions in the anchor batch to overwrite
  std::vector<int> sources;  // imitator batch indices, aligned with slots
};

inline DasMix das_mix(int n, double alpha, const std::vector<double>& p_das,
                      Rng& rng, bool with_replacement = false) {
  if (n <= 0) throw InputError("das_mix: empty batch");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw InputError("das_mix: alpha must lie in [0, 1]");
  if (static_cast<int>(p_das.size()) != n)
    throw ShapeError("das_mix: distribution size mismatch");
  DasMix mix;
  mix.k = static_cast<int>(std::lround(alpha * n));
  mix.sources = weighted_sample(p_das, mix.k, rng, with_replacement);
  std::vector<int> perm = rng.permutation(n);
  mix.slots.assign(perm.begin(), perm.begin() + mix.k);
  return mix;
}

// ---------------------------------------------------------------------------
// Configuration and telemetry.

struct DidaConfig {
  int embed_dim = 4;
  std::vector<int> encoder_hidden{128, 128};
  std::vector<int> noise_disc_hidden{128, 128};
  std::vector<int> policy_disc_hidden{128, 128};
  std::vector<int> policy_hidden{128, 128};
  std::vector<int> value_hidden{128, 128};
  int batch = 2048;            // N: triple-batch size and PPO buffer size
  int iterations = 300;        // M
  int noise_disc_updates = 5;  // inner discriminator steps per iteration
  double encoder_lr = 3e-4;
  double disc_lr = 3e-4;
  double lambda0 = 0.5;
  double sar_p = 2.0 / 3.0;
  double alpha_clip_lo = 0.01;
  double alpha_clip_hi = 0.99;
  double confuse_clip_lo = 0.1;
  double confuse_clip_hi = 0.9;
  bool sar_enabled = true;   // adaptive mixing rate; off pins alpha at the cap
  bool das_enabled = true;   // confusion-weighted selection; off is uniform
  bool das_with_replacement = false;
  PpoConfig ppo;
  int eval_every = 10;  // 0 disables periodic evaluation
  int eval_episodes = 10;

  void validate() const {
    if (embed_dim <= 0) throw ConfigError("DidaConfig: embed_dim must be > 0");
    if (batch <= 0) throw ConfigError("DidaConfig: batch must be > 0");
    if (iterations <= 0)
      throw ConfigError("DidaConfig: iterations must be > 0");
    if (noise_disc_updates <= 0)
      throw ConfigError("DidaConfig: noise_disc_updates must be > 0");
    if (!(sar_p > 0.0 && sar_p < 1.0))
      throw ConfigError("DidaConfig: sar_p must lie in (0, 1)");
    if (!(lambda0 >= 0.0))
      throw ConfigError("DidaConfig: lambda0 must be >= 0");
  }
};

struct DidaIterState {
  int i = 0;
  double p_acc = 0.0;
  double alpha = 0.0;
  double lambda = 0.0;
  double loss_n = 0.0;
  double loss_p = 0.0;
  double mean_return = 0.0;
  std::optional<double> eval_return;

  json to_json() const {
    json j;
    j["i"] = i;
    j["p_acc"] = p_acc;
    j["alpha"] = alpha;
    j["lambda"] = lambda;
    j["loss_n"] = loss_n;
    j["loss_p"] = loss_p;
    j["mean_return"] = mean_return;
    if (eval_return) j["eval_return"] = *eval_return;
    return j;
  }
};

struct DidaModels {
  DenseNet encoder;      // state -> embedding, linear head
  DenseNet noise_disc;   // embedding -> P(noisy domain)
  DenseNet policy_disc;  // embedding pair -> P(expert)
  GaussianPolicy policy;
  DenseNet value;
};

struct DidaResult {
  DidaModels models;
  std::vector<DidaIterState> iters;
};

// ---------------------------------------------------------------------------
// Trainer.

namespace detail {

inline DenseNet make_mlp(int in, const std::vector<int>& hidden, int out,
                         Head head, Rng& rng) {
  std::vector<int> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return DenseNet::random_init(dims, head, rng);
}

}  // namespace detail

// One adversarial imitation run against a noisy expert corpus and its anchor
// corpus. Per iteration:
//   1. roll out the current policy for the on-policy buffer,
//   2. noise branch: the embedding-space discriminator separates the clean
//      imitator batch (label 0) from the two corrupted batches (label 1);
//      its accuracy before the update is p_acc,
//   3. mix round(alpha N) confusion-picked imitator samples into the anchor
//      batch and train the expertise discriminator mix-vs-expert,
//   4. update the encoder with the expertise gradient plus the reversed,
//      lambda-scaled domain gradient,
//   5. reward the rollout with the fresh expertise discriminator and run PPO.
inline DidaResult dida_train(PointMass2D& env, const DemoBuffer& noisy_expert,
                             const DemoBuffer& anchor, const DidaConfig& cfg,
                             std::uint64_t seed, MetricsSink sink = {}) {
  cfg.validate();
  noisy_expert.validate();
  anchor.validate();
  EnvSpec spec = env.spec();
  if (noisy_expert.state_dim != spec.state_dim ||
      noisy_expert.action_dim != spec.action_dim)
    throw ShapeError("dida_train: expert corpus dims do not match env");
  if (anchor.state_dim != spec.state_dim)
    throw ShapeError("dida_train: anchor corpus dims do not match env");
  if (std::min(noisy_expert.size(), anchor.size()) < cfg.batch)
    throw SamplingError("dida_train: corpora smaller than batch");

  int n = cfg.batch;
  int d = cfg.embed_dim;
  Rng init = Rng::derive(seed, "init");
  DidaModels m{
      detail::make_mlp(spec.state_dim, cfg.encoder_hidden, d, Head::kLinear,
                       init),
      detail::make_mlp(d, cfg.noise_disc_hidden, 1, Head::kSigmoid, init),
      detail::make_mlp(2 * d, cfg.policy_disc_hidden, 1, Head::kSigmoid, init),
      GaussianPolicy::make(spec.state_dim, cfg.policy_hidden, spec.action_dim,
                           init),
      detail::make_mlp(spec.state_dim, cfg.value_hidden, 1, Head::kLinear,
                       init)};

  AdamState enc_opt(m.encoder.param_count());
  AdamState dn_opt(m.noise_disc.param_count());
  AdamState dp_opt(m.policy_disc.param_count());
  AdamState pol_opt(m.policy.net().param_count());
  AdamState val_opt(m.value.param_count());
  AdamConfig enc_adam{cfg.encoder_lr, 0.9, 0.999, 1e-8};
  AdamConfig disc_adam{cfg.disc_lr, 0.9, 0.999, 1e-8};

  Rng sampler = Rng::derive(seed, "sampler");
  Rng das_rng = Rng::derive(seed, "das");
  Rng ppo_rng = Rng::derive(seed, "ppo");

  std::vector<double> dn_grad(m.noise_disc.param_count());
  std::vector<double> dp_grad(m.policy_disc.param_count());

  DidaResult res{std::move(m), {}};

  for (int i = 1; i <= cfg.iterations; ++i) {
    DidaIterState it;
    it.i = i;
    it.lambda = domain_weight(i, cfg.iterations, cfg.lambda0);

    // All learning rates decay linearly over the run so the adversarial
    // system settles instead of cycling near its equilibrium.
    double lr_sc = linear_lr_scale(i, cfg.iterations);
    AdamConfig iter_enc_adam = enc_adam;
    iter_enc_adam.lr *= lr_sc;
    AdamConfig iter_disc_adam = disc_adam;
    iter_disc_adam.lr *= lr_sc;

    // 1. On-policy buffer (whole episodes; learner slice is the first n).
    DemoBuffer full = collect_episodes(
        env, res.models.policy, n,
        Rng::derive(seed, "rollout", static_cast<std::uint64_t>(i)).next_u64());

    // 2. Triple batch: expert and anchor stay index-aligned, imitator draw
    //    is independent.
    TripleIndices tri = sample_triple(noisy_expert, anchor, full, n, sampler);
    Matrix s_imit = gather_states(full, tri.imitator);
    Matrix s_anch = gather_states(anchor, tri.shared);
    Matrix s_exp = gather_states(noisy_expert, tri.shared);

    // Noise branch over [imitator; anchor; expert]: imitator is the pure
    // domain (label 0), the corrupted corpora are the noisy domain (label 1).
    Matrix x_noise = vstack(s_imit, vstack(s_anch, s_exp));
    std::vector<double> labels_n(static_cast<std::size_t>(3 * n), 1.0);
    for (int k = 0; k < n; ++k) labels_n[static_cast<std::size_t>(k)] = 0.0;

    ForwardCache enc_cache_n;
    Matrix z_noise = net_forward(res.models.encoder, x_noise, &enc_cache_n);
    std::vector<double> g_n(res.models.encoder.param_count(), 0.0);
    for (int u = 1; u <= cfg.noise_disc_updates; ++u) {
      ForwardCache dn_cache;
      Matrix p = net_forward(res.models.noise_disc, z_noise, &dn_cache);
      if (u == 1) {
        // Accuracy and loss of the discriminator as it enters the iteration.
        it.p_acc = binary_accuracy(p, labels_n);
        it.loss_n = bce_loss(p, labels_n);
      }
      std::fill(dn_grad.begin(), dn_grad.end(), 0.0);
      Matrix dz = net_backward(res.models.noise_disc, dn_cache,
                               bce_grad(p, labels_n), dn_grad);
      if (u == cfg.noise_disc_updates)
        net_backward(res.models.encoder, enc_cache_n, dz, g_n);
      adam_step(res.models.noise_disc.params(), dn_grad, dn_opt,
                iter_disc_adam);
    }

    // 3. Mixing rate and confusion distribution. The selection step rides on
    //    the adaptive rate, so disabling the rate disables it too.
    it.alpha = cfg.sar_enabled
                   ? adaptive_rate(it.p_acc, cfg.sar_p, cfg.alpha_clip_lo,
                                   cfg.alpha_clip_hi)
                   : cfg.alpha_clip_hi;
    std::vector<double> p_das(static_cast<std::size_t>(n),
                              1.0 / static_cast<double>(n));
    if (cfg.das_enabled && cfg.sar_enabled) {
      Matrix z_imit(n, d);
      std::copy(z_noise.data.begin(),
                z_noise.data.begin() + static_cast<std::ptrdiff_t>(
                                           static_cast<std::size_t>(n) * d),
                z_imit.data.begin());
      Matrix dn_out = net_forward(res.models.noise_disc, z_imit);
      std::vector<double> scores(static_cast<std::size_t>(n));
      for (int k = 0; k < n; ++k)
        scores[static_cast<std::size_t>(k)] = dn_out[k][0];
      p_das = confusion_distribution(scores, cfg.confuse_clip_lo,
                                     cfg.confuse_clip_hi);
    }
    DasMix mix = das_mix(n, it.alpha, p_das, das_rng, cfg.das_with_replacement);

    // 4. Policy branch: mix batch (label 0) against expert batch (label 1),
    //    both as consecutive-state embedding pairs.
    std::vector<const TransitionRecord*> mix_rec(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
      mix_rec[static_cast<std::size_t>(k)] =
          &anchor.records[static_cast<std::size_t>(
              tri.shared[static_cast<std::size_t>(k)])];
    for (int k = 0; k < mix.k; ++k)
      mix_rec[static_cast<std::size_t>(mix.slots[static_cast<std::size_t>(k)])] =
          &full.records[static_cast<std::size_t>(
              tri.imitator[static_cast<std::size_t>(
                  mix.sources[static_cast<std::size_t>(k)])])];

    Matrix x_pol(4 * n, spec.state_dim);
    for (int k = 0; k < n; ++k) {
      const TransitionRecord* rec = mix_rec[static_cast<std::size_t>(k)];
      std::copy(rec->s.begin(), rec->s.end(), x_pol[k]);
      std::copy(rec->s_next.begin(), rec->s_next.end(), x_pol[n + k]);
    }
    for (int k = 0; k < n; ++k) {
      const TransitionRecord& rec = noisy_expert.records[
          static_cast<std::size_t>(tri.shared[static_cast<std::size_t>(k)])];
      std::copy(rec.s.begin(), rec.s.end(), x_pol[2 * n + k]);
      std::copy(rec.s_next.begin(), rec.s_next.end(), x_pol[3 * n + k]);
    }

    ForwardCache enc_cache_p;
    Matrix z_pol = net_forward(res.models.encoder, x_pol, &enc_cache_p);
    // Row k pairs a state embedding with its own successor: mix rows draw
    // from blocks [0,n) and [n,2n), expert rows from [2n,3n) and [3n,4n).
    Matrix sigma(2 * n, 2 * d);
    for (int k = 0; k < n; ++k) {
      std::copy(z_pol[k], z_pol[k] + d, sigma[k]);
      std::copy(z_pol[n + k], z_pol[n + k] + d, sigma[k] + d);
      std::copy(z_pol[2 * n + k], z_pol[2 * n + k] + d, sigma[n + k]);
      std::copy(z_pol[3 * n + k], z_pol[3 * n + k] + d, sigma[n + k] + d);
    }
    std::vector<double> labels_p(static_cast<std::size_t>(2 * n), 0.0);
    for (int k = n; k < 2 * n; ++k) labels_p[static_cast<std::size_t>(k)] = 1.0;

    ForwardCache dp_cache;
    Matrix p_pol = net_forward(res.models.policy_disc, sigma, &dp_cache);
    it.loss_p = bce_loss(p_pol, labels_p);
    std::fill(dp_grad.begin(), dp_grad.end(), 0.0);
    Matrix dsigma = net_backward(res.models.policy_disc, dp_cache,
                                 bce_grad(p_pol, labels_p), dp_grad);
    adam_step(res.models.policy_disc.params(), dp_grad, dp_opt,
              iter_disc_adam);

    Matrix dz_pol(4 * n, d);
    for (int k = 0; k < n; ++k) {
      std::copy(dsigma[k], dsigma[k] + d, dz_pol[k]);
      std::copy(dsigma[k] + d, dsigma[k] + 2 * d, dz_pol[n + k]);
      std::copy(dsigma[n + k], dsigma[n + k] + d, dz_pol[2 * n + k]);
      std::copy(dsigma[n + k] + d, dsigma[n + k] + 2 * d, dz_pol[3 * n + k]);
    }
    std::vector<double> g_p(res.models.encoder.param_count(), 0.0);
    net_backward(res.models.encoder, enc_cache_p, dz_pol, g_p);

    // 5. Encoder: expertise gradient plus reversed domain gradient.
    std::vector<double> g_rev = grad_reverse(g_n, it.lambda);
    for (std::size_t k = 0; k < g_p.size(); ++k) g_p[k] += g_rev[k];
    adam_step(res.models.encoder.params(), g_p, enc_opt, iter_enc_adam);

    // 6. PPO on rewards from the updated encoder and expertise discriminator.
    std::vector<int> all(static_cast<std::size_t>(full.size()));
    for (int k = 0; k < full.size(); ++k) all[static_cast<std::size_t>(k)] = k;
    Matrix z_s = net_forward(res.models.encoder, gather_states(full, all));
    Matrix z_sn = net_forward(res.models.encoder, gather_next_states(full, all));
    Matrix pr = net_forward(res.models.policy_disc, hconcat(z_s, z_sn));
    std::vector<double> rewards(static_cast<std::size_t>(full.size()));
    for (int k = 0; k < full.size(); ++k)
      rewards[static_cast<std::size_t>(k)] = pr[k][0];
    RolloutData roll =
        finalize_rollout(std::move(full), std::move(rewards), n, cfg.ppo);
    PpoBatch batch = make_ppo_batch(res.models.policy, res.models.value, roll);
    PpoConfig iter_ppo = cfg.ppo;
    iter_ppo.lr_scale = cfg.ppo.lr_scale * lr_sc;
    ppo_update(res.models.policy, res.models.value, pol_opt, val_opt, batch,
               iter_ppo, ppo_rng);

    it.mean_return = roll.mean_env_return;
    if (cfg.eval_every > 0 && i % cfg.eval_every == 0) {
      EvalResult ev =
          evaluate_policy(env, res.models.policy, cfg.eval_episodes,
                          Rng::derive(seed, "eval").next_u64());
      it.eval_return = ev.mean;
    }
    if (!std::isfinite(it.loss_n) || !std::isfinite(it.loss_p))
      throw DivergenceError("dida_train: non-finite discriminator loss at iteration " +
                            std::to_string(i));
    res.iters.push_back(it);
    emit(sink, it.to_json());
  }
  return res;
}

}  // namespace lnd
