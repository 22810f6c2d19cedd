#pragma once

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "lnd/buffer.hpp"
#include "lnd/env.hpp"
#include "lnd/nn.hpp"

namespace lnd {

using MetricsSink = std::function<void(const json&)>;

inline void emit(const MetricsSink& sink, const json& j) {
  if (sink) sink(j);
}

// ---------------------------------------------------------------------------
// Diagonal Gaussian policy: network outputs the mean, log-std is a learnable
// state-independent parameter block. Log-std is clamped so the exponentiated
// std stays numerically sane, with a floor of 0.1 that keeps a minimum level
// of exploration alive: adversarial reward signals shift under the policy, and
// a policy that collapses to near-deterministic mid-run cannot recover when
// the reward landscape moves. Deterministic evaluation uses the mean action,
// so the floor does not cap final performance.

inline constexpr double kLogStdLo = -2.302585092994046;  // log(0.1)
inline constexpr double kLogStdHi = 2.0;
inline constexpr double kLog2Pi = 1.8378770664093453;

class GaussianPolicy {
 public:
  GaussianPolicy() = default;

  explicit GaussianPolicy(DenseNet net) : net_(std::move(net)) {
    if (net_.head() != Head::kGaussianPolicy)
      throw ShapeError("GaussianPolicy: net must have a gaussian-policy head");
  }

  static GaussianPolicy make(int state_dim, const std::vector<int>& hidden,
                             int action_dim, Rng& rng) {
    std::vector<int> dims;
    dims.push_back(state_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(action_dim);
    return GaussianPolicy(
        DenseNet::random_init(dims, Head::kGaussianPolicy, rng));
  }

  DenseNet& net() { return net_; }
  const DenseNet& net() const { return net_; }
  int state_dim() const { return net_.in_dim(); }
  int action_dim() const { return net_.out_dim(); }

  Matrix mean(const Matrix& states, ForwardCache* cache = nullptr) const {
    return net_forward(net_, states, cache);
  }

  std::vector<double> act(const std::vector<double>& s, Rng& rng) const {
    Matrix x(1, state_dim());
    std::copy(s.begin(), s.end(), x[0]);
    Matrix mu = mean(x);
    std::vector<double> a(static_cast<std::size_t>(action_dim()));
    const double* ls = net_.log_std();
    for (int d = 0; d < action_dim(); ++d)
      a[static_cast<std::size_t>(d)] = mu[0][d] + std::exp(ls[d]) * rng.normal();
    return a;
  }

  std::vector<double> act_deterministic(const std::vector<double>& s) const {
    Matrix x(1, state_dim());
    std::copy(s.begin(), s.end(), x[0]);
    Matrix mu = mean(x);
    return std::vector<double>(mu[0], mu[0] + action_dim());
  }

  // log N(a | mu, diag(exp(2 log_std))) per row.
  std::vector<double> log_prob(const Matrix& means,
                               const Matrix& actions) const {
    if (!means.same_shape(actions) || means.cols != action_dim())
      throw ShapeError("GaussianPolicy::log_prob: shape mismatch");
    const double* ls = net_.log_std();
    std::vector<double> out(static_cast<std::size_t>(means.rows), 0.0);
    for (int i = 0; i < means.rows; ++i) {
      double acc = 0.0;
      for (int d = 0; d < means.cols; ++d) {
        double sd = std::exp(ls[d]);
        double z = (actions[i][d] - means[i][d]) / sd;
        acc += -0.5 * z * z - ls[d] - 0.5 * kLog2Pi;
      }
      out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
  }

  // Entropy of the diagonal Gaussian; state-independent.
  double entropy() const {
    const double* ls = net_.log_std();
    double acc = 0.0;
    for (int d = 0; d < action_dim(); ++d)
      acc += ls[d] + 0.5 * (kLog2Pi + 1.0);
    return acc;
  }

  void clamp_log_std() {
    double* ls = net_.log_std();
    for (int d = 0; d < action_dim(); ++d)
      ls[d] = std::clamp(ls[d], kLogStdLo, kLogStdHi);
  }

 private:
  DenseNet net_;
};

// Accumulates the log-prob backward pass: coeff[i] = dL/d(logp_i). Log-std
// gradients go straight into param_grad; the returned matrix is dL/d(mean),
// ready for net_backward.
inline Matrix logprob_backward(const GaussianPolicy& pol, const Matrix& means,
                               const Matrix& actions,
                               const std::vector<double>& coeff,
                               std::vector<double>& param_grad) {
  if (coeff.size() != static_cast<std::size_t>(means.rows))
    throw ShapeError("logprob_backward: coeff size mismatch");
  if (param_grad.size() != pol.net().param_count())
    throw ShapeError("logprob_backward: param_grad size mismatch");
  const double* ls = pol.net().log_std();
  double* gls = param_grad.data() + pol.net().log_std_offset();
  Matrix up(means.rows, means.cols);
  for (int i = 0; i < means.rows; ++i) {
    double c = coeff[static_cast<std::size_t>(i)];
    for (int d = 0; d < means.cols; ++d) {
      double sd = std::exp(ls[d]);
      double z = (actions[i][d] - means[i][d]) / sd;
      up[i][d] = c * z / sd;            // d logp / d mean
      gls[d] += c * (z * z - 1.0);      // d logp / d log_std
    }
  }
  return up;
}

// ---------------------------------------------------------------------------
// Returns and advantages.

inline std::vector<std::pair<int, int>> episode_segments(
    const DemoBuffer& buf) {
  std::vector<std::pair<int, int>> seg;
  int cur_ep = INT_MIN;
  for (int i = 0; i < buf.size(); ++i) {
    int ep = buf.records[static_cast<std::size_t>(i)].episode;
    if (ep != cur_ep) {
      seg.emplace_back(i, i);
      cur_ep = ep;
    }
    seg.back().second = i + 1;
  }
  return seg;
}

// Per-episode discounted returns. Default is reward-to-go:
//   G[t] = r[t] + gamma G[t+1].
// cumulative_from_start instead accumulates the discounted rewards from the
// episode start up to and including t:
//   G[t] = sum_{j<=t} gamma^(j+1) r[j].
inline std::vector<double> discounted_returns(
    const std::vector<double>& rewards,
    const std::vector<std::pair<int, int>>& segments, double gamma,
    bool cumulative_from_start = false) {
  std::vector<double> g(rewards.size(), 0.0);
  for (const auto& [b, e] : segments) {
    if (b < 0 || e > static_cast<int>(rewards.size()) || b >= e)
      throw ShapeError("discounted_returns: bad segment");
    if (cumulative_from_start) {
      double acc = 0.0, w = gamma;
      for (int t = b; t < e; ++t) {
        acc += w * rewards[static_cast<std::size_t>(t)];
        w *= gamma;
        g[static_cast<std::size_t>(t)] = acc;
      }
    } else {
      double acc = 0.0;
      for (int t = e - 1; t >= b; --t) {
        acc = rewards[static_cast<std::size_t>(t)] + gamma * acc;
        g[static_cast<std::size_t>(t)] = acc;
      }
    }
  }
  return g;
}

// returns - values, normalized to zero mean and unit (population) std over
// the batch. A batch with (near-)zero spread is passed through unnormalized,
// so an exactly-zero advantage vector stays exactly zero.
inline std::vector<double> compute_advantages(
    const std::vector<double>& returns, const std::vector<double>& values) {
  if (returns.size() != values.size() || returns.empty())
    throw ShapeError("compute_advantages: size mismatch or empty");
  std::vector<double> a(returns.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = returns[i] - values[i];
    mean += a[i];
  }
  mean /= static_cast<double>(a.size());
  double var = 0.0;
  for (double v : a) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / static_cast<double>(a.size()));
  if (sd < 1e-12) return a;
  for (double& v : a) v = (v - mean) / (sd + 1e-8);
  return a;
}

// ---------------------------------------------------------------------------
// PPO.

struct PpoConfig {
  double gamma = 0.99;
  double clip_ratio = 0.2;
  int epochs = 10;
  int minibatch = 256;
  double policy_lr = 3e-4;
  double value_lr = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double kl_stop = 0.05;  // early-stop threshold on approximate KL
  bool cumulative_returns = false;
  // Per-iteration multiplier on both learning rates. Trainers anneal it
  // linearly toward zero so adversarial runs settle instead of cycling.
  double lr_scale = 1.0;
};

// Linear anneal from 1 at iteration 1 to 1/total at the final iteration.
inline double linear_lr_scale(int iter, int total_iters) {
  if (iter < 1 || total_iters < 1 || iter > total_iters)
    throw InputError("linear_lr_scale: need 1 <= iter <= total_iters");
  return 1.0 - static_cast<double>(iter - 1) / static_cast<double>(total_iters);
}

struct PpoBatch {
  Matrix states;
  Matrix actions;
  std::vector<double> old_logp;
  std::vector<double> returns;
  std::vector<double> advantages;

  int size() const { return states.rows; }
};

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  int epochs_run = 0;
};

inline PpoStats ppo_update(GaussianPolicy& policy, DenseNet& value,
                           AdamState& policy_opt, AdamState& value_opt,
                           const PpoBatch& batch, const PpoConfig& cfg,
                           Rng& rng) {
  int n = batch.size();
  if (n == 0) throw InputError("ppo_update: empty batch");
  if (batch.actions.rows != n ||
      static_cast<int>(batch.old_logp.size()) != n ||
      static_cast<int>(batch.returns.size()) != n ||
      static_cast<int>(batch.advantages.size()) != n)
    throw ShapeError("ppo_update: batch arrays misaligned");

  AdamConfig pol_adam{cfg.policy_lr * cfg.lr_scale, 0.9, 0.999, 1e-8};
  AdamConfig val_adam{cfg.value_lr * cfg.lr_scale, 0.9, 0.999, 1e-8};
  PpoStats stats;
  std::vector<double> pgrad(policy.net().param_count());
  std::vector<double> vgrad(value.param_count());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = rng.permutation(n);
    double kl_sum = 0.0;
    double ploss_sum = 0.0, vloss_sum = 0.0;
    int nb = 0;
    for (int start = 0; start < n; start += cfg.minibatch) {
      int b = std::min(cfg.minibatch, n - start);
      Matrix s(b, batch.states.cols), a(b, batch.actions.cols);
      std::vector<double> old_lp(static_cast<std::size_t>(b));
      std::vector<double> adv(static_cast<std::size_t>(b));
      std::vector<double> ret(static_cast<std::size_t>(b));
      for (int i = 0; i < b; ++i) {
        int src = order[static_cast<std::size_t>(start + i)];
        std::copy(batch.states[src], batch.states[src] + s.cols, s[i]);
        std::copy(batch.actions[src], batch.actions[src] + a.cols, a[i]);
        old_lp[static_cast<std::size_t>(i)] =
            batch.old_logp[static_cast<std::size_t>(src)];
        adv[static_cast<std::size_t>(i)] =
            batch.advantages[static_cast<std::size_t>(src)];
        ret[static_cast<std::size_t>(i)] =
            batch.returns[static_cast<std::size_t>(src)];
      }

      // Policy step: clipped surrogate. The min() picks one branch per
      // sample; gradient flows only through the unclipped ratio when that
      // branch is active (ties included).
      ForwardCache pc;
      Matrix means = policy.mean(s, &pc);
      std::vector<double> lp = policy.log_prob(means, a);
      std::vector<double> coeff(static_cast<std::size_t>(b), 0.0);
      double ploss = 0.0, kl = 0.0;
      for (int i = 0; i < b; ++i) {
        double logr = lp[static_cast<std::size_t>(i)] -
                      old_lp[static_cast<std::size_t>(i)];
        double ratio = std::exp(logr);
        double ad = adv[static_cast<std::size_t>(i)];
        double surr1 = ratio * ad;
        double clipped =
            std::clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
        double surr2 = clipped * ad;
        ploss += -std::min(surr1, surr2);
        if (surr1 <= surr2)
          coeff[static_cast<std::size_t>(i)] = -ad * ratio / b;
        kl += (ratio - 1.0) - logr;
      }
      ploss /= b;
      kl /= b;
      ploss -= cfg.entropy_coef * policy.entropy();

      std::fill(pgrad.begin(), pgrad.end(), 0.0);
      Matrix up = logprob_backward(policy, means, a, coeff, pgrad);
      net_backward(policy.net(), pc, up, pgrad);
      if (cfg.entropy_coef != 0.0) {
        double* gls = pgrad.data() + policy.net().log_std_offset();
        for (int d = 0; d < policy.action_dim(); ++d)
          gls[d] -= cfg.entropy_coef;
      }
      if (!std::isfinite(ploss))
        throw DivergenceError("ppo_update: non-finite policy loss");
      adam_step(policy.net().params(), pgrad, policy_opt, pol_adam);
      policy.clamp_log_std();

      // Value step: scaled squared error against the returns.
      ForwardCache vc;
      Matrix v = net_forward(value, s, &vc);
      double vloss = 0.0;
      Matrix dv(b, 1);
      for (int i = 0; i < b; ++i) {
        double diff = v[i][0] - ret[static_cast<std::size_t>(i)];
        vloss += cfg.value_coef * diff * diff;
        dv[i][0] = cfg.value_coef * 2.0 * diff / b;
      }
      vloss /= b;
      if (!std::isfinite(vloss))
        throw DivergenceError("ppo_update: non-finite value loss");
      std::fill(vgrad.begin(), vgrad.end(), 0.0);
      net_backward(value, vc, dv, vgrad);
      adam_step(value.params(), vgrad, value_opt, val_adam);

      kl_sum += kl * b;
      ploss_sum += ploss;
      vloss_sum += vloss;
      ++nb;
    }
    stats.policy_loss = ploss_sum / nb;
    stats.value_loss = vloss_sum / nb;
    stats.approx_kl = kl_sum / n;
    stats.epochs_run = epoch + 1;
    if (stats.approx_kl > cfg.kl_stop) break;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Rollout collection for on-policy updates. Whole episodes are collected
// until n_steps records exist; returns are computed on the full episodes
// first, then everything is cut to exactly n_steps so the learner batch size
// is stable. reward_fn maps the full rollout buffer to one learning reward
// per record (environment reward, discriminator score, ...).

struct RolloutData {
  DemoBuffer buffer;            // exactly n_steps records
  std::vector<double> rewards;  // learning rewards, aligned with buffer
  std::vector<double> returns;  // discounted returns, aligned with buffer
  double mean_env_return = 0.0; // telemetry over the completed episodes
};

// Whole stochastic episodes until at least n_steps records exist.
inline DemoBuffer collect_episodes(PointMass2D& env,
                                   const GaussianPolicy& policy, int n_steps,
                                   std::uint64_t seed) {
  if (n_steps <= 0) throw InputError("collect_episodes: n_steps must be > 0");
  int horizon = env.spec().horizon;
  int episodes = (n_steps + horizon - 1) / horizon;
  auto act = [&policy](const std::vector<double>& s, Rng& rng) {
    return policy.act(s, rng);
  };
  return rollout_episodes(env, act, episodes, seed, Source::kImitator);
}

// Computes returns on the full episodes, then cuts everything to exactly
// n_steps so the learner batch size is stable.
inline RolloutData finalize_rollout(DemoBuffer full,
                                    std::vector<double> rewards, int n_steps,
                                    const PpoConfig& cfg) {
  if (rewards.size() != static_cast<std::size_t>(full.size()))
    throw ShapeError("finalize_rollout: rewards size mismatch");
  if (n_steps <= 0 || n_steps > full.size())
    throw InputError("finalize_rollout: bad n_steps");
  std::vector<double> env_rets = episode_returns(full);
  double mean_ret = 0.0;
  for (double r : env_rets) mean_ret += r;
  mean_ret /= static_cast<double>(env_rets.size());

  std::vector<double> returns = discounted_returns(
      rewards, episode_segments(full), cfg.gamma, cfg.cumulative_returns);

  RolloutData out;
  out.buffer = std::move(full);
  out.buffer.records.resize(static_cast<std::size_t>(n_steps));
  rewards.resize(static_cast<std::size_t>(n_steps));
  returns.resize(static_cast<std::size_t>(n_steps));
  out.rewards = std::move(rewards);
  out.returns = std::move(returns);
  out.mean_env_return = mean_ret;
  return out;
}

template <typename RewardFn>
RolloutData collect_rollout(PointMass2D& env, const GaussianPolicy& policy,
                            int n_steps, const PpoConfig& cfg,
                            std::uint64_t seed, RewardFn&& reward_fn) {
  DemoBuffer full = collect_episodes(env, policy, n_steps, seed);
  std::vector<double> rewards = reward_fn(full);
  return finalize_rollout(std::move(full), std::move(rewards), n_steps, cfg);
}

inline std::vector<double> env_rewards_of(const DemoBuffer& buf) {
  std::vector<double> r;
  r.reserve(buf.records.size());
  for (const TransitionRecord& rec : buf.records) {
    if (!rec.r)
      throw InputError("env_rewards_of: record without reward");
    r.push_back(*rec.r);
  }
  return r;
}

// Assembles the PPO batch (states, actions, fresh log-probs, values,
// normalized advantages) from a rollout.
inline PpoBatch make_ppo_batch(const GaussianPolicy& policy,
                               const DenseNet& value, const RolloutData& roll) {
  int n = roll.buffer.size();
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  PpoBatch b;
  b.states = gather_states(roll.buffer, all);
  b.actions = gather_actions(roll.buffer, all);
  Matrix means = policy.mean(b.states);
  b.old_logp = policy.log_prob(means, b.actions);
  Matrix v = net_forward(value, b.states);
  std::vector<double> values(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = v[i][0];
  b.returns = roll.returns;
  b.advantages = compute_advantages(b.returns, values);
  return b;
}

// ---------------------------------------------------------------------------
// Evaluation: deterministic (mean) actions, undiscounted env returns.

struct EvalResult {
  std::vector<double> returns;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

inline EvalResult evaluate_policy(PointMass2D& env,
                                  const GaussianPolicy& policy, int episodes,
                                  std::uint64_t seed) {
  if (episodes <= 0) throw InputError("evaluate_policy: episodes must be > 0");
  EvalResult res;
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng = Rng::derive(seed, "eval-episode", static_cast<std::uint64_t>(ep));
    std::vector<double> s = env.reset(rng);
    double total = 0.0;
    for (int t = 0; t < env.spec().horizon; ++t) {
      PointMass2D::StepResult r = env.step(policy.act_deterministic(s));
      total += r.reward;
      s = r.state;
    }
    res.returns.push_back(total);
  }
  for (double r : res.returns) res.mean += r;
  res.mean /= static_cast<double>(res.returns.size());
  double var = 0.0;
  for (double r : res.returns) var += (r - res.mean) * (r - res.mean);
  res.stddev = std::sqrt(var / static_cast<double>(res.returns.size()));
  return res;
}

// ---------------------------------------------------------------------------
// PPO on true environment rewards (expert training).

struct PpoTrainConfig {
  std::vector<int> policy_hidden{64, 64};
  std::vector<int> value_hidden{64, 64};
  int batch = 2048;
  int iterations = 150;
  PpoConfig ppo;
  int eval_every = 0;  // 0 disables periodic evaluation
  int eval_episodes = 10;
};

struct PpoTrainResult {
  GaussianPolicy policy;
  DenseNet value;
  std::vector<double> mean_returns;  // per iteration
};

inline PpoTrainResult train_ppo_expert(PointMass2D& env,
                                       const PpoTrainConfig& cfg,
                                       std::uint64_t seed,
                                       MetricsSink sink = {}) {
  Rng init = Rng::derive(seed, "init");
  EnvSpec spec = env.spec();
  PpoTrainResult res{
      GaussianPolicy::make(spec.state_dim, cfg.policy_hidden, spec.action_dim,
                           init),
      [&] {
        std::vector<int> dims{spec.state_dim};
        dims.insert(dims.end(), cfg.value_hidden.begin(),
                    cfg.value_hidden.end());
        dims.push_back(1);
        return DenseNet::random_init(dims, Head::kLinear, init);
      }(),
      {}};
  AdamState pol_opt(res.policy.net().param_count());
  AdamState val_opt(res.value.param_count());
  Rng ppo_rng = Rng::derive(seed, "ppo");

  for (int i = 1; i <= cfg.iterations; ++i) {
    RolloutData roll = collect_rollout(
        env, res.policy, cfg.batch, cfg.ppo,
        Rng::derive(seed, "rollout", static_cast<std::uint64_t>(i)).next_u64(),
        env_rewards_of);
    PpoBatch batch = make_ppo_batch(res.policy, res.value, roll);
    PpoConfig iter_ppo = cfg.ppo;
    iter_ppo.lr_scale = cfg.ppo.lr_scale * linear_lr_scale(i, cfg.iterations);
    PpoStats stats = ppo_update(res.policy, res.value, pol_opt, val_opt, batch,
                                iter_ppo, ppo_rng);
    res.mean_returns.push_back(roll.mean_env_return);

    json m;
    m["i"] = i;
    m["mean_return"] = roll.mean_env_return;
    m["loss_pi"] = stats.policy_loss;
    m["loss_v"] = stats.value_loss;
    m["kl"] = stats.approx_kl;
    if (cfg.eval_every > 0 && i % cfg.eval_every == 0) {
      EvalResult ev = evaluate_policy(env, res.policy, cfg.eval_episodes,
                                      Rng::derive(seed, "eval").next_u64());
      m["eval_return"] = ev.mean;
    }
    emit(sink, m);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Behavioral cloning: maximum-likelihood fit of the Gaussian policy to the
// corpus, with a held-out split for monitoring.

struct BcConfig {
  std::vector<int> hidden{64, 64};
  double lr = 3e-4;
  int epochs = 50;
  int minibatch = 256;
  double holdout = 0.1;
};

struct BcResult {
  GaussianPolicy policy;
  std::vector<double> train_losses;  // per epoch, averaged over minibatches
  std::vector<double> val_losses;    // per epoch; empty when holdout == 0
};

inline BcResult bc_train(const DemoBuffer& corpus, const BcConfig& cfg,
                         std::uint64_t seed, MetricsSink sink = {}) {
  corpus.validate();
  int n = corpus.size();
  if (n < 2) throw InputError("bc_train: corpus too small");
  if (cfg.holdout < 0.0 || cfg.holdout >= 1.0)
    throw ConfigError("bc_train: holdout must lie in [0, 1)");

  Rng init = Rng::derive(seed, "init");
  BcResult res{GaussianPolicy::make(corpus.state_dim, cfg.hidden,
                                    corpus.action_dim, init),
               {},
               {}};
  AdamState opt(res.policy.net().param_count());
  AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

  Rng split_rng = Rng::derive(seed, "split");
  std::vector<int> order = split_rng.permutation(n);
  int n_val = static_cast<int>(std::lround(cfg.holdout * n));
  n_val = std::min(n_val, n - 1);
  std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());

  Matrix val_s = gather_states(corpus, val_idx);
  Matrix val_a = gather_actions(corpus, val_idx);

  auto nll = [&](const Matrix& s, const Matrix& a) {
    Matrix means = res.policy.mean(s);
    std::vector<double> lp = res.policy.log_prob(means, a);
    double acc = 0.0;
    for (double v : lp) acc += v;
    return -acc / static_cast<double>(lp.size());
  };

  Rng epoch_rng = Rng::derive(seed, "epochs");
  std::vector<double> grad(res.policy.net().param_count());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    epoch_rng.shuffle(train_idx);
    double loss_sum = 0.0;
    int nb = 0;
    int m = static_cast<int>(train_idx.size());
    for (int start = 0; start < m; start += cfg.minibatch) {
      int b = std::min(cfg.minibatch, m - start);
      std::vector<int> idx(train_idx.begin() + start,
                           train_idx.begin() + start + b);
      Matrix s = gather_states(corpus, idx);
      Matrix a = gather_actions(corpus, idx);
      ForwardCache pc;
      Matrix means = res.policy.mean(s, &pc);
      std::vector<double> lp = res.policy.log_prob(means, a);
      double loss = 0.0;
      for (double v : lp) loss += v;
      loss = -loss / b;
      if (!std::isfinite(loss))
        throw DivergenceError("bc_train: non-finite loss");
      std::vector<double> coeff(static_cast<std::size_t>(b), -1.0 / b);
      std::fill(grad.begin(), grad.end(), 0.0);
      Matrix up = logprob_backward(res.policy, means, a, coeff, grad);
      net_backward(res.policy.net(), pc, up, grad);
      adam_step(res.policy.net().params(), grad, opt, adam);
      res.policy.clamp_log_std();
      loss_sum += loss;
      ++nb;
    }
    res.train_losses.push_back(loss_sum / nb);
    json j;
    j["epoch"] = epoch;
    j["train_loss"] = res.train_losses.back();
    if (n_val > 0) {
      res.val_losses.push_back(nll(val_s, val_a));
      j["val_loss"] = res.val_losses.back();
    }
    emit(sink, j);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Adversarial imitation baseline: a discriminator on consecutive state pairs
// (s, s_next) scores expertise, the policy runs PPO on the raw discriminator
// probability as reward.

struct GailConfig {
  std::vector<int> policy_hidden{64, 64};
  std::vector<int> value_hidden{64, 64};
  std::vector<int> disc_hidden{64, 64};
  int batch = 2048;
  int iterations = 300;
  int disc_updates = 1;
  double disc_lr = 3e-4;
  PpoConfig ppo;
  int eval_every = 0;
  int eval_episodes = 10;
};

struct GailResult {
  GaussianPolicy policy;
  DenseNet value;
  DenseNet disc;
  std::vector<double> mean_returns;
  std::vector<double> disc_accuracies;
};

inline GailResult gail_train(PointMass2D& env, const DemoBuffer& expert,
                             const GailConfig& cfg, std::uint64_t seed,
                             MetricsSink sink = {}) {
  expert.validate();
  if (expert.size() < cfg.batch)
    throw SamplingError("gail_train: corpus smaller than batch");
  EnvSpec spec = env.spec();
  if (expert.state_dim != spec.state_dim ||
      expert.action_dim != spec.action_dim)
    throw ShapeError("gail_train: corpus dims do not match env");

  Rng init = Rng::derive(seed, "init");
  GailResult res{
      GaussianPolicy::make(spec.state_dim, cfg.policy_hidden, spec.action_dim,
                           init),
      [&] {
        std::vector<int> dims{spec.state_dim};
        dims.insert(dims.end(), cfg.value_hidden.begin(),
                    cfg.value_hidden.end());
        dims.push_back(1);
        return DenseNet::random_init(dims, Head::kLinear, init);
      }(),
      [&] {
        std::vector<int> dims{2 * spec.state_dim};
        dims.insert(dims.end(), cfg.disc_hidden.begin(),
                    cfg.disc_hidden.end());
        dims.push_back(1);
        return DenseNet::random_init(dims, Head::kSigmoid, init);
      }(),
      {},
      {}};
  AdamState pol_opt(res.policy.net().param_count());
  AdamState val_opt(res.value.param_count());
  AdamState disc_opt(res.disc.param_count());
  AdamConfig disc_adam{cfg.disc_lr, 0.9, 0.999, 1e-8};
  Rng ppo_rng = Rng::derive(seed, "ppo");
  Rng sampler = Rng::derive(seed, "sampler");

  std::vector<double> dgrad(res.disc.param_count());
  for (int i = 1; i <= cfg.iterations; ++i) {
    DemoBuffer full = collect_episodes(
        env, res.policy, cfg.batch,
        Rng::derive(seed, "rollout", static_cast<std::uint64_t>(i)).next_u64());

    // Discriminator first: expert pairs labeled 1, imitator pairs labeled 0.
    std::vector<int> iidx = sample_indices(full.size(), cfg.batch, sampler);
    Matrix imit_pairs = hconcat(gather_states(full, iidx),
                                gather_next_states(full, iidx));
    double disc_loss = 0.0, disc_acc = 0.0;
    for (int u = 0; u < cfg.disc_updates; ++u) {
      std::vector<int> eidx = sample_indices(expert.size(), cfg.batch, sampler);
      Matrix exp_pairs = hconcat(gather_states(expert, eidx),
                                 gather_next_states(expert, eidx));
      Matrix x = vstack(imit_pairs, exp_pairs);
      std::vector<double> labels(static_cast<std::size_t>(2 * cfg.batch), 0.0);
      for (int k = cfg.batch; k < 2 * cfg.batch; ++k)
        labels[static_cast<std::size_t>(k)] = 1.0;
      ForwardCache dc;
      Matrix p = net_forward(res.disc, x, &dc);
      disc_loss = bce_loss(p, labels);
      disc_acc = binary_accuracy(p, labels);
      if (!std::isfinite(disc_loss))
        throw DivergenceError("gail_train: non-finite discriminator loss");
      std::fill(dgrad.begin(), dgrad.end(), 0.0);
      net_backward(res.disc, dc, bce_grad(p, labels), dgrad);
      AdamConfig iter_disc_adam = disc_adam;
      iter_disc_adam.lr *= linear_lr_scale(i, cfg.iterations);
      adam_step(res.disc.params(), dgrad, disc_opt, iter_disc_adam);
    }

    // Policy reward comes from the freshly updated discriminator.
    std::vector<int> all(static_cast<std::size_t>(full.size()));
    for (int k = 0; k < full.size(); ++k) all[static_cast<std::size_t>(k)] = k;
    Matrix pairs =
        hconcat(gather_states(full, all), gather_next_states(full, all));
    Matrix pr = net_forward(res.disc, pairs);
    std::vector<double> rewards(static_cast<std::size_t>(full.size()));
    for (int k = 0; k < full.size(); ++k)
      rewards[static_cast<std::size_t>(k)] = pr[k][0];
    RolloutData roll =
        finalize_rollout(std::move(full), std::move(rewards), cfg.batch, cfg.ppo);

    PpoBatch batch = make_ppo_batch(res.policy, res.value, roll);
    PpoConfig iter_ppo = cfg.ppo;
    iter_ppo.lr_scale = cfg.ppo.lr_scale * linear_lr_scale(i, cfg.iterations);
    PpoStats stats = ppo_update(res.policy, res.value, pol_opt, val_opt, batch,
                                iter_ppo, ppo_rng);
    res.mean_returns.push_back(roll.mean_env_return);
    res.disc_accuracies.push_back(disc_acc);

    json m;
    m["i"] = i;
    m["mean_return"] = roll.mean_env_return;
    m["loss_d"] = disc_loss;
    m["acc_d"] = disc_acc;
    m["loss_pi"] = stats.policy_loss;
    m["kl"] = stats.approx_kl;
    if (cfg.eval_every > 0 && i % cfg.eval_every == 0) {
      EvalResult ev = evaluate_policy(env, res.policy, cfg.eval_episodes,
                                      Rng::derive(seed, "eval").next_u64());
      m["eval_return"] = ev.mean;
    }
    emit(sink, m);
  }
  return res;
}

}  // namespace lnd
