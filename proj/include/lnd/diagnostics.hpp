#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "lnd/datasets.hpp"
#include "lnd/dida.hpp"
#include "lnd/env.hpp"
#include "lnd/io.hpp"
#include "lnd/noise.hpp"
#include "lnd/rl.hpp"

namespace lnd {

// ---------------------------------------------------------------------------
// Discounted state-action occupancy of a policy in a finite MDP.

namespace detail {

// Gaussian elimination with partial pivoting; a and b are consumed.
inline std::vector<double> solve_linear(Matrix a, std::vector<double> b) {
  int n = a.rows;
  if (a.cols != n || static_cast<int>(b.size()) != n)
    throw ShapeError("solve_linear: square system required");
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    if (std::fabs(a[piv][col]) < 1e-14)
      throw ConvergenceError("solve_linear: singular system");
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(a[piv][c], a[col][c]);
      std::swap(b[static_cast<std::size_t>(piv)],
                b[static_cast<std::size_t>(col)]);
    }
    for (int r = col + 1; r < n; ++r) {
      double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[static_cast<std::size_t>(r)] -= f * b[static_cast<std::size_t>(col)];
    }
  }
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[static_cast<std::size_t>(r)];
    for (int c = r + 1; c < n; ++c)
      acc -= a[r][c] * x[static_cast<std::size_t>(c)];
    x[static_cast<std::size_t>(r)] = acc / a[r][r];
  }
  return x;
}

}  // namespace detail

struct OccupancyTable {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> rho;  // [s][a], sums to 1
  double residual = 0.0;    // inf-norm fixed-point residual of the state marginal

  double at(int s, int a) const {
    return rho[static_cast<std::size_t>(s) * num_actions + a];
  }
};

// Solves d = (1 - gamma) p0 + gamma M^T d for the discounted state marginal,
// then rho(s, a) = d(s) pi(a|s). Small systems are solved directly; larger
// ones by fixed-point iteration to the given tolerance.
inline OccupancyTable occupancy_measure(const TabularMDP& mdp,
                                        const Matrix& policy,
                                        double tol = 1e-12) {
  mdp.validate();
  int S = mdp.num_states, A = mdp.num_actions;
  if (policy.rows != S || policy.cols != A)
    throw ShapeError("occupancy_measure: policy is " + policy.shape_str() +
                     ", expected " + std::to_string(S) + "x" +
                     std::to_string(A));
  for (int s = 0; s < S; ++s) {
    double sum = 0.0;
    for (int a = 0; a < A; ++a) {
      if (policy[s][a] < 0.0)
        throw InputError("occupancy_measure: negative policy probability");
      sum += policy[s][a];
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw InputError("occupancy_measure: policy row " + std::to_string(s) +
                       " sums to " + std::to_string(sum));
  }

  // State-to-state kernel under the policy: M[s][s2].
  Matrix M(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double w = policy[s][a];
      if (w == 0.0) continue;
      for (int s2 = 0; s2 < S; ++s2) M[s][s2] += w * mdp.p(s, a, s2);
    }

  std::vector<double> d(static_cast<std::size_t>(S), 0.0);
  if (S <= 64) {
    // (I - gamma M^T) d = (1 - gamma) p0
    Matrix lhs(S, S);
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j)
        lhs[i][j] = (i == j ? 1.0 : 0.0) - mdp.gamma * M[j][i];
    std::vector<double> rhs(static_cast<std::size_t>(S));
    for (int i = 0; i < S; ++i)
      rhs[static_cast<std::size_t>(i)] =
          (1.0 - mdp.gamma) * mdp.p0[static_cast<std::size_t>(i)];
    d = detail::solve_linear(lhs, rhs);
  } else {
    for (int i = 0; i < S; ++i)
      d[static_cast<std::size_t>(i)] = mdp.p0[static_cast<std::size_t>(i)];
    const int max_iter = 200000;
    bool converged = false;
    for (int it = 0; it < max_iter && !converged; ++it) {
      std::vector<double> next(static_cast<std::size_t>(S), 0.0);
      for (int i = 0; i < S; ++i)
        next[static_cast<std::size_t>(i)] =
            (1.0 - mdp.gamma) * mdp.p0[static_cast<std::size_t>(i)];
      for (int j = 0; j < S; ++j) {
        double dj = d[static_cast<std::size_t>(j)];
        if (dj == 0.0) continue;
        for (int i = 0; i < S; ++i)
          next[static_cast<std::size_t>(i)] += mdp.gamma * M[j][i] * dj;
      }
      double delta = 0.0;
      for (int i = 0; i < S; ++i)
        delta = std::max(delta, std::fabs(next[static_cast<std::size_t>(i)] -
                                          d[static_cast<std::size_t>(i)]));
      d = std::move(next);
      converged = delta <= tol;
    }
    if (!converged)
      throw ConvergenceError("occupancy_measure: fixed point not reached");
  }

  OccupancyTable out;
  out.num_states = S;
  out.num_actions = A;
  out.rho.assign(static_cast<std::size_t>(S) * A, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      out.rho[static_cast<std::size_t>(s) * A + a] =
          d[static_cast<std::size_t>(s)] * policy[s][a];

  // Residual of the state marginal against one application of the operator.
  double res = 0.0;
  for (int i = 0; i < S; ++i) {
    double v = (1.0 - mdp.gamma) * mdp.p0[static_cast<std::size_t>(i)];
    for (int j = 0; j < S; ++j) v += mdp.gamma * M[j][i] * d[static_cast<std::size_t>(j)];
    res = std::max(res, std::fabs(v - d[static_cast<std::size_t>(i)]));
  }
  out.residual = res;
  return out;
}

// ---------------------------------------------------------------------------
// State relabeling: occupancy must commute with a permutation of state ids.

inline void check_permutation(const std::vector<int>& perm, int n) {
  if (static_cast<int>(perm.size()) != n)
    throw InputError("check_permutation: size mismatch");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (int v : perm) {
    if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)])
      throw InputError("check_permutation: not a bijection");
    seen[static_cast<std::size_t>(v)] = 1;
  }
}

inline TabularMDP relabel_mdp(const TabularMDP& mdp,
                              const std::vector<int>& perm) {
  check_permutation(perm, mdp.num_states);
  TabularMDP out = mdp;
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a) {
      int s_new = perm[static_cast<std::size_t>(s)];
      out.r[static_cast<std::size_t>(s_new) * mdp.num_actions + a] =
          mdp.r[static_cast<std::size_t>(s) * mdp.num_actions + a];
      for (int s2 = 0; s2 < mdp.num_states; ++s2)
        out.p(s_new, a, perm[static_cast<std::size_t>(s2)]) = mdp.p(s, a, s2);
    }
  for (int s = 0; s < mdp.num_states; ++s)
    out.p0[static_cast<std::size_t>(perm[static_cast<std::size_t>(s)])] =
        mdp.p0[static_cast<std::size_t>(s)];
  return out;
}

inline Matrix relabel_policy(const Matrix& policy,
                             const std::vector<int>& perm) {
  check_permutation(perm, policy.rows);
  Matrix out(policy.rows, policy.cols);
  for (int s = 0; s < policy.rows; ++s)
    std::copy(policy[s], policy[s] + policy.cols,
              out[perm[static_cast<std::size_t>(s)]]);
  return out;
}

struct RelabelCheck {
  double max_abs_diff = 0.0;
  OccupancyTable original;
  OccupancyTable relabeled;
};

inline RelabelCheck verify_relabeling_invariance(const TabularMDP& mdp,
                                                 const Matrix& policy,
                                                 const std::vector<int>& perm) {
  RelabelCheck out;
  out.original = occupancy_measure(mdp, policy);
  out.relabeled =
      occupancy_measure(relabel_mdp(mdp, perm), relabel_policy(policy, perm));
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      out.max_abs_diff = std::max(
          out.max_abs_diff,
          std::fabs(out.original.at(s, a) -
                    out.relabeled.at(perm[static_cast<std::size_t>(s)], a)));
  return out;
}

// ---------------------------------------------------------------------------
// Accuracy of a freshly initialized noise discriminator, repeated over
// independent initializations. With balanced labels 0:1 at ratio 1:2 an
// untrained discriminator lands near 1/3 or 2/3 depending on which side of
// 0.5 its initial outputs fall.

struct PaccInitConfig {
  int trials = 100;
  int batch = 512;
  int corpus_episodes = 10;
  int embed_dim = 4;
  std::vector<int> encoder_hidden{64, 64};
  std::vector<int> disc_hidden{64, 64};
  std::vector<int> policy_hidden{64, 64};
};

// Scripted near-expert controller for the point mass; used to build cheap
// expert-like fixtures without training.
inline std::vector<double> scripted_controller(const std::vector<double>& s) {
  double ax = 2.0 * (PointMass2D::kGoalX - s[0]) - 1.0 * s[2];
  double ay = 2.0 * (PointMass2D::kGoalY - s[1]) - 1.0 * s[3];
  return {std::clamp(ax, -1.0, 1.0), std::clamp(ay, -1.0, 1.0)};
}

inline DemoBuffer scripted_expert_corpus(PointMass2D& env, int episodes,
                                         std::uint64_t seed) {
  auto pol = [](const std::vector<double>& s, Rng&) {
    return scripted_controller(s);
  };
  return rollout_episodes(env, pol, episodes, seed, Source::kExpert);
}

inline std::vector<double> pacc_init_stat(PointMass2D& env,
                                          const LtiNoise& noise,
                                          const PaccInitConfig& cfg,
                                          std::uint64_t seed) {
  if (cfg.trials <= 0) throw ConfigError("pacc_init_stat: trials must be > 0");
  DemoBuffer clean = scripted_expert_corpus(
      env, cfg.corpus_episodes, Rng::derive(seed, "fixture").next_u64());
  DemoBuffer noisy = corrupt_buffer(noise, clean);
  Rng anchor_rng = Rng::derive(seed, "fixture-anchor");
  DemoBuffer anchor = anchor_shuffle(noisy, anchor_rng);

  EnvSpec spec = env.spec();
  std::vector<double> p_accs;
  p_accs.reserve(static_cast<std::size_t>(cfg.trials));
  for (int trial = 0; trial < cfg.trials; ++trial) {
    Rng init = Rng::derive(seed, "trial-init", static_cast<std::uint64_t>(trial));
    DenseNet encoder = detail::make_mlp(spec.state_dim, cfg.encoder_hidden,
                                        cfg.embed_dim, Head::kLinear, init);
    DenseNet disc = detail::make_mlp(cfg.embed_dim, cfg.disc_hidden, 1,
                                     Head::kSigmoid, init);
    GaussianPolicy policy = GaussianPolicy::make(
        spec.state_dim, cfg.policy_hidden, spec.action_dim, init);

    DemoBuffer imit = collect_episodes(
        env, policy, cfg.batch,
        Rng::derive(seed, "trial-roll", static_cast<std::uint64_t>(trial))
            .next_u64());

    Rng sampler =
        Rng::derive(seed, "trial-sample", static_cast<std::uint64_t>(trial));
    TripleIndices tri = sample_triple(noisy, anchor, imit, cfg.batch, sampler);
    Matrix x = vstack(gather_states(imit, tri.imitator),
                      vstack(gather_states(anchor, tri.shared),
                             gather_states(noisy, tri.shared)));
    std::vector<double> labels(static_cast<std::size_t>(3 * cfg.batch), 1.0);
    for (int k = 0; k < cfg.batch; ++k) labels[static_cast<std::size_t>(k)] = 0.0;
    Matrix p = net_forward(disc, net_forward(encoder, x));
    p_accs.push_back(binary_accuracy(p, labels));
  }
  return p_accs;
}

// Equal-width histogram over [0, 1]; the right edge belongs to the last bin.
inline std::vector<int> histogram_unit(const std::vector<double>& xs,
                                       int bins) {
  if (bins <= 0) throw InputError("histogram_unit: bins must be > 0");
  std::vector<int> h(static_cast<std::size_t>(bins), 0);
  for (double x : xs) {
    if (!(x >= 0.0 && x <= 1.0))
      throw InputError("histogram_unit: value outside [0, 1]");
    int b = std::min(bins - 1, static_cast<int>(x * bins));
    ++h[static_cast<std::size_t>(b)];
  }
  return h;
}

// ---------------------------------------------------------------------------
// Offset-noise scale sweep: trains the adversarial baseline on corpora
// corrupted at increasing gaussian sigma and reports evaluation returns.

struct SweepPoint {
  double sigma = 0.0;
  std::vector<double> returns;  // one per seed
  double mean = 0.0;
};

inline std::vector<SweepPoint> gaussian_scale_sweep(
    PointMass2D& env, const DemoBuffer& clean_expert,
    const std::vector<double>& sigmas, int seeds, const GailConfig& cfg,
    std::uint64_t seed, int eval_episodes = 20, MetricsSink sink = {}) {
  if (seeds <= 0) throw ConfigError("gaussian_scale_sweep: seeds must be > 0");
  std::vector<SweepPoint> out;
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    SweepPoint pt;
    pt.sigma = sigmas[si];
    LtiNoise noise =
        sample_noise(NoiseKind::kGaussian, clean_expert.state_dim,
                     Rng::derive(seed, "sweep-noise", si).next_u64(), 0.0,
                     pt.sigma);
    DemoBuffer corrupted = corrupt_buffer(noise, clean_expert);
    for (int s = 0; s < seeds; ++s) {
      std::uint64_t run_seed =
          Rng::derive(seed, "sweep-run", si * 1000 + static_cast<std::uint64_t>(s))
              .next_u64();
      GailResult res = gail_train(env, corrupted, cfg, run_seed);
      EvalResult ev = evaluate_policy(env, res.policy, eval_episodes,
                                      Rng::derive(seed, "sweep-eval").next_u64());
      pt.returns.push_back(ev.mean);
      json j;
      j["sigma"] = pt.sigma;
      j["seed_index"] = s;
      j["eval_return"] = ev.mean;
      emit(sink, j);
    }
    for (double r : pt.returns) pt.mean += r;
    pt.mean /= static_cast<double>(pt.returns.size());
    out.push_back(std::move(pt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding export for offline inspection.

inline void export_embeddings(
    const DenseNet& encoder, const DenseNet& noise_disc,
    const std::vector<std::pair<std::string, const DemoBuffer*>>& buffers,
    const std::string& path, double clip_lo = 0.1, double clip_hi = 0.9) {
  std::string out = "buffer,index";
  for (int d = 0; d < encoder.out_dim(); ++d)
    out += ",z" + std::to_string(d);
  out += ",dn,p_das\n";
  char num[64];
  for (const auto& [name, buf] : buffers) {
    if (!buf) throw InputError("export_embeddings: null buffer");
    buf->validate();
    std::vector<int> all(static_cast<std::size_t>(buf->size()));
    for (int i = 0; i < buf->size(); ++i) all[static_cast<std::size_t>(i)] = i;
    Matrix z = net_forward(encoder, gather_states(*buf, all));
    Matrix dn = net_forward(noise_disc, z);
    std::vector<double> scores(static_cast<std::size_t>(buf->size()));
    for (int i = 0; i < buf->size(); ++i)
      scores[static_cast<std::size_t>(i)] = dn[i][0];
    std::vector<double> p_das =
        confusion_distribution(scores, clip_lo, clip_hi);
    for (int i = 0; i < buf->size(); ++i) {
      out += name;
      out += ',';
      out += std::to_string(i);
      for (int d = 0; d < z.cols; ++d) {
        std::snprintf(num, sizeof num, ",%.17g", z[i][d]);
        out += num;
      }
      std::snprintf(num, sizeof num, ",%.17g,%.17g", dn[i][0],
                    p_das[static_cast<std::size_t>(i)]);
      out += num;
      out += '\n';
    }
  }
  atomic_write_text(path, out);
}

}  // namespace lnd
