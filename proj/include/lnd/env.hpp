#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "lnd/buffer.hpp"
#include "lnd/errors.hpp"
#include "lnd/rng.hpp"

namespace lnd {

struct EnvSpec {
  int state_dim = 0;
  int action_dim = 0;
  int horizon = 0;
  double gamma = 0.99;
  double action_low = -1.0;
  double action_high = 1.0;
};

// Planar point mass driven by bounded acceleration toward a fixed goal.
// State is (x, y, vx, vy). Semi-implicit Euler at dt = 0.1; per-component
// speed limit 2; positions confined to [-1, 1]^2 so the distance term of the
// reward is bounded. Reward is the negative distance of the post-step
// position to the goal minus a small control cost; with the position box and
// |a| <= 1 it always lies in [-(sqrt(8) + 0.02), 0]. Episodes run a fixed 100
// steps with no early termination.
class PointMass2D {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kVMax = 2.0;
  static constexpr double kPosBound = 1.0;
  static constexpr double kCtrlCost = 0.01;
  static constexpr double kGoalX = 1.0;
  static constexpr double kGoalY = 1.0;

  explicit PointMass2D(double start_jitter = 0.05)
      : start_jitter_(start_jitter) {
    if (!(start_jitter >= 0.0) || !std::isfinite(start_jitter))
      throw ConfigError("PointMass2D: start_jitter must be finite and >= 0");
  }

  EnvSpec spec() const { return EnvSpec{4, 2, 100, 0.99, -1.0, 1.0}; }

  std::vector<double> reset(Rng& rng) {
    state_ = {rng.uniform(-start_jitter_, start_jitter_),
              rng.uniform(-start_jitter_, start_jitter_), 0.0, 0.0};
    t_ = 0;
    done_ = false;
    return state_;
  }

  struct StepResult {
    std::vector<double> state;
    double reward = 0.0;
    bool done = false;
  };

  // One transition from state s under action a, independent of episode
  // bookkeeping. Actions are clipped to the box before use.
  static std::pair<std::vector<double>, double> dynamics(
      const std::vector<double>& s, const std::vector<double>& a) {
    if (s.size() != 4) throw ShapeError("PointMass2D::dynamics: state dim");
    if (a.size() != 2) throw ShapeError("PointMass2D::dynamics: action dim");
    for (double v : a)
      if (!std::isfinite(v))
        throw InputError("PointMass2D::dynamics: non-finite action");
    double ax = std::clamp(a[0], -1.0, 1.0);
    double ay = std::clamp(a[1], -1.0, 1.0);
    double vx = std::clamp(s[2] + ax * kDt, -kVMax, kVMax);
    double vy = std::clamp(s[3] + ay * kDt, -kVMax, kVMax);
    double x = std::clamp(s[0] + vx * kDt, -kPosBound, kPosBound);
    double y = std::clamp(s[1] + vy * kDt, -kPosBound, kPosBound);
    double dist = std::hypot(x - kGoalX, y - kGoalY);
    double reward = -dist - kCtrlCost * (ax * ax + ay * ay);
    return {{x, y, vx, vy}, reward};
  }

  StepResult step(const std::vector<double>& action) {
    if (t_ < 0) throw InputError("PointMass2D::step: reset() first");
    if (done_) throw InputError("PointMass2D::step: episode finished");
    auto [next, reward] = dynamics(state_, action);
    state_ = next;
    ++t_;
    done_ = t_ >= spec().horizon;
    return StepResult{state_, reward, done_};
  }

  const std::vector<double>& state() const { return state_; }
  int steps_taken() const { return t_; }

 private:
  double start_jitter_;
  std::vector<double> state_;
  int t_ = -1;
  bool done_ = false;
};

// ---------------------------------------------------------------------------
// Finite MDP with dense transition tensor, used by the occupancy diagnostics.

struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> P;   // [s][a][s'] flattened, row-stochastic in s'
  std::vector<double> r;   // [s][a]
  std::vector<double> p0;  // initial distribution
  double gamma = 0.95;

  double p(int s, int a, int s2) const {
    return P[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
  }
  double& p(int s, int a, int s2) {
    return P[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
  }

  void validate(double tol = 1e-9) const {
    if (num_states <= 0 || num_actions <= 0)
      throw InputError("TabularMDP: non-positive sizes");
    if (P.size() != static_cast<std::size_t>(num_states) * num_actions *
                        num_states ||
        r.size() != static_cast<std::size_t>(num_states) * num_actions ||
        p0.size() != static_cast<std::size_t>(num_states))
      throw ShapeError("TabularMDP: tensor sizes inconsistent");
    if (!(gamma >= 0.0) || gamma >= 1.0)
      throw InputError("TabularMDP: gamma must lie in [0, 1)");
    for (int s = 0; s < num_states; ++s)
      for (int a = 0; a < num_actions; ++a) {
        double sum = 0.0;
        for (int s2 = 0; s2 < num_states; ++s2) {
          double v = p(s, a, s2);
          if (v < -tol) throw InputError("TabularMDP: negative probability");
          sum += v;
        }
        if (std::fabs(sum - 1.0) > tol)
          throw InputError("TabularMDP: transition row (" + std::to_string(s) +
                           "," + std::to_string(a) + ") sums to " +
                           std::to_string(sum));
      }
    double sum0 = 0.0;
    for (double v : p0) {
      if (v < -tol) throw InputError("TabularMDP: negative initial mass");
      sum0 += v;
    }
    if (std::fabs(sum0 - 1.0) > tol)
      throw InputError("TabularMDP: initial distribution sums to " +
                       std::to_string(sum0));
  }

  // Dense random instance with strictly positive transition mass everywhere.
  static TabularMDP random(int num_states, int num_actions, double gamma,
                           Rng& rng) {
    TabularMDP m;
    m.num_states = num_states;
    m.num_actions = num_actions;
    m.gamma = gamma;
    m.P.assign(static_cast<std::size_t>(num_states) * num_actions * num_states,
               0.0);
    m.r.assign(static_cast<std::size_t>(num_states) * num_actions, 0.0);
    m.p0.assign(static_cast<std::size_t>(num_states), 0.0);
    for (int s = 0; s < num_states; ++s)
      for (int a = 0; a < num_actions; ++a) {
        double sum = 0.0;
        for (int s2 = 0; s2 < num_states; ++s2) {
          double v = rng.uniform() + 0.05;
          m.p(s, a, s2) = v;
          sum += v;
        }
        for (int s2 = 0; s2 < num_states; ++s2) m.p(s, a, s2) /= sum;
        m.r[static_cast<std::size_t>(s) * num_actions + a] =
            rng.uniform(-1.0, 1.0);
      }
    double sum0 = 0.0;
    for (int s = 0; s < num_states; ++s) {
      m.p0[static_cast<std::size_t>(s)] = rng.uniform() + 0.05;
      sum0 += m.p0[static_cast<std::size_t>(s)];
    }
    for (double& v : m.p0) v /= sum0;
    return m;
  }

  json to_json() const {
    validate();
    json j;
    j["num_states"] = num_states;
    j["num_actions"] = num_actions;
    j["gamma"] = gamma;
    j["P"] = P;
    j["r"] = r;
    j["p0"] = p0;
    return j;
  }

  static TabularMDP from_json(const json& j) {
    TabularMDP m;
    try {
      m.num_states = j.at("num_states").get<int>();
      m.num_actions = j.at("num_actions").get<int>();
      m.gamma = j.at("gamma").get<double>();
      m.P = j.at("P").get<std::vector<double>>();
      m.r = j.at("r").get<std::vector<double>>();
      m.p0 = j.at("p0").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("TabularMDP: ") + e.what());
    }
    m.validate();
    return m;
  }
};

// ---------------------------------------------------------------------------
// Rollout collection. Policy is any callable (state, rng) -> action.

template <typename Policy>
DemoBuffer rollout_episodes(PointMass2D& env, Policy&& policy, int episodes,
                            std::uint64_t seed, Source source) {
  if (episodes <= 0) throw InputError("rollout_episodes: episodes must be > 0");
  EnvSpec spec = env.spec();
  DemoBuffer buf;
  buf.state_dim = spec.state_dim;
  buf.action_dim = spec.action_dim;
  buf.horizon = spec.horizon;
  buf.source = source;
  buf.noisy = false;
  buf.records.reserve(static_cast<std::size_t>(episodes) * spec.horizon);
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng = Rng::derive(seed, "episode", static_cast<std::uint64_t>(ep));
    std::vector<double> s = env.reset(rng);
    for (int t = 0; t < spec.horizon; ++t) {
      std::vector<double> a = policy(s, rng);
      PointMass2D::StepResult res = env.step(a);
      TransitionRecord rec;
      rec.s = s;
      rec.a = std::move(a);
      rec.r = res.reward;
      rec.s_next = res.state;
      rec.episode = ep;
      rec.t = t;
      buf.records.push_back(std::move(rec));
      s = res.state;
    }
  }
  return buf;
}

// Undiscounted per-episode reward sums, in episode order.
inline std::vector<double> episode_returns(const DemoBuffer& buf) {
  std::vector<double> out;
  int cur_ep = -1;
  for (const TransitionRecord& rec : buf.records) {
    if (rec.episode != cur_ep) {
      out.push_back(0.0);
      cur_ep = rec.episode;
    }
    if (rec.r) out.back() += *rec.r;
  }
  return out;
}

}  // namespace lnd
