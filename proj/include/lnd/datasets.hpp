#pragma once

#include <cstdint>
#include <string>

#include "lnd/buffer.hpp"
#include "lnd/env.hpp"
#include "lnd/noise.hpp"

namespace lnd {

// How the anchor corpus is produced from the noisy-expert side.
enum class AnchorKind {
  kShuffle,  // permute the noisy expert corpus and re-chain successors
  kRandom,   // roll out a uniform random policy, corrupted by the same noise
};

inline std::string anchor_kind_name(AnchorKind k) {
  switch (k) {
    case AnchorKind::kShuffle: return "shuffle";
    case AnchorKind::kRandom: return "random";
  }
  throw ConfigError("anchor_kind_name: unknown kind");
}

inline AnchorKind anchor_kind_from_name(const std::string& s) {
  if (s == "shuffle") return AnchorKind::kShuffle;
  if (s == "random") return AnchorKind::kRandom;
  throw ConfigError("anchor_kind_from_name: unknown kind '" + s + "'");
}

inline DemoBuffer anchor_random(PointMass2D& env, const LtiNoise& noise,
                                int episodes, std::uint64_t seed,
                                const std::string& noise_spec_path = "") {
  auto uniform_policy = [](const std::vector<double>&, Rng& rng) {
    return std::vector<double>{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  };
  DemoBuffer clean = rollout_episodes(env, uniform_policy, episodes, seed,
                                      Source::kAnchor);
  return corrupt_buffer(noise, clean, noise_spec_path);
}

// Builds the anchor corpus used for training. For the shuffle kind the noise
// operator is not consulted (the expert corpus is already corrupted); for the
// random kind fresh random-agent episodes are pushed through the same
// operator.
inline DemoBuffer make_anchor(AnchorKind kind, const DemoBuffer& noisy_expert,
                              PointMass2D& env, const LtiNoise& noise,
                              std::uint64_t seed) {
  if (kind == AnchorKind::kShuffle) {
    Rng rng = Rng::derive(seed, "anchor");
    return anchor_shuffle(noisy_expert, rng);
  }
  int episodes =
      std::max(1, noisy_expert.size() / std::max(1, noisy_expert.horizon));
  return anchor_random(env, noise, episodes, Rng::derive(seed, "anchor").next_u64(),
                       noisy_expert.noise_spec);
}

}  // namespace lnd
