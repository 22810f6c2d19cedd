#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lnd/buffer.hpp"
#include "lnd/errors.hpp"
#include "lnd/matrix.hpp"
#include "lnd/rng.hpp"

namespace lnd {

// State corruption is affine and time-invariant: every state s of a corpus is
// replaced by A s + B with A and B drawn once per operator instance.
enum class NoiseKind {
  kIdentity,          // A = I, B = 0
  kGaussian,          // A = I, B ~ N(mu, sigma^2) per component
  kNormal,            // A ~ N(0, 1) per entry, B = 0
  kDoublyStochastic,  // A = sinkhorn(U(0,1) + 0.1), B = 0
  kShuffle,           // A = random permutation matrix, B = 0
  kCombined,          // one of the four non-identity kinds per episode group
};

inline std::string noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::kIdentity: return "identity";
    case NoiseKind::kGaussian: return "gaussian";
    case NoiseKind::kNormal: return "normal";
    case NoiseKind::kDoublyStochastic: return "doubly_stochastic";
    case NoiseKind::kShuffle: return "shuffle";
    case NoiseKind::kCombined: return "combined";
  }
  throw ConfigError("noise_kind_name: unknown kind");
}

inline NoiseKind noise_kind_from_name(const std::string& s) {
  if (s == "identity") return NoiseKind::kIdentity;
  if (s == "gaussian") return NoiseKind::kGaussian;
  if (s == "normal") return NoiseKind::kNormal;
  if (s == "doubly_stochastic") return NoiseKind::kDoublyStochastic;
  if (s == "shuffle") return NoiseKind::kShuffle;
  if (s == "combined") return NoiseKind::kCombined;
  throw ConfigError("noise_kind_from_name: unknown kind '" + s + "'");
}

struct LtiNoise {
  NoiseKind kind = NoiseKind::kIdentity;
  int dim = 0;
  std::uint64_t seed = 0;
  double mu = 0.0;     // gaussian offset mean
  double sigma = 0.0;  // gaussian offset std
  Matrix A;
  std::vector<double> B;
  std::vector<LtiNoise> parts;  // combined: gaussian, normal, ds, shuffle
};

// ---------------------------------------------------------------------------
// Sinkhorn-Knopp: alternate row and column normalization of a strictly
// positive matrix until every row and column sums to 1 within tol. Returns
// the number of sweeps used.

inline int sinkhorn_knopp(Matrix& m, double tol = 1e-10, int max_iter = 10000) {
  if (m.rows != m.cols || m.rows == 0)
    throw ShapeError("sinkhorn_knopp: square matrix required");
  for (double v : m.data)
    if (!(v > 0.0) || !std::isfinite(v))
      throw InputError("sinkhorn_knopp: entries must be strictly positive");
  int n = m.rows;
  for (int it = 1; it <= max_iter; ++it) {
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) sum += m[i][j];
      for (int j = 0; j < n; ++j) m[i][j] /= sum;
    }
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) sum += m[i][j];
      for (int i = 0; i < n; ++i) m[i][j] /= sum;
    }
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      double rs = 0.0, cs = 0.0;
      for (int j = 0; j < n; ++j) {
        rs += m[i][j];
        cs += m[j][i];
      }
      worst = std::max({worst, std::fabs(rs - 1.0), std::fabs(cs - 1.0)});
    }
    if (worst <= tol) return it;
  }
  throw ConvergenceError("sinkhorn_knopp: no convergence in " +
                         std::to_string(max_iter) + " sweeps");
}

// ---------------------------------------------------------------------------
// Operator construction.

namespace detail {

inline Matrix identity_matrix(int dim) {
  Matrix a(dim, dim);
  for (int i = 0; i < dim; ++i) a[i][i] = 1.0;
  return a;
}

inline LtiNoise make_single(NoiseKind kind, int dim, std::uint64_t seed,
                            double mu, double sigma, Rng& rng) {
  LtiNoise n;
  n.kind = kind;
  n.dim = dim;
  n.seed = seed;
  n.B.assign(static_cast<std::size_t>(dim), 0.0);
  switch (kind) {
    case NoiseKind::kIdentity:
      n.A = identity_matrix(dim);
      break;
    case NoiseKind::kGaussian:
      n.mu = mu;
      n.sigma = sigma;
      n.A = identity_matrix(dim);
      for (int i = 0; i < dim; ++i) n.B[static_cast<std::size_t>(i)] =
          rng.normal(mu, sigma);
      break;
    case NoiseKind::kNormal:
      n.A = Matrix(dim, dim);
      for (double& v : n.A.data) v = rng.normal();
      break;
    case NoiseKind::kDoublyStochastic: {
      n.A = Matrix(dim, dim);
      for (double& v : n.A.data) v = rng.uniform() + 0.1;
      sinkhorn_knopp(n.A);
      break;
    }
    case NoiseKind::kShuffle: {
      std::vector<int> perm = rng.permutation(dim);
      n.A = Matrix(dim, dim);
      for (int i = 0; i < dim; ++i)
        n.A[i][perm[static_cast<std::size_t>(i)]] = 1.0;
      break;
    }
    case NoiseKind::kCombined:
      throw ConfigError("make_single: combined is not a single operator");
  }
  return n;
}

}  // namespace detail

inline LtiNoise sample_noise(NoiseKind kind, int dim, std::uint64_t seed,
                             double mu = 0.0, double sigma = 0.1) {
  if (dim <= 0) throw InputError("sample_noise: dim must be positive");
  if (kind == NoiseKind::kGaussian && !(sigma >= 0.0))
    throw InputError("sample_noise: sigma must be >= 0");
  Rng rng = Rng::derive(seed, "noise");
  if (kind != NoiseKind::kCombined)
    return detail::make_single(kind, dim, seed, mu, sigma, rng);

  LtiNoise n;
  n.kind = NoiseKind::kCombined;
  n.dim = dim;
  n.seed = seed;
  n.mu = mu;
  n.sigma = sigma;
  NoiseKind kinds[4] = {NoiseKind::kGaussian, NoiseKind::kNormal,
                        NoiseKind::kDoublyStochastic, NoiseKind::kShuffle};
  for (std::uint64_t i = 0; i < 4; ++i) {
    Rng sub = Rng::derive(seed, "noise-part", i);
    n.parts.push_back(
        detail::make_single(kinds[i], dim, seed, mu, sigma, sub));
  }
  return n;
}

inline std::vector<double> apply_noise(const LtiNoise& n,
                                       const std::vector<double>& s) {
  if (n.kind == NoiseKind::kCombined)
    throw InputError("apply_noise: combined operator needs corrupt_buffer");
  if (static_cast<int>(s.size()) != n.dim)
    throw ShapeError("apply_noise: state dim " + std::to_string(s.size()) +
                     " vs operator dim " + std::to_string(n.dim));
  std::vector<double> out(static_cast<std::size_t>(n.dim), 0.0);
  for (int i = 0; i < n.dim; ++i) {
    double acc = n.B[static_cast<std::size_t>(i)];
    const double* row = n.A[i];
    for (int j = 0; j < n.dim; ++j) acc += row[j] * s[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

// Balanced random assignment of episodes to the four combined parts:
// a shuffled episode list dealt round-robin, so group sizes differ by at
// most one.
inline std::vector<int> combined_partition(int num_episodes, std::uint64_t seed) {
  if (num_episodes <= 0)
    throw InputError("combined_partition: need at least one episode");
  Rng rng = Rng::derive(seed, "noise-partition");
  std::vector<int> order = rng.permutation(num_episodes);
  std::vector<int> group(static_cast<std::size_t>(num_episodes), 0);
  for (int pos = 0; pos < num_episodes; ++pos)
    group[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] =
        pos % 4;
  return group;
}

// Corrupts both s and s_next of every record. For the combined kind each
// episode is assigned one sub-operator, so successor chaining inside an
// episode stays consistent with a single affine map.
inline DemoBuffer corrupt_buffer(const LtiNoise& n, const DemoBuffer& in,
                                 const std::string& noise_spec_path = "") {
  in.validate();
  if (in.size() == 0) throw InputError("corrupt_buffer: empty buffer");
  if (n.dim != in.state_dim)
    throw ShapeError("corrupt_buffer: operator dim " + std::to_string(n.dim) +
                     " vs state dim " + std::to_string(in.state_dim));
  DemoBuffer out = in;
  out.noisy = true;
  out.noise_spec = noise_spec_path;

  if (n.kind != NoiseKind::kCombined) {
    for (TransitionRecord& rec : out.records) {
      rec.s = apply_noise(n, rec.s);
      rec.s_next = apply_noise(n, rec.s_next);
    }
    return out;
  }

  int num_episodes = 0;
  for (const TransitionRecord& rec : out.records)
    num_episodes = std::max(num_episodes, rec.episode + 1);
  std::vector<int> group = combined_partition(num_episodes, n.seed);
  for (TransitionRecord& rec : out.records) {
    const LtiNoise& part =
        n.parts[static_cast<std::size_t>(group[static_cast<std::size_t>(
            rec.episode)])];
    rec.s = apply_noise(part, rec.s);
    rec.s_next = apply_noise(part, rec.s_next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Noise spec file: JSON with the concrete operator, so a corruption is fully
// reproducible from the file alone.

inline json noise_to_json(const LtiNoise& n) {
  json j;
  j["kind"] = noise_kind_name(n.kind);
  j["dim"] = n.dim;
  j["seed"] = n.seed;
  if (n.kind == NoiseKind::kGaussian || n.kind == NoiseKind::kCombined) {
    j["mu"] = n.mu;
    j["sigma"] = n.sigma;
  }
  if (n.kind == NoiseKind::kCombined) {
    json parts = json::array();
    for (const LtiNoise& p : n.parts) parts.push_back(noise_to_json(p));
    j["parts"] = parts;
    return j;
  }
  json a = json::array();
  for (int i = 0; i < n.A.rows; ++i)
    a.push_back(std::vector<double>(n.A[i], n.A[i] + n.A.cols));
  j["A"] = a;
  j["B"] = n.B;
  return j;
}

inline LtiNoise noise_from_json(const json& j) {
  LtiNoise n;
  try {
    n.kind = noise_kind_from_name(j.at("kind").get<std::string>());
    n.dim = j.at("dim").get<int>();
    n.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("mu")) n.mu = j.at("mu").get<double>();
    if (j.contains("sigma")) n.sigma = j.at("sigma").get<double>();
    if (n.kind == NoiseKind::kCombined) {
      for (const json& pj : j.at("parts")) n.parts.push_back(noise_from_json(pj));
      if (n.parts.size() != 4)
        throw ParseError("noise: combined needs exactly 4 parts");
      return n;
    }
    const json& a = j.at("A");
    if (static_cast<int>(a.size()) != n.dim)
      throw ParseError("noise: A row count mismatch");
    n.A = Matrix(n.dim, n.dim);
    for (int i = 0; i < n.dim; ++i) {
      const auto row = a.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
      if (static_cast<int>(row.size()) != n.dim)
        throw ParseError("noise: A column count mismatch");
      std::copy(row.begin(), row.end(), n.A[i]);
    }
    n.B = j.at("B").get<std::vector<double>>();
    if (static_cast<int>(n.B.size()) != n.dim)
      throw ParseError("noise: B size mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("noise: ") + e.what());
  }
  return n;
}

inline void save_noise(const std::string& path, const LtiNoise& n) {
  atomic_write_text(path, noise_to_json(n).dump(2) + "\n");
}

inline LtiNoise load_noise(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("noise: ") + e.what());
  }
  return noise_from_json(j);
}

}  // namespace lnd
