#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lnd/errors.hpp"

namespace lnd {

// Deterministic random source. All sampling in the library goes through this
// wrapper so that runs are reproducible bit-for-bit across platforms: the
// mt19937_64 engine is fully specified by the standard, and every variate is
// derived from engine output with explicit arithmetic (no unspecified
// std::*_distribution involved).
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Independent stream derived from (seed, name[, index]). Distinct names or
  // indices give statistically unrelated streams with the same master seed.
  static Rng derive(std::uint64_t seed, std::string_view name,
                    std::uint64_t index = 0) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a offset basis
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    std::uint64_t s = seed;
    s = splitmix64(s ^ h);
    s = splitmix64(s ^ index);
    return Rng(s);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second variate of each pair is
  // cached, so draws come in deterministic order.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // Uniform integer on [0, n). Rejection sampling, no modulo bias.
  int uniform_int(int n) {
    if (n <= 0) throw InputError("uniform_int: n must be positive");
    std::uint64_t un = static_cast<std::uint64_t>(n);
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<int>(x % un);
  }

  // Fisher-Yates, high index first.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    shuffle(p);
    return p;
  }

  // Engine + spare-cache state, round-trippable through set_state.
  std::string state() const {
    std::ostringstream os;
    os << gen_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
    os.precision(17);
    os << spare_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    int flag = 0;
    if (!(is >> gen_ >> flag >> spare_))
      throw ParseError("Rng::set_state: malformed state string");
    has_spare_ = (flag != 0);
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lnd
