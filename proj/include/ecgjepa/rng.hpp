// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ecgjepa {

/// Seeded generator passed explicitly to every sampler.
///
/// Distributions are derived from raw 64-bit draws here rather than through
/// the <random> distribution classes, so sequences are identical across
/// standard library implementations. The whole state is the engine state,
/// which round-trips through state()/set_state().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform in [lo, hi); returns lo exactly when lo == hi.
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  /// Normal(0, stddev) rejected outside [-2 stddev, 2 stddev].
  double truncated_normal(double stddev);
  bool bernoulli(double p) { return uniform() < p; }

  std::string state() const;
  void set_state(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 mix of (base, stream); used to give records, epochs and
/// repetitions independent generator streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace ecgjepa
