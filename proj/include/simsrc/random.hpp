#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "simsrc/linalg.hpp"

namespace simsrc {

/// Seeded random source. The engine is std::mt19937_64, whose output sequence
/// is fixed by the C++ standard; all transforms to ±1, uniform reals, normals
/// and bounded integers are done here rather than with <random>
/// distributions, whose algorithms differ between standard libraries.
///
/// Independent substreams are derived with SplitMix64 from (seed, stream id),
/// so stream j can be produced without generating streams 0..j-1.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  /// Generator for substream `id` of this seed.
  Rng derive(std::uint64_t id) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer on [0, n) by rejection; n ≥ 1.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal by the Box–Muller transform.
  double normal();
  /// ±1 with equal probability.
  double sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// n × count matrix of Rademacher (±1) entries; column j is drawn from
/// substream j of `rng`'s seed only.
DenseMat sample_rademacher(const Rng& rng, std::size_t n, std::size_t count);

/// `m` distinct indices from [0, n), uniformly without replacement (partial
/// Fisher–Yates), returned in draw order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t m);

}  // namespace simsrc
