#include "simsrc/random.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <numbers>
#include <string>

#include "simsrc/errors.hpp"

namespace simsrc {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::derive(std::uint64_t id) const { return Rng(splitmix64(seed_ ^ splitmix64(id + 1))); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ContractError("Rng::below: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 == 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

DenseMat sample_rademacher(const Rng& rng, std::size_t n, std::size_t count) {
  if (n == 0 || count == 0) throw ContractError("sample_rademacher: dimensions must be positive");
  DenseMat w(n, count);
  for (std::size_t j = 0; j < count; ++j) {
    Rng column = rng.derive(j);
    for (std::size_t i = 0; i < n; ++i) w(i, j) = column.sign();
  }
  return w;
}

std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t m) {
  if (m > n) {
    throw ContractError("sample_without_replacement: cannot draw " + std::to_string(m) + " from " +
                        std::to_string(n));
  }
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  return pool;
}

}  // namespace simsrc
