#pragma once

#include <atomic>
#include <cstdint>

namespace simsrc {

/// Process-wide count of linear-system columns solved by forward_solve.
std::uint64_t global_solve_count() noexcept;

/// Scoped per-thread counter. While alive, every solve performed on the
/// creating thread is also added to this tally (and to any enclosing tally on
/// the same thread), which lets one experiment audit its own cost while others
/// run concurrently.
class SolveTally {
public:
  SolveTally();
  ~SolveTally();
  SolveTally(const SolveTally&) = delete;
  SolveTally& operator=(const SolveTally&) = delete;

  std::uint64_t count() const noexcept { return count_; }

private:
  friend void record_solves(std::uint64_t n) noexcept;
  std::uint64_t count_ = 0;
  SolveTally* parent_;
};

/// Called by forward_solve; not meant for other callers.
void record_solves(std::uint64_t n) noexcept;

}  // namespace simsrc
