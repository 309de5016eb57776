#include "simsrc/solve_tally.hpp"

namespace simsrc {

namespace {
std::atomic<std::uint64_t> g_total{0};
thread_local SolveTally* t_current = nullptr;
}  // namespace

std::uint64_t global_solve_count() noexcept { return g_total.load(std::memory_order_relaxed); }

SolveTally::SolveTally() : parent_(t_current) { t_current = this; }

SolveTally::~SolveTally() { t_current = parent_; }

void record_solves(std::uint64_t n) noexcept {
  g_total.fetch_add(n, std::memory_order_relaxed);
  for (SolveTally* t = t_current; t != nullptr; t = t->parent_) t->count_ += n;
}

}  // namespace simsrc
