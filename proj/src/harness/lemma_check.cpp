#include <cmath>
#include <ostream>
#include <sstream>

#include "simsrc/harness.hpp"
#include "simsrc/variance.hpp"

namespace simsrc {

namespace {

DenseMat normal_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  DenseMat m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

// Every ±1 vector of length n, one per column.
DenseMat all_sign_vectors(std::size_t n) {
  const std::size_t count = std::size_t{1} << n;
  DenseMat w(n, count);
  for (std::size_t c = 0; c < count; ++c)
    for (std::size_t i = 0; i < n; ++i) w(i, c) = (c >> i) & 1 ? 1.0 : -1.0;
  return w;
}

std::string sci(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << v;
  return s.str();
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

void report(std::ostream& out, bool ok, const std::string& name, const std::string& detail) {
  out << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
}

}  // namespace

bool lemma_check(std::ostream& out, std::uint64_t seed) {
  Rng rng(seed);
  bool all_ok = true;

  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n_r = 1 + rng.below(20);
    const std::size_t n_s = 1 + rng.below(20);
    const std::size_t k = 1 + rng.below(5);
    const DenseMat x = normal_matrix(rng, n_r, k);
    const DenseMat z = normal_matrix(rng, n_s, k);
    const DenseMat r = normal_matrix(rng, n_r, n_s);
    const DenseMat w = normal_matrix(rng, n_s, 1);
    const Vector fast = hadamard_lowrank_apply(x, z, r, w.data());
    const Vector dense = hadamard(x.multiply(z.transpose()), r).multiply(w.data());
    Vector diff = fast;
    axpy(-1.0, dense, diff);
    worst = std::max(worst, norm2(diff) / std::max(norm2(dense), 1e-300));
  }
  const bool lemma_ok = worst <= 1e-12;
  report(out, lemma_ok, "hadamard-lowrank", "200 instances, worst relative error " + sci(worst));
  all_ok = all_ok && lemma_ok;

  const Grid grid{6, 6, 1.0, 1.0};
  const Survey survey = place_sources_receivers(grid, 3, 4, SurveyLayout::Perimeter);
  const ForwardProblem fp(grid, survey, SolverOptions{1e-12, 0});
  Vector cond(grid.n_cells());
  for (double& v : cond) v = 0.05 + 0.1 * rng.uniform();
  const Model u(cond);
  const DenseMat d = normal_matrix(rng, fp.n_receivers(), fp.n_sources());
  const DenseMat w = all_sign_vectors(fp.n_sources());

  DenseMat c(fp.n_receivers(), fp.n_sources());
  for (double& v : c.data()) v = 0.5 + rng.uniform();

  const DataSet uniform{d, VarianceMatrix::uniform(1.7), fp, std::nullopt};
  const double full_u = misfit_full(uniform, u).value;
  const double sim = estimate_simsrc(uniform, u, w).value;
  const bool sim_ok = rel_diff(sim, full_u) <= 1e-10;
  report(out, sim_ok, "trace-identity simsrc", "relative difference " + sci(rel_diff(sim, full_u)));

  const DataSet dense{d, VarianceMatrix::dense(c), fp, std::nullopt};
  const double full_d = misfit_full(dense, u).value;
  const std::size_t k = std::min(fp.n_receivers(), fp.n_sources());
  const DataSet lowrank{d, lowrank_approximate(dense.variance, k, fp.n_receivers(), fp.n_sources()), fp,
                        std::nullopt};
  const double lr = estimate_lowrank(lowrank, u, w).value;
  const bool lr_ok = rel_diff(lr, full_d) <= 1e-10;
  report(out, lr_ok, "trace-identity lowrank", "relative difference " + sci(rel_diff(lr, full_d)));

  const double in = estimate_insidenorm(dense, u, w).value;
  const bool in_ok = rel_diff(in, full_d) <= 1e-10;
  report(out, in_ok, "trace-identity insidenorm", "relative difference " + sci(rel_diff(in, full_d)));

  return all_ok && sim_ok && lr_ok && in_ok;
}

}  // namespace simsrc
