#pragma once

#include <functional>
#include <optional>

#include "oracles.hpp"
#include "simsrc/objective.hpp"
#include "simsrc/random.hpp"

namespace fixture {

using namespace simsrc;

inline Model random_model(Rng& rng, std::size_t n, double lo = 0.05, double hi = 0.25) {
  Vector v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return Model(v);
}

inline DenseMat positive_matrix(Rng& rng, std::size_t r, std::size_t c) {
  DenseMat m(r, c);
  for (double& v : m.data()) v = 0.5 + rng.uniform();
  return m;
}

/// Small survey with data simulated at a random model plus noise.
struct SmallProblem {
  ForwardProblem fp;
  Model truth;
  DenseMat data;

  SmallProblem(std::size_t n, std::size_t n_src, std::size_t n_rec, std::uint64_t seed, double solver_tol = 1e-13)
      : fp(make_fp(n, n_src, n_rec, solver_tol)), truth(Model::constant(n * n, 1.0)), data(n_rec, n_src) {
    Rng rng(seed);
    truth = random_model(rng, n * n);
    data = compute_reduced_data(fp, truth).data;
    for (double& v : data.data()) v *= 1.0 + 0.05 * rng.normal();
  }

  DataSet with(VarianceMatrix c, std::optional<DenseMat> reduced = std::nullopt) const {
    return DataSet{data, std::move(c), fp, std::move(reduced)};
  }

private:
  static ForwardProblem make_fp(std::size_t n, std::size_t n_src, std::size_t n_rec, double tol) {
    const Grid g{n, n, 1.0, 1.0};
    return ForwardProblem(g, place_sources_receivers(g, n_src, n_rec, SurveyLayout::Perimeter), SolverOptions{tol, 0});
  }
};

/// Largest per-component relative error of `grad` against fourth-order
/// central differences of `value` in u, ignoring components whose magnitude
/// is below `floor`.
inline double worst_gradient_error(const std::function<double(const Model&)>& value, const Model& u,
                                   const Vector& grad, double floor = 1e-10) {
  double worst = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double h = 1e-3 * u[i];
    const double fd = oracle::central_difference(
        [&](double e) {
          Vector v = u.values();
          v[i] += e;
          return value(Model(v));
        },
        h);
    const double scale = std::max(std::abs(fd), std::abs(grad[i]));
    if (scale < floor) continue;
    worst = std::max(worst, std::abs(fd - grad[i]) / scale);
  }
  return worst;
}

}  // namespace fixture
