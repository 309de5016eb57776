#include <doctest.h>

#include <cmath>

#include "../fixtures.hpp"
#include "simsrc/errors.hpp"
#include "simsrc/objective.hpp"

using namespace simsrc;
using fixture::SmallProblem;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("full misfit by hand on the residual matrix") {
  const SmallProblem sp(5, 2, 3, 1);
  Rng rng(2);
  const DenseMat c = fixture::positive_matrix(rng, 3, 2);
  const Model u = fixture::random_model(rng, 25);
  const DenseMat pred = compute_reduced_data(sp.fp, u).data;
  const DenseMat r = hadamard(c, pred - sp.data);
  const double want = 0.5 * r.frobenius_norm() * r.frobenius_norm();
  const EvalResult e = misfit_full(sp.with(VarianceMatrix::dense(c)), u);
  CHECK(e.value == doctest::Approx(want).epsilon(1e-10));
  CHECK(e.solve_count == 4);
}

TEST_CASE("noise-free data at the true model give zero misfit and gradient") {
  SmallProblem sp(5, 2, 3, 4);
  sp.data = compute_reduced_data(sp.fp, sp.truth).data;
  const EvalResult e = misfit_full(sp.with(VarianceMatrix::uniform(1.0)), sp.truth);
  CHECK(e.value <= 1e-20);
  CHECK(norm_inf(e.gradient) <= 1e-10);
}

TEST_CASE("estimator gradients match finite differences") {
  const SmallProblem sp(6, 3, 4, 7);
  Rng rng(8);
  const Model u = fixture::random_model(rng, 36);
  const DenseMat c = fixture::positive_matrix(rng, 4, 3);
  const DenseMat w = sample_rademacher(rng, 3, 2);
  const DataSet dense = sp.with(VarianceMatrix::dense(c));
  const DataSet uniform = sp.with(VarianceMatrix::uniform(2.0));
  const DataSet lowrank = sp.with(lowrank_approximate(dense.variance, 2, 4, 3));

  auto check = [&](const std::function<EvalResult(const Model&)>& f) {
    const EvalResult e = f(u);
    CHECK(fixture::worst_gradient_error([&](const Model& m) { return f(m).value; }, u, e.gradient) <= 1e-5);
  };
  check([&](const Model& m) { return misfit_full(dense, m); });
  check([&](const Model& m) { return estimate_simsrc(uniform, m, w); });
  check([&](const Model& m) { return estimate_lowrank(lowrank, m, w); });
  check([&](const Model& m) { return estimate_insidenorm(dense, m, w); });
  check([&](const Model& m) { return estimate_subset(dense, m, {0, 2}); });
}

TEST_CASE("solve counts per evaluation") {
  const SmallProblem sp(5, 4, 3, 3);
  Rng rng(1);
  const Model u = fixture::random_model(rng, 25);
  const DenseMat w = sample_rademacher(rng, 4, 3);
  const DataSet uniform = sp.with(VarianceMatrix::uniform(1.0));
  const DataSet lowrank = sp.with(lowrank_approximate(VarianceMatrix::dense(fixture::positive_matrix(rng, 3, 4)), 2, 3, 4));
  CHECK(misfit_full(uniform, u).solve_count == 8);
  CHECK(estimate_simsrc(uniform, u, w).solve_count == 6);
  CHECK(estimate_lowrank(lowrank, u, w).solve_count == 12);
  CHECK(estimate_insidenorm(uniform, u, w).solve_count == 6);
  CHECK(estimate_subset(uniform, u, {1}).solve_count == 2);
}

TEST_CASE("estimators reject the wrong variance representation") {
  const SmallProblem sp(4, 2, 2, 5);
  const DenseMat w = DenseMat(2, 1, 1.0);
  const Model u = Model::constant(16, 0.1);
  CHECK_THROWS_AS(estimate_simsrc(sp.with(VarianceMatrix::dense(DenseMat(2, 2, 1.0))), u, w), ContractError);
  CHECK_THROWS_AS(estimate_lowrank(sp.with(VarianceMatrix::uniform(1.0)), u, w), ContractError);
  CHECK_THROWS_AS(estimate_subset(sp.with(VarianceMatrix::uniform(1.0)), u, {2}), ContractError);
}

TEST_CASE("subset over all sources is the full misfit; singleton average is unbiased") {
  const SmallProblem sp(5, 4, 3, 9);
  Rng rng(10);
  const DataSet ds = sp.with(VarianceMatrix::dense(fixture::positive_matrix(rng, 3, 4)));
  const Model u = fixture::random_model(rng, 25);
  const double full = misfit_full(ds, u).value;
  CHECK(estimate_subset(ds, u, {0, 1, 2, 3}).value == doctest::Approx(full).epsilon(1e-13));
  double avg = 0.0;
  for (std::size_t j = 0; j < 4; ++j) avg += estimate_subset(ds, u, {j}).value / 4.0;
  CHECK(rel(avg, full) <= 1e-12);
}

TEST_CASE("simsrc estimator is unbiased in Monte Carlo") {
  const SmallProblem sp(5, 4, 3, 11, 1e-10);
  const DataSet ds = sp.with(VarianceMatrix::uniform(3.0));
  const Model u = Model::constant(25, 0.1);
  const double full = misfit_full(ds, u).value;
  const DenseMat w = sample_rademacher(Rng(12), 4, 4000);
  const double est = estimate_simsrc(ds, u, w).value;
  CHECK(rel(est, full) < 0.05);
}

TEST_CASE("curvature product is symmetric positive semidefinite") {
  const SmallProblem sp(5, 3, 4, 13);
  Rng rng(14);
  const DataSet ds = sp.with(VarianceMatrix::dense(fixture::positive_matrix(rng, 4, 3)));
  const Model u = fixture::random_model(rng, 25);
  const FullMisfit est(ds);
  const EvalResult at = est.evaluate(u);
  Vector x(25), y(25);
  for (double& v : x) v = rng.normal();
  for (double& v : y) v = rng.normal();
  std::size_t solves = 0;
  const Vector hx = est.curvature_apply(at, u, x, &solves);
  const Vector hy = est.curvature_apply(at, u, y, &solves);
  CHECK(solves == 12);
  CHECK(dot(y, hx) == doctest::Approx(dot(x, hy)).epsilon(1e-9));
  CHECK(dot(x, hx) >= 0.0);
  CHECK_THROWS_AS(est.curvature_apply(at, Model::constant(25, 0.2), x), ContractError);
}

TEST_CASE("at zero residual the curvature equals the directional derivative of the gradient") {
  SmallProblem sp(5, 3, 4, 15, 1e-13);
  sp.data = compute_reduced_data(sp.fp, sp.truth).data;
  const DataSet ds = sp.with(VarianceMatrix::uniform(1.0));
  const FullMisfit est(ds);
  Rng rng(16);
  Vector x(25);
  for (double& v : x) v = rng.normal();
  const Vector hx = est.curvature_apply(est.evaluate(sp.truth), sp.truth, x);
  const double h = 1e-5;
  auto grad_at = [&](double e) {
    Vector v = sp.truth.values();
    axpy(e, x, v);
    return est.evaluate(Model(v)).gradient;
  };
  Vector fd = grad_at(h);
  axpy(-1.0, grad_at(-h), fd);
  scale(1.0 / (2 * h), fd);
  Vector diff = fd;
  axpy(-1.0, hx, diff);
  CHECK(norm2(diff) <= 1e-5 * norm2(hx));
}

TEST_CASE("data completion") {
  const SmallProblem sp(5, 3, 4, 17);
  DenseMat mask(4, 3, 1.0);
  mask(0, 0) = mask(2, 1) = mask(3, 2) = 0.0;
  SUBCASE("reduced model equal to the truth fills missing entries with clean data") {
    const DenseMat clean = compute_reduced_data(sp.fp, sp.truth).data;
    const DataSet ds = sp.with(VarianceMatrix::masked(2.0, mask), clean);
    const DenseMat filled = build_completed_data(ds);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(filled(i, j) == (mask(i, j) == 1.0 ? sp.data(i, j) : clean(i, j)));
    const DataSet done = completed_dataset(ds);
    CHECK(done.variance.is_uniform());
    CHECK(done.variance.materialize(4, 3) == DenseMat(4, 3, 2.0));
  }
  SUBCASE("completion needs reduced data and a mask") {
    CHECK_THROWS_AS(build_completed_data(sp.with(VarianceMatrix::masked(2.0, mask))), ContractError);
    CHECK_THROWS_AS(build_completed_data(sp.with(VarianceMatrix::uniform(1.0), sp.data)), ContractError);
  }
}

TEST_CASE("method labels round-trip") {
  for (const char* label : {"full", "simsrc", "completion", "lowrank-3", "insidenorm", "subset-2"})
    CHECK(EstimatorSpec::parse(label).label() == label);
  CHECK_THROWS(EstimatorSpec::parse("lowrank-0"));
  CHECK_THROWS(EstimatorSpec::parse("bogus"));
}

TEST_CASE("subset draws are sorted and distinct") {
  Rng rng(3);
  const auto s = draw_source_subset(rng, 10, 4);
  REQUIRE(s.size() == 4);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i - 1] < s[i]);
}
