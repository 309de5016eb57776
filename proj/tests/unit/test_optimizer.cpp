#include <doctest.h>

#include <cmath>

#include "../fixtures.hpp"
#include "simsrc/errors.hpp"
#include "simsrc/optimizer.hpp"
#include "simsrc/solve_tally.hpp"
#include "simsrc/solvers.hpp"

using namespace simsrc;
using fixture::SmallProblem;

namespace {

// ½‖J m − d‖² with a fixed dense J; no PDE solves.
class LinearTerm final : public DataTerm {
public:
  LinearTerm(DenseMat j, Vector d) : j_(std::move(j)), d_(std::move(d)) {}
  std::size_t size() const override { return j_.cols(); }
  Evaluation evaluate(std::span<const double> m) const override {
    Vector r = j_.multiply(m);
    axpy(-1.0, d_, r);
    Evaluation e;
    e.value = 0.5 * dot(r, r);
    e.gradient = j_.multiply_transpose(r);
    return e;
  }
  Vector curvature(const Evaluation&, std::span<const double> x, std::size_t&) const override {
    return j_.multiply_transpose(j_.multiply(x));
  }

private:
  DenseMat j_;
  Vector d_;
};

LinearTerm random_linear_term(Rng& rng, std::size_t rows, std::size_t n) {
  DenseMat j(rows, n);
  for (double& v : j.data()) v = rng.normal();
  Vector d(rows);
  for (double& v : d) v = rng.normal();
  return LinearTerm(j, d);
}

// (JᵀJ + 2αLᵀL)⁻¹ Jᵀd formed densely.
Vector regularized_lsq(const DenseMat& j, const Vector& d, const SparseMat& l, double alpha) {
  DenseMat h = j.transpose().multiply(j);
  const DenseMat ltl = l.to_dense().transpose().multiply(l.to_dense());
  h = h + (2.0 * alpha) * ltl;
  return dense_solve(h, j.multiply_transpose(d));
}

}  // namespace

TEST_CASE("regularizer value and gradient") {
  const RegOperator reg = RegOperator::from_grid(Grid{4, 3, 1.0, 1.0});
  CHECK(regularizer_eval(reg, Vector(12, 0.0)).value == 0.0);
  const RegValue c = regularizer_eval(reg, Vector(12, 3.5));
  CHECK(c.value == 0.0);
  CHECK(norm_inf(c.gradient) == 0.0);

  Rng rng(1);
  Vector x(12);
  for (double& v : x) v = rng.normal();
  const RegValue rv = regularizer_eval(reg, x);
  for (std::size_t i = 0; i < 12; ++i) {
    const double fd = oracle::central_difference(
        [&](double e) {
          Vector y = x;
          y[i] += e;
          return regularizer_eval(reg, y).value;
        },
        1e-3);
    CHECK(std::abs(fd - rv.gradient[i]) <= 1e-8 * std::max(1.0, std::abs(fd)));
  }
  const Vector hx = regularizer_hessian_apply(reg, x);
  for (std::size_t i = 0; i < 12; ++i) CHECK(hx[i] == doctest::Approx(rv.gradient[i]).epsilon(1e-12));
}

TEST_CASE("one Gauss-Newton step on a linear problem is the regularized least-squares solution") {
  Rng rng(2);
  const Grid g{3, 3, 1.0, 1.0};
  const RegOperator reg = RegOperator::from_grid(g);
  DenseMat j(12, 9);
  for (double& v : j.data()) v = rng.normal();
  Vector d(12);
  for (double& v : d) v = rng.normal();
  const LinearTerm term(j, d);
  GnOptions opts;
  opts.max_gn = 1;
  opts.cg_max = 50;
  opts.cg_tol = 1e-14;
  opts.max_step = 0.0;
  const double alpha = 0.7;
  const GnResult r = gauss_newton(term, reg, alpha, Vector(9, 0.0), opts);
  REQUIRE(r.iterations == 1);
  CHECK(r.steps[0].step_length == 1.0);
  const Vector want = regularized_lsq(j, d, reg.l, alpha);
  for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(r.m[i] - want[i]) <= 1e-8 * std::max(1.0, std::abs(want[i])));
}

TEST_CASE("step clipping bounds the sup norm of a step") {
  Rng rng(3);
  const RegOperator reg = RegOperator::from_grid(Grid{3, 3, 1.0, 1.0});
  DenseMat j(9, 9);
  for (double& v : j.data()) v = 1e-3 * rng.normal();
  Vector d(9, 10.0);
  GnOptions opts;
  opts.max_gn = 1;
  opts.max_step = 0.5;
  const GnResult r = gauss_newton(LinearTerm(j, d), reg, 0.0, Vector(9, 0.0), opts);
  REQUIRE(!r.steps.empty());
  CHECK(norm_inf(r.m) <= 0.5 + 1e-15);
}

TEST_CASE("regularization seminorm shrinks as alpha grows") {
  Rng rng(4);
  const RegOperator reg = RegOperator::from_grid(Grid{4, 4, 1.0, 1.0});
  const LinearTerm term = random_linear_term(rng, 20, 16);
  GnOptions opts;
  opts.max_gn = 1;
  opts.cg_max = 100;
  opts.cg_tol = 1e-14;
  opts.max_step = 0.0;
  double previous = INFINITY;
  for (double alpha : {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0}) {
    const GnResult r = gauss_newton(term, reg, alpha, Vector(16, 0.0), opts);
    const double seminorm = regularizer_eval(reg, r.m).value;
    CHECK(seminorm < previous);
    previous = seminorm;
  }
}

TEST_CASE("stationary start takes no step") {
  SmallProblem sp(5, 2, 3, 5);
  sp.data = compute_reduced_data(sp.fp, sp.truth).data;
  const DataSet ds = sp.with(VarianceMatrix::uniform(1.0));
  const FullMisfit est(ds);
  const LogConductivityTerm term(est);
  GnOptions opts;
  opts.grad_tol = 1e-8;
  const GnResult r = gauss_newton(term, RegOperator::from_grid(ds.problem.grid()), 0.0, to_log(sp.truth), opts);
  CHECK(r.stationary);
  CHECK(r.iterations == 0);
  CHECK(r.steps.empty());
}

TEST_CASE("Gauss-Newton decreases the objective with descent directions") {
  const SmallProblem sp(10, 2, 6, 6, 1e-10);
  const DataSet ds = sp.with(VarianceMatrix::uniform(50.0));
  const FullMisfit est(ds);
  const LogConductivityTerm term(est);
  const RegOperator reg = RegOperator::from_grid(ds.problem.grid());
  SolveTally tally;
  const GnResult r = gauss_newton(term, reg, 1e-3, to_log(Model::constant(100, 0.1)));
  REQUIRE(r.iterations == 3);
  double previous = r.initial_objective;
  for (const GnStepRecord& s : r.steps) {
    CHECK(s.slope < 0.0);
    CHECK(s.objective < previous);
    CHECK(s.cg_iters <= 5);
    previous = s.objective;
  }
  CHECK(tally.count() == r.total_solves());
  std::size_t expected = 4;
  for (const GnStepRecord& s : r.steps) expected += 4 * (s.cg_iters + s.trial_evals);
  CHECK(r.total_solves() == expected);
}

TEST_CASE("SAA schedule invariants") {
  const SmallProblem sp(6, 3, 4, 7, 1e-10);
  const DataSet ds = sp.with(VarianceMatrix::uniform(20.0));
  const EstimatorSpec spec = EstimatorSpec::parse("simsrc");
  const RegOperator reg = RegOperator::from_grid(ds.problem.grid());
  SaaParams params;
  params.alpha0 = 1.0;
  params.tol = 5.0;
  params.max_outer = 6;
  SolveTally tally;
  const SaaState st = saa_continuation(round_estimator_factory(spec, ds, 3), reg, params, Model::constant(36, 0.1));
  REQUIRE(!st.history.empty());
  CHECK(tally.count() == st.total_solves());
  for (std::size_t i = 0; i < st.history.size(); ++i) {
    const SaaRound& r = st.history[i];
    CHECK(r.k == i + 1);
    CHECK(r.n_samples == (std::size_t{1} << i));
    CHECK(r.probes == r.n_samples);
    CHECK(r.alpha_reduced == (r.misfit >= params.tol));
    CHECK(r.break_fired == (r.k >= 2 && r.du_rel <= params.tau));
    std::size_t steps = 1;
    for (const GnStepRecord& s : r.gn.steps) steps += s.cg_iters + s.trial_evals;
    CHECK(r.solve_count == 2 * r.n_samples * steps);
    if (i > 0) {
      const SaaRound& prev = st.history[i - 1];
      CHECK(r.start == prev.end);
      CHECK(r.alpha == (prev.alpha_reduced ? params.gamma * prev.alpha : prev.alpha));
    }
  }
  CHECK(st.converged == st.history.back().break_fired);
  if (!st.converged) CHECK(st.history.size() == params.max_outer);
}

TEST_CASE("SAA stops at k = 2 when the start already fits") {
  SmallProblem sp(5, 2, 3, 8, 1e-12);
  sp.truth = Model::constant(25, 0.1);
  sp.data = compute_reduced_data(sp.fp, sp.truth).data;
  const DataSet ds = sp.with(VarianceMatrix::uniform(1.0));
  SaaParams params;
  params.tol = 1.0;
  const SaaState st = saa_continuation(round_estimator_factory(EstimatorSpec::parse("full"), ds, 1),
                                       RegOperator::from_grid(ds.problem.grid()), params, sp.truth);
  REQUIRE(st.history.size() == 2);
  CHECK(st.converged);
  CHECK(st.reached_target);
  CHECK(st.history[0].alpha == params.alpha0);
  CHECK(st.history[1].alpha == params.alpha0);
}

TEST_CASE("absolute break compares the unscaled change") {
  SaaParams params;
  params.relative_break = false;
  SaaRound r;
  r.du_inf = 0.02;
  r.du_rel = 0.001;
  CHECK(r.step_measure(params.relative_break) == 0.02);
  CHECK(r.step_measure(true) == 0.001);
}

TEST_CASE("invalid SAA parameters") {
  SaaParams p;
  p.gamma = 1.0;
  CHECK_THROWS_AS(p.validate(), ContractError);
  p = {};
  p.beta = 1.0;
  CHECK_THROWS_AS(p.validate(), ContractError);
  p = {};
  p.n1 = 0;
  CHECK_THROWS_AS(p.validate(), ContractError);
}

TEST_CASE("target misfit counts active data") {
  const SmallProblem sp(4, 2, 3, 9);
  CHECK(target_misfit(sp.with(VarianceMatrix::uniform(1.0))) == 3.0);
  DenseMat mask(3, 2, 1.0);
  mask(0, 0) = mask(2, 1) = 0.0;
  CHECK(target_misfit(sp.with(VarianceMatrix::masked(1.0, mask))) == 2.0);
}
