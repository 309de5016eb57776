#include "simsrc/optimizer.hpp"

#include <cmath>
#include <optional>
#include <string>

#include "simsrc/errors.hpp"
#include "simsrc/solvers.hpp"

namespace simsrc {

RegValue regularizer_eval(const RegOperator& reg, std::span<const double> x) {
  if (x.size() != reg.size()) throw ContractError("regularizer_eval: model length does not match L");
  const Vector lx = reg.l.multiply(x);
  RegValue out;
  out.value = dot(lx, lx);
  out.gradient = reg.l.multiply_transpose(lx);
  scale(2.0, out.gradient);
  return out;
}

Vector regularizer_hessian_apply(const RegOperator& reg, std::span<const double> x) {
  Vector h = reg.l.multiply_transpose(reg.l.multiply(x));
  scale(2.0, h);
  return h;
}

Vector to_log(const Model& u) {
  Vector m(u.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::log(u[i]);
  return m;
}

Model from_log(std::span<const double> m) {
  Vector u(m.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::exp(m[i]);
  return Model(std::move(u));
}

// ---------------------------------------------------------------------------
// LogConductivityTerm

namespace {

struct LogState {
  Model u;
  EvalResult eval;
};

}  // namespace

DataTerm::Evaluation LogConductivityTerm::evaluate(std::span<const double> m) const {
  auto state = std::make_shared<LogState>();
  state->u = from_log(m);
  state->eval = est_.evaluate(state->u);
  Evaluation out;
  out.value = state->eval.value;
  out.gradient = hadamard(state->u.values(), state->eval.gradient);
  out.solve_count = state->eval.solve_count;
  out.state = std::shared_ptr<const LogState>(std::move(state));
  return out;
}

Vector LogConductivityTerm::curvature(const Evaluation& at, std::span<const double> x, std::size_t& solves) const {
  const auto* held = std::any_cast<std::shared_ptr<const LogState>>(&at.state);
  if (!held || !*held) throw ContractError("LogConductivityTerm: evaluation was not produced by this term");
  const LogState& s = **held;
  const Vector ux = hadamard(s.u.values(), x);
  return hadamard(s.u.values(), est_.curvature_apply(s.eval, s.u, ux, &solves));
}

// ---------------------------------------------------------------------------
// Gauss-Newton

std::size_t GnResult::total_solves() const {
  std::size_t n = initial_solves;
  for (const auto& s : steps) n += s.curvature_solves + s.trial_solves;
  return n;
}

std::size_t GnResult::total_cg_iters() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.cg_iters;
  return n;
}

GnResult gauss_newton(const DataTerm& term, const RegOperator& reg, double alpha, std::span<const double> m0,
                      const GnOptions& opts) {
  if (m0.size() != term.size() || m0.size() != reg.size()) {
    throw ContractError("gauss_newton: starting point length mismatch");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ContractError("gauss_newton: alpha must be finite and ≥ 0");
  if (!all_finite(m0)) throw ContractError("gauss_newton: non-finite starting point");

  GnResult res;
  res.m.assign(m0.begin(), m0.end());
  res.final_eval = term.evaluate(res.m);
  res.initial_solves = res.final_eval.solve_count;

  auto objective_of = [&](const DataTerm::Evaluation& e, const RegValue& r) { return e.value + alpha * r.value; };
  RegValue rv = regularizer_eval(reg, res.m);
  res.objective = objective_of(res.final_eval, rv);
  res.initial_objective = res.objective;

  std::optional<IcPreconditioner> smoother;
  if (opts.smoothing_shift > 0.0) {
    const SparseMat ltl = weighted_gram(reg.l, Vector(reg.l.rows(), 1.0));
    double mean_diag = 0.0;
    for (double d : ltl.diagonal()) mean_diag += d / static_cast<double>(reg.size());
    const double shift = opts.smoothing_shift * mean_diag;
    std::vector<Triplet> t = ltl.triplets();
    for (std::size_t i = 0; i < reg.size(); ++i) t.push_back({i, i, shift});
    smoother.emplace(SparseMat(reg.size(), reg.size(), std::move(t)));
    if (!smoother->ok()) throw NumericalBreakdown("gauss_newton: smoothing preconditioner breakdown");
  }

  for (std::size_t it = 0; it < opts.max_gn; ++it) {
    Vector g = res.final_eval.gradient;
    axpy(alpha, rv.gradient, g);
    if (norm2(g) <= opts.grad_tol) {
      res.stationary = true;
      break;
    }

    GnStepRecord rec;
    const DataTerm::Evaluation& here = res.final_eval;
    const LinearOperator hess = [&](std::span<const double> x) {
      Vector hx = term.curvature(here, x, rec.curvature_solves);
      axpy(alpha, regularizer_hessian_apply(reg, x), hx);
      return hx;
    };
    Vector neg_g = g;
    scale(-1.0, neg_g);
    const CgResult cg =
        smoother ? conjugate_gradient(hess, neg_g, opts.cg_tol, opts.cg_max,
                                      [&](std::span<const double> r, std::span<double> z) { smoother->solve(r, z); })
                 : conjugate_gradient(hess, neg_g, opts.cg_tol, opts.cg_max);
    rec.cg_iters = cg.iters;
    Vector delta = cg.x;

    const double dmax = norm_inf(delta);
    if (dmax == 0.0) {
      res.steps.push_back(rec);
      res.stalled = true;
      break;
    }
    if (opts.max_step > 0.0 && dmax > opts.max_step) scale(opts.max_step / dmax, delta);
    rec.slope = dot(g, delta);
    if (!(rec.slope < 0.0)) {
      throw NumericalBreakdown("gauss_newton: CG returned an ascent direction (slope " + std::to_string(rec.slope) +
                               ")");
    }

    bool accepted = false;
    double t = 1.0;
    for (std::size_t bt = 0; bt <= opts.max_backtracks; ++bt, t *= 0.5) {
      Vector trial = res.m;
      axpy(t, delta, trial);
      DataTerm::Evaluation e = term.evaluate(trial);
      ++rec.trial_evals;
      rec.trial_solves += e.solve_count;
      const RegValue trial_rv = regularizer_eval(reg, trial);
      const double phi = objective_of(e, trial_rv);
      if (std::isfinite(phi) && phi <= res.objective + opts.armijo_c * t * rec.slope) {
        res.m = std::move(trial);
        res.final_eval = std::move(e);
        res.objective = phi;
        rv = trial_rv;
        rec.step_length = t;
        accepted = true;
        break;
      }
    }
    rec.objective = res.objective;
    res.steps.push_back(rec);
    if (!accepted) {
      res.stalled = true;
      break;
    }
    ++res.iterations;
  }
  return res;
}

// ---------------------------------------------------------------------------
// SAA continuation

void SaaParams::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ContractError("SaaParams: gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau < 1.0)) throw ContractError("SaaParams: tau must lie in (0, 1)");
  if (!(beta > 1.0) || !std::isfinite(beta)) throw ContractError("SaaParams: beta must exceed 1");
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw ContractError("SaaParams: alpha0 must be positive");
  if (!(tol >= 0.0) || !std::isfinite(tol)) throw ContractError("SaaParams: tol must be finite and ≥ 0");
  if (n1 == 0) throw ContractError("SaaParams: N1 must be positive");
  if (max_outer == 0) throw ContractError("SaaParams: max_outer must be positive");
}

std::size_t SaaState::total_solves() const {
  std::size_t n = 0;
  for (const auto& r : history) n += r.solve_count;
  return n;
}

std::size_t SaaState::total_gn_iters() const {
  std::size_t n = 0;
  for (const auto& r : history) n += r.gn_iters;
  return n;
}

SaaState saa_continuation(const EstimatorFactory& factory, const RegOperator& reg, const SaaParams& params,
                          const Model& u0, const GnOptions& gn, const RoundObserver& observer) {
  params.validate();
  if (u0.size() != reg.size()) throw ContractError("saa_continuation: initial model length mismatch");

  SaaState st;
  st.alpha = params.alpha0;
  st.n_samples = params.n1;
  st.u = u0;

  for (std::size_t k = 1; k <= params.max_outer; ++k) {
    st.k = k;
    const std::unique_ptr<MisfitEstimator> est = factory(k, st.n_samples);
    if (!est) throw ContractError("saa_continuation: factory returned no estimator");
    const LogConductivityTerm term(*est);

    SaaRound round;
    round.k = k;
    round.alpha = st.alpha;
    round.n_samples = st.n_samples;
    round.probes = est->probe_count();
    round.start = st.u;
    round.gn = gauss_newton(term, reg, st.alpha, to_log(st.u), gn);
    round.end = from_log(round.gn.m);
    round.misfit = round.gn.final_eval.value;
    round.gn_iters = round.gn.iterations;
    round.cg_iters = round.gn.total_cg_iters();
    round.solve_count = round.gn.total_solves();
    round.stalled = round.gn.stalled;

    Vector du = round.end.values();
    axpy(-1.0, round.start.values(), du);
    round.du_inf = norm_inf(du);
    round.du_rel = round.du_inf / norm_inf(round.start.values());

    st.u = round.end;
    st.reached_target = round.misfit < params.tol;

    double next_alpha = st.alpha;
    if (round.misfit >= params.tol) {
      round.alpha_reduced = true;
      next_alpha = params.gamma * st.alpha;
    }
    if (k >= 2 && round.step_measure(params.relative_break) <= params.tau) {
      round.break_fired = true;
      st.converged = true;
    }
    st.history.push_back(std::move(round));
    if (observer) observer(st.history.back());
    if (st.converged) break;

    st.alpha = next_alpha;
    st.n_samples = static_cast<std::size_t>(std::ceil(params.beta * static_cast<double>(st.n_samples)));
  }
  return st;
}

EstimatorFactory round_estimator_factory(const EstimatorSpec& spec, const DataSet& prepared, std::uint64_t seed) {
  spec.validate();
  return [spec, &prepared, seed](std::size_t k, std::size_t n) {
    return make_round_estimator(spec, prepared, Rng(seed).derive(k), n);
  };
}

double target_misfit(const DataSet& ds) {
  const DenseMat c = ds.variance.materialize(ds.n_receivers(), ds.n_sources());
  std::size_t active = 0;
  for (double v : c.data())
    if (v != 0.0) ++active;
  return 0.5 * static_cast<double>(active);
}

}  // namespace simsrc
