#pragma once

// Tikhonov-regularized Gauss-Newton and the sample average approximation
// continuation loop.
//
// The optimization variable is m = log u. Every model handed to an estimator
// is exp(m), so positivity never has to be enforced by the line search.

#include <any>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "simsrc/forward_model.hpp"
#include "simsrc/linalg.hpp"
#include "simsrc/objective.hpp"

namespace simsrc {

struct RegOperator {
  SparseMat l;  ///< n_faces × n_cells difference operator

  static RegOperator from_grid(const Grid& grid) { return {cell_gradient(grid)}; }
  std::size_t size() const noexcept { return l.cols(); }
};

struct RegValue {
  double value = 0.0;  ///< xᵀLᵀLx
  Vector gradient;     ///< 2LᵀLx
};

RegValue regularizer_eval(const RegOperator& reg, std::span<const double> x);
/// 2LᵀL·x, the Hessian of regularizer_eval.
Vector regularizer_hessian_apply(const RegOperator& reg, std::span<const double> x);

/// Smooth data term seen by Gauss-Newton, in the optimization variable.
class DataTerm {
public:
  struct Evaluation {
    double value = 0.0;
    Vector gradient;
    std::size_t solve_count = 0;
    std::any state;  ///< whatever curvature() needs at this point
  };

  virtual ~DataTerm() = default;
  virtual std::size_t size() const = 0;
  virtual Evaluation evaluate(std::span<const double> m) const = 0;
  /// JᵀJ·x at the point `at` was evaluated at. Adds solves to `solves`.
  virtual Vector curvature(const Evaluation& at, std::span<const double> x, std::size_t& solves) const = 0;
};

/// Misfit estimator composed with u = exp(m).
class LogConductivityTerm final : public DataTerm {
public:
  explicit LogConductivityTerm(const MisfitEstimator& est) : est_(est) {}

  std::size_t size() const override { return est_.data().problem.n_cells(); }
  Evaluation evaluate(std::span<const double> m) const override;
  Vector curvature(const Evaluation& at, std::span<const double> x, std::size_t& solves) const override;

private:
  const MisfitEstimator& est_;
};

Vector to_log(const Model& u);
Model from_log(std::span<const double> m);

struct GnOptions {
  std::size_t max_gn = 3;
  std::size_t cg_max = 5;
  double cg_tol = 1e-6;
  /// Stop when ‖∇Φ‖₂ falls to this value.
  double grad_tol = 1e-10;
  /// Largest allowed ‖δ‖_∞ of one step; longer steps are shortened. 0 disables.
  double max_step = 2.0;
  double armijo_c = 1e-4;
  std::size_t max_backtracks = 10;
  /// When positive, the CG system is preconditioned with LᵀL + μ·d̄·I, d̄ the
  /// mean diagonal of LᵀL, so the few CG iterations favour smooth updates.
  /// 0 runs plain CG.
  double smoothing_shift = 0.0;
};

/// Cost of one accepted or attempted GN step.
struct GnStepRecord {
  std::size_t cg_iters = 0;
  std::size_t curvature_solves = 0;
  std::size_t trial_evals = 0;
  std::size_t trial_solves = 0;
  double step_length = 0.0;  ///< accepted Armijo t, 0 when rejected
  double objective = 0.0;    ///< Φ after the step
  double slope = 0.0;        ///< ⟨∇Φ, δ⟩ before the step
};

struct GnResult {
  Vector m;
  DataTerm::Evaluation final_eval;  ///< data term at m
  double objective = 0.0;           ///< Φ(m) = data + α·reg
  double initial_objective = 0.0;
  std::size_t iterations = 0;        ///< accepted steps
  std::size_t initial_solves = 0;    ///< cost of the evaluation at the start point
  std::vector<GnStepRecord> steps;   ///< one per attempted step
  bool stationary = false;           ///< gradient tolerance met
  bool stalled = false;              ///< line search exhausted its backtracks

  std::size_t total_solves() const;
  std::size_t total_cg_iters() const;
};

/// Minimizes Φ(m) = term(m) + α·mᵀLᵀLm by Gauss-Newton: each step solves
/// (JᵀJ + 2αLᵀL)δ = −∇Φ with at most cg_max CG iterations and backtracks from
/// t = 1 by halving until the Armijo condition holds.
GnResult gauss_newton(const DataTerm& term, const RegOperator& reg, double alpha, std::span<const double> m0,
                      const GnOptions& opts = {});

struct SaaParams {
  double gamma = 0.5;
  double tau = 1e-2;
  double beta = 2.0;
  double alpha0 = 1.0;
  double tol = 0.0;  ///< misfit target
  std::size_t n1 = 1;
  std::size_t max_outer = 20;
  /// Break on ‖u_k − u_{k−1}‖_∞ / ‖u_{k−1}‖_∞ ≤ τ; false compares the
  /// absolute change (S/m) against τ.
  bool relative_break = true;

  void validate() const;
};

struct SaaRound {
  std::size_t k = 0;          ///< 1-based
  double alpha = 0.0;         ///< α used in this round
  std::size_t n_samples = 0;  ///< N_k
  std::size_t probes = 0;     ///< solves per evaluation of this round's estimator
  double misfit = 0.0;        ///< sampled data misfit at the round's end point
  double du_inf = 0.0;        ///< ‖u_k − u_{k−1}‖_∞
  double du_rel = 0.0;        ///< du_inf / ‖u_{k−1}‖_∞
  std::size_t gn_iters = 0;
  std::size_t cg_iters = 0;
  std::size_t solve_count = 0;
  bool alpha_reduced = false;  ///< misfit ≥ tol, so α_{k+1} = γα_k
  bool break_fired = false;
  bool stalled = false;
  GnResult gn;
  Model start;
  Model end;

  /// The quantity the break guard compares against τ.
  double step_measure(bool relative) const noexcept { return relative ? du_rel : du_inf; }
};

struct SaaState {
  std::size_t k = 0;
  double alpha = 0.0;
  std::size_t n_samples = 0;
  Model u;
  std::vector<SaaRound> history;
  bool converged = false;       ///< break guard fired
  bool reached_target = false;  ///< the last round ended with misfit < tol

  std::size_t total_solves() const;
  std::size_t total_gn_iters() const;
};

/// Builds the estimator for round k (1-based) with sample size N.
using EstimatorFactory = std::function<std::unique_ptr<MisfitEstimator>(std::size_t k, std::size_t n)>;

/// Sample average approximation with simultaneous α reduction and sample
/// growth. Each round draws a fresh estimator, runs Gauss-Newton hot-started
/// from the previous iterate, reduces α by γ while the sampled misfit is at
/// least tol, then stops if k ≥ 2 and the step measure (relative or absolute
/// sup-norm change) is at most τ. Otherwise
/// N_{k+1} = ceil(β·N_k). After max_outer rounds the last iterate is returned
/// with converged = false.
/// Called after each round with the record just appended.
using RoundObserver = std::function<void(const SaaRound&)>;

SaaState saa_continuation(const EstimatorFactory& factory, const RegOperator& reg, const SaaParams& params,
                          const Model& u0, const GnOptions& gn = {}, const RoundObserver& observer = {});

/// Factory over make_round_estimator with round k drawing from
/// Rng(seed).derive(k). `prepared` must outlive the factory's estimators.
EstimatorFactory round_estimator_factory(const EstimatorSpec& spec, const DataSet& prepared, std::uint64_t seed);

/// ½ × number of data with nonzero weight: the expected weighted misfit at
/// the true model when weighted residuals are unit normal.
double target_misfit(const DataSet& ds);

}  // namespace simsrc
