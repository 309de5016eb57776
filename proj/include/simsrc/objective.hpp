#pragma once

// Weighted least-squares data misfit and its stochastic estimators.
//
// Every estimator here has the same anatomy. It picks p probe vectors in
// source space (the columns of V, n_s × p), solves A(u) Y = Q V, forms the
// receiver-space residual block S = Pᵀ Y − D V (n_r × p) and passes S through
// an estimator-specific linear map Ψ to get a residual vector r. Then
//
//   value    = ½ κ ‖Ψ(S)‖²
//   gradient = −κ Σ_c G(y_c)ᵀ A⁻¹ P [Ψᵀ(r)]_c
//   JᵀJ x    =  κ Jᵀ(J x),  J x = Ψ(−Pᵀ A⁻¹ G(y_c) x  for each c)
//
// so one evaluation costs p forward plus p adjoint solves and one
// Gauss-Newton product costs the same again.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "simsrc/forward_model.hpp"
#include "simsrc/linalg.hpp"
#include "simsrc/random.hpp"
#include "simsrc/variance.hpp"

namespace simsrc {

struct DataSet {
  DenseMat observed;                ///< D, n_r × n_s, raw (unweighted) data
  VarianceMatrix variance;          ///< C
  ForwardProblem problem;
  std::optional<DenseMat> reduced;  ///< D_red from a reduced model, when available

  std::size_t n_receivers() const noexcept { return observed.rows(); }
  std::size_t n_sources() const noexcept { return observed.cols(); }

  /// Shapes of D, C and D_red against the survey.
  void validate() const;
};

/// Opaque state retained from an evaluation for Gauss-Newton products.
struct EvalCache;

struct EvalResult {
  double value = 0.0;
  Vector gradient;  ///< with respect to cell conductivity u
  std::size_t solve_count = 0;
  std::shared_ptr<const EvalCache> aux;
};

class MisfitEstimator {
public:
  virtual ~MisfitEstimator();
  MisfitEstimator(const MisfitEstimator&) = delete;
  MisfitEstimator& operator=(const MisfitEstimator&) = delete;

  EvalResult evaluate(const Model& u) const;

  /// κ JᵀJ x at the model of `at`. Throws ContractError when `u` differs from
  /// the model `at` was evaluated at. Adds the solves spent to `*solves`.
  Vector curvature_apply(const EvalResult& at, const Model& u, std::span<const double> x,
                         std::size_t* solves = nullptr) const;

  /// Forward solves per evaluation (equal to adjoint solves per evaluation).
  std::size_t probe_count() const noexcept { return probes_.cols(); }
  /// Independent realizations behind one evaluation (N, m or n_s).
  virtual std::size_t realizations() const noexcept { return probe_count(); }
  virtual std::string name() const = 0;

  const DataSet& data() const noexcept { return ds_; }

protected:
  /// `probes` is n_s × p. `scale` is κ. The DataSet must outlive the estimator.
  MisfitEstimator(const DataSet& ds, DenseMat probes, double scale);

  /// Ψ: linear in S.
  virtual Vector residual(const DenseMat& s) const = 0;
  /// Ψᵀ: returns an n_r × p block.
  virtual DenseMat residual_adjoint(std::span<const double> r) const = 0;

  const DenseMat& probes() const noexcept { return probes_; }

private:
  const DataSet& ds_;
  DenseMat probes_;
  DenseMat data_probes_;  ///< D V
  double scale_;
};

/// ½‖C ⊙ (Pᵀ A⁻¹ Q − D)‖²_F, probes are the unit source vectors.
class FullMisfit final : public MisfitEstimator {
public:
  explicit FullMisfit(const DataSet& ds);
  std::string name() const override { return "full"; }

protected:
  Vector residual(const DenseMat& s) const override;
  DenseMat residual_adjoint(std::span<const double> r) const override;

private:
  DenseMat weights_;
};

/// (1/2N) Σ_i σ⁻² ‖Pᵀ A⁻¹ Q w_i − D w_i‖². Requires uniform C.
class SimSrcMisfit final : public MisfitEstimator {
public:
  SimSrcMisfit(const DataSet& ds, const DenseMat& w);
  std::string name() const override { return "simsrc"; }

protected:
  Vector residual(const DenseMat& s) const override;
  DenseMat residual_adjoint(std::span<const double> r) const override;

private:
  double sigma_inv_;
};

/// (1/2N) Σ_i ‖Σ_j X_j ⊙ (Pᵀ A⁻¹ Q (Z_j ⊙ w_i) − D (Z_j ⊙ w_i))‖². Requires
/// low-rank C; probe column i·k + j is Z_j ⊙ w_i.
class LowRankMisfit final : public MisfitEstimator {
public:
  LowRankMisfit(const DataSet& ds, const DenseMat& w);
  std::size_t realizations() const noexcept override { return n_samples_; }
  std::string name() const override { return "lowrank"; }

protected:
  Vector residual(const DenseMat& s) const override;
  DenseMat residual_adjoint(std::span<const double> r) const override;

private:
  DenseMat x_;
  std::size_t n_samples_;
};

/// ½‖C ⊙ ((1/N) Σ_i (Pᵀ A⁻¹ Q w_i − D w_i) w_iᵀ)‖²_F. Any C.
class InsideNormMisfit final : public MisfitEstimator {
public:
  InsideNormMisfit(const DataSet& ds, const DenseMat& w);
  std::string name() const override { return "insidenorm"; }

protected:
  Vector residual(const DenseMat& s) const override;
  DenseMat residual_adjoint(std::span<const double> r) const override;

private:
  DenseMat weights_;
  DenseMat w_;
};

/// (n_s / 2m) Σ_{j∈J} ‖C_j ⊙ (Pᵀ A⁻¹ Q_j − D_j)‖². Any C.
class SubsetMisfit final : public MisfitEstimator {
public:
  SubsetMisfit(const DataSet& ds, std::vector<std::size_t> subset);
  std::string name() const override { return "subset"; }
  const std::vector<std::size_t>& subset() const noexcept { return subset_; }

protected:
  Vector residual(const DenseMat& s) const override;
  DenseMat residual_adjoint(std::span<const double> r) const override;

private:
  std::vector<std::size_t> subset_;
  DenseMat weights_;  ///< n_r × m, the selected columns of C
};

EvalResult misfit_full(const DataSet& ds, const Model& u);
EvalResult estimate_simsrc(const DataSet& ds, const Model& u, const DenseMat& w);
EvalResult estimate_lowrank(const DataSet& ds, const Model& u, const DenseMat& w);
EvalResult estimate_insidenorm(const DataSet& ds, const Model& u, const DenseMat& w);
EvalResult estimate_subset(const DataSet& ds, const Model& u, const std::vector<std::size_t>& subset);

/// Uniformly drawn subset of m distinct source indices, returned sorted.
std::vector<std::size_t> draw_source_subset(Rng& rng, std::size_t n_s, std::size_t m);

Vector gn_curvature_apply(const MisfitEstimator& est, const EvalResult& at, const Model& u,
                          std::span<const double> x, std::size_t* solves = nullptr);

struct ReducedData {
  DenseMat data;
  std::size_t solve_count = 0;
};

/// D_red = Pᵀ A(u_red)⁻¹ Q on the same survey.
ReducedData compute_reduced_data(const ForwardProblem& fp, const Model& u_red);

/// Observed entries where the mask is set, reduced-model entries elsewhere.
/// Requires masked C and D_red.
DenseMat build_completed_data(const DataSet& ds);

/// The completed problem: D̂ with uniform weight σ⁻¹ taken from the mask.
DataSet completed_dataset(const DataSet& ds);

// ---------------------------------------------------------------------------
// Method selection

enum class EstimatorKind { FullDeterministic, SimSrcUniform, DataCompletion, LowRankSimSrc, InsideNorm, SourceSubset };

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::FullDeterministic;
  std::size_t rank = 1;    ///< k for LowRankSimSrc
  std::size_t subset = 1;  ///< initial subset size m for SourceSubset

  /// "full", "simsrc", "completion", "lowrank-<k>", "insidenorm", "subset-<m>".
  static EstimatorSpec parse(const std::string& label);
  std::string label() const;
  void validate() const;
};

/// The data an estimator of this kind works on: low-rank factors of C for
/// LowRankSimSrc, the completed uniform-weight problem for DataCompletion,
/// and `ds` unchanged otherwise.
DataSet prepare_method_data(const EstimatorSpec& spec, const DataSet& ds);

/// Estimator for one SAA round with sample size N, drawing its random
/// probes (or source subset) from `rng`. The subset size is min(n_s, m·N).
/// `prepared` must come from prepare_method_data and outlive the estimator.
std::unique_ptr<MisfitEstimator> make_round_estimator(const EstimatorSpec& spec, const DataSet& prepared,
                                                      Rng rng, std::size_t sample_size);

}  // namespace simsrc
