#include "simsrc/objective.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "simsrc/errors.hpp"

namespace simsrc {

struct EvalCache {
  Model u;
  SparseMat a;
  std::vector<Vector> fields;
};

void DataSet::validate() const {
  const std::size_t n_r = problem.n_receivers();
  const std::size_t n_s = problem.n_sources();
  if (observed.rows() != n_r || observed.cols() != n_s) {
    throw ContractError("DataSet: observed data is " + std::to_string(observed.rows()) + "x" +
                        std::to_string(observed.cols()) + " but the survey has " + std::to_string(n_r) +
                        " receivers and " + std::to_string(n_s) + " sources");
  }
  (void)variance.materialize(n_r, n_s);
  if (reduced && (reduced->rows() != n_r || reduced->cols() != n_s)) {
    throw ContractError("DataSet: reduced data shape mismatch");
  }
}

// ---------------------------------------------------------------------------
// MisfitEstimator

MisfitEstimator::MisfitEstimator(const DataSet& ds, DenseMat probes, double scale)
    : ds_(ds), probes_(std::move(probes)), scale_(scale) {
  ds_.validate();
  if (probes_.rows() != ds_.n_sources()) {
    throw ContractError("estimator: probe vectors must have one entry per source (" +
                        std::to_string(ds_.n_sources()) + "), got " + std::to_string(probes_.rows()));
  }
  if (probes_.cols() == 0) throw ContractError("estimator: at least one probe vector is required");
  data_probes_ = ds_.observed.multiply(probes_);
}

MisfitEstimator::~MisfitEstimator() = default;

EvalResult MisfitEstimator::evaluate(const Model& u) const {
  const ForwardProblem& fp = ds_.problem;
  const std::size_t p = probes_.cols();

  auto cache = std::make_shared<EvalCache>();
  cache->u = u;
  cache->a = assemble_operator(fp, u);

  std::vector<Vector> rhs(p);
  for (std::size_t c = 0; c < p; ++c) rhs[c] = fp.source_rhs(probes_.col(c));
  ForwardSolution fwd = forward_solve(fp, cache->a, rhs);

  DenseMat s(ds_.n_receivers(), p);
  for (std::size_t c = 0; c < p; ++c) s.set_col(c, fp.read_receivers(fwd.fields[c]));
  s = s - data_probes_;

  const Vector r = residual(s);
  EvalResult out;
  out.value = 0.5 * scale_ * dot(r, r);

  const DenseMat weighted = residual_adjoint(r);
  std::vector<Vector> adj_rhs(p);
  for (std::size_t c = 0; c < p; ++c) adj_rhs[c] = fp.spread_receivers(weighted.col(c));
  const ForwardSolution adj = forward_solve(fp, cache->a, adj_rhs);

  out.gradient.assign(fp.n_cells(), 0.0);
  for (std::size_t c = 0; c < p; ++c) {
    const Vector g = sensitivity_apply_transpose(fp, fwd.fields[c], adj.fields[c]);
    axpy(-scale_, g, out.gradient);
  }
  out.solve_count = fwd.solve_count + adj.solve_count;
  cache->fields = std::move(fwd.fields);
  out.aux = std::move(cache);
  return out;
}

Vector MisfitEstimator::curvature_apply(const EvalResult& at, const Model& u, std::span<const double> x,
                                        std::size_t* solves) const {
  if (!at.aux) throw ContractError("curvature_apply: evaluation carries no retained state");
  const EvalCache& cache = *at.aux;
  if (!(cache.u == u)) throw ContractError("curvature_apply: stale evaluation (model changed)");
  if (cache.fields.size() != probes_.cols()) {
    throw ContractError("curvature_apply: evaluation belongs to a different estimator");
  }
  const ForwardProblem& fp = ds_.problem;
  if (x.size() != fp.n_cells()) throw ContractError("curvature_apply: direction length mismatch");
  const std::size_t p = probes_.cols();

  std::vector<Vector> rhs(p);
  for (std::size_t c = 0; c < p; ++c) rhs[c] = sensitivity_apply(fp, cache.fields[c], x);
  const ForwardSolution dy = forward_solve(fp, cache.a, rhs);

  DenseMat ds(ds_.n_receivers(), p);
  for (std::size_t c = 0; c < p; ++c) {
    Vector col = fp.read_receivers(dy.fields[c]);
    scale(-1.0, col);
    ds.set_col(c, col);
  }
  const Vector jx = residual(ds);
  const DenseMat weighted = residual_adjoint(jx);

  std::vector<Vector> adj_rhs(p);
  for (std::size_t c = 0; c < p; ++c) adj_rhs[c] = fp.spread_receivers(weighted.col(c));
  const ForwardSolution adj = forward_solve(fp, cache.a, adj_rhs);

  Vector out(fp.n_cells(), 0.0);
  for (std::size_t c = 0; c < p; ++c) {
    const Vector g = sensitivity_apply_transpose(fp, cache.fields[c], adj.fields[c]);
    axpy(-scale_, g, out);
  }
  if (solves) *solves += dy.solve_count + adj.solve_count;
  return out;
}

// ---------------------------------------------------------------------------
// Concrete estimators

namespace {

Vector flatten(const DenseMat& m) { return Vector(m.data().begin(), m.data().end()); }

DenseMat unflatten(std::span<const double> r, std::size_t rows, std::size_t cols) {
  if (r.size() != rows * cols) throw ContractError("estimator: residual length mismatch");
  return DenseMat(rows, cols, Vector(r.begin(), r.end()));
}

void require_probe_count(const DataSet& ds, const DenseMat& w, const char* what) {
  if (w.rows() != ds.n_sources()) {
    throw ContractError(std::string(what) + ": sample matrix needs " + std::to_string(ds.n_sources()) +
                        " rows, got " + std::to_string(w.rows()));
  }
  if (w.cols() == 0) throw ContractError(std::string(what) + ": sample count N must be positive");
}

double uniform_sigma_inv(const DataSet& ds) {
  const auto* u = std::get_if<UniformVariance>(&ds.variance.representation());
  if (!u) {
    throw ContractError("estimate_simsrc: simultaneous sources need a uniform variance matrix, got " +
                        ds.variance.kind_name() +
                        "; use the completion, low-rank, inside-norm or subset estimators instead");
  }
  return u->sigma_inv;
}

const LowRankVariance& low_rank_factors(const DataSet& ds) {
  const auto* l = std::get_if<LowRankVariance>(&ds.variance.representation());
  if (!l) throw ContractError("estimate_lowrank: variance matrix is " + ds.variance.kind_name() + ", not low-rank");
  if (l->x.rows() != ds.n_receivers() || l->z.rows() != ds.n_sources()) {
    throw ContractError("estimate_lowrank: factor shapes do not match the data");
  }
  return *l;
}

DenseMat lowrank_probes(const DataSet& ds, const DenseMat& w) {
  require_probe_count(ds, w, "estimate_lowrank");
  const DenseMat& z = low_rank_factors(ds).z;
  const std::size_t k = z.cols();
  DenseMat v(w.rows(), w.cols() * k);
  for (std::size_t i = 0; i < w.cols(); ++i)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t s = 0; s < w.rows(); ++s) v(s, i * k + j) = z(s, j) * w(s, i);
  return v;
}

DenseMat unit_probes(std::size_t n_s, const std::vector<std::size_t>& idx) {
  DenseMat v(n_s, idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) v(idx[c], c) = 1.0;
  return v;
}

const std::vector<std::size_t>& checked_subset(const DataSet& ds, const std::vector<std::size_t>& subset) {
  if (subset.empty()) throw ContractError("estimate_subset: source subset is empty");
  std::set<std::size_t> seen;
  for (std::size_t j : subset) {
    if (j >= ds.n_sources()) throw ContractError("estimate_subset: source index out of range");
    if (!seen.insert(j).second) throw ContractError("estimate_subset: repeated source index");
  }
  return subset;
}

std::vector<std::size_t> all_sources(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

FullMisfit::FullMisfit(const DataSet& ds)
    : MisfitEstimator(ds, unit_probes(ds.n_sources(), all_sources(ds.n_sources())), 1.0),
      weights_(ds.variance.materialize(ds.n_receivers(), ds.n_sources())) {}

Vector FullMisfit::residual(const DenseMat& s) const { return flatten(hadamard(weights_, s)); }

DenseMat FullMisfit::residual_adjoint(std::span<const double> r) const {
  return hadamard(weights_, unflatten(r, weights_.rows(), weights_.cols()));
}

SimSrcMisfit::SimSrcMisfit(const DataSet& ds, const DenseMat& w)
    : MisfitEstimator(ds, (require_probe_count(ds, w, "estimate_simsrc"), w),
                      1.0 / static_cast<double>(w.cols())),
      sigma_inv_(uniform_sigma_inv(ds)) {}

Vector SimSrcMisfit::residual(const DenseMat& s) const {
  Vector r = flatten(s);
  scale(sigma_inv_, r);
  return r;
}

DenseMat SimSrcMisfit::residual_adjoint(std::span<const double> r) const {
  return sigma_inv_ * unflatten(r, data().n_receivers(), probe_count());
}

LowRankMisfit::LowRankMisfit(const DataSet& ds, const DenseMat& w)
    : MisfitEstimator(ds, lowrank_probes(ds, w), 1.0 / static_cast<double>(w.cols())),
      x_(low_rank_factors(ds).x),
      n_samples_(w.cols()) {}

Vector LowRankMisfit::residual(const DenseMat& s) const {
  const std::size_t n_r = x_.rows();
  const std::size_t k = x_.cols();
  Vector r(n_r * n_samples_, 0.0);
  for (std::size_t i = 0; i < n_samples_; ++i)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t a = 0; a < n_r; ++a) r[i * n_r + a] += x_(a, j) * s(a, i * k + j);
  return r;
}

DenseMat LowRankMisfit::residual_adjoint(std::span<const double> r) const {
  const std::size_t n_r = x_.rows();
  const std::size_t k = x_.cols();
  if (r.size() != n_r * n_samples_) throw ContractError("estimate_lowrank: residual length mismatch");
  DenseMat out(n_r, n_samples_ * k);
  for (std::size_t i = 0; i < n_samples_; ++i)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t a = 0; a < n_r; ++a) out(a, i * k + j) = x_(a, j) * r[i * n_r + a];
  return out;
}

InsideNormMisfit::InsideNormMisfit(const DataSet& ds, const DenseMat& w)
    : MisfitEstimator(ds, (require_probe_count(ds, w, "estimate_insidenorm"), w), 1.0),
      weights_(ds.variance.materialize(ds.n_receivers(), ds.n_sources())),
      w_(w) {}

Vector InsideNormMisfit::residual(const DenseMat& s) const {
  DenseMat m = s.multiply(w_.transpose());
  scale(1.0 / static_cast<double>(w_.cols()), m.data());
  return flatten(hadamard(weights_, m));
}

DenseMat InsideNormMisfit::residual_adjoint(std::span<const double> r) const {
  DenseMat out = hadamard(weights_, unflatten(r, weights_.rows(), weights_.cols())).multiply(w_);
  scale(1.0 / static_cast<double>(w_.cols()), out.data());
  return out;
}

SubsetMisfit::SubsetMisfit(const DataSet& ds, std::vector<std::size_t> subset)
    : MisfitEstimator(ds, unit_probes(ds.n_sources(), checked_subset(ds, subset)),
                      static_cast<double>(ds.n_sources()) / static_cast<double>(subset.size())),
      subset_(std::move(subset)) {
  const DenseMat c = ds.variance.materialize(ds.n_receivers(), ds.n_sources());
  weights_ = DenseMat(c.rows(), subset_.size());
  for (std::size_t k = 0; k < subset_.size(); ++k) weights_.set_col(k, c.col(subset_[k]));
}

Vector SubsetMisfit::residual(const DenseMat& s) const { return flatten(hadamard(weights_, s)); }

DenseMat SubsetMisfit::residual_adjoint(std::span<const double> r) const {
  return hadamard(weights_, unflatten(r, weights_.rows(), weights_.cols()));
}

// ---------------------------------------------------------------------------
// Free-function entry points

EvalResult misfit_full(const DataSet& ds, const Model& u) { return FullMisfit(ds).evaluate(u); }

EvalResult estimate_simsrc(const DataSet& ds, const Model& u, const DenseMat& w) {
  return SimSrcMisfit(ds, w).evaluate(u);
}

EvalResult estimate_lowrank(const DataSet& ds, const Model& u, const DenseMat& w) {
  return LowRankMisfit(ds, w).evaluate(u);
}

EvalResult estimate_insidenorm(const DataSet& ds, const Model& u, const DenseMat& w) {
  return InsideNormMisfit(ds, w).evaluate(u);
}

EvalResult estimate_subset(const DataSet& ds, const Model& u, const std::vector<std::size_t>& subset) {
  return SubsetMisfit(ds, subset).evaluate(u);
}

std::vector<std::size_t> draw_source_subset(Rng& rng, std::size_t n_s, std::size_t m) {
  if (m == 0) throw ContractError("draw_source_subset: subset size must be positive");
  auto subset = sample_without_replacement(rng, n_s, m);
  std::sort(subset.begin(), subset.end());
  return subset;
}

Vector gn_curvature_apply(const MisfitEstimator& est, const EvalResult& at, const Model& u,
                          std::span<const double> x, std::size_t* solves) {
  return est.curvature_apply(at, u, x, solves);
}

ReducedData compute_reduced_data(const ForwardProblem& fp, const Model& u_red) {
  const std::size_t n_s = fp.n_sources();
  std::vector<Vector> rhs(n_s);
  for (std::size_t j = 0; j < n_s; ++j) {
    Vector e(n_s, 0.0);
    e[j] = 1.0;
    rhs[j] = fp.source_rhs(e);
  }
  const ForwardSolution sol = forward_solve(fp, u_red, rhs);
  ReducedData out{DenseMat(fp.n_receivers(), n_s), sol.solve_count};
  for (std::size_t j = 0; j < n_s; ++j) out.data.set_col(j, fp.read_receivers(sol.fields[j]));
  return out;
}

DenseMat build_completed_data(const DataSet& ds) {
  const auto* m = std::get_if<MaskedVariance>(&ds.variance.representation());
  if (!m) throw ContractError("build_completed_data: variance matrix must be masked, got " + ds.variance.kind_name());
  if (!ds.reduced) throw ContractError("build_completed_data: reduced-model data D_red is missing");
  ds.validate();
  DenseMat out = ds.observed;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (m->mask.data()[k] == 0.0) out.data()[k] = ds.reduced->data()[k];
  }
  return out;
}

DataSet completed_dataset(const DataSet& ds) {
  DenseMat completed = build_completed_data(ds);
  const double sigma_inv = std::get<MaskedVariance>(ds.variance.representation()).sigma_inv;
  return DataSet{std::move(completed), VarianceMatrix::uniform(sigma_inv), ds.problem, ds.reduced};
}

// ---------------------------------------------------------------------------
// Method selection

namespace {

std::size_t parse_suffix(const std::string& label, const std::string& prefix) {
  const std::string digits = label.substr(prefix.size());
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
    throw ContractError("estimator label '" + label + "' needs a positive integer after '" + prefix + "'");
  }
  const std::size_t v = std::stoul(digits);
  if (v == 0) throw ContractError("estimator label '" + label + "': parameter must be positive");
  return v;
}

}  // namespace

EstimatorSpec EstimatorSpec::parse(const std::string& label) {
  EstimatorSpec s;
  if (label == "full") {
    s.kind = EstimatorKind::FullDeterministic;
  } else if (label == "simsrc") {
    s.kind = EstimatorKind::SimSrcUniform;
  } else if (label == "completion") {
    s.kind = EstimatorKind::DataCompletion;
  } else if (label == "insidenorm") {
    s.kind = EstimatorKind::InsideNorm;
  } else if (label.rfind("lowrank-", 0) == 0) {
    s.kind = EstimatorKind::LowRankSimSrc;
    s.rank = parse_suffix(label, "lowrank-");
  } else if (label.rfind("subset-", 0) == 0) {
    s.kind = EstimatorKind::SourceSubset;
    s.subset = parse_suffix(label, "subset-");
  } else {
    throw ContractError("unknown estimator '" + label + "'");
  }
  return s;
}

std::string EstimatorSpec::label() const {
  switch (kind) {
    case EstimatorKind::FullDeterministic: return "full";
    case EstimatorKind::SimSrcUniform: return "simsrc";
    case EstimatorKind::DataCompletion: return "completion";
    case EstimatorKind::LowRankSimSrc: return "lowrank-" + std::to_string(rank);
    case EstimatorKind::InsideNorm: return "insidenorm";
    case EstimatorKind::SourceSubset: return "subset-" + std::to_string(subset);
  }
  return "unknown";
}

void EstimatorSpec::validate() const {
  if (kind == EstimatorKind::LowRankSimSrc && rank == 0) throw ContractError("low-rank estimator needs k ≥ 1");
  if (kind == EstimatorKind::SourceSubset && subset == 0) throw ContractError("subset estimator needs m ≥ 1");
}

DataSet prepare_method_data(const EstimatorSpec& spec, const DataSet& ds) {
  spec.validate();
  ds.validate();
  switch (spec.kind) {
    case EstimatorKind::LowRankSimSrc: {
      DataSet out = ds;
      out.variance = lowrank_approximate(ds.variance, spec.rank, ds.n_receivers(), ds.n_sources());
      return out;
    }
    case EstimatorKind::DataCompletion:
      return completed_dataset(ds);
    case EstimatorKind::SimSrcUniform:
      (void)uniform_sigma_inv(ds);
      return ds;
    default:
      return ds;
  }
}

std::unique_ptr<MisfitEstimator> make_round_estimator(const EstimatorSpec& spec, const DataSet& prepared,
                                                      Rng rng, std::size_t sample_size) {
  if (sample_size == 0) throw ContractError("make_round_estimator: sample size must be positive");
  const std::size_t n_s = prepared.n_sources();
  switch (spec.kind) {
    case EstimatorKind::FullDeterministic:
      return std::make_unique<FullMisfit>(prepared);
    case EstimatorKind::SimSrcUniform:
    case EstimatorKind::DataCompletion:
      return std::make_unique<SimSrcMisfit>(prepared, sample_rademacher(rng, n_s, sample_size));
    case EstimatorKind::LowRankSimSrc:
      return std::make_unique<LowRankMisfit>(prepared, sample_rademacher(rng, n_s, sample_size));
    case EstimatorKind::InsideNorm:
      return std::make_unique<InsideNormMisfit>(prepared, sample_rademacher(rng, n_s, sample_size));
    case EstimatorKind::SourceSubset: {
      const std::size_t m = std::min(n_s, spec.subset * sample_size);
      return std::make_unique<SubsetMisfit>(prepared, draw_source_subset(rng, n_s, m));
    }
  }
  throw ContractError("make_round_estimator: unknown estimator kind");
}

}  // namespace simsrc
