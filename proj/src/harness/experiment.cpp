#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <stdexcept>

#include "simsrc/errors.hpp"
#include "simsrc/harness.hpp"
#include "simsrc/solve_tally.hpp"

namespace simsrc {

namespace {

// Substreams of the experiment seed.
constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kMaskStream = 2;
constexpr std::uint64_t kSampleStream = 3;

}  // namespace

Regime parse_regime(const std::string& name) {
  if (name == "uniform") return Regime::Uniform;
  if (name == "per-datum") return Regime::PerDatum;
  if (name == "masked-70") return Regime::Masked70;
  if (name == "masked-40") return Regime::Masked40;
  if (name == "masked-10") return Regime::Masked10;
  throw ContractError("unknown regime '" + name +
                      "' (expected uniform, per-datum, masked-70, masked-40 or masked-10)");
}

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::Uniform: return "uniform";
    case Regime::PerDatum: return "per-datum";
    case Regime::Masked70: return "masked-70";
    case Regime::Masked40: return "masked-40";
    case Regime::Masked10: return "masked-10";
  }
  return "unknown";
}

double kept_fraction(Regime regime) {
  switch (regime) {
    case Regime::Masked70: return 0.7;
    case Regime::Masked40: return 0.4;
    case Regime::Masked10: return 0.1;
    default: return 1.0;
  }
}

int regime_rank(Regime regime) { return static_cast<int>(regime); }

Model build_true_model(const Grid& grid, const TrueModelSpec& spec) {
  if (!(spec.background > 0.0) || !std::isfinite(spec.background)) {
    throw ConfigError("model: background conductivity must be positive");
  }
  Vector u(grid.n_cells(), spec.background);
  for (const Inclusion& inc : spec.inclusions) {
    if (inc.i0 >= inc.i1 || inc.j0 >= inc.j1) throw ConfigError("model: inclusion is empty");
    if (inc.i1 > grid.nx || inc.j1 > grid.ny) {
      throw ConfigError("model: inclusion [" + std::to_string(inc.i0) + "," + std::to_string(inc.i1) + ")x[" +
                        std::to_string(inc.j0) + "," + std::to_string(inc.j1) + ") lies outside the " +
                        std::to_string(grid.nx) + "x" + std::to_string(grid.ny) + " grid");
    }
    if (!(inc.conductivity > 0.0) || !std::isfinite(inc.conductivity)) {
      throw ConfigError("model: inclusion conductivity must be positive");
    }
    for (std::size_t j = inc.j0; j < inc.j1; ++j)
      for (std::size_t i = inc.i0; i < inc.i1; ++i) u[grid.cell(i, j)] = inc.conductivity;
  }
  return Model(std::move(u));
}

ExperimentConfig::ExperimentConfig() {
  saa.alpha0 = 1000.0;
  gn.smoothing_shift = 1e-2;
}

void ExperimentConfig::validate() const {
  try {
    grid.validate();
    (void)place_sources_receivers(grid, n_src, n_rec, layout);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("survey: ") + e.what());
  }
  (void)build_true_model(grid, truth);
  if (!(noise_percent >= 0.0) || !std::isfinite(noise_percent)) throw ConfigError("noise: percent must be ≥ 0");
  if (!(initial >= 0.0) || !(reduced >= 0.0)) throw ConfigError("model: initial and reduced must be ≥ 0");
  if (!(solver_tol > 0.0 && solver_tol < 1.0)) throw ConfigError("solver: tol must lie in (0, 1)");
  if (!(tol_factor > 0.0)) throw ConfigError("saa: tol_factor must be positive");
  if (tol && !(*tol >= 0.0)) throw ConfigError("saa: tol must be ≥ 0");
  if (gn.cg_max == 0) throw ConfigError("gn: cg_max must be positive");
  if (!(gn.smoothing_shift >= 0.0) || !std::isfinite(gn.smoothing_shift)) throw ConfigError("gn: smoothing must be ≥ 0");
  try {
    SaaParams p = saa;
    p.tol = 0.0;
    p.validate();
    method.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }

  const bool masked = kept_fraction(regime) < 1.0;
  const std::string pair = to_string(regime) + "/" + method.label();
  switch (method.kind) {
    case EstimatorKind::DataCompletion:
      if (!masked) throw ConfigError(pair + ": data completion needs a masked regime");
      break;
    case EstimatorKind::SimSrcUniform:
      if (regime != Regime::Uniform) throw ConfigError(pair + ": simultaneous sources need the uniform regime");
      break;
    case EstimatorKind::LowRankSimSrc:
      if (method.rank > std::min(n_src, n_rec)) {
        throw ConfigError(pair + ": rank exceeds min(sources, receivers)");
      }
      break;
    case EstimatorKind::SourceSubset:
      if (method.subset > n_src) throw ConfigError(pair + ": subset size exceeds the number of sources");
      break;
    default:
      break;
  }
}

SyntheticProblem generate_synthetic(const ExperimentConfig& cfg) {
  cfg.validate();
  SolveTally tally;
  const Survey survey = place_sources_receivers(cfg.grid, cfg.n_src, cfg.n_rec, cfg.layout);
  ForwardProblem fp(cfg.grid, survey, SolverOptions{cfg.solver_tol, 0});

  Model truth = build_true_model(cfg.grid, cfg.truth);
  DenseMat clean = compute_reduced_data(fp, truth).data;

  const std::size_t n_r = clean.rows();
  const std::size_t n_s = clean.cols();
  Vector mags(clean.size());
  for (std::size_t k = 0; k < mags.size(); ++k) mags[k] = std::abs(clean.data()[k]);
  double mean = 0.0;
  for (double v : mags) mean += v;
  mean /= static_cast<double>(mags.size());
  Vector sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t h = sorted.size() / 2;
  const double median = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);

  // With zero noise the weights still use the nominal 1% level.
  const double noise = cfg.noise_percent / 100.0;
  const double weight = cfg.noise_percent > 0.0 ? noise : 0.01;
  const double uniform_sigma = weight * mean;
  if (!(uniform_sigma > 0.0)) throw ConfigError("synthetic: all data are zero, cannot set noise levels");

  DenseMat sigma(n_r, n_s);
  for (std::size_t k = 0; k < mags.size(); ++k) {
    sigma.data()[k] = cfg.regime == Regime::Uniform ? uniform_sigma : weight * std::max(mags[k], median);
  }

  Rng noise_rng = Rng(cfg.seed).derive(kNoiseStream);
  DenseMat observed = clean;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    const double z = noise_rng.normal();
    observed.data()[k] += (noise / weight) * sigma.data()[k] * z;
  }

  DenseMat c(n_r, n_s);
  for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] = 1.0 / sigma.data()[k];

  std::optional<DenseMat> mask;
  if (kept_fraction(cfg.regime) < 1.0) {
    Rng mask_rng = Rng(cfg.seed).derive(kMaskStream);
    mask = mask_from_fraction(mask_rng, n_r, n_s, kept_fraction(cfg.regime));
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (mask->data()[k] == 0.0) {
        observed.data()[k] = 0.0;
        c.data()[k] = 0.0;
      }
    }
  }

  VarianceMatrix var = cfg.regime == Regime::Uniform ? VarianceMatrix::uniform(1.0 / uniform_sigma)
                                                     : VarianceMatrix::dense(std::move(c));
  DataSet data{std::move(observed), std::move(var), std::move(fp), std::nullopt};
  return SyntheticProblem{std::move(truth), std::move(clean), std::move(sigma), std::move(mask), uniform_sigma,
                          std::move(data),  tally.count()};
}

MethodData prepare_experiment_data(const ExperimentConfig& cfg, const SyntheticProblem& syn) {
  SolveTally tally;
  MethodData md{syn.data, 0, 0.0};
  if (!syn.mask) {
    if (cfg.method.kind == EstimatorKind::DataCompletion) throw ConfigError("completion: the regime has no mask");
    md.data = prepare_method_data(cfg.method, syn.data);
    md.target = target_misfit(syn.data);
    md.setup_solves = tally.count();
    return md;
  }

  // Missing entries hold the reduced-model prediction rather than zero, so
  // estimators that cannot weight them exactly zero (low-rank C, cross terms
  // of the inside-norm average) are pulled toward u_red instead of u → ∞.
  const double u_red = cfg.reduced > 0.0 ? cfg.reduced : cfg.truth.background;
  const ForwardProblem& fp = syn.data.problem;
  DenseMat reduced = compute_reduced_data(fp, Model::constant(fp.n_cells(), u_red)).data;
  DataSet filled = syn.data;
  for (std::size_t k = 0; k < reduced.size(); ++k)
    if (syn.mask->data()[k] == 0.0) filled.observed.data()[k] = reduced.data()[k];
  filled.reduced = std::move(reduced);

  if (cfg.method.kind == EstimatorKind::DataCompletion) {
    const DataSet masked{filled.observed, VarianceMatrix::masked(1.0 / syn.uniform_sigma, *syn.mask), fp,
                         filled.reduced};
    md.data = prepare_method_data(cfg.method, masked);
    md.target = target_misfit(md.data);
  } else {
    md.data = prepare_method_data(cfg.method, filled);
    md.target = target_misfit(syn.data);
  }
  md.setup_solves = tally.count();
  return md;
}

double recovery_error(const Model& u, const Model& truth) {
  if (u.size() != truth.size()) throw ContractError("recovery_error: model sizes differ");
  Vector diff = u.values();
  axpy(-1.0, truth.values(), diff);
  return norm2(diff) / norm2(truth.values());
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RoundObserver& observer) {
  const auto t0 = std::chrono::steady_clock::now();
  const SyntheticProblem syn = generate_synthetic(cfg);

  SolveTally tally;
  const MethodData md = prepare_experiment_data(cfg, syn);
  const RegOperator reg = RegOperator::from_grid(cfg.grid);
  SaaParams params = cfg.saa;
  params.tol = cfg.tol ? *cfg.tol : cfg.tol_factor * md.target;
  const EstimatorFactory factory =
      round_estimator_factory(cfg.method, md.data, Rng(cfg.seed).derive(kSampleStream).seed());
  const double u_init = cfg.initial > 0.0 ? cfg.initial : cfg.truth.background;
  const Model u0 = Model::constant(cfg.grid.n_cells(), u_init);

  const SaaState st = saa_continuation(factory, reg, params, u0, cfg.gn, observer);

  ExperimentReport rep;
  rep.method = cfg.method.label();
  rep.regime = to_string(cfg.regime);
  rep.gn_iters = st.total_gn_iters();
  rep.setup_solves = md.setup_solves;
  rep.ledger_solves = md.setup_solves + st.total_solves();
  rep.forward_solves = tally.count();
  if (rep.forward_solves != rep.ledger_solves) {
    throw std::logic_error("solve counter " + std::to_string(rep.forward_solves) + " disagrees with ledger " +
                           std::to_string(rep.ledger_solves));
  }
  rep.recovery_error = recovery_error(st.u, syn.truth);
  rep.initial_error = recovery_error(u0, syn.truth);
  rep.seed = cfg.seed;
  rep.converged = st.converged;
  rep.reached_target = st.reached_target;
  rep.target = params.tol;
  for (const SaaRound& r : st.history) {
    rep.stalled = rep.stalled || r.stalled;
    std::size_t trials = 0;
    for (const GnStepRecord& s : r.gn.steps) trials += s.trial_evals;
    rep.history.push_back({r.k, r.alpha, r.n_samples, r.misfit, r.du_inf, r.du_rel, r.gn_iters, r.cg_iters, trials,
                           r.probes, r.solve_count, r.alpha_reduced, r.break_fired, r.stalled});
  }
  rep.recovered = st.u;
  rep.truth = syn.truth;
  if (cfg.record_wall_time) {
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return rep;
}

std::vector<ExperimentReport> run_suite(const std::vector<ExperimentConfig>& configs, unsigned jobs) {
  for (const auto& c : configs) {
    if (c.seed != configs.front().seed) {
      throw ContractError("compare_suite: configs use different seeds (" + std::to_string(configs.front().seed) +
                          " and " + std::to_string(c.seed) + "); comparisons must share one data set");
    }
  }
  std::vector<ExperimentReport> reports(configs.size());
  const std::size_t width = std::max<std::size_t>(1, jobs);
  for (std::size_t start = 0; start < configs.size(); start += width) {
    std::vector<std::future<ExperimentReport>> batch;
    const std::size_t stop = std::min(configs.size(), start + width);
    for (std::size_t i = start; i < stop; ++i) {
      batch.push_back(std::async(width == 1 ? std::launch::deferred : std::launch::async,
                                 [&cfg = configs[i]] { return run_experiment(cfg); }));
    }
    for (std::size_t i = start; i < stop; ++i) reports[i] = batch[i - start].get();
  }
  std::vector<std::size_t> order(configs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return regime_rank(configs[a].regime) < regime_rank(configs[b].regime);
  });
  std::vector<ExperimentReport> sorted;
  sorted.reserve(reports.size());
  for (std::size_t i : order) sorted.push_back(std::move(reports[i]));
  return sorted;
}

std::vector<ExperimentReport> compare_suite(const std::vector<ExperimentConfig>& configs,
                                            const std::filesystem::path& path, unsigned jobs) {
  auto reports = run_suite(configs, jobs);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_suite_csv(out, reports);
  if (!out) throw std::runtime_error("failed writing " + path.string());
  return reports;
}

}  // namespace simsrc
