#pragma once

// Synthetic DC-resistivity experiments: configuration, data generation,
// end-to-end inversion runs, and CSV/PGM output.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "simsrc/forward_model.hpp"
#include "simsrc/objective.hpp"
#include "simsrc/optimizer.hpp"

namespace simsrc {

/// The five variance regimes, in reporting order.
enum class Regime { Uniform, PerDatum, Masked70, Masked40, Masked10 };

Regime parse_regime(const std::string& name);
std::string to_string(Regime regime);
/// Fraction of data kept: 1 for Uniform and PerDatum.
double kept_fraction(Regime regime);
/// Position of the regime in reporting order.
int regime_rank(Regime regime);

struct Inclusion {
  std::size_t i0 = 0, i1 = 0;  ///< cell columns [i0, i1)
  std::size_t j0 = 0, j1 = 0;  ///< cell rows [j0, j1), j = 0 at the surface
  double conductivity = 0.01;
};

struct TrueModelSpec {
  double background = 0.1;
  std::vector<Inclusion> inclusions;
};

/// Throws ConfigError for an empty or out-of-grid inclusion.
Model build_true_model(const Grid& grid, const TrueModelSpec& spec);

struct ExperimentConfig {
  std::string name = "experiment";
  Grid grid{24, 24, 1.0, 1.0};
  std::size_t n_src = 8;
  std::size_t n_rec = 12;
  SurveyLayout layout = SurveyLayout::Perimeter;
  TrueModelSpec truth{0.1, {Inclusion{8, 16, 4, 12, 0.01}}};
  double initial = 0.0;  ///< homogeneous starting conductivity, 0 = background
  double reduced = 0.0;  ///< homogeneous reduced model for completion, 0 = background
  double noise_percent = 1.0;
  Regime regime = Regime::PerDatum;
  EstimatorSpec method = EstimatorSpec::parse("lowrank-5");
  SaaParams saa;
  std::optional<double> tol;  ///< absent: tol_factor × target_misfit
  double tol_factor = 1.0;
  GnOptions gn;
  double solver_tol = 1e-8;
  std::uint64_t seed = 1;
  bool record_wall_time = true;

  ExperimentConfig();

  /// Throws ConfigError on invalid values or an incompatible regime/method pair.
  void validate() const;
};

/// INI-style text: `[section]` headers, `key = value` lines, `#` or `;`
/// comments. Unknown sections or keys are errors. See README for the keys.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Rows of a comparison suite expanded from a matrix file: the base config
/// sections plus `[suite]` with `regimes`, `methods` (whitespace separated;
/// incompatible pairs are skipped), optional `run = <regime> <method>` lines
/// instead, and `output`.
struct SuiteMatrix {
  std::vector<ExperimentConfig> runs;
  std::filesystem::path output = "suite.csv";
};

SuiteMatrix parse_suite_matrix(std::istream& in, const std::string& source = "<matrix>");
SuiteMatrix load_suite_matrix(const std::filesystem::path& path);

struct SyntheticProblem {
  Model truth;
  DenseMat clean;       ///< noise-free data
  DenseMat sigma;       ///< noise standard deviations used
  std::optional<DenseMat> mask;
  double uniform_sigma = 0.0;  ///< 1% (noise_percent) of mean |clean datum|
  DataSet data;                ///< observed data with the regime's C; missing entries zeroed
  std::uint64_t solve_count = 0;
};

/// Deterministic in (grid, survey, truth, noise, regime, seed). All regimes
/// with the same seed share the noise draw, and masks are nested: the
/// entries kept at 40% are a subset of those kept at 70%.
SyntheticProblem generate_synthetic(const ExperimentConfig& cfg);

struct RoundRecord {
  std::size_t k = 0;
  double alpha = 0.0;
  std::size_t n_samples = 0;
  double misfit = 0.0;
  double du_inf = 0.0;
  double du_rel = 0.0;
  std::size_t gn_iters = 0;
  std::size_t cg_iters = 0;
  std::size_t trial_evals = 0;  ///< line-search evaluations
  std::size_t probes = 0;       ///< solves per estimator evaluation
  std::uint64_t solves = 0;
  bool alpha_reduced = false;
  bool break_fired = false;
  bool stalled = false;
};

struct ExperimentReport {
  std::string method;
  std::string regime;
  std::size_t gn_iters = 0;
  std::uint64_t forward_solves = 0;  ///< every linear solve of the inversion, incl. setup
  double recovery_error = 0.0;
  double initial_error = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
  bool converged = false;
  bool reached_target = false;
  bool stalled = false;  ///< some Gauss-Newton line search ran out of backtracks
  double target = 0.0;
  std::uint64_t setup_solves = 0;   ///< e.g. reduced-model data for completion
  std::uint64_t ledger_solves = 0;  ///< setup + per-step ledger sum
  std::vector<RoundRecord> history;
  Model recovered;
  Model truth;
};

/// ‖u − u_true‖ / ‖u_true‖.
double recovery_error(const Model& u, const Model& truth);

/// Generates the data and runs the configured method through
/// saa_continuation. Throws std::logic_error if the scoped solve counter
/// disagrees with the ledger.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const RoundObserver& observer = {});

/// Data the configured method works on, with solves spent building it. In
/// masked regimes missing entries of D are filled from a homogeneous reduced
/// model (`reduced`, else the background), which costs n_src solves.
struct MethodData {
  DataSet data;
  std::uint64_t setup_solves = 0;
  double target = 0.0;
};
MethodData prepare_experiment_data(const ExperimentConfig& cfg, const SyntheticProblem& syn);

inline const char* kReportHeader = "method,gn_iters,forward_solves,recovery_error,wall_time_s,seed";
inline const char* kSuiteHeader = "regime,method,gn_iters,forward_solves,recovery_error,wall_time_s,seed";
inline const char* kHistoryHeader = "k,alpha,n_samples,misfit,du_inf,du_rel,gn_iters,cg_iters,solves,alpha_reduced,break";

void write_report_csv(std::ostream& out, const std::vector<ExperimentReport>& reports);
void write_suite_csv(std::ostream& out, const std::vector<ExperimentReport>& reports);
void write_history_csv(std::ostream& out, const ExperimentReport& report);
/// Parses what write_report_csv (or write_suite_csv) emitted.
std::vector<ExperimentReport> parse_report_csv(std::istream& in);

/// Writes the CSV; throws std::runtime_error naming the path on I/O failure.
void emit_report(const std::vector<ExperimentReport>& reports, const std::filesystem::path& path);
/// 8-bit binary PGM, one pixel per cell, surface row first, linear min–max
/// scaling; a constant model is uniform gray 128.
void emit_model_slice(const Model& u, const Grid& grid, const std::filesystem::path& path);
std::vector<unsigned char> model_slice_pixels(const Model& u, const Grid& grid);

/// Runs every config (sharing one seed, else ContractError) on up to `jobs`
/// threads and returns the reports sorted by regime order then input order.
std::vector<ExperimentReport> run_suite(const std::vector<ExperimentConfig>& configs, unsigned jobs = 1);
/// run_suite followed by write_suite_csv to `path`.
std::vector<ExperimentReport> compare_suite(const std::vector<ExperimentConfig>& configs,
                                            const std::filesystem::path& path, unsigned jobs = 1);

/// Randomized self-checks of the low-rank Hadamard identity and the
/// Rademacher trace identity. Prints one line per check; true if all pass.
bool lemma_check(std::ostream& out, std::uint64_t seed = 2024);

}  // namespace simsrc
