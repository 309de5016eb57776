// simsrc: run synthetic DC-resistivity inversions and comparison suites.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "simsrc/errors.hpp"
#include "simsrc/harness.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNotConverged = 3;

void print_summary(const simsrc::ExperimentReport& r) {
  std::cout << r.regime << '/' << r.method << ": recovery error " << r.recovery_error << " (initial "
            << r.initial_error << "), " << r.gn_iters << " GN iterations, " << r.forward_solves
            << " solves, " << r.history.size() << " rounds" << (r.converged ? "" : ", not converged")
            << (r.reached_target ? "" : ", target misfit not reached") << (r.stalled ? ", line search stalled" : "")
            << '\n';
}

int run_command(const fs::path& config, const fs::path& out_dir, std::optional<std::uint64_t> seed) {
  simsrc::ExperimentConfig cfg = simsrc::load_config(config);
  if (seed) cfg.seed = *seed;
  fs::create_directories(out_dir);

  const simsrc::ExperimentReport rep = simsrc::run_experiment(cfg);
  simsrc::emit_report({rep}, out_dir / "report.csv");
  {
    std::ofstream hist(out_dir / "history.csv", std::ios::binary);
    if (!hist) throw std::runtime_error("cannot open " + (out_dir / "history.csv").string() + " for writing");
    simsrc::write_history_csv(hist, rep);
  }
  simsrc::emit_model_slice(rep.recovered, cfg.grid, out_dir / "recovered.pgm");
  simsrc::emit_model_slice(rep.truth, cfg.grid, out_dir / "truth.pgm");
  print_summary(rep);
  return rep.converged ? kExitOk : kExitNotConverged;
}

int suite_command(const fs::path& matrix, std::optional<fs::path> out, unsigned jobs) {
  const simsrc::SuiteMatrix m = simsrc::load_suite_matrix(matrix);
  fs::path target = out ? *out : m.output;
  if (target.is_relative() && !out) target = matrix.parent_path() / target;
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const auto reports = simsrc::compare_suite(m.runs, target, jobs);
  bool all_converged = true;
  for (const auto& r : reports) {
    print_summary(r);
    all_converged = all_converged && r.converged;
  }
  std::cout << "wrote " << target.string() << '\n';
  return all_converged ? kExitOk : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simultaneous-source DC resistivity inversion experiments"};
  app.require_subcommand(1);

  fs::path config;
  fs::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config, "Experiment config file")->required();
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--seed", seed, "Override the config seed");

  fs::path matrix;
  std::optional<fs::path> suite_out;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* suite = app.add_subcommand("suite", "Run a comparison suite");
  suite->add_option("--matrix", matrix, "Suite matrix file")->required();
  suite->add_option("--out", suite_out, "Output CSV (overrides the matrix file)");
  suite->add_option("--jobs", jobs, "Experiments run in parallel")->check(CLI::PositiveNumber);

  app.add_subcommand("lemma-check", "Check the low-rank Hadamard and trace identities");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return run_command(config, out_dir, seed);
    if (suite->parsed()) return suite_command(matrix, suite_out, jobs);
    return simsrc::lemma_check(std::cout) ? kExitOk : kExitFailure;
  } catch (const simsrc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
