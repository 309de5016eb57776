#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../oracles.hpp"
#include "simsrc/errors.hpp"
#include "simsrc/harness.hpp"
#include "simsrc/solve_tally.hpp"

using namespace simsrc;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.ini");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("simsrc_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig small_config() {
  return parse(R"(
[grid]
nx = 10
ny = 10
[survey]
sources = 4
receivers = 6
[model]
inclusion = 3 7 3 7 0.02
[noise]
percent = 0
regime = uniform
[method]
name = full
[saa]
alpha0 = 10
max_outer = 6
[run]
record_wall_time = false
)");
}

}  // namespace

TEST_CASE("config defaults and overrides") {
  const ExperimentConfig d = parse("");
  CHECK(d.grid.nx == 24);
  CHECK(d.n_src == 8);
  CHECK(d.n_rec == 12);
  CHECK(d.regime == Regime::PerDatum);
  CHECK(d.saa.gamma == 0.5);
  CHECK(d.saa.tau == 1e-2);
  CHECK(d.saa.beta == 2.0);
  CHECK(d.gn.cg_max == 5);

  const ExperimentConfig c = parse(R"(
# comment
[grid]
nx = 12   ; trailing comment
[model]
inclusion = 1 3 1 3 0.5
inclusion = 5 6 5 6 0.02
[method]
name = subset-2
[saa]
tol = 7.5
break = absolute
[run]
seed = 99
)");
  CHECK(c.grid.nx == 12);
  CHECK(c.truth.inclusions.size() == 2);
  CHECK(c.method.label() == "subset-2");
  CHECK(*c.tol == 7.5);
  CHECK(!c.saa.relative_break);
  CHECK(c.seed == 99);
}

TEST_CASE("config errors name the line") {
  CHECK(error_of("[grid]\nnx = 10\nbogus = 1\n").find("test.ini:3:") == 0);
  CHECK(error_of("[nowhere]\nx = 1\n").find("unknown section") != std::string::npos);
  CHECK(error_of("[grid]\nnx = ten\n").find("test.ini:2:") == 0);
  CHECK_FALSE(error_of("[model]\ninclusion = 20 30 0 2 0.01\n").empty());
  CHECK_FALSE(error_of("[noise]\nregime = uniform\n[method]\nname = completion\n").empty());
  CHECK_FALSE(error_of("[method]\nname = simsrc\n").empty());
  CHECK_FALSE(error_of("[method]\nname = lowrank-9\n").empty());
  CHECK_FALSE(error_of("[saa]\nbeta = 1\n").empty());
}

TEST_CASE("suite matrix skips incompatible pairs") {
  std::istringstream in(R"(
[suite]
regimes = uniform masked-40
methods = simsrc completion full
output = out.csv
)");
  const SuiteMatrix m = parse_suite_matrix(in);
  REQUIRE(m.runs.size() == 4);
  CHECK(m.runs[0].name == "uniform/simsrc");
  CHECK(m.runs[1].name == "uniform/full");
  CHECK(m.runs[2].name == "masked-40/completion");
  CHECK(m.runs[3].name == "masked-40/full");
  CHECK(m.output == "out.csv");

  std::istringstream strict("[suite]\nrun = uniform completion\n");
  CHECK_THROWS_AS(parse_suite_matrix(strict), ConfigError);
}

TEST_CASE("true model and recovery error") {
  const Grid g{4, 3, 1.0, 1.0};
  const Model u = build_true_model(g, TrueModelSpec{0.1, {Inclusion{1, 3, 0, 2, 0.5}}});
  CHECK(u[g.cell(0, 0)] == 0.1);
  CHECK(u[g.cell(1, 0)] == 0.5);
  CHECK(u[g.cell(2, 1)] == 0.5);
  CHECK(u[g.cell(3, 1)] == 0.1);
  CHECK(u[g.cell(1, 2)] == 0.1);
  CHECK_THROWS_AS(build_true_model(g, TrueModelSpec{0.1, {Inclusion{1, 1, 0, 2, 0.5}}}), ConfigError);

  const Model a(Vector{1.0, 2.0, 3.0}), t(Vector{1.0, 1.0, 1.0});
  CHECK(recovery_error(a, t) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(recovery_error(t, t) == 0.0);
}

TEST_CASE("noise-free synthetic data equal the forward data") {
  ExperimentConfig cfg = small_config();
  const SyntheticProblem syn = generate_synthetic(cfg);
  CHECK(syn.data.observed == syn.clean);
  CHECK(syn.clean == compute_reduced_data(syn.data.problem, syn.truth).data);
}

TEST_CASE("per-datum noise has the half-normal median") {
  ExperimentConfig cfg;
  cfg.n_src = 40;
  cfg.n_rec = 60;
  cfg.seed = 5;
  const SyntheticProblem syn = generate_synthetic(cfg);
  std::vector<double> z;
  for (std::size_t i = 0; i < syn.clean.size(); ++i)
    z.push_back(std::abs(syn.data.observed.data()[i] - syn.clean.data()[i]) / syn.sigma.data()[i]);
  std::nth_element(z.begin(), z.begin() + static_cast<long>(z.size() / 2), z.end());
  CHECK(std::abs(z[z.size() / 2] - oracle::kHalfNormalMedian) < 0.05);

  // σ is 1% of |d| with a floor at 1% of the median |d|.
  std::vector<double> mags;
  for (double v : syn.clean.data()) mags.push_back(std::abs(v));
  std::nth_element(mags.begin(), mags.begin() + static_cast<long>(mags.size() / 2), mags.end());
  const double floor = 0.01 * mags[mags.size() / 2];
  for (std::size_t i = 0; i < syn.clean.size(); ++i)
    CHECK(syn.sigma.data()[i] == doctest::Approx(std::max(0.01 * std::abs(syn.clean.data()[i]), floor)));
}

TEST_CASE("weighted misfit at the truth is near the target") {
  double mean_ratio = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    const SyntheticProblem syn = generate_synthetic(cfg);
    mean_ratio += misfit_full(syn.data, syn.truth).value / target_misfit(syn.data) / 10.0;
  }
  CHECK(std::abs(mean_ratio - 1.0) < 0.2);
}

TEST_CASE("regimes share the noise draw and masks nest") {
  ExperimentConfig cfg;
  cfg.seed = 3;
  std::vector<SyntheticProblem> syn;
  for (Regime r : {Regime::PerDatum, Regime::Masked70, Regime::Masked40, Regime::Masked10}) {
    cfg.regime = r;
    syn.push_back(generate_synthetic(cfg));
  }
  for (std::size_t k = 1; k < syn.size(); ++k) {
    REQUIRE(syn[k].mask);
    for (std::size_t i = 0; i < syn[0].clean.size(); ++i) {
      const double kept = syn[k].mask->data()[i];
      if (kept == 1.0) CHECK(syn[k].data.observed.data()[i] == syn[0].data.observed.data()[i]);
      else CHECK(syn[k].data.observed.data()[i] == 0.0);
      if (k > 1 && kept == 1.0) CHECK(syn[k - 1].mask->data()[i] == 1.0);
    }
  }
  CHECK(target_misfit(syn[2].data) == doctest::Approx(0.5 * std::round(0.4 * 96)));
}

TEST_CASE("report CSV round trip") {
  ExperimentReport r;
  r.method = "lowrank-3";
  r.regime = "per-datum";
  r.gn_iters = 27;
  r.forward_solves = 58254;
  r.recovery_error = 0.1 + 0.2;
  r.wall_time_s = 1.0 / 3.0;
  r.seed = 18446744073709551615ull;
  for (bool suite : {false, true}) {
    std::stringstream s;
    suite ? write_suite_csv(s, {r, r}) : write_report_csv(s, {r});
    const std::string header = s.str().substr(0, s.str().find('\n'));
    CHECK(header == (suite ? kSuiteHeader : kReportHeader));
    const auto back = parse_report_csv(s);
    REQUIRE(back.size() == (suite ? 2u : 1u));
    CHECK(back[0].method == r.method);
    CHECK(back[0].gn_iters == r.gn_iters);
    CHECK(back[0].forward_solves == r.forward_solves);
    CHECK(back[0].recovery_error == r.recovery_error);
    CHECK(back[0].wall_time_s == r.wall_time_s);
    CHECK(back[0].seed == r.seed);
    if (suite) CHECK(back[0].regime == r.regime);
  }
  std::istringstream bad("method,x\n");
  CHECK_THROWS(parse_report_csv(bad));
}

TEST_CASE("PGM output") {
  const Grid g{3, 2, 1.0, 1.0};
  CHECK(model_slice_pixels(Model::constant(6, 0.3), g) == std::vector<unsigned char>(6, 128));
  const auto px = model_slice_pixels(Model(Vector{1, 2, 3, 4, 5, 6}), g);
  CHECK(px.front() == 0);
  CHECK(px.back() == 255);
  CHECK(std::is_sorted(px.begin(), px.end()));

  const fs::path dir = scratch_dir("pgm");
  emit_model_slice(Model::constant(6, 0.3), g, dir / "c.pgm");
  std::ifstream in(dir / "c.pgm", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  CHECK(bytes.substr(0, header.size()) == header);
  CHECK(bytes.substr(header.size()) == std::string(6, static_cast<char>(128)));
  CHECK_THROWS(emit_model_slice(Model::constant(6, 0.3), g, dir / "missing" / "x.pgm"));
}

TEST_CASE("noise-free inversion improves on the initial guess and reconciles its cost") {
  const ExperimentConfig cfg = small_config();
  const std::uint64_t before = global_solve_count();
  const ExperimentReport rep = run_experiment(cfg);
  CHECK(rep.recovery_error < rep.initial_error);
  CHECK(rep.forward_solves == rep.ledger_solves);
  // Simulating the observed data is not part of the inversion cost.
  CHECK(global_solve_count() - before == rep.forward_solves + cfg.n_src);
  CHECK(rep.wall_time_s == 0.0);
  CHECK(rep.gn_iters > 0);
}

TEST_CASE("runs are reproducible from the seed") {
  ExperimentConfig cfg = small_config();
  cfg.noise_percent = 1.0;
  cfg.method = EstimatorSpec::parse("simsrc");
  const ExperimentReport a = run_experiment(cfg), b = run_experiment(cfg);
  CHECK(a.recovered == b.recovered);
  std::stringstream sa, sb;
  write_report_csv(sa, {a});
  write_report_csv(sb, {b});
  CHECK(sa.str() == sb.str());
}

TEST_CASE("completion counts the reduced-model solves") {
  ExperimentConfig cfg = small_config();
  cfg.noise_percent = 1.0;
  cfg.regime = Regime::Masked40;
  cfg.method = EstimatorSpec::parse("completion");
  cfg.saa.max_outer = 2;
  const ExperimentReport rep = run_experiment(cfg);
  CHECK(rep.setup_solves == cfg.n_src);
  CHECK(rep.forward_solves == rep.ledger_solves);
}

TEST_CASE("suite requires a shared seed and sorts by regime") {
  ExperimentConfig a = small_config(), b = small_config();
  a.saa.max_outer = b.saa.max_outer = 2;
  a.regime = Regime::PerDatum;
  b.regime = Regime::Uniform;
  const auto reports = run_suite({a, b}, 2);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].regime == "uniform");
  CHECK(reports[1].regime == "per-datum");
  b.seed = 2;
  CHECK_THROWS_AS(run_suite({a, b}), ContractError);
}

TEST_CASE("lemma check passes") {
  std::ostringstream out;
  CHECK(lemma_check(out));
  CHECK(out.str().find("FAIL") == std::string::npos);
}
