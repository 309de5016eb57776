#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "simsrc/errors.hpp"
#include "simsrc/harness.hpp"

namespace simsrc {

namespace {

std::string trim(const std::string& s) {
  const auto first = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
  const auto last = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
  return first < last ? std::string(first, last) : std::string();
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

class Where {
public:
  Where(std::string source, std::size_t line) : source_(std::move(source)), line_(line) {}
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(line_) + ": " + msg);
  }

private:
  std::string source_;
  std::size_t line_;
};

double to_double(const std::string& v, const Where& at) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) at.fail("expected a number, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& v, const Where& at) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) at.fail("expected a non-negative integer, got '" + v + "'");
  return x;
}

std::size_t to_size(const std::string& v, const Where& at) { return static_cast<std::size_t>(to_u64(v, at)); }

bool to_bool(const std::string& v, const Where& at) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  at.fail("expected true or false, got '" + v + "'");
}

Inclusion to_inclusion(const std::string& v, const Where& at) {
  const auto w = split_words(v);
  if (w.size() != 5) at.fail("inclusion needs 'i0 i1 j0 j1 conductivity'");
  return {to_size(w[0], at), to_size(w[1], at), to_size(w[2], at), to_size(w[3], at), to_double(w[4], at)};
}

void apply_key(ExperimentConfig& cfg, bool& inclusions_reset, const std::string& section, const std::string& key,
               const std::string& value, const Where& at) {
  auto unknown = [&] { at.fail("unknown key '" + key + "' in [" + section + "]"); };
  try {
    if (section == "grid") {
      if (key == "nx") cfg.grid.nx = to_size(value, at);
      else if (key == "ny") cfg.grid.ny = to_size(value, at);
      else if (key == "hx") cfg.grid.hx = to_double(value, at);
      else if (key == "hy") cfg.grid.hy = to_double(value, at);
      else unknown();
    } else if (section == "survey") {
      if (key == "sources") cfg.n_src = to_size(value, at);
      else if (key == "receivers") cfg.n_rec = to_size(value, at);
      else if (key == "layout") cfg.layout = parse_layout(value);
      else unknown();
    } else if (section == "model") {
      if (key == "background") cfg.truth.background = to_double(value, at);
      else if (key == "inclusion") {
        if (!inclusions_reset) {
          cfg.truth.inclusions.clear();
          inclusions_reset = true;
        }
        cfg.truth.inclusions.push_back(to_inclusion(value, at));
      } else if (key == "inclusions" && value == "none") {
        cfg.truth.inclusions.clear();
        inclusions_reset = true;
      } else if (key == "initial") cfg.initial = to_double(value, at);
      else if (key == "reduced") cfg.reduced = to_double(value, at);
      else unknown();
    } else if (section == "noise") {
      if (key == "percent") cfg.noise_percent = to_double(value, at);
      else if (key == "regime") cfg.regime = parse_regime(value);
      else unknown();
    } else if (section == "method") {
      if (key == "name") cfg.method = EstimatorSpec::parse(value);
      else unknown();
    } else if (section == "saa") {
      if (key == "gamma") cfg.saa.gamma = to_double(value, at);
      else if (key == "tau") cfg.saa.tau = to_double(value, at);
      else if (key == "break") {
        if (value == "relative") cfg.saa.relative_break = true;
        else if (value == "absolute") cfg.saa.relative_break = false;
        else at.fail("break must be relative or absolute");
      }
      else if (key == "beta") cfg.saa.beta = to_double(value, at);
      else if (key == "alpha0") cfg.saa.alpha0 = to_double(value, at);
      else if (key == "n1") cfg.saa.n1 = to_size(value, at);
      else if (key == "max_outer") cfg.saa.max_outer = to_size(value, at);
      else if (key == "tol") {
        if (value == "auto") cfg.tol.reset();
        else cfg.tol = to_double(value, at);
      } else if (key == "tol_factor") cfg.tol_factor = to_double(value, at);
      else unknown();
    } else if (section == "gn") {
      if (key == "max_iter") cfg.gn.max_gn = to_size(value, at);
      else if (key == "cg_max") cfg.gn.cg_max = to_size(value, at);
      else if (key == "cg_tol") cfg.gn.cg_tol = to_double(value, at);
      else if (key == "grad_tol") cfg.gn.grad_tol = to_double(value, at);
      else if (key == "max_step") cfg.gn.max_step = to_double(value, at);
      else if (key == "max_backtracks") cfg.gn.max_backtracks = to_size(value, at);
      else if (key == "smoothing") cfg.gn.smoothing_shift = to_double(value, at);
      else unknown();
    } else if (section == "solver") {
      if (key == "tol") cfg.solver_tol = to_double(value, at);
      else unknown();
    } else if (section == "run") {
      if (key == "name") cfg.name = value;
      else if (key == "seed") cfg.seed = to_u64(value, at);
      else if (key == "record_wall_time") cfg.record_wall_time = to_bool(value, at);
      else unknown();
    } else {
      at.fail("unknown section [" + section + "]");
    }
  } catch (const ContractError& e) {
    at.fail(e.what());
  }
}

struct Line {
  std::string section, key, value;
  std::size_t number;
};

std::vector<Line> read_lines(std::istream& in, const std::string& source) {
  std::vector<Line> lines;
  std::string section;
  std::string raw;
  for (std::size_t n = 1; std::getline(in, raw); ++n) {
    const Where at(source, n);
    const auto hash = raw.find_first_of("#;");
    std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') at.fail("malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) at.fail("empty section name");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) at.fail("expected 'key = value'");
    if (section.empty()) at.fail("key outside of any section");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty()) at.fail("empty key");
    if (value.empty()) at.fail("empty value for '" + key + "'");
    lines.push_back({section, std::move(key), std::move(value), n});
  }
  if (in.bad()) throw ConfigError(source + ": read error");
  return lines;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  bool inclusions_reset = false;
  for (const Line& l : read_lines(in, source)) {
    apply_key(cfg, inclusions_reset, l.section, l.key, l.value, Where(source, l.number));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.string());
}

SuiteMatrix parse_suite_matrix(std::istream& in, const std::string& source) {
  ExperimentConfig base;
  bool inclusions_reset = false;
  std::vector<Regime> regimes;
  std::vector<EstimatorSpec> methods;
  std::vector<std::pair<Regime, EstimatorSpec>> explicit_runs;
  SuiteMatrix out;

  for (const Line& l : read_lines(in, source)) {
    const Where at(source, l.number);
    if (l.section != "suite") {
      apply_key(base, inclusions_reset, l.section, l.key, l.value, at);
      continue;
    }
    try {
      if (l.key == "regimes") {
        for (const auto& w : split_words(l.value)) regimes.push_back(parse_regime(w));
      } else if (l.key == "methods") {
        for (const auto& w : split_words(l.value)) methods.push_back(EstimatorSpec::parse(w));
      } else if (l.key == "run") {
        const auto w = split_words(l.value);
        if (w.size() != 2) at.fail("run needs '<regime> <method>'");
        explicit_runs.emplace_back(parse_regime(w[0]), EstimatorSpec::parse(w[1]));
      } else if (l.key == "output") {
        out.output = l.value;
      } else {
        at.fail("unknown key '" + l.key + "' in [suite]");
      }
    } catch (const ContractError& e) {
      at.fail(e.what());
    }
  }

  auto add = [&](Regime r, const EstimatorSpec& m, bool strict) {
    ExperimentConfig cfg = base;
    cfg.regime = r;
    cfg.method = m;
    cfg.name = to_string(r) + "/" + m.label();
    try {
      cfg.validate();
    } catch (const ConfigError&) {
      if (strict) throw;
      return;
    }
    out.runs.push_back(std::move(cfg));
  };

  if (!explicit_runs.empty()) {
    if (!regimes.empty() || !methods.empty()) {
      throw ConfigError(source + ": use either 'run' lines or 'regimes'/'methods', not both");
    }
    for (const auto& [r, m] : explicit_runs) add(r, m, true);
  } else {
    if (regimes.empty() || methods.empty()) throw ConfigError(source + ": [suite] needs regimes and methods");
    for (Regime r : regimes)
      for (const auto& m : methods) add(r, m, false);
  }
  if (out.runs.empty()) throw ConfigError(source + ": no compatible regime/method pairs");
  return out;
}

SuiteMatrix load_suite_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open suite matrix " + path.string());
  return parse_suite_matrix(in, path.string());
}

}  // namespace simsrc
