#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "simsrc/errors.hpp"
#include "simsrc/harness.hpp"

namespace simsrc {

namespace {

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

void write_row(std::ostream& out, const ExperimentReport& r, bool with_regime) {
  if (with_regime) out << r.regime << ',';
  out << r.method << ',' << r.gn_iters << ',' << r.forward_solves << ',' << fmt(r.recovery_error) << ','
      << fmt(r.wall_time_s) << ',' << r.seed << '\n';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("report CSV line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

void write_report_csv(std::ostream& out, const std::vector<ExperimentReport>& reports) {
  out << kReportHeader << '\n';
  for (const auto& r : reports) write_row(out, r, false);
}

void write_suite_csv(std::ostream& out, const std::vector<ExperimentReport>& reports) {
  out << kSuiteHeader << '\n';
  for (const auto& r : reports) write_row(out, r, true);
}

void write_history_csv(std::ostream& out, const ExperimentReport& report) {
  out << kHistoryHeader << '\n';
  for (const auto& h : report.history) {
    out << h.k << ',' << fmt(h.alpha) << ',' << h.n_samples << ',' << fmt(h.misfit) << ',' << fmt(h.du_inf) << ',' << fmt(h.du_rel) << ','
        << h.gn_iters << ',' << h.cg_iters << ',' << h.solves << ',' << (h.alpha_reduced ? 1 : 0) << ','
        << (h.break_fired ? 1 : 0) << '\n';
  }
}

std::vector<ExperimentReport> parse_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("report CSV: missing header");
  bool with_regime = false;
  if (line == kSuiteHeader) {
    with_regime = true;
  } else if (line != kReportHeader) {
    throw std::runtime_error("report CSV: unexpected header '" + line + "'");
  }
  const std::size_t width = with_regime ? 7 : 6;
  std::vector<ExperimentReport> out;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != width) throw std::runtime_error("report CSV line " + std::to_string(n) + ": wrong field count");
    std::size_t i = 0;
    ExperimentReport r;
    if (with_regime) r.regime = f[i++];
    r.method = f[i++];
    r.gn_iters = parse_number<std::size_t>(f[i++], n);
    r.forward_solves = parse_number<std::uint64_t>(f[i++], n);
    r.recovery_error = parse_number<double>(f[i++], n);
    r.wall_time_s = parse_number<double>(f[i++], n);
    r.seed = parse_number<std::uint64_t>(f[i++], n);
    out.push_back(std::move(r));
  }
  return out;
}

void emit_report(const std::vector<ExperimentReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_report_csv(out, reports);
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<unsigned char> model_slice_pixels(const Model& u, const Grid& grid) {
  if (u.size() != grid.n_cells()) throw ContractError("emit_model_slice: model does not match the grid");
  const auto [lo, hi] = std::minmax_element(u.values().begin(), u.values().end());
  std::vector<unsigned char> px(u.size(), 128);
  if (u.size() == 0 || *hi == *lo) return px;
  const double range = *hi - *lo;
  for (std::size_t k = 0; k < u.size(); ++k) {
    px[k] = static_cast<unsigned char>(std::lround(255.0 * (u[k] - *lo) / range));
  }
  return px;
}

void emit_model_slice(const Model& u, const Grid& grid, const std::filesystem::path& path) {
  const auto px = model_slice_pixels(u, grid);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P5\n" << grid.nx << ' ' << grid.ny << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace simsrc
