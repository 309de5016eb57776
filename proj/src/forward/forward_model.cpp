#include "simsrc/forward_model.hpp"

#include <cmath>
#include <string>

#include "simsrc/errors.hpp"
#include "simsrc/solve_tally.hpp"
#include "simsrc/solvers.hpp"

namespace simsrc {

void Grid::validate() const {
  if (nx < 2 || ny < 2) throw ContractError("Grid: nx and ny must be at least 2");
  if (!(hx > 0.0) || !(hy > 0.0)) throw ContractError("Grid: cell sizes must be positive");
}

SurveyLayout parse_layout(const std::string& name) {
  if (name == "surface") return SurveyLayout::Surface;
  if (name == "perimeter") return SurveyLayout::Perimeter;
  throw ContractError("unknown survey layout '" + name + "'");
}

std::string to_string(SurveyLayout layout) {
  return layout == SurveyLayout::Surface ? "surface" : "perimeter";
}

std::vector<std::size_t> layout_band(const Grid& grid, SurveyLayout layout) {
  grid.validate();
  std::vector<std::size_t> band;
  for (std::size_t i = 0; i < grid.nx; ++i) band.push_back(grid.cell(i, 0));
  if (layout == SurveyLayout::Surface) return band;
  for (std::size_t j = 1; j < grid.ny; ++j) band.push_back(grid.cell(grid.nx - 1, j));
  for (std::size_t i = grid.nx - 1; i-- > 0;) band.push_back(grid.cell(i, grid.ny - 1));
  for (std::size_t j = grid.ny - 1; j-- > 1;) band.push_back(grid.cell(0, j));
  return band;
}

Survey place_sources_receivers(const Grid& grid, std::size_t n_src, std::size_t n_rec,
                               SurveyLayout layout) {
  const auto band = layout_band(grid, layout);
  const bool ring = layout == SurveyLayout::Perimeter;
  const std::size_t span = ring ? band.size() : band.size() - 1;
  if (n_src == 0 || n_rec == 0) throw ContractError("place_sources_receivers: counts must be positive");
  if (n_src > span || n_rec > span) {
    throw ContractError("place_sources_receivers: " + std::to_string(n_src) + " sources / " +
                        std::to_string(n_rec) + " receivers do not fit on a " + to_string(layout) +
                        " band with " + std::to_string(span) + " dipole slots");
  }
  auto pair_at = [&](std::size_t a) {
    return std::make_pair(band[a % band.size()], band[(a + 1) % band.size()]);
  };

  Survey s;
  std::vector<Triplet> qt, pt;
  for (std::size_t k = 0; k < n_src; ++k) {
    const std::size_t a = (2 * k + 1) * span / (2 * n_src);
    const auto cells = pair_at(a);
    s.source_cells.push_back(cells);
    qt.push_back({cells.first, k, 1.0});
    qt.push_back({cells.second, k, -1.0});
  }
  for (std::size_t k = 0; k < n_rec; ++k) {
    const std::size_t b = k * span / n_rec;
    const auto cells = pair_at(b);
    s.receiver_cells.push_back(cells);
    pt.push_back({cells.first, k, 1.0});
    pt.push_back({cells.second, k, -1.0});
  }
  s.q = SparseMat(grid.n_cells(), n_src, std::move(qt));
  s.p = SparseMat(grid.n_cells(), n_rec, std::move(pt));
  return s;
}

Model::Model(Vector conductivity) : u_(std::move(conductivity)) {
  for (std::size_t i = 0; i < u_.size(); ++i) {
    if (!(u_[i] > 0.0) || !std::isfinite(u_[i])) {
      throw DomainError("Model: conductivity at cell " + std::to_string(i) + " is not positive (" +
                        std::to_string(u_[i]) + ")");
    }
  }
}

SparseMat cell_gradient(const Grid& grid) {
  grid.validate();
  std::vector<Triplet> t;
  std::size_t f = 0;
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i + 1 < grid.nx; ++i, ++f) {
      t.push_back({f, grid.cell(i, j), -1.0 / grid.hx});
      t.push_back({f, grid.cell(i + 1, j), 1.0 / grid.hx});
    }
  for (std::size_t j = 0; j + 1 < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i, ++f) {
      t.push_back({f, grid.cell(i, j), -1.0 / grid.hy});
      t.push_back({f, grid.cell(i, j + 1), 1.0 / grid.hy});
    }
  return SparseMat(grid.n_faces(), grid.n_cells(), std::move(t));
}

namespace {

SparseMat face_averaging(const Grid& grid) {
  std::vector<Triplet> t;
  std::size_t f = 0;
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i + 1 < grid.nx; ++i, ++f) {
      t.push_back({f, grid.cell(i, j), 0.5});
      t.push_back({f, grid.cell(i + 1, j), 0.5});
    }
  for (std::size_t j = 0; j + 1 < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i, ++f) {
      t.push_back({f, grid.cell(i, j), 0.5});
      t.push_back({f, grid.cell(i, j + 1), 0.5});
    }
  return SparseMat(grid.n_faces(), grid.n_cells(), std::move(t));
}

void require_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ContractError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                        std::to_string(got));
  }
}

}  // namespace

ForwardProblem::ForwardProblem(Grid grid, SparseMat q, SparseMat p, SolverOptions solver)
    : grid_(grid),
      b_(cell_gradient(grid)),
      av_(face_averaging(grid)),
      q_(std::move(q)),
      p_(std::move(p)),
      pin_(grid.n_cells() - 1),
      solver_(solver) {
  if (q_.rows() != grid_.n_cells() || p_.rows() != grid_.n_cells()) {
    throw ContractError("ForwardProblem: source/receiver matrices must have one row per cell");
  }
  if (!(solver_.tol > 0.0)) throw ContractError("ForwardProblem: solver tolerance must be positive");
}

ForwardProblem ForwardProblem::with_solver(SolverOptions solver) const {
  ForwardProblem copy = *this;
  copy.solver_ = solver;
  return copy;
}

SparseMat assemble_unpinned_operator(const ForwardProblem& fp, const Model& u) {
  require_length(u.size(), fp.n_cells(), "assemble_operator");
  const Vector face_sigma = fp.averaging().multiply(u.values());
  return weighted_gram(fp.gradient(), face_sigma);
}

SparseMat assemble_operator(const ForwardProblem& fp, const Model& u) {
  const SparseMat a = assemble_unpinned_operator(fp, u);
  const std::size_t pin = fp.pin_index();
  auto t = a.triplets();
  std::erase_if(t, [pin](const Triplet& e) { return e.row == pin || e.col == pin; });
  t.push_back({pin, pin, 1.0});
  return SparseMat(a.rows(), a.cols(), std::move(t));
}

ForwardSolution forward_solve(const ForwardProblem& fp, const SparseMat& a,
                              const std::vector<Vector>& rhs) {
  const std::size_t n = fp.n_cells();
  if (a.rows() != n || a.cols() != n) throw ContractError("forward_solve: operator size mismatch");
  const std::size_t max_iter = fp.solver().max_iter ? fp.solver().max_iter : 20 * n;

  ForwardSolution out;
  out.fields.reserve(rhs.size());
  for (const auto& col : rhs) {
    require_length(col.size(), n, "forward_solve");
    Vector b = col;
    b[fp.pin_index()] = 0.0;
    CgResult r = cg_solve(a, b, fp.solver().tol, max_iter);
    if (!r.converged) {
      throw NumericalBreakdown("forward_solve: CG stopped at relative residual " +
                               std::to_string(r.relres) + " after " + std::to_string(r.iters) +
                               " iterations (tolerance " + std::to_string(fp.solver().tol) + ")");
    }
    out.fields.push_back(std::move(r.x));
  }
  out.solve_count = rhs.size();
  record_solves(rhs.size());
  return out;
}

ForwardSolution forward_solve(const ForwardProblem& fp, const Model& u, const std::vector<Vector>& rhs) {
  return forward_solve(fp, assemble_operator(fp, u), rhs);
}

Vector sensitivity_apply(const ForwardProblem& fp, std::span<const double> v, std::span<const double> x) {
  require_length(v.size(), fp.n_cells(), "sensitivity_apply (v)");
  require_length(x.size(), fp.n_cells(), "sensitivity_apply (x)");
  Vector vt(v.begin(), v.end());
  vt[fp.pin_index()] = 0.0;
  const Vector grad_v = fp.gradient().multiply(vt);
  Vector flux = fp.averaging().multiply(x);
  for (std::size_t f = 0; f < flux.size(); ++f) flux[f] *= grad_v[f];
  Vector out = fp.gradient().multiply_transpose(flux);
  out[fp.pin_index()] = 0.0;
  return out;
}

Vector sensitivity_apply_transpose(const ForwardProblem& fp, std::span<const double> v,
                                   std::span<const double> y) {
  require_length(v.size(), fp.n_cells(), "sensitivity_apply_transpose (v)");
  require_length(y.size(), fp.n_cells(), "sensitivity_apply_transpose (y)");
  Vector vt(v.begin(), v.end());
  vt[fp.pin_index()] = 0.0;
  Vector yt(y.begin(), y.end());
  yt[fp.pin_index()] = 0.0;
  const Vector grad_v = fp.gradient().multiply(vt);
  Vector grad_y = fp.gradient().multiply(yt);
  for (std::size_t f = 0; f < grad_y.size(); ++f) grad_y[f] *= grad_v[f];
  return fp.averaging().multiply_transpose(grad_y);
}

}  // namespace simsrc
