#pragma once

// Desk-scale 2D DC-resistivity forward problem on a uniform cell-centered
// finite-volume grid with no-flux boundaries:
//
//   A(u) = Bᵀ diag(A_v u) B
//
// B maps cell potentials to face gradients (interior faces only), A_v
// averages cell conductivities onto faces. The pure-Neumann operator has the
// constants in its null space; one reference cell is grounded by replacing
// its row and column with the identity.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "simsrc/linalg.hpp"

namespace simsrc {

struct Grid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double hx = 1.0;
  double hy = 1.0;

  /// Throws ContractError unless nx, ny ≥ 2 and hx, hy > 0.
  void validate() const;

  std::size_t n_cells() const noexcept { return nx * ny; }
  std::size_t n_xfaces() const noexcept { return (nx - 1) * ny; }
  std::size_t n_yfaces() const noexcept { return nx * (ny - 1); }
  std::size_t n_faces() const noexcept { return n_xfaces() + n_yfaces(); }

  /// Cell (i, j): i along x, j along depth with j = 0 the surface row.
  std::size_t cell(std::size_t i, std::size_t j) const noexcept { return j * nx + i; }
};

/// Where sources and receivers may sit.
///  - Surface: the top cell row.
///  - Perimeter: the ring of boundary cells, walked clockwise from (0, 0).
enum class SurveyLayout { Surface, Perimeter };

SurveyLayout parse_layout(const std::string& name);
std::string to_string(SurveyLayout layout);

/// Cells of the band, in walking order; consecutive entries are neighbours.
std::vector<std::size_t> layout_band(const Grid& grid, SurveyLayout layout);

struct Survey {
  SparseMat q;  ///< n_cells × n_src, one dipole (+1, −1) per column
  SparseMat p;  ///< n_cells × n_rec, one potential difference per column
  std::vector<std::pair<std::size_t, std::size_t>> source_cells;
  std::vector<std::pair<std::size_t, std::size_t>> receiver_cells;
};

/// Equispaced dipoles on the layout band. With L cells in the band (L − 1
/// usable pairs for Surface, L for the closed Perimeter ring):
///   source s   occupies band positions (a, a+1), a = floor((2s+1)·span / (2·n_src))
///   receiver r occupies band positions (b, b+1), b = floor(r·span / n_rec)
/// where span = L − 1 (Surface) or L (Perimeter, indices taken mod L).
/// Throws ContractError when a count exceeds span.
Survey place_sources_receivers(const Grid& grid, std::size_t n_src, std::size_t n_rec,
                               SurveyLayout layout);

struct SolverOptions {
  double tol = 1e-8;          ///< relative residual per column
  std::size_t max_iter = 0;   ///< 0 selects 20·n
};

/// Conductivity model, one positive value per cell (S/m).
class Model {
public:
  Model() = default;
  /// Throws DomainError on a non-positive or non-finite entry.
  explicit Model(Vector conductivity);
  static Model constant(std::size_t n, double value) { return Model(Vector(n, value)); }

  const Vector& values() const noexcept { return u_; }
  std::size_t size() const noexcept { return u_.size(); }
  double operator[](std::size_t i) const { return u_[i]; }

  friend bool operator==(const Model&, const Model&) = default;

private:
  Vector u_;
};

class ForwardProblem {
public:
  ForwardProblem(Grid grid, SparseMat q, SparseMat p, SolverOptions solver = {});
  ForwardProblem(const Grid& grid, const Survey& survey, SolverOptions solver = {})
      : ForwardProblem(grid, survey.q, survey.p, solver) {}

  const Grid& grid() const noexcept { return grid_; }
  const SparseMat& gradient() const noexcept { return b_; }
  const SparseMat& averaging() const noexcept { return av_; }
  const SparseMat& sources() const noexcept { return q_; }
  const SparseMat& receivers() const noexcept { return p_; }
  std::size_t pin_index() const noexcept { return pin_; }
  const SolverOptions& solver() const noexcept { return solver_; }

  std::size_t n_cells() const noexcept { return grid_.n_cells(); }
  std::size_t n_sources() const noexcept { return q_.cols(); }
  std::size_t n_receivers() const noexcept { return p_.cols(); }

  ForwardProblem with_solver(SolverOptions solver) const;

  /// Q·v for a source-space vector v (length n_src).
  Vector source_rhs(std::span<const double> v) const { return q_.multiply(v); }
  /// Pᵀ·y, the receiver readings of a potential field.
  Vector read_receivers(std::span<const double> field) const { return p_.multiply_transpose(field); }
  /// P·d, spreading receiver-space weights back onto the grid.
  Vector spread_receivers(std::span<const double> d) const { return p_.multiply(d); }

private:
  Grid grid_;
  SparseMat b_;
  SparseMat av_;
  SparseMat q_;
  SparseMat p_;
  std::size_t pin_;
  SolverOptions solver_;
};

/// Bᵀ diag(A_v u) B without grounding. Annihilates constants.
SparseMat assemble_unpinned_operator(const ForwardProblem& fp, const Model& u);

/// The grounded operator: the unpinned one with row and column `pin_index`
/// replaced by the identity. Symmetric positive definite for u > 0.
SparseMat assemble_operator(const ForwardProblem& fp, const Model& u);

struct ForwardSolution {
  std::vector<Vector> fields;
  std::size_t solve_count = 0;
};

/// Solves A(u) y_j = rhs_j for each column. The pinned entry of every
/// right-hand side is set to zero first, so y_j[pin] = 0. Each column counts as
/// one solve in the global and scoped tallies, including all-zero columns.
/// Throws NumericalBreakdown when CG fails to reach the configured tolerance.
ForwardSolution forward_solve(const ForwardProblem& fp, const SparseMat& a,
                              const std::vector<Vector>& rhs);
ForwardSolution forward_solve(const ForwardProblem& fp, const Model& u,
                              const std::vector<Vector>& rhs);

/// G(v)·x with G(v) = ∂(A(u)v)/∂u = Z Bᵀ diag(B ṽ) A_v, where ṽ is v with the
/// pinned entry zeroed and Z zeroes the pinned row. A(u) is linear in u, so G
/// does not depend on u.
Vector sensitivity_apply(const ForwardProblem& fp, std::span<const double> v, std::span<const double> x);
/// G(v)ᵀ·y.
Vector sensitivity_apply_transpose(const ForwardProblem& fp, std::span<const double> v,
                                   std::span<const double> y);

/// Cell-to-face difference operator: (y_right − y_left)/h on interior faces,
/// x-faces first, then y-faces. This is B.
SparseMat cell_gradient(const Grid& grid);

}  // namespace simsrc
