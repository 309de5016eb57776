#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "simsrc/linalg.hpp"

namespace simsrc {

struct CgResult {
  Vector x;
  std::size_t iters = 0;
  double relres = 0.0;  ///< ‖b − A x‖ / ‖b‖ from the recursive residual
  bool converged = false;
};

/// Optional per-iteration log. `energy[k]` is ½xₖᵀAxₖ − bᵀxₖ, which for an
/// SPD operator equals ½‖x* − xₖ‖²_A minus a constant, so it must not increase.
struct CgTrace {
  std::vector<double> energy;
  std::vector<double> relres;
};

using LinearOperator = std::function<Vector(std::span<const double>)>;
/// z = M⁻¹r for an SPD preconditioner M.
using Preconditioner = std::function<void(std::span<const double> r, std::span<double> z)>;

/// Zero fill-in incomplete Cholesky of a sparse SPD matrix, A ≈ L Lᵀ on the
/// lower pattern of A. ok() is false if a pivot was not positive.
class IcPreconditioner {
public:
  explicit IcPreconditioner(const SparseMat& a);
  bool ok() const noexcept { return ok_; }
  /// z = (L Lᵀ)⁻¹ r. Only valid when ok().
  void solve(std::span<const double> r, std::span<double> z) const;

private:
  bool factor(const SparseMat& a);
  std::vector<std::size_t> row_ptr_, cols_;
  std::vector<double> vals_, diag_;
  bool ok_ = false;
};

/// Preconditioned conjugate gradients on an abstract SPD operator. An empty
/// `precond_diag` means no preconditioning; otherwise it holds the diagonal
/// that is inverted (Jacobi). Starts from x = 0.
CgResult conjugate_gradient(const LinearOperator& apply, std::span<const double> b, double tol,
                            std::size_t max_iter, std::span<const double> precond_diag = {},
                            CgTrace* trace = nullptr);

CgResult conjugate_gradient(const LinearOperator& apply, std::span<const double> b, double tol,
                            std::size_t max_iter, const Preconditioner& precondition, CgTrace* trace = nullptr);

/// CG on a sparse SPD matrix, preconditioned by zero fill-in incomplete
/// Cholesky (Jacobi if the incomplete factorization breaks down).
CgResult cg_solve(const SparseMat& a, std::span<const double> b, double tol, std::size_t max_iter,
                  CgTrace* trace = nullptr);

/// Solves A X = B by LU with partial pivoting. Throws SingularMatrixError when
/// a pivot drops below n·eps·max|A|.
DenseMat dense_solve(const DenseMat& a, const DenseMat& b);
Vector dense_solve(const DenseMat& a, std::span<const double> b);

struct Svd {
  DenseMat u;  ///< rows × r, orthonormal columns
  Vector s;    ///< non-increasing, non-negative
  DenseMat v;  ///< cols × r, orthonormal columns
};

/// Thin SVD by one-sided (Hestenes) Jacobi rotations; r = min(rows, cols).
Svd jacobi_svd(const DenseMat& c);

/// Leading k singular triplets of C. Requires 1 ≤ k ≤ min(rows, cols).
Svd truncated_svd(const DenseMat& c, std::size_t k);

}  // namespace simsrc
